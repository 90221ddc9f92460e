"""
Transition-based generalized Büchi automata and limit-deterministic partitions.

Guards are propositional formulas over the automaton's AP list; the
symbol-level transition relation is recovered by enumerating 2^AP.
"""
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np

from src.ltl import (
    ATOM_PATTERN, Atom, Formula, Not, Symbol, TrueConst,
    atomic_props, conjoin, disjoin, evaluate_propositional, format_ltl, is_propositional
)


class TgbaError(ValueError):
    """Structural defect in an automaton (bad indices, unknown propositions)."""


class LdbaError(ValueError):
    """Base class for violations of the limit-deterministic conditions."""


class PartitionError(LdbaError):
    """The QN/QD partition does not cover the states."""


class QdDeterminismError(LdbaError):
    """A QD state has zero or several successors on a symbol, or leaves QD."""


class QnDeterminismError(LdbaError):
    """A QN state does not have exactly one QN successor on a symbol."""


class AcceptingEdgeError(LdbaError):
    """An accepting edge touches a QN state."""


class EpsilonTransitionError(LdbaError):
    """A QN to QD move that is not an ε-edge, or a malformed ε-edge."""


def all_symbols(ap_list: Sequence[str]) -> List[Symbol]:
    """Every element of 2^AP, ordered by the bit pattern over ap_list."""
    symbols = []
    for mask in range(1 << len(ap_list)):
        symbols.append(frozenset(ap for bit, ap in enumerate(ap_list) if mask >> bit & 1))
    return symbols


def format_symbol(symbol: Iterable[str]) -> str:
    return '{' + ','.join(sorted(symbol)) + '}'


def guard_satisfiable(guard: Formula, ap_list: Sequence[str]) -> bool:
    return any(evaluate_propositional(guard, s) for s in all_symbols(ap_list))


@dataclass(frozen=True)
class Edge:
    """A labeled transition src --[guard]--> dst."""
    src: int
    guard: Formula
    dst: int


@dataclass(frozen=True)
class Tgba:
    """
    Transition-based generalized Büchi automaton.

    `acceptance[i]` holds the indices of the edges in F_(i+1).
    """
    ap_list: Tuple[str, ...]
    num_states: int
    initial: int
    edges: Tuple[Edge, ...]
    acceptance: Tuple[FrozenSet[int], ...]
    state_names: Tuple[Optional[str], ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'ap_list', tuple(self.ap_list))
        object.__setattr__(self, 'edges', tuple(self.edges))
        object.__setattr__(self, 'acceptance', tuple(frozenset(s) for s in self.acceptance))
        object.__setattr__(self, 'state_names', tuple(self.state_names))

        if len(set(self.ap_list)) != len(self.ap_list):
            raise TgbaError(f"Duplicate propositions in AP list {list(self.ap_list)}")
        for ap in self.ap_list:
            if not ATOM_PATTERN.match(ap):
                raise TgbaError(f"Invalid proposition name {ap!r}")
        if self.num_states < 1:
            raise TgbaError("Automaton needs at least one state")
        if not 0 <= self.initial < self.num_states:
            raise TgbaError(f"Initial state {self.initial} out of range")
        if self.state_names and len(self.state_names) != self.num_states:
            raise TgbaError("state_names must name every state")
        known = set(self.ap_list)
        for idx, edge in enumerate(self.edges):
            if not (0 <= edge.src < self.num_states and 0 <= edge.dst < self.num_states):
                raise TgbaError(f"Edge {idx} ({edge.src}->{edge.dst}) references a missing state")
            if not is_propositional(edge.guard):
                raise TgbaError(f"Edge {idx} guard is not propositional: {format_ltl(edge.guard)}")
            unknown = set(atomic_props(edge.guard)) - known
            if unknown:
                raise TgbaError(f"Edge {idx} guard uses unknown propositions {sorted(unknown)}")
        if len(self.acceptance) < 1:
            raise TgbaError("At least one acceptance set is required")
        for i, acc in enumerate(self.acceptance):
            bad = [e for e in acc if not 0 <= e < len(self.edges)]
            if bad:
                raise TgbaError(f"Acceptance set {i} references missing edges {sorted(bad)}")

    @property
    def m(self) -> int:
        """Number of acceptance sets."""
        return len(self.acceptance)

    @cached_property
    def symbols(self) -> List[Symbol]:
        return all_symbols(self.ap_list)

    @cached_property
    def _edges_from(self) -> Tuple[Tuple[int, ...], ...]:
        table: List[List[int]] = [[] for _ in range(self.num_states)]
        for idx, edge in enumerate(self.edges):
            table[edge.src].append(idx)
        return tuple(tuple(row) for row in table)

    @cached_property
    def _enabled(self) -> Dict[Tuple[int, Symbol], Tuple[int, ...]]:
        table = {}
        for q in range(self.num_states):
            for symbol in self.symbols:
                table[(q, symbol)] = tuple(
                    idx for idx in self._edges_from[q]
                    if evaluate_propositional(self.edges[idx].guard, symbol)
                )
        return table

    @cached_property
    def _marks(self) -> Tuple[FrozenSet[int], ...]:
        return tuple(
            frozenset(i for i, acc in enumerate(self.acceptance) if idx in acc)
            for idx in range(len(self.edges))
        )

    def edges_from(self, q: int) -> Tuple[int, ...]:
        """Indices of the edges leaving q, in declaration order."""
        return self._edges_from[q]

    def enabled_edges(self, q: int, symbol: Iterable[str]) -> Tuple[int, ...]:
        """Indices of the edges leaving q whose guard holds on symbol."""
        key = (q, frozenset(symbol) & frozenset(self.ap_list))
        return self._enabled[key]

    def step_edge(self, q: int, symbol: Iterable[str]) -> int:
        """
        The unique edge taken from q on symbol.

        Raises:
            ValueError: when no edge or more than one edge is enabled
        """
        enabled = self.enabled_edges(q, symbol)
        if len(enabled) != 1:
            raise ValueError(
                f"State {q} has {len(enabled)} enabled edges on {format_symbol(symbol)}; "
                f"the automaton is not deterministic and complete there"
            )
        return enabled[0]

    def marks(self, edge: int) -> FrozenSet[int]:
        """Acceptance-set indices (0-based) the edge belongs to."""
        return self._marks[edge]

    def is_accepting_edge(self, edge: int) -> bool:
        return bool(self._marks[edge])

    def state_name(self, q: int) -> str:
        if self.state_names and self.state_names[q]:
            return self.state_names[q]
        return str(q)


@dataclass(frozen=True)
class Ldba:
    """A Tgba with a QN/QD partition and out-of-band ε-edges."""
    tgba: Tgba
    qn: FrozenSet[int]
    qd: FrozenSet[int]
    eps_edges: Tuple[Tuple[int, int], ...] = ()

    @property
    def ap_list(self) -> Tuple[str, ...]:
        return self.tgba.ap_list

    @property
    def num_states(self) -> int:
        return self.tgba.num_states

    @property
    def initial(self) -> int:
        return self.tgba.initial

    @property
    def edges(self) -> Tuple[Edge, ...]:
        return self.tgba.edges

    @property
    def acceptance(self) -> Tuple[FrozenSet[int], ...]:
        return self.tgba.acceptance

    @property
    def m(self) -> int:
        return self.tgba.m

    def epsilon_successors(self, q: int) -> List[int]:
        return [dst for src, dst in self.eps_edges if src == q]


AutomatonLike = Union[Tgba, Ldba]


def as_tgba(a: AutomatonLike) -> Tgba:
    return a.tgba if isinstance(a, Ldba) else a


def out_edges(a: AutomatonLike, q: int) -> FrozenSet[int]:
    """Edges leaving q that fire on at least one symbol."""
    t = as_tgba(a)
    return frozenset(idx for s in t.symbols for idx in t.enabled_edges(q, s))


def out_props(a: AutomatonLike, q: int) -> Set[Symbol]:
    """Symbols on which q has at least one transition."""
    t = as_tgba(a)
    return {s for s in t.symbols if t.enabled_edges(q, s)}


def _normalize_partition(t: Tgba, partition) -> Dict[int, str]:
    if isinstance(partition, Mapping):
        items = dict(partition)
    else:
        items = dict(enumerate(partition))
    result = {}
    for q in range(t.num_states):
        if q not in items:
            raise PartitionError(f"Partition does not assign state {q}")
        side = str(items[q]).upper()
        if side in ('QN', 'N'):
            result[q] = 'QN'
        elif side in ('QD', 'D'):
            result[q] = 'QD'
        else:
            raise PartitionError(f"State {q} assigned to unknown part {items[q]!r}")
    extra = set(items) - set(range(t.num_states))
    if extra:
        raise PartitionError(f"Partition names missing states {sorted(extra)}")
    return result


def ldba_violations(
    a: Tgba,
    partition,
    eps_edges: Sequence[Tuple[int, int]] = ()
) -> List[LdbaError]:
    """
    Check the four limit-deterministic conditions independently.

    Returns:
        One error per violation found, grouped by condition; empty when valid
    """
    parts = _normalize_partition(a, partition)
    qd = {q for q, side in parts.items() if side == 'QD'}
    qn = set(parts) - qd
    problems: List[LdbaError] = []

    # 1. QD is deterministic, complete and closed
    for q in sorted(qd):
        for symbol in a.symbols:
            enabled = a.enabled_edges(q, symbol)
            if len(enabled) != 1:
                problems.append(QdDeterminismError(
                    f"nondeterminism in QD: state {q} has {len(enabled)} successors on {format_symbol(symbol)}"
                ))
            elif a.edges[enabled[0]].dst not in qd:
                problems.append(QdDeterminismError(
                    f"nondeterminism in QD: state {q} leaves QD on {format_symbol(symbol)} via edge {enabled[0]}"
                ))

    # 2. QN is deterministic within QN
    for q in sorted(qn):
        for symbol in a.symbols:
            inside = [e for e in a.enabled_edges(q, symbol) if a.edges[e].dst in qn]
            if len(inside) != 1:
                problems.append(QnDeterminismError(
                    f"QN state {q} has {len(inside)} QN successors on {format_symbol(symbol)}"
                ))

    # 3. accepting edges live in QD
    for idx, edge in enumerate(a.edges):
        if a.is_accepting_edge(idx) and (edge.src not in qd or edge.dst not in qd):
            problems.append(AcceptingEdgeError(
                f"accepting edge outside QD: edge {idx} ({edge.src}->{edge.dst})"
            ))

    # 4. QN to QD only through ε
    for idx, edge in enumerate(a.edges):
        if edge.src in qn and edge.dst in qd:
            problems.append(EpsilonTransitionError(
                f"edge {idx} ({edge.src}->{edge.dst}) moves from QN to QD without ε"
            ))
    for src, dst in eps_edges:
        if src not in qn or dst not in qd:
            problems.append(EpsilonTransitionError(
                f"ε-edge {src}->{dst} must lead from QN to QD"
            ))
    return problems


def validate_ldba(
    a: Tgba,
    partition,
    eps_edges: Sequence[Tuple[int, int]] = ()
) -> Ldba:
    """
    Wrap a Tgba as an Ldba after checking the limit-deterministic conditions.

    Args:
        a: Automaton
        partition: state -> 'QN' | 'QD', as a mapping or a per-state sequence
        eps_edges: (src, dst) pairs with src in QN and dst in QD

    Raises:
        LdbaError: the first violation, as the subclass for its condition
    """
    eps = tuple((int(src), int(dst)) for src, dst in eps_edges)
    for src, dst in eps:
        if not (0 <= src < a.num_states and 0 <= dst < a.num_states):
            raise EpsilonTransitionError(f"ε-edge {src}->{dst} references a missing state")
    problems = ldba_violations(a, partition, eps)
    if problems:
        raise problems[0]
    parts = _normalize_partition(a, partition)
    qd = frozenset(q for q, side in parts.items() if side == 'QD')
    qn = frozenset(parts) - qd
    return Ldba(tgba=a, qn=qn, qd=qd, eps_edges=eps)


def deterministic_ldba(a: Tgba) -> Ldba:
    """Validate a Tgba with every state in QD and no ε-edges."""
    return validate_ldba(a, {q: 'QD' for q in range(a.num_states)})


@dataclass(frozen=True)
class LassoWord:
    """Finite witness prefix · cycle^ω of an infinite word."""
    prefix: Tuple[Symbol, ...]
    cycle: Tuple[Symbol, ...]

    def __post_init__(self):
        object.__setattr__(self, 'prefix', tuple(frozenset(s) for s in self.prefix))
        object.__setattr__(self, 'cycle', tuple(frozenset(s) for s in self.cycle))
        if not self.cycle:
            raise ValueError("Lasso cycle must contain at least one symbol")

    def symbol_at(self, position: int) -> Symbol:
        if position < len(self.prefix):
            return self.prefix[position]
        return self.cycle[(position - len(self.prefix)) % len(self.cycle)]


def _strongly_connected_components(
    nodes: Sequence,
    successors: Mapping
) -> List[List]:
    """Iterative Tarjan over an explicit successor map."""
    index: Dict = {}
    low: Dict = {}
    on_stack: Set = set()
    stack: List = []
    components: List[List] = []
    counter = 0

    for root in nodes:
        if root in index:
            continue
        work = [(root, iter(successors[root]))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            node, it = work[-1]
            advanced = False
            for nxt in it:
                if nxt not in index:
                    index[nxt] = low[nxt] = counter
                    counter += 1
                    stack.append(nxt)
                    on_stack.add(nxt)
                    work.append((nxt, iter(successors[nxt])))
                    advanced = True
                    break
                if nxt in on_stack:
                    low[node] = min(low[node], index[nxt])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                component = []
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    component.append(member)
                    if member == node:
                        break
                components.append(component)
    return components


def accepts_lasso(a: AutomatonLike, w: LassoWord) -> bool:
    """
    Decide Büchi acceptance of prefix · cycle^ω.

    Nodes of the search graph are (state, position) pairs; a symbol edge moves
    to the next position (wrapping into the cycle), an ε-edge keeps the
    position. The word is accepted iff a reachable strongly connected
    component contains, among its internal symbol edges, one edge of every
    acceptance set.
    """
    t = as_tgba(a)
    eps = a.eps_edges if isinstance(a, Ldba) else ()
    length = len(w.prefix) + len(w.cycle)

    def next_position(p: int) -> int:
        return p + 1 if p + 1 < length else len(w.prefix)

    start = (t.initial, 0)
    succ: Dict[Tuple[int, int], List[Tuple[int, int]]] = {}
    labeled: List[Tuple[Tuple[int, int], int, Tuple[int, int]]] = []
    queue = deque([start])
    seen = {start}
    while queue:
        node = queue.popleft()
        q, p = node
        targets = []
        for idx in t.enabled_edges(q, w.symbol_at(p)):
            target = (t.edges[idx].dst, next_position(p))
            targets.append(target)
            labeled.append((node, idx, target))
        for src, dst in eps:
            if src == q:
                targets.append((dst, p))
        succ[node] = targets
        for target in targets:
            if target not in seen:
                seen.add(target)
                queue.append(target)

    component_of = {}
    for cid, component in enumerate(_strongly_connected_components(list(succ), succ)):
        for node in component:
            component_of[node] = cid
    covered: Dict[int, Set[int]] = {}
    for src, idx, dst in labeled:
        if component_of[src] == component_of[dst]:
            covered.setdefault(component_of[src], set()).update(t.marks(idx))
    return any(len(marks) == t.m for marks in covered.values())


def random_lasso(
    rng: np.random.Generator,
    ap_list: Sequence[str],
    max_prefix: int = 6,
    max_cycle: int = 4
) -> LassoWord:
    """Draw a lasso with prefix length in [0, max_prefix] and cycle length in [1, max_cycle]."""
    symbols = all_symbols(ap_list)
    prefix_len = int(rng.integers(0, max_prefix + 1))
    cycle_len = int(rng.integers(1, max_cycle + 1))
    pick = lambda n: tuple(symbols[int(i)] for i in rng.integers(0, len(symbols), size=n))
    return LassoWord(prefix=pick(prefix_len), cycle=pick(cycle_len))


def minterm(symbol: Symbol, ap_list: Sequence[str]) -> Formula:
    """The conjunction of literals true exactly on symbol."""
    return conjoin(Atom(ap) if ap in symbol else Not(Atom(ap)) for ap in ap_list)


def random_tgba(
    rng: np.random.Generator,
    num_states: int,
    ap_list: Sequence[str] = ('a', 'b'),
    num_sets: int = 1,
    accept_prob: float = 0.3,
    max_branches: int = 3
) -> Tgba:
    """
    Random deterministic, complete automaton.

    Each state splits 2^AP into up to `max_branches` blocks, each block a
    single edge whose guard is the disjunction of its minterms.
    """
    symbols = all_symbols(ap_list)
    edges: List[Edge] = []
    for q in range(num_states):
        branches = int(rng.integers(1, min(max_branches, len(symbols)) + 1))
        assignment = rng.integers(0, branches, size=len(symbols))
        for b in range(branches):
            block = [symbols[i] for i in range(len(symbols)) if assignment[i] == b]
            if not block:
                continue
            if len(block) == len(symbols):
                guard: Formula = TrueConst()
            else:
                guard = disjoin(minterm(s, ap_list) for s in block)
            edges.append(Edge(q, guard, int(rng.integers(0, num_states))))
    acceptance = []
    for _ in range(num_sets):
        acceptance.append(frozenset(
            idx for idx in range(len(edges)) if rng.random() < accept_prob
        ))
    return Tgba(
        ap_list=tuple(ap_list),
        num_states=num_states,
        initial=0,
        edges=tuple(edges),
        acceptance=tuple(acceptance)
    )


def _guard_signature(t: Tgba, guard: Formula) -> Tuple[bool, ...]:
    return tuple(evaluate_propositional(guard, s) for s in t.symbols)


def isomorphic(a: AutomatonLike, b: AutomatonLike) -> bool:
    """
    Structural equality up to state renaming.

    Outgoing edges are matched pairwise in declaration order; guards are
    compared by the symbols they admit.
    """
    x, y = as_tgba(a), as_tgba(b)
    if (x.ap_list != y.ap_list or x.num_states != y.num_states
            or x.m != y.m or len(x.edges) != len(y.edges)):
        return False
    mapping = {x.initial: y.initial}
    order = deque([x.initial])
    visited = set()

    def match_state(qx: int, qy: int) -> bool:
        ex, ey = x.edges_from(qx), y.edges_from(qy)
        if len(ex) != len(ey):
            return False
        for ix, iy in zip(ex, ey):
            if x.marks(ix) != y.marks(iy):
                return False
            if _guard_signature(x, x.edges[ix].guard) != _guard_signature(y, y.edges[iy].guard):
                return False
            dx, dy = x.edges[ix].dst, y.edges[iy].dst
            if dx in mapping:
                if mapping[dx] != dy:
                    return False
            else:
                if dy in mapping.values():
                    return False
                mapping[dx] = dy
                order.append(dx)
        return True

    while True:
        while order:
            qx = order.popleft()
            if qx in visited:
                continue
            visited.add(qx)
            if not match_state(qx, mapping[qx]):
                return False
        # unreachable states are paired in index order
        rest_x = [q for q in range(x.num_states) if q not in mapping]
        if not rest_x:
            return True
        rest_y = [q for q in range(y.num_states) if q not in mapping.values()]
        mapping[rest_x[0]] = rest_y[0]
        order.append(rest_x[0])
