"""
Native LTL to LDBA translation for the goal-sequencing fragment.

Supported formulas (after derived-operator expansion) are conjunctions of

  - at most one goal expression: a disjunction of goals, where a goal is
    F (p & ψ) or (h U (r & ψ)) with p, h, r propositional and ψ an optional
    goal expression monitored after the goal fires;
  - any number of G q safety conjuncts with q propositional.

The automaton reads one symbol per step. A goal fires on the first symbol
satisfying its proposition; the first alternative (in formula order) to fire
commits the run. An until-goal fails on a symbol with neither h nor r, and
the run is trapped once no alternative is left. A symbol violating a safety
conjunct traps the run from every state, the accepting one included.
All states are deterministic (QD) and no ε-edges are produced.
"""
import itertools
from collections import deque
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Union

from src.automata import Edge, Ldba, Tgba, all_symbols, validate_ldba
from src.ltl import (
    And, Atom, Formula, Implies, Not, Or, TrueConst, Until,
    atomic_props, conjoin, disjoin, evaluate_propositional, expand_derived,
    format_ltl, is_propositional, parse_ltl
)


class FragmentError(ValueError):
    """The formula is outside the fragment the native translator handles."""

    def __init__(self, subformula: Formula, reason: str = ''):
        detail = f" ({reason})" if reason else ''
        super().__init__(f"formula outside supported fragment: {format_ltl(subformula)}{detail}")
        self.subformula = subformula


@dataclass(frozen=True)
class Reach:
    target: Formula
    then: Tuple['Goal', ...] = ()


@dataclass(frozen=True)
class Hold:
    hold: Formula
    release: Formula
    then: Tuple['Goal', ...] = ()


Goal = Union[Reach, Hold]

ACCEPT = ('accept',)
TRAP = ('trap',)


def simplify_guard(f: Formula) -> Formula:
    """Remove double negations, constant conjuncts/disjuncts and duplicates."""
    if isinstance(f, (TrueConst, Atom)):
        return f
    if isinstance(f, Not):
        inner = simplify_guard(f.operand)
        if isinstance(inner, Not):
            return inner.operand
        return Not(inner)
    if isinstance(f, Implies):
        return simplify_guard(Or(Not(f.left), f.right))
    if isinstance(f, And):
        parts: List[Formula] = []
        for part in _flatten(f, And):
            part = simplify_guard(part)
            if isinstance(part, TrueConst) or part in parts:
                continue
            if part == Not(TrueConst()):
                return part
            parts.append(part)
        return conjoin(parts)
    if isinstance(f, Or):
        parts = []
        for part in _flatten(f, Or):
            part = simplify_guard(part)
            if isinstance(part, TrueConst):
                return part
            if part == Not(TrueConst()) or part in parts:
                continue
            parts.append(part)
        return disjoin(parts)
    raise FragmentError(f, 'temporal operator inside a guard')


def _flatten(f: Formula, kind) -> List[Formula]:
    if isinstance(f, kind):
        return _flatten(f.left, kind) + _flatten(f.right, kind)
    return [f]


def _conjuncts(f: Formula) -> List[Formula]:
    return _flatten(f, And)


def _eventually_body(f: Formula) -> Optional[Formula]:
    if isinstance(f, Until) and isinstance(f.left, TrueConst):
        return f.right
    return None


def _or_parts(f: Formula) -> Optional[Tuple[Formula, Formula]]:
    if (isinstance(f, Not) and isinstance(f.operand, And)
            and isinstance(f.operand.left, Not) and isinstance(f.operand.right, Not)):
        return f.operand.left.operand, f.operand.right.operand
    return None


def _always_avoid(f: Formula) -> Optional[Formula]:
    """For G q, the formula ¬q that must never hold."""
    if isinstance(f, Not):
        body = _eventually_body(f.operand)
        if body is not None:
            return body
    return None


def _split_body(f: Formula) -> Tuple[Optional[Formula], Tuple[Goal, ...]]:
    props, temporal = [], []
    for part in _conjuncts(f):
        (props if is_propositional(part) else temporal).append(part)
    if len(temporal) > 1:
        raise FragmentError(f, 'parallel goals')
    then = _goals(temporal[0]) if temporal else ()
    release = simplify_guard(conjoin(props)) if props else None
    if isinstance(release, TrueConst):
        release = None
    return release, then


def _goals(f: Formula) -> Tuple[Goal, ...]:
    parts = _or_parts(f)
    if parts is not None:
        return _goals(parts[0]) + _goals(parts[1])
    body = _eventually_body(f)
    if body is not None:
        release, then = _split_body(body)
        if release is None:
            return then
        return (Reach(release, then),)
    if isinstance(f, Until):
        if not is_propositional(f.left):
            raise FragmentError(f, 'until with a temporal left operand')
        release, then = _split_body(f.right)
        if release is None:
            raise FragmentError(f, 'until must be released by a proposition')
        return (Hold(simplify_guard(f.left), release, then),)
    raise FragmentError(f)


def _split_task(f: Formula) -> Tuple[Tuple[Goal, ...], Optional[Formula]]:
    avoid_parts: List[Formula] = []
    goal_parts: List[Formula] = []
    for part in _conjuncts(f):
        avoid = _always_avoid(part)
        if avoid is not None:
            if not is_propositional(avoid):
                raise FragmentError(part, 'always over a temporal formula')
            avoid_parts.append(avoid)
        elif not isinstance(part, TrueConst):
            goal_parts.append(part)
    if len(goal_parts) > 1:
        raise FragmentError(f, 'more than one goal conjunct')
    goals = _goals(goal_parts[0]) if goal_parts else ()
    avoid = simplify_guard(disjoin(avoid_parts)) if avoid_parts else None
    return goals, avoid


def _describe(goals: Tuple[Goal, ...]) -> str:
    texts = []
    for g in goals:
        if isinstance(g, Reach):
            texts.append(f"F {format_ltl(g.target)}")
        else:
            texts.append(format_ltl(Until(g.hold, g.release)))
    return ' | '.join(texts)


def _branches(goals: Tuple[Goal, ...]) -> List[Tuple[Formula, tuple]]:
    """(guard, destination key) pairs out of a goal state, before safety."""
    branches = []
    blocked: List[Formula] = []
    for g in goals:
        fire = g.target if isinstance(g, Reach) else g.release
        branches.append((conjoin([fire] + blocked), _key(g.then)))
        blocked.append(Not(fire))
    holds = [i for i, g in enumerate(goals) if isinstance(g, Hold)]
    for outcome in itertools.product((True, False), repeat=len(holds)):
        kept = dict(zip(holds, outcome))
        literals = [goals[i].hold if keep else Not(goals[i].hold) for i, keep in kept.items()]
        survivors = tuple(g for i, g in enumerate(goals) if kept.get(i, True))
        branches.append((conjoin(blocked + literals), _key(survivors) if survivors else TRAP))
    return branches


def _key(goals: Tuple[Goal, ...]) -> tuple:
    return ('goals', goals) if goals else ACCEPT


def translate_fragment(f: Formula) -> Ldba:
    """
    Build a deterministic LDBA for a formula in the supported fragment.

    Args:
        f: Formula, raw or already expanded

    Returns:
        Ldba with every state in QD, state 0 initial, an accepting self-loop
        on the accept state and a non-accepting self-loop on the trap

    Raises:
        FragmentError: naming the first subformula outside the fragment
    """
    expanded = expand_derived(f)
    goals, avoid = _split_task(expanded)
    ap_list = tuple(atomic_props(expanded))
    symbols = all_symbols(ap_list)

    def satisfiable(guard: Formula) -> bool:
        return any(evaluate_propositional(guard, s) for s in symbols)

    index: Dict[tuple, int] = {}
    names: List[str] = []
    queue = deque()

    def state_of(key: tuple) -> int:
        if key not in index:
            index[key] = len(names)
            if key == ACCEPT:
                names.append('accept')
            elif key == TRAP:
                names.append('trap')
            else:
                names.append(_describe(key[1]))
            queue.append(key)
        return index[key]

    state_of(_key(goals))
    edges: List[Edge] = []
    accepting = set()
    while queue:
        key = queue.popleft()
        src = index[key]
        if key == TRAP:
            edges.append(Edge(src, TrueConst(), src))
            continue
        if key == ACCEPT:
            branches = [(TrueConst(), ACCEPT)]
        else:
            branches = _branches(key[1])
        for guard, dst_key in branches:
            if avoid is not None:
                guard = And(guard, Not(avoid))
            guard = simplify_guard(guard)
            if not satisfiable(guard):
                continue
            if dst_key == ACCEPT and key == ACCEPT:
                accepting.add(len(edges))
            edges.append(Edge(src, guard, state_of(dst_key)))
        if avoid is not None and satisfiable(avoid):
            edges.append(Edge(src, avoid, state_of(TRAP)))

    tgba = Tgba(
        ap_list=ap_list,
        num_states=len(names),
        initial=0,
        edges=tuple(edges),
        acceptance=(frozenset(accepting),),
        state_names=tuple(names)
    )
    return validate_ldba(tgba, {q: 'QD' for q in range(tgba.num_states)})


def translate_text(text: str) -> Ldba:
    """Parse and translate formula text."""
    return translate_fragment(parse_ltl(text))
