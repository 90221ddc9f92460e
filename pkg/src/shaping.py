"""
Automaton annotation, visit tracking and the shaped product reward.
"""
import json
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, model_validator

from config.formats import FormatTemplates
from config.settings import settings
from src.automata import Ldba, out_edges
from src.hoa import format_guard
from src.ltl import evaluate_propositional, format_ltl
from src.workspace import CarState, Region, Workspace, distance_to_regions, label


@dataclass(frozen=True)
class AnnotatedLdba:
    """
    An Ldba with one Boolean edge map per acceptance set.

    `b_maps[i][e]` is b_(i+1) of edge e.
    """
    ldba: Ldba
    b_maps: Tuple[Tuple[bool, ...], ...]
    traps: FrozenSet[int]

    @property
    def m(self) -> int:
        return self.ldba.m

    @cached_property
    def live_edges(self) -> Tuple[Tuple[int, ...], ...]:
        """Per state, the edges that fire on at least one symbol."""
        return tuple(tuple(sorted(out_edges(self.ldba, q))) for q in range(self.ldba.num_states))

    def annotated(self, i: int, edge: int) -> bool:
        return self.b_maps[i][edge]

    def to_dict(self) -> Dict[str, Any]:
        t = self.ldba.tgba
        return {
            'format': FormatTemplates.ANNOTATION_FORMAT,
            'schema_version': FormatTemplates.SCHEMA_VERSION,
            'ap': list(t.ap_list),
            'initial': t.initial,
            'states': [
                {
                    'id': q,
                    'name': t.state_name(q),
                    'part': 'QD' if q in self.ldba.qd else 'QN',
                    'trap': q in self.traps
                }
                for q in range(t.num_states)
            ],
            'edges': [
                {
                    'id': idx,
                    'src': e.src,
                    'dst': e.dst,
                    'guard': format_ltl(e.guard),
                    'hoa_guard': format_guard(e.guard, t.ap_list),
                    'acceptance': sorted(t.marks(idx))
                }
                for idx, e in enumerate(t.edges)
            ],
            'eps_edges': [list(pair) for pair in self.ldba.eps_edges],
            'b_maps': [[int(bit) for bit in b] for b in self.b_maps],
            'traps': sorted(self.traps)
        }

    def save_json(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2), encoding='utf-8')
        return path


def _live_moves(a: Ldba) -> List[Tuple[Optional[int], int, int]]:
    """(edge or None for ε, src, dst) for every move that can fire."""
    moves: List[Tuple[Optional[int], int, int]] = []
    for q in range(a.num_states):
        for idx in sorted(out_edges(a, q)):
            moves.append((idx, q, a.edges[idx].dst))
    for src, dst in a.eps_edges:
        moves.append((None, src, dst))
    return moves


def annotate(a: Ldba) -> AnnotatedLdba:
    """
    Mark, per acceptance set, the edges on shortest routes to that set.

    For each set F_i, g starts at 1 on states owning a live F_i edge. Each
    sweep then sets b_i(q, σ, q') = 1 and g(q) = 1 wherever g(q) = 0 and
    g(q') = 1, reading g as it stood at the start of the sweep, until no
    sweep changes g. ε-edges propagate g but carry no mark. States left with
    g = 0 for every set are traps.

    Synchronous sweeps give the marking an in-place loop gives when states
    are visited in breadth-first order from the set; brute_force_annotation
    computes it that way.
    """
    moves = _live_moves(a)
    b_maps: List[Tuple[bool, ...]] = []
    dead_per_set: List[set] = []
    for acc in a.acceptance:
        b = [idx in acc for idx in range(len(a.edges))]
        g = [False] * a.num_states
        for idx, src, _ in moves:
            if idx is not None and idx in acc:
                g[src] = True
        changed = True
        while changed:
            before = list(g)
            changed = False
            for idx, src, dst in moves:
                if not before[src] and before[dst]:
                    if idx is not None:
                        b[idx] = True
                    if not g[src]:
                        g[src] = True
                        changed = True
        b_maps.append(tuple(b))
        dead_per_set.append({q for q in range(a.num_states) if not g[q]})
    traps = frozenset(set.intersection(*dead_per_set)) if dead_per_set else frozenset()
    return AnnotatedLdba(ldba=a, b_maps=tuple(b_maps), traps=traps)


def brute_force_annotation(a: Ldba, limit: Optional[int] = None) -> AnnotatedLdba:
    """
    Reference marking by backward breadth-first distances.

    An edge q -> q' is marked for F_i when it is an F_i edge, or when
    dist_i(q') = dist_i(q) - 1, where dist_i counts moves to the nearest
    state owning a live F_i edge.

    Raises:
        ValueError: above `limit` states (settings.brute_force_state_limit)
    """
    limit = settings.brute_force_state_limit if limit is None else limit
    if a.num_states > limit:
        raise ValueError(f"brute-force annotation limited to {limit} states, got {a.num_states}")
    moves = _live_moves(a)
    predecessors: Dict[int, List[int]] = {q: [] for q in range(a.num_states)}
    for _, src, dst in moves:
        predecessors[dst].append(src)

    b_maps = []
    dead_per_set = []
    for acc in a.acceptance:
        dist: Dict[int, int] = {}
        queue = deque()
        for idx, src, _ in moves:
            if idx is not None and idx in acc and src not in dist:
                dist[src] = 0
                queue.append(src)
        while queue:
            q = queue.popleft()
            for p in predecessors[q]:
                if p not in dist:
                    dist[p] = dist[q] + 1
                    queue.append(p)
        b = [idx in acc for idx in range(len(a.edges))]
        for idx, src, dst in moves:
            if idx is None or src not in dist or dst not in dist:
                continue
            if dist[src] > 0 and dist[dst] == dist[src] - 1:
                b[idx] = True
        b_maps.append(tuple(b))
        dead_per_set.append({q for q in range(a.num_states) if q not in dist})
    traps = frozenset(set.intersection(*dead_per_set)) if dead_per_set else frozenset()
    return AnnotatedLdba(ldba=a, b_maps=tuple(b_maps), traps=traps)


@dataclass(frozen=True)
class VisitVector:
    """Which acceptance sets are still to be crossed in the current round."""
    slots: Tuple[bool, ...]

    @classmethod
    def ones(cls, m: int) -> 'VisitVector':
        return cls(tuple([True] * m))

    @property
    def bits(self) -> str:
        return ''.join('1' if s else '0' for s in self.slots)

    def __len__(self) -> int:
        return len(self.slots)

    def __getitem__(self, i: int) -> bool:
        return self.slots[i]


def update_visits(v: VisitVector, edge: int, a: AnnotatedLdba) -> Tuple[VisitVector, bool]:
    """
    Clear the slots of the sets `edge` belongs to.

    Returns:
        (new vector, accepted_round); when every slot would be clear the
        vector is reset to all ones and accepted_round is True
    """
    marks = a.ldba.tgba.marks(edge)
    slots = tuple(slot and i not in marks for i, slot in enumerate(v.slots))
    if not any(slots):
        return VisitVector.ones(len(slots)), True
    return VisitVector(slots), False


def b_value(a: AnnotatedLdba, v: VisitVector, edge: int) -> int:
    """1 if the edge is annotated for some set not yet visited this round."""
    return int(any(a.b_maps[i][edge] and v.slots[i] for i in range(a.m)))


def has_annotated_edge(a: AnnotatedLdba, v: VisitVector, q: int) -> bool:
    return any(b_value(a, v, idx) for idx in a.live_edges[q])


def progress_set(a: AnnotatedLdba, v: VisitVector, q: int, workspace: Workspace) -> Tuple[Region, ...]:
    """
    Regions whose label enables an annotated edge out of q.

    A region's label is the set of names of all regions containing it
    entirely. Guards that the empty label satisfies are skipped.

    Raises:
        ValueError: if q is a trap
    """
    if q in a.traps:
        raise ValueError(f"State {q} is a trap; it has no progress set")
    t = a.ldba.tgba
    guards = [
        t.edges[idx].guard for idx in a.live_edges[q]
        if b_value(a, v, idx) and not evaluate_propositional(t.edges[idx].guard, frozenset())
    ]
    regions = []
    for region in workspace.regions:
        symbol = workspace.region_symbol(region)
        if any(evaluate_propositional(g, symbol) for g in guards):
            regions.append(region)
    return tuple(regions)


class RewardParams(BaseModel):
    """
    Constants of the shaped reward.

    Requires r_d < r_n < 0 < r_g, d_max > 0 and r_n·d_max >= r_d. When
    `separation` is set, also |r_n| <= |r_d|/separation <= |r_g|/separation^2.
    """
    r_g: float
    r_n: float
    r_d: float
    d_max: float = 10 * 2 ** 0.5
    separation: Optional[float] = 10.0

    @model_validator(mode='after')
    def _check_ordering(self) -> 'RewardParams':
        if not self.r_d < self.r_n < 0 < self.r_g:
            raise ValueError(
                f"reward constants must satisfy r_d < r_n < 0 < r_g, "
                f"got r_d={self.r_d}, r_n={self.r_n}, r_g={self.r_g}"
            )
        if not self.d_max > 0:
            raise ValueError(f"d_max must be positive, got {self.d_max}")
        if self.r_n * self.d_max < self.r_d:
            raise ValueError(
                f"r_n * d_max = {self.r_n * self.d_max} falls below r_d = {self.r_d}"
            )
        if self.separation is not None:
            k = self.separation
            if not (abs(self.r_n) <= abs(self.r_d) / k <= abs(self.r_g) / k ** 2):
                raise ValueError(
                    f"reward magnitudes must satisfy |r_n| <= |r_d|/{k} <= |r_g|/{k ** 2} "
                    f"(set separation to null to skip this check)"
                )
        return self


def edge_reward(
    a: AnnotatedLdba,
    v: VisitVector,
    q: int,
    edge: int,
    distance: Optional[float],
    params: RewardParams
) -> float:
    """
    Reward for taking `edge` out of q with planar distance `distance` to the
    progress set (None when the progress set is empty).

    Cases, in order: q has no annotated edge under v gives r_d; an annotated
    edge gives r_g; entering a trap gives r_d; otherwise r_n·d, capped at
    r_n·d_max, which is also the value for an empty progress set.
    """
    if not has_annotated_edge(a, v, q):
        return params.r_d
    if b_value(a, v, edge):
        return params.r_g
    if a.ldba.edges[edge].dst in a.traps:
        return params.r_d
    if distance is None:
        return params.r_n * params.d_max
    return params.r_n * min(distance, params.d_max)


def reward(
    a: AnnotatedLdba,
    v: VisitVector,
    s: CarState,
    q: int,
    s_next: CarState,
    q_next: int,
    workspace: Workspace,
    params: RewardParams,
    distance_fn: Callable[[CarState, Sequence[Region]], float] = distance_to_regions
) -> float:
    """
    Shaped reward of the product transition (s, q) -> (s_next, q_next).

    The edge is the one q takes on L(s); distance is measured from s.

    Raises:
        ValueError: if q_next is not the successor of q on L(s)
    """
    t = a.ldba.tgba
    edge = t.step_edge(q, label(workspace, s))
    if t.edges[edge].dst != q_next:
        raise ValueError(
            f"q' = {q_next} does not follow from q = {q} on {sorted(label(workspace, s))} "
            f"(expected {t.edges[edge].dst})"
        )
    distance = None
    if q not in a.traps:
        regions = progress_set(a, v, q, workspace)
        if regions:
            distance = distance_fn(s, regions)
    return edge_reward(a, v, q, edge, distance, params)
