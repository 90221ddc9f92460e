"""
Finite gridworld and the tabular oracle for the shaped product reward.

Value iteration runs on the finite product (cell, q, V) with the same
step order and reward cases as the continuous product; grid distance is
Manhattan distance to the nearest progress cell.
"""
import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from config.settings import settings
from src.ltl import evaluate_propositional
from src.shaping import (
    AnnotatedLdba, RewardParams, VisitVector, b_value, edge_reward, has_annotated_edge, update_visits
)

Cell = Tuple[int, int]

# up, down, left, right
ACTIONS: Tuple[Cell, ...] = ((0, 1), (0, -1), (-1, 0), (1, 0))
ACTION_NAMES = ('up', 'down', 'left', 'right')


class OracleError(RuntimeError):
    """The product is too large, or value iteration did not converge."""


class GridSpec(BaseModel):
    """JSON schema of a grid: labeled cells and wall cells."""
    width: int = Field(..., ge=1)
    height: int = Field(..., ge=1)
    labels: Dict[str, List[Tuple[int, int]]] = Field(default_factory=dict)
    walls: List[Tuple[int, int]] = Field(default_factory=list)

    @model_validator(mode='after')
    def _cells_inside(self) -> 'GridSpec':
        cells = [c for cs in self.labels.values() for c in cs] + list(self.walls)
        for x, y in cells:
            if not (0 <= x < self.width and 0 <= y < self.height):
                raise ValueError(f"cell ({x}, {y}) lies outside a {self.width}x{self.height} grid")
        return self

    def to_gridworld(self) -> 'Gridworld':
        return Gridworld(
            self.width,
            self.height,
            {name: [tuple(c) for c in cs] for name, cs in self.labels.items()},
            [tuple(c) for c in self.walls]
        )


class Gridworld:
    """W×H cells with deterministic 4-connected moves; moves into walls or off the grid stay put."""

    def __init__(self, width: int, height: int,
                 labels: Dict[str, List[Cell]], walls: Optional[List[Cell]] = None):
        self.width = width
        self.height = height
        self.walls: FrozenSet[Cell] = frozenset(walls or [])
        cell_labels: Dict[Cell, set] = {}
        for name, cells in labels.items():
            for c in cells:
                cell_labels.setdefault(tuple(c), set()).add(name)
        self._labels = {c: frozenset(names) for c, names in cell_labels.items()}
        self.cells: List[Cell] = [
            (x, y) for y in range(height) for x in range(width) if (x, y) not in self.walls
        ]
        self.index: Dict[Cell, int] = {c: i for i, c in enumerate(self.cells)}

    @property
    def ap(self) -> FrozenSet[str]:
        return frozenset(name for names in self._labels.values() for name in names)

    @property
    def diameter(self) -> int:
        """Largest Manhattan distance on the grid."""
        return (self.width - 1) + (self.height - 1)

    def label(self, cell: Cell) -> FrozenSet[str]:
        return self._labels.get(cell, frozenset())

    def move(self, cell: Cell, action: int) -> Cell:
        dx, dy = ACTIONS[action]
        nxt = (cell[0] + dx, cell[1] + dy)
        if not (0 <= nxt[0] < self.width and 0 <= nxt[1] < self.height) or nxt in self.walls:
            return cell
        return nxt


def load_grid(path: Union[str, Path]) -> Gridworld:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Grid file not found: {path}")
    return GridSpec.model_validate_json(path.read_text(encoding='utf-8')).to_gridworld()


def progress_cells(gw: Gridworld, a: AnnotatedLdba, v: VisitVector, q: int) -> List[Cell]:
    """Cells whose label enables an annotated edge out of q (guards true on ∅ skipped)."""
    t = a.ldba.tgba
    guards = [
        t.edges[idx].guard for idx in a.live_edges[q]
        if b_value(a, v, idx) and not evaluate_propositional(t.edges[idx].guard, frozenset())
    ]
    return [c for c in gw.cells if any(evaluate_propositional(g, gw.label(c)) for g in guards)]


def _visit_vectors(m: int) -> List[VisitVector]:
    """Every reachable V: all slot patterns except all-clear."""
    return [VisitVector(bits) for bits in itertools.product((True, False), repeat=m) if any(bits)]


@dataclass
class OracleResult:
    """Converged values, greedy policy and satisfaction maps at V all ones."""
    gridworld: Gridworld
    annotated: AnnotatedLdba
    values: np.ndarray
    policy: Dict[Tuple[Cell, int], int]
    satisfied: Dict[Tuple[Cell, int], bool]
    reachable: Dict[Tuple[Cell, int], bool]
    iterations: int
    _successor: np.ndarray = None
    _accepting: np.ndarray = None
    _terminal: np.ndarray = None
    _actions: np.ndarray = None
    _states: List[Tuple[Cell, int, VisitVector]] = None

    @property
    def matches_ground_truth(self) -> bool:
        return self.satisfied == self.reachable

    def mismatches(self) -> List[Tuple[Cell, int]]:
        return sorted(k for k in self.satisfied if self.satisfied[k] != self.reachable[k])

    def greedy_path(self, cell: Cell, q: int, max_steps: Optional[int] = None) -> List[Tuple[Cell, int]]:
        """(cell, q) pairs visited by the greedy policy from V all ones, until the episode ends."""
        limit = len(self._states) + 1 if max_steps is None else max_steps
        s = _state_index(self, cell, q)
        path = [(cell, q)]
        for _ in range(limit):
            if self._terminal[s]:
                break
            s = self._successor[s, self._actions[s]]
            c, q_next, _ = self._states[s]
            path.append((c, q_next))
        return path


def _state_index(result: OracleResult, cell: Cell, q: int) -> int:
    n_v = 2 ** result.annotated.m - 1
    return (result.gridworld.index[cell] * result.annotated.ldba.num_states + q) * n_v


def tabular_oracle(
    gw: Gridworld,
    a: AnnotatedLdba,
    params: RewardParams,
    gamma: float = 0.99,
    tol: float = 1e-8
) -> OracleResult:
    """
    Solve the finite product by value iteration and check the greedy policy.

    Each product state (cell, q, V) takes the greedy ε-move, reads the
    cell's label, earns the shaped reward of that edge and moves the agent.
    Trap entry and completed acceptance rounds end the episode.

    Args:
        gw: Gridworld whose labels use the automaton's propositions
        a: Annotated automaton
        params: Reward constants; r_n·d uses Manhattan distance
        gamma: Discount in (0, 1)
        tol: Sup-norm change that stops iteration

    Returns:
        OracleResult with per-(cell, q) greedy satisfaction and BFS ground truth

    Raises:
        ValueError: on labels outside the automaton's propositions or a bad gamma
        OracleError: above settings.oracle_state_limit, or on non-convergence
    """
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    t = a.ldba.tgba
    unknown = gw.ap - set(t.ap_list)
    if unknown:
        raise ValueError(f"Grid labels {sorted(unknown)} are not propositions of the automaton")
    size = len(gw.cells) * t.num_states
    if size > settings.oracle_state_limit:
        raise OracleError(f"product has {size} cell-state pairs, limit is {settings.oracle_state_limit}")

    vectors = _visit_vectors(a.m)
    v_index = {v: i for i, v in enumerate(vectors)}
    states = [(c, q, v) for c in gw.cells for q in range(t.num_states) for v in vectors]

    def index(cell: Cell, q: int, v: VisitVector) -> int:
        return (gw.index[cell] * t.num_states + q) * len(vectors) + v_index[v]

    n = len(states)
    rewards = np.zeros(n)
    terminal = np.zeros(n, dtype=bool)
    accepting = np.zeros(n, dtype=bool)
    successor = np.zeros((n, len(ACTIONS)), dtype=int)
    cells_cache: Dict[Tuple[int, VisitVector], List[Cell]] = {}

    for s, (cell, q, v) in enumerate(states):
        successor[s] = s
        if q in a.traps:
            terminal[s] = True
            continue
        q_eff = q
        for candidate in a.ldba.epsilon_successors(q):
            if has_annotated_edge(a, v, candidate):
                q_eff = candidate
                break
        edge = t.step_edge(q_eff, gw.label(cell))
        q_next = t.edges[edge].dst
        distance = None
        key = (q_eff, v)
        if key not in cells_cache:
            cells_cache[key] = progress_cells(gw, a, v, q_eff)
        if cells_cache[key]:
            distance = min(abs(cell[0] - c[0]) + abs(cell[1] - c[1]) for c in cells_cache[key])
        rewards[s] = edge_reward(a, v, q_eff, edge, distance, params)
        v_next, accepted = update_visits(v, edge, a)
        accepting[s] = accepted
        terminal[s] = accepted or q_next in a.traps
        for action in range(len(ACTIONS)):
            successor[s, action] = index(gw.move(cell, action), q_next, v_next)

    values = np.zeros(n)
    continuing = (~terminal).astype(float)
    for iteration in range(1, settings.oracle_max_iterations + 1):
        updated = rewards + gamma * continuing * values[successor].max(axis=1)
        delta = float(np.max(np.abs(updated - values))) if n else 0.0
        values = updated
        if delta < tol:
            break
    else:
        raise OracleError(
            f"value iteration did not reach tol={tol} within {settings.oracle_max_iterations} iterations"
        )

    # argmax returns the lowest index among ties
    actions = values[successor].argmax(axis=1)

    # Ground truth: states from which some action sequence completes a round
    reachable = accepting.copy()
    while True:
        grown = accepting | (~terminal & reachable[successor].any(axis=1))
        if np.array_equal(grown, reachable):
            break
        reachable = grown

    ones = VisitVector.ones(a.m)
    policy, satisfied, truth = {}, {}, {}
    for cell in gw.cells:
        for q in range(t.num_states):
            s = index(cell, q, ones)
            policy[(cell, q)] = int(actions[s])
            truth[(cell, q)] = bool(reachable[s])
            satisfied[(cell, q)] = _greedy_accepts(s, actions, successor, accepting, terminal, n + 1)

    return OracleResult(
        gridworld=gw,
        annotated=a,
        values=values,
        policy=policy,
        satisfied=satisfied,
        reachable=truth,
        iterations=iteration,
        _successor=successor,
        _accepting=accepting,
        _terminal=terminal,
        _actions=actions,
        _states=states
    )


def _greedy_accepts(s: int, actions: np.ndarray, successor: np.ndarray,
                    accepting: np.ndarray, terminal: np.ndarray, limit: int) -> bool:
    for _ in range(limit):
        if accepting[s]:
            return True
        if terminal[s]:
            return False
        s = successor[s, actions[s]]
    return False
