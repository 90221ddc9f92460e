"""
Episodic product of the car MDP with an annotated LDBA.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Callable, FrozenSet, List, Optional, Tuple

import numpy as np

from config.formats import FormatTemplates
from src.shaping import (
    AnnotatedLdba, RewardParams, VisitVector, has_annotated_edge, reward, update_visits
)
from src.workspace import CarAction, CarState, Workspace, label


class Termination(str, Enum):
    RUNNING = 'running'
    TRAP = 'trap'
    ACCEPTED_ROUND = 'accepted_round'
    STEP_LIMIT = 'step_limit'


class ResetMode(str, Enum):
    RANDOM_Q = 'random_q'
    FIXED_Q0 = 'fixed_q0'

    @classmethod
    def parse(cls, value) -> 'ResetMode':
        if isinstance(value, cls):
            return value
        return cls(str(value).replace('-', '_'))


@dataclass(frozen=True)
class ProductState:
    s: CarState
    q: int
    v: VisitVector
    steps: int = 0


@dataclass(frozen=True)
class StepOutcome:
    next: ProductState
    reward: float
    terminated: Termination
    edge_taken: int
    epsilon_used: bool = False
    label: FrozenSet[str] = frozenset()

    @property
    def done(self) -> bool:
        """True when the value target must not bootstrap (trap or accepted round)."""
        return self.terminated in (Termination.TRAP, Termination.ACCEPTED_ROUND)

    @property
    def finished(self) -> bool:
        return self.terminated != Termination.RUNNING


Policy = Callable[[ProductState], CarAction]


class ProductEnv:
    """Product MDP over a workspace and an annotated automaton."""

    def __init__(
        self,
        annotated: AnnotatedLdba,
        workspace: Workspace,
        params: RewardParams,
        max_episode_steps: int = 200
    ):
        if max_episode_steps < 1:
            raise ValueError(f"max_episode_steps must be at least 1, got {max_episode_steps}")
        self.annotated = annotated
        self.workspace = workspace
        self.params = params
        self.max_episode_steps = max_episode_steps
        self.tgba = annotated.ldba.tgba
        self.non_trap_states: Tuple[int, ...] = tuple(
            q for q in range(self.tgba.num_states) if q not in annotated.traps
        )

    @property
    def num_states(self) -> int:
        return self.tgba.num_states

    @property
    def m(self) -> int:
        return self.annotated.m

    def with_max_steps(self, max_episode_steps: int) -> 'ProductEnv':
        return ProductEnv(self.annotated, self.workspace, self.params, max_episode_steps)

    def reset(self, rng: np.random.Generator, mode=ResetMode.RANDOM_Q) -> ProductState:
        """
        Start an episode from a uniform pose.

        Args:
            rng: Generator for the pose and, in random_q mode, the automaton state
            mode: random_q draws q uniformly over non-trap states; fixed_q0 uses q0

        Returns:
            ProductState with V all ones and zero steps
        """
        mode = ResetMode.parse(mode)
        s = self.workspace.sample_state(rng)
        if mode == ResetMode.RANDOM_Q:
            if not self.non_trap_states:
                raise ValueError("Every automaton state is a trap; the task is unsatisfiable")
            q = self.non_trap_states[int(rng.integers(0, len(self.non_trap_states)))]
        else:
            q = self.tgba.initial
        return ProductState(s=s, q=q, v=VisitVector.ones(self.m), steps=0)

    def reset_at(self, s: CarState, q: Optional[int] = None) -> ProductState:
        """Start an episode from a given pose, at q0 unless q is given."""
        q = self.tgba.initial if q is None else q
        if not 0 <= q < self.num_states:
            raise ValueError(f"Automaton state {q} does not exist")
        return ProductState(s=s, q=q, v=VisitVector.ones(self.m), steps=0)

    def epsilon_options(self, ps: ProductState) -> List[int]:
        """QD states one ε-edge away from ps.q."""
        return self.annotated.ldba.epsilon_successors(ps.q)

    def step(
        self,
        ps: ProductState,
        a: CarAction,
        rng: Optional[np.random.Generator] = None
    ) -> StepOutcome:
        """
        Advance the product by one step.

        An ε-edge is taken first when it leads to a state with an annotated
        edge under the current V. The automaton then reads L(s) of the
        current pose, the car moves, the reward is computed and V is updated,
        all in this same step: an ε-move does not get a step of its own, so
        the pose changes on the step that takes it.
        """
        if ps.steps >= self.max_episode_steps:
            raise ValueError("Episode already reached its step limit")
        if ps.q in self.annotated.traps:
            raise ValueError(f"Episode already ended in trap state {ps.q}")

        q = ps.q
        epsilon_used = False
        for candidate in self.epsilon_options(ps):
            if has_annotated_edge(self.annotated, ps.v, candidate):
                q = candidate
                epsilon_used = True
                break

        symbol = label(self.workspace, ps.s)
        try:
            edge = self.tgba.step_edge(q, symbol)
        except ValueError as e:
            raise AssertionError(f"Corrupt automaton: {e}") from e
        q_next = self.tgba.edges[edge].dst
        s_next = self.workspace.step(ps.s, a, rng)
        r = reward(
            self.annotated, ps.v, ps.s, q, s_next, q_next,
            self.workspace, self.params
        )
        v_next, accepted = update_visits(ps.v, edge, self.annotated)
        steps = ps.steps + 1

        if q_next in self.annotated.traps:
            terminated = Termination.TRAP
        elif accepted:
            terminated = Termination.ACCEPTED_ROUND
        elif steps >= self.max_episode_steps:
            terminated = Termination.STEP_LIMIT
        else:
            terminated = Termination.RUNNING
        return StepOutcome(
            next=ProductState(s=s_next, q=q_next, v=v_next, steps=steps),
            reward=r,
            terminated=terminated,
            edge_taken=edge,
            epsilon_used=epsilon_used,
            label=symbol
        )


class TrajectoryLog:
    """Rows of one episode for the trajectory CSV."""

    def __init__(self):
        self.rows: List[dict] = []

    def start(self, ps: ProductState):
        self.rows.append(self._row(ps, 0.0, 'reset'))

    def record(self, previous: ProductState, outcome: StepOutcome):
        if outcome.finished:
            event = outcome.terminated.value
        elif outcome.epsilon_used:
            event = 'epsilon'
        elif outcome.next.q != previous.q:
            event = 'advance'
        else:
            event = ''
        self.rows.append(self._row(outcome.next, outcome.reward, event))

    @staticmethod
    def _row(ps: ProductState, r: float, event: str) -> dict:
        values = [ps.steps, ps.s.x, ps.s.y, ps.s.theta, ps.q, r, ps.v.bits, event]
        return dict(zip(FormatTemplates.TRAJECTORY_FIELDS, values))


def rollout(
    env: ProductEnv,
    policy: Policy,
    start: ProductState,
    max_steps: Optional[int] = None,
    log: Optional[TrajectoryLog] = None,
    rng: Optional[np.random.Generator] = None
) -> Tuple[StepOutcome, float]:
    """
    Run a policy from `start` until the episode ends.

    Returns:
        (last outcome, undiscounted return)
    """
    if max_steps is not None and max_steps != env.max_episode_steps:
        env = env.with_max_steps(max_steps)
    ps = start
    total = 0.0
    if log is not None:
        log.start(ps)
    while True:
        outcome = env.step(ps, policy(ps), rng)
        total += outcome.reward
        if log is not None:
            log.record(ps, outcome)
        if outcome.finished:
            return outcome, total
        ps = outcome.next

