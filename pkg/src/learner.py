"""
Deterministic-policy actor-critic learner over the product MDP.

Networks and gradients come from src.networks; transitions are stored in
src.replay_buffer. Everything random draws from one seeded generator, so a
run is reproducible bit for bit.
"""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator
from typing_extensions import Literal

from config.formats import FormatTemplates
from config.settings import settings
from src.networks import Mlp, make_optimizer
from src.product import Policy, ProductEnv, ProductState, ResetMode, Termination
from src.replay_buffer import Batch, ReplayBuffer
from src.workspace import CarAction, Workspace

ACTION_DIM = 2
POSE_FEATURES = 4


class TrainingDivergedError(RuntimeError):
    """A loss or a parameter stopped being finite."""


class LearnerConfig(BaseModel):
    """Hyperparameters of the actor-critic learner."""
    discount: float = Field(0.99, gt=0, lt=1)
    actor_lr: float = Field(1e-4, gt=0)
    critic_lr: float = Field(1e-3, gt=0)
    tau: float = Field(0.005, gt=0, le=0.1)
    batch_size: int = Field(64, ge=1)
    buffer_capacity: int = Field(100000, ge=1)
    noise: float = Field(0.2, ge=0)
    noise_final: float = Field(0.05, ge=0)
    actor_hidden: List[int] = Field(default_factory=lambda: [64, 64])
    critic_hidden: List[int] = Field(default_factory=lambda: [64, 64])
    seed: int = 0
    learning_starts: int = Field(1000, ge=0)
    optimizer: Literal['adam', 'sgd'] = 'adam'
    adam_betas: Tuple[float, float] = (0.9, 0.999)
    adam_eps: float = Field(1e-8, gt=0)
    mode: ResetMode = ResetMode.RANDOM_Q

    @field_validator('actor_hidden', 'critic_hidden')
    @classmethod
    def _positive_layers(cls, value: List[int]) -> List[int]:
        if not value or any(n < 1 for n in value):
            raise ValueError(f"hidden layer sizes must be a non-empty list of positive ints, got {value}")
        return value

    @field_validator('mode', mode='before')
    @classmethod
    def _parse_mode(cls, value):
        return ResetMode.parse(value)


def position_scale(workspace: Workspace) -> float:
    """Half-width used to normalize positions (5 for a [-5, 5] box)."""
    b = workspace.bounds
    return max(abs(b.x[0]), abs(b.x[1]), abs(b.y[0]), abs(b.y[1]))


def encode_state(ps: ProductState, n_states: int, scale: float = 5.0) -> np.ndarray:
    """
    Numeric features of a product state.

    Returns:
        [x/scale, y/scale, sin θ, cos θ] + one-hot(q) + V bits, of length 4 + n_states + m
    """
    one_hot = np.zeros(n_states)
    one_hot[ps.q] = 1.0
    pose = [ps.s.x / scale, ps.s.y / scale, np.sin(ps.s.theta), np.cos(ps.s.theta)]
    visits = [1.0 if slot else 0.0 for slot in ps.v.slots]
    return np.concatenate([np.array(pose, dtype=float), one_hot, np.array(visits, dtype=float)])


def act(
    actor: Mlp,
    ps: ProductState,
    noise_scale: float,
    rng: Optional[np.random.Generator] = None,
    scale: float = 5.0
) -> CarAction:
    """
    Actor output plus Gaussian exploration noise, clipped to [-1, 1]^2.

    The automaton size is recovered from the actor's input width.
    """
    n_states = actor.in_dim - POSE_FEATURES - len(ps.v)
    a = actor(encode_state(ps, n_states, scale))[0]
    if noise_scale > 0:
        if rng is None:
            raise ValueError("A random generator is required when noise_scale > 0")
        a = a + rng.normal(0.0, noise_scale, size=a.shape)
    return CarAction.from_array(a)


def critic_targets(target_actor: Mlp, target_critic: Mlp, batch: Batch, discount: float) -> np.ndarray:
    """y = R + γ·Q'(s', π'(s')), without the bootstrap term on terminal rows."""
    next_actions = target_actor(batch.next_states)
    next_q = target_critic(np.hstack([batch.next_states, next_actions]))[:, 0]
    return batch.rewards + discount * (1.0 - batch.dones) * next_q


def critic_gradients(critic: Mlp, batch: Batch, targets: np.ndarray) -> Tuple[float, List[np.ndarray]]:
    """Mean squared Bellman error on the stored actions and its gradient."""
    q, cache = critic.forward(np.hstack([batch.states, batch.actions]))
    error = q[:, 0] - targets
    loss = float(np.mean(error ** 2))
    dq = (2.0 / len(targets)) * error[:, None]
    grads, _ = critic.backward(cache, dq)
    return loss, grads


def critic_update(critic: Mlp, optimizer, target_actor: Mlp, target_critic: Mlp,
                  batch: Batch, discount: float) -> float:
    """
    One gradient step on the critic.

    Returns:
        Loss before the step

    Raises:
        ValueError: on an empty batch
        TrainingDivergedError: if the loss or the parameters are not finite
    """
    if len(batch) == 0:
        raise ValueError("critic_update needs a non-empty batch")
    targets = critic_targets(target_actor, target_critic, batch, discount)
    loss, grads = critic_gradients(critic, batch, targets)
    if not np.isfinite(loss):
        raise TrainingDivergedError(f"critic loss is {loss}")
    optimizer.step(grads)
    if not critic.is_finite():
        raise TrainingDivergedError("critic parameters became non-finite")
    return loss


def actor_gradients(actor: Mlp, critic, states: np.ndarray) -> Tuple[float, List[np.ndarray]]:
    """
    Mean Q(s, π(s)) over the batch and its gradient w.r.t. the actor.

    `critic` only needs forward/backward in the Mlp calling convention.
    """
    actions, actor_cache = actor.forward(states)
    q, critic_cache = critic.forward(np.hstack([states, actions]))
    objective = float(np.mean(q))
    _, dx = critic.backward(critic_cache, np.full_like(q, 1.0 / len(states)))
    grads, _ = actor.backward(actor_cache, dx[:, states.shape[1]:])
    return objective, grads


def actor_update(actor: Mlp, optimizer, critic, batch: Batch) -> float:
    """
    One ascent step on the mean critic value of the actor's actions.

    Returns:
        Objective before the step
    """
    if len(batch) == 0:
        raise ValueError("actor_update needs a non-empty batch")
    objective, grads = actor_gradients(actor, critic, batch.states)
    if not np.isfinite(objective):
        raise TrainingDivergedError(f"actor objective is {objective}")
    optimizer.step([-g for g in grads])
    if not actor.is_finite():
        raise TrainingDivergedError("actor parameters became non-finite")
    return objective


def soft_update(target: Mlp, online: Mlp, tau: float):
    """target <- tau·online + (1 - tau)·target, in place."""
    if not target.same_architecture(online):
        raise ValueError(f"Cannot blend networks of shapes {target.sizes} and {online.sizes}")
    for t, o in zip(target.parameters(), online.parameters()):
        t *= (1.0 - tau)
        t += tau * o


@dataclass
class DdpgAgent:
    """Actor, critic, their targets and optimizers for one product MDP."""
    actor: Mlp
    critic: Mlp
    target_actor: Mlp
    target_critic: Mlp
    n_states: int
    m: int
    scale: float = 5.0
    actor_optimizer: Any = None
    critic_optimizer: Any = None

    @property
    def state_dim(self) -> int:
        return POSE_FEATURES + self.n_states + self.m

    @classmethod
    def create(
        cls,
        cfg: LearnerConfig,
        n_states: int,
        m: int,
        rng: np.random.Generator,
        scale: float = 5.0
    ) -> 'DdpgAgent':
        state_dim = POSE_FEATURES + n_states + m
        actor = Mlp([state_dim, *cfg.actor_hidden, ACTION_DIM], 'tanh', 1.0, rng)
        critic = Mlp([state_dim + ACTION_DIM, *cfg.critic_hidden, 1], 'identity', 1.0, rng)
        agent = cls(actor, critic, actor.copy(), critic.copy(), n_states, m, scale)
        agent.attach_optimizers(cfg)
        return agent

    def attach_optimizers(self, cfg: LearnerConfig):
        self.actor_optimizer = make_optimizer(
            cfg.optimizer, self.actor.parameters(), cfg.actor_lr, cfg.adam_betas, cfg.adam_eps
        )
        self.critic_optimizer = make_optimizer(
            cfg.optimizer, self.critic.parameters(), cfg.critic_lr, cfg.adam_betas, cfg.adam_eps
        )

    def encode(self, ps: ProductState) -> np.ndarray:
        return encode_state(ps, self.n_states, self.scale)

    def policy(self) -> Policy:
        """Noise-free controller over a frozen copy of the actor."""
        frozen = self.actor.copy()
        scale = self.scale
        return lambda ps: act(frozen, ps, 0.0, None, scale)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'format': FormatTemplates.CHECKPOINT_FORMAT,
            'schema_version': FormatTemplates.SCHEMA_VERSION,
            'n_states': self.n_states,
            'm': self.m,
            'scale': self.scale,
            'actor': self.actor.to_dict(),
            'critic': self.critic.to_dict(),
            'target_actor': self.target_actor.to_dict(),
            'target_critic': self.target_critic.to_dict()
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'DdpgAgent':
        if data.get('format') != FormatTemplates.CHECKPOINT_FORMAT:
            raise ValueError(f"Not a checkpoint: format is {data.get('format')!r}")
        if data.get('schema_version') != FormatTemplates.SCHEMA_VERSION:
            raise ValueError(f"Unsupported checkpoint schema_version {data.get('schema_version')!r}")
        agent = cls(
            actor=Mlp.from_dict(data['actor']),
            critic=Mlp.from_dict(data['critic']),
            target_actor=Mlp.from_dict(data['target_actor']),
            target_critic=Mlp.from_dict(data['target_critic']),
            n_states=int(data['n_states']),
            m=int(data['m']),
            scale=float(data['scale'])
        )
        if agent.actor.in_dim != agent.state_dim:
            raise ValueError(
                f"Actor input width {agent.actor.in_dim} does not match "
                f"{agent.n_states} automaton states and {agent.m} acceptance sets"
            )
        return agent


def save_checkpoint(agent: DdpgAgent, path: Union[str, Path]) -> Path:
    """Write the agent's networks as JSON; floats round-trip exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(agent.to_dict()), encoding='utf-8')
    return path


def load_checkpoint(path: Union[str, Path]) -> DdpgAgent:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    return DdpgAgent.from_dict(json.loads(path.read_text(encoding='utf-8')))


@dataclass
class EpisodeMetrics:
    """Summary of one finished training episode."""
    step: int
    episode: int
    ret: float
    length: int
    accepted: bool
    epsilon_used: bool
    terminated: Termination

    @property
    def return_per_step(self) -> float:
        return self.ret / self.length


def normalize_returns(episodes: List[EpisodeMetrics]) -> List[float]:
    """Per-step returns min-max scaled to [0, 1] over the run; constant runs map to 0."""
    raw = [e.return_per_step for e in episodes]
    if not raw:
        return []
    lo, hi = min(raw), max(raw)
    if hi == lo:
        return [0.0] * len(raw)
    return [(r - lo) / (hi - lo) for r in raw]


@dataclass
class TrainingResult:
    agent: DdpgAgent
    episodes: List[EpisodeMetrics] = field(default_factory=list)
    steps: int = 0
    mode: ResetMode = ResetMode.RANDOM_Q

    def metrics_rows(self) -> List[Dict[str, Any]]:
        """Rows for the metrics CSV."""
        rows = []
        for e, norm in zip(self.episodes, normalize_returns(self.episodes)):
            values = [e.step, e.episode, e.ret, norm, int(e.accepted), int(e.epsilon_used)]
            rows.append(dict(zip(FormatTemplates.METRICS_FIELDS, values)))
        return rows

    @property
    def mean_step_reward(self) -> float:
        total = sum(e.ret for e in self.episodes)
        length = sum(e.length for e in self.episodes)
        return total / length if length else 0.0


class Trainer:
    """Runs the actor-critic loop on a product environment."""

    def __init__(self, cfg: LearnerConfig, verbose: Optional[bool] = None):
        self.cfg = cfg
        self.verbose = settings.verbose if verbose is None else verbose

    def noise_at(self, t: int, total: int) -> float:
        """Exploration noise decayed linearly from `noise` to `noise_final`."""
        frac = min(1.0, t / max(1, total))
        return self.cfg.noise + (self.cfg.noise_final - self.cfg.noise) * frac

    def train(self, env: ProductEnv, steps: int, mode=None) -> TrainingResult:
        """
        Train for `steps` environment steps.

        Args:
            env: Product environment
            steps: Number of environment steps (0 returns the initial agent)
            mode: Reset mode; defaults to cfg.mode

        Returns:
            TrainingResult with the agent and per-episode metrics

        Raises:
            TrainingDivergedError: if an update produces NaN or Inf
        """
        if steps < 0:
            raise ValueError(f"steps must be non-negative, got {steps}")
        cfg = self.cfg
        mode = ResetMode.parse(mode if mode is not None else cfg.mode)
        rng = np.random.default_rng(cfg.seed)
        agent = DdpgAgent.create(cfg, env.num_states, env.m, rng, position_scale(env.workspace))
        buffer = ReplayBuffer(cfg.buffer_capacity, agent.state_dim, ACTION_DIM)
        result = TrainingResult(agent=agent, steps=steps, mode=mode)
        if steps == 0:
            return result

        if self.verbose:
            print(f"🔄 Training {steps} steps in {mode.value} mode (seed {cfg.seed})")

        ps = env.reset(rng, mode)
        ep_return, ep_length, ep_epsilon = 0.0, 0, False
        for t in range(steps):
            a = act(agent.actor, ps, self.noise_at(t, steps), rng, agent.scale)
            outcome = env.step(ps, a, rng)
            buffer.add(agent.encode(ps), [a.v, a.phi], outcome.reward,
                       agent.encode(outcome.next), outcome.done)
            ep_return += outcome.reward
            ep_length += 1
            ep_epsilon = ep_epsilon or outcome.epsilon_used

            if t + 1 >= cfg.learning_starts and len(buffer) >= cfg.batch_size:
                batch = buffer.sample(rng, cfg.batch_size)
                critic_update(agent.critic, agent.critic_optimizer, agent.target_actor,
                              agent.target_critic, batch, cfg.discount)
                actor_update(agent.actor, agent.actor_optimizer, agent.critic, batch)
                soft_update(agent.target_actor, agent.actor, cfg.tau)
                soft_update(agent.target_critic, agent.critic, cfg.tau)

            if outcome.finished:
                episode = EpisodeMetrics(
                    step=t + 1,
                    episode=len(result.episodes) + 1,
                    ret=ep_return,
                    length=ep_length,
                    accepted=outcome.terminated == Termination.ACCEPTED_ROUND,
                    epsilon_used=ep_epsilon,
                    terminated=outcome.terminated
                )
                result.episodes.append(episode)
                self._report(episode)
                ps = env.reset(rng, mode)
                ep_return, ep_length, ep_epsilon = 0.0, 0, False
            else:
                ps = outcome.next

        if self.verbose:
            accepted = sum(e.accepted for e in result.episodes)
            print(f"✅ Training done: {len(result.episodes)} episodes, {accepted} accepted")
        return result

    def _report(self, episode: EpisodeMetrics):
        if self.verbose and episode.episode % settings.log_every == 0:
            print(f"   episode {episode.episode} | step {episode.step} | "
                  f"return {episode.ret:.2f} | {episode.terminated.value}")
