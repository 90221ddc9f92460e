"""
Experiment pipeline: config loading, training per reset mode, success-rate
evaluation, scripted controller and plot-data export.
"""
import json
import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from config.formats import FormatTemplates
from config.settings import settings
from src.automata import deterministic_ldba
from src.hoa import load_hoa, save_hoa
from src.learner import DdpgAgent, LearnerConfig, Trainer, act, position_scale, save_checkpoint
from src.ltl import atomic_props, parse_ltl
from src.networks import Mlp
from src.product import (
    Policy, ProductEnv, ProductState, ResetMode, Termination, TrajectoryLog, rollout
)
from src.reporting import ReportHandler
from src.shaping import AnnotatedLdba, RewardParams, annotate, has_annotated_edge, progress_set
from src.translator import translate_fragment
from src.workspace import CarAction, CarState, Workspace, load_workspace, wrap_angle

STAGES = ('parse', 'ingest', 'validate', 'annotate', 'product', 'train', 'evaluate', 'report')


class PipelineStageError(RuntimeError):
    """A pipeline stage failed; `cause` holds the original exception."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


class EvaluationSpec(BaseModel):
    """Evaluation start states: `count` seeded draws, or an explicit list."""
    count: int = Field(default_factory=lambda: settings.eval_starts, ge=1)
    seed: int = 0
    starts: Optional[List[Tuple[float, float, float]]] = None
    max_steps: Optional[int] = Field(None, ge=1)


class ExperimentConfig(BaseModel):
    """JSON schema of an experiment file."""
    schema_version: int = FormatTemplates.SCHEMA_VERSION
    name: str
    formula: Optional[str] = None
    hoa_path: Optional[str] = None
    workspace_path: str
    reward: RewardParams
    learner: LearnerConfig = Field(default_factory=LearnerConfig)
    training_steps: int = Field(..., ge=0)
    max_episode_steps: int = Field(200, ge=1)
    baseline_max_episode_steps: Optional[int] = Field(None, ge=1)
    modes: List[ResetMode] = Field(default_factory=lambda: [ResetMode.RANDOM_Q, ResetMode.FIXED_Q0])
    evaluation: EvaluationSpec = Field(default_factory=EvaluationSpec)
    reference_success: Optional[Dict[str, float]] = None

    @field_validator('schema_version')
    @classmethod
    def _known_version(cls, value: int) -> int:
        if value != FormatTemplates.SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {value}, expected {FormatTemplates.SCHEMA_VERSION}")
        return value

    @field_validator('modes', mode='before')
    @classmethod
    def _parse_modes(cls, value):
        return [ResetMode.parse(v) for v in value]

    @model_validator(mode='after')
    def _one_task_source(self) -> 'ExperimentConfig':
        if (self.formula is None) == (self.hoa_path is None):
            raise ValueError("exactly one of 'formula' and 'hoa_path' must be given")
        if not self.modes:
            raise ValueError("at least one reset mode is required")
        return self

    def episode_steps(self, mode: ResetMode) -> int:
        """Episode length for a mode; the fixed-q0 baseline may train on longer episodes."""
        if mode == ResetMode.FIXED_Q0 and self.baseline_max_episode_steps is not None:
            return self.baseline_max_episode_steps
        return self.max_episode_steps

    def resolve_paths(self, base_dir: Union[str, Path]) -> 'ExperimentConfig':
        """
        Resolve relative paths against `base_dir` and check they exist.

        Raises:
            FileNotFoundError: if a referenced file is missing
        """
        base_dir = Path(base_dir)
        updates = {}
        for key in ('hoa_path', 'workspace_path'):
            value = getattr(self, key)
            if value is None:
                continue
            path = Path(value)
            if not path.is_absolute():
                path = base_dir / path
            if not path.exists():
                raise FileNotFoundError(f"{key} not found: {path}")
            updates[key] = str(path)
        return self.model_copy(update=updates)


def load_experiment_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Experiment config not found: {path}")
    cfg = ExperimentConfig.model_validate_json(path.read_text(encoding='utf-8'))
    return cfg.resolve_paths(path.parent)


def evaluation_starts(workspace: Workspace, spec: EvaluationSpec) -> List[CarState]:
    """Explicit starts when given, else `count` uniform poses from default_rng(seed)."""
    if spec.starts is not None:
        return [CarState(*s) for s in spec.starts]
    rng = np.random.default_rng(spec.seed)
    return [workspace.sample_state(rng) for _ in range(spec.count)]


def _as_policy(actor: Union[Policy, Mlp], env: ProductEnv) -> Policy:
    if isinstance(actor, Mlp):
        frozen = actor.copy()
        scale = position_scale(env.workspace)
        return lambda ps: act(frozen, ps, 0.0, None, scale)
    return actor


def evaluate_starts(
    actor: Union[Policy, Mlp],
    env: ProductEnv,
    starts: Sequence[CarState],
    max_steps: Optional[int] = None
) -> List[Termination]:
    """How each rollout from q0 ended, one entry per start."""
    policy = _as_policy(actor, env)
    return [rollout(env, policy, env.reset_at(s), max_steps)[0].terminated for s in starts]


def success_rate(
    actor: Union[Policy, Mlp],
    env: ProductEnv,
    starts: Sequence[CarState],
    max_steps: Optional[int] = None
) -> float:
    """
    Fraction of starts from which the noise-free policy completes an
    acceptance round from q0 within `max_steps` without entering a trap.

    Raises:
        ValueError: if starts is empty
    """
    if not starts:
        raise ValueError("success_rate needs at least one start state")
    outcomes = evaluate_starts(actor, env, starts, max_steps)
    return sum(o == Termination.ACCEPTED_ROUND for o in outcomes) / len(outcomes)


class WaypointController:
    """
    Scripted controller: full speed toward the center of the nearest
    progress region, or toward a fixed point when `target` is given.
    Stops when there is nothing to drive to.
    """

    def __init__(
        self,
        annotated: AnnotatedLdba,
        workspace: Workspace,
        target: Optional[Tuple[float, float]] = None,
        gain: float = 2.0,
        speed: float = 1.0
    ):
        self.annotated = annotated
        self.workspace = workspace
        self.target = target
        self.gain = gain
        self.speed = speed

    def target_for(self, ps: ProductState) -> Optional[Tuple[float, float]]:
        if self.target is not None:
            return self.target
        if ps.q in self.annotated.traps:
            return None
        q = ps.q
        for candidate in self.annotated.ldba.epsilon_successors(ps.q):
            if has_annotated_edge(self.annotated, ps.v, candidate):
                q = candidate
                break
        regions = progress_set(self.annotated, ps.v, q, self.workspace)
        if not regions:
            return None
        nearest = min(regions, key=lambda r: r.distance(ps.s.x, ps.s.y))
        return nearest.center

    def __call__(self, ps: ProductState) -> CarAction:
        target = self.target_for(ps)
        if target is None:
            return CarAction(0.0, 0.0)
        heading = math.atan2(target[1] - ps.s.y, target[0] - ps.s.x)
        error = wrap_angle(heading - ps.s.theta)
        return CarAction(self.speed, self.gain * error).clipped()


def smooth(values: Sequence[float], window: int) -> List[float]:
    """Trailing mean over the last `window` values (fewer at the start)."""
    if window < 1:
        raise ValueError(f"window must be at least 1, got {window}")
    arr = np.asarray(values, dtype=float)
    return [float(np.mean(arr[max(0, i - window + 1):i + 1])) for i in range(len(arr))]


def export_plot_data(
    metrics: Mapping[str, Sequence[Mapping[str, Any]]],
    output_dir: Union[str, Path],
    window: Optional[int] = None
) -> Dict[str, Path]:
    """
    Write one plot CSV per run of smoothed normalized return.

    All runs share one step grid, the union of their episode-end steps;
    each run's series is forward-filled onto it and left blank before its
    first episode.

    Args:
        metrics: Run name -> metrics rows (step, normalized_return, ...)
        output_dir: Directory for `<run>_plot.csv`
        window: Smoothing window; settings.smoothing_window when None

    Returns:
        Run name -> written path
    """
    window = settings.smoothing_window if window is None else window
    series = {}
    for run, rows in metrics.items():
        steps = [int(r['step']) for r in rows]
        series[run] = (steps, smooth([float(r['normalized_return']) for r in rows], window))
    grid = sorted({s for steps, _ in series.values() for s in steps})

    handler = ReportHandler(output_dir)
    paths = {}
    for run, (steps, values) in series.items():
        rows, i, current = [], 0, ''
        for step in grid:
            while i < len(steps) and steps[i] <= step:
                current = values[i]
                i += 1
            rows.append({'step': step, 'smoothed_normalized_return': current})
        paths[run] = handler.write_plot(f"{run}_plot.csv", rows, window)
    return paths


@dataclass
class ModeReport:
    mode: str
    max_episode_steps: int
    training_steps: int
    episodes: int
    accepted_episodes: int
    success_rate: Optional[float]
    artifacts: Dict[str, str] = field(default_factory=dict)


@dataclass
class ExperimentReport:
    name: str
    num_states: int
    acceptance_sets: int
    traps: List[int]
    starts: List[Tuple[float, float, float]]
    modes: Dict[str, ModeReport] = field(default_factory=dict)
    waypoint_success: Optional[float] = None
    reference_success: Optional[Dict[str, float]] = None
    config: Dict[str, Any] = field(default_factory=dict)

    @property
    def success_rates(self) -> Dict[str, float]:
        return {k: m.success_rate for k, m in self.modes.items() if m.success_rate is not None}

    def to_dict(self) -> Dict[str, Any]:
        return {
            'format': FormatTemplates.REPORT_FORMAT,
            'schema_version': FormatTemplates.SCHEMA_VERSION,
            'name': self.name,
            'automaton': {
                'num_states': self.num_states,
                'acceptance_sets': self.acceptance_sets,
                'traps': self.traps
            },
            'evaluation_starts': [list(s) for s in self.starts],
            'modes': {k: vars(m) for k, m in self.modes.items()},
            'waypoint_success': self.waypoint_success,
            'reference_success': self.reference_success,
            'config': self.config
        }


@dataclass
class Pipeline:
    """Everything built before training."""
    annotated: AnnotatedLdba
    workspace: Workspace
    env: ProductEnv
    starts: List[CarState]


class ExperimentRunner:
    """Runs the stages of one experiment and writes its artifacts."""

    def __init__(
        self,
        cfg: ExperimentConfig,
        output_dir: Optional[Union[str, Path]] = None,
        verbose: Optional[bool] = None
    ):
        self.cfg = cfg
        self.output_dir = Path(output_dir) if output_dir is not None else settings.run_dir(cfg.name)
        self.verbose = settings.verbose if verbose is None else verbose
        self.handler = ReportHandler(self.output_dir)

    @contextmanager
    def stage(self, name: str):
        if self.verbose:
            print(f"🔄 [{name}]")
        try:
            yield
        except PipelineStageError:
            raise
        except Exception as e:
            raise PipelineStageError(name, e) from e

    def build(self) -> Pipeline:
        """Parse, ingest, validate, annotate and build the product."""
        cfg = self.cfg
        with self.stage('parse'):
            if cfg.formula is not None:
                formula = parse_ltl(cfg.formula)
            else:
                tgba = load_hoa(cfg.hoa_path)
        with self.stage('ingest'):
            workspace = load_workspace(cfg.workspace_path)
            if cfg.formula is not None:
                ldba = translate_fragment(formula)
                props = atomic_props(formula)
            else:
                props = set(tgba.ap_list)
        with self.stage('validate'):
            if cfg.formula is None:
                ldba = deterministic_ldba(tgba)
            missing = sorted(set(props) - set(workspace.region_names))
            if missing and self.verbose:
                print(f"⚠️  Propositions without a region: {', '.join(missing)}")
        with self.stage('annotate'):
            annotated = annotate(ldba)
            if self.verbose:
                print(f"   {ldba.num_states} states, {annotated.m} acceptance set(s), "
                      f"traps {sorted(annotated.traps)}")
        with self.stage('product'):
            env = ProductEnv(annotated, workspace, cfg.reward, cfg.max_episode_steps)
            starts = evaluation_starts(workspace, cfg.evaluation)
        return Pipeline(annotated, workspace, env, starts)

    def run(
        self,
        modes: Optional[Sequence[Union[str, ResetMode]]] = None,
        steps: Optional[int] = None,
        seed: Optional[int] = None,
        evaluate: bool = True
    ) -> ExperimentReport:
        """
        Run the full pipeline.

        Args:
            modes: Reset modes to train; cfg.modes when None
            steps: Training steps; cfg.training_steps when None
            seed: Learner seed; cfg.learner.seed when None
            evaluate: Whether to measure success rates

        Returns:
            ExperimentReport, also written as report.json

        Raises:
            PipelineStageError: naming the stage that failed
        """
        cfg = self.cfg
        pipeline = self.build()
        modes = [ResetMode.parse(m) for m in (modes or cfg.modes)]
        steps = cfg.training_steps if steps is None else steps
        learner_cfg = cfg.learner if seed is None else cfg.learner.model_copy(update={'seed': seed})

        report = ExperimentReport(
            name=cfg.name,
            num_states=pipeline.annotated.ldba.num_states,
            acceptance_sets=pipeline.annotated.m,
            traps=sorted(pipeline.annotated.traps),
            starts=[(s.x, s.y, s.theta) for s in pipeline.starts],
            reference_success=cfg.reference_success,
            config=json.loads(cfg.model_dump_json())
        )
        with self.stage('annotate'):
            pipeline.annotated.save_json(self.handler.resolve('annotated.json'))
            save_hoa(pipeline.annotated.ldba, self.handler.resolve('automaton.hoa'), name=cfg.name)

        metrics = {}
        for mode in modes:
            horizon = cfg.episode_steps(mode)
            env = pipeline.env.with_max_steps(horizon)
            with self.stage('train'):
                result = Trainer(learner_cfg, verbose=self.verbose).train(env, steps, mode)
                rows = result.metrics_rows()
                metrics[mode.value] = rows
                artifacts = {
                    'metrics': str(self.handler.write_metrics(f"{mode.value}_metrics.csv", rows)),
                    'checkpoint': str(save_checkpoint(
                        result.agent, self.handler.resolve(f"{mode.value}_checkpoint.json")
                    ))
                }
            rate = None
            if evaluate:
                with self.stage('evaluate'):
                    rate = success_rate(result.agent.policy(), env, pipeline.starts,
                                        cfg.evaluation.max_steps or horizon)
                    log = TrajectoryLog()
                    rollout(env, result.agent.policy(), env.reset_at(pipeline.starts[0]),
                            cfg.evaluation.max_steps or horizon, log)
                    artifacts['trajectory'] = str(
                        self.handler.write_trajectory(f"{mode.value}_trajectory.csv", log.rows)
                    )
                    if self.verbose:
                        print(f"🔍 {mode.value}: success rate {rate * 100:.1f}% "
                              f"over {len(pipeline.starts)} starts")
            report.modes[mode.value] = ModeReport(
                mode=mode.value,
                max_episode_steps=horizon,
                training_steps=steps,
                episodes=len(result.episodes),
                accepted_episodes=sum(e.accepted for e in result.episodes),
                success_rate=rate,
                artifacts=artifacts
            )

        with self.stage('report'):
            if evaluate:
                controller = WaypointController(pipeline.annotated, pipeline.workspace)
                report.waypoint_success = success_rate(
                    controller, pipeline.env, pipeline.starts,
                    cfg.evaluation.max_steps or cfg.max_episode_steps
                )
            export_plot_data(metrics, self.output_dir)
            self.handler.write_json('report.json', report.to_dict())
            if self.verbose:
                print(self.handler.format_success_table(report.success_rates, cfg.reference_success))
                print(f"✅ Report written to {self.handler.resolve('report.json')}")
        return report

    def evaluate_checkpoint(self, agent: DdpgAgent, max_steps: Optional[int] = None) -> float:
        """Success rate of a loaded agent on this experiment's start states."""
        pipeline = self.build()
        with self.stage('evaluate'):
            if agent.n_states != pipeline.env.num_states or agent.m != pipeline.env.m:
                raise ValueError(
                    f"Checkpoint was trained on {agent.n_states} states and {agent.m} sets; "
                    f"this experiment has {pipeline.env.num_states} and {pipeline.env.m}"
                )
            return success_rate(agent.policy(), pipeline.env, pipeline.starts,
                                max_steps or self.cfg.evaluation.max_steps or self.cfg.max_episode_steps)


def run_experiment(
    cfg: ExperimentConfig,
    output_dir: Optional[Union[str, Path]] = None,
    verbose: Optional[bool] = None
) -> ExperimentReport:
    """Train every configured mode, evaluate and write the report."""
    return ExperimentRunner(cfg, output_dir, verbose).run()
