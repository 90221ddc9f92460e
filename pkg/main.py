#!/usr/bin/env python3
"""
Main CLI interface for the LDBA reward-shaping toolkit.
"""
import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

# Add the current directory to the path for imports
sys.path.append(str(Path(__file__).parent))

from config.settings import settings
from src.automata import deterministic_ldba
from src.experiment import (
    ExperimentRunner, PipelineStageError, export_plot_data, load_experiment_config
)
from src.gridworld import load_grid, tabular_oracle, ACTION_NAMES
from src.hoa import emit_hoa, load_hoa
from src.learner import load_checkpoint
from src.product import ResetMode
from src.reporting import ReportHandler
from src.shaping import RewardParams, annotate
from src.translator import translate_text

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def exit_code_for(error: BaseException) -> int:
    """1 for invalid input (bad values, schemas, missing files), 2 otherwise."""
    if isinstance(error, PipelineStageError):
        return exit_code_for(error.cause)
    if isinstance(error, (ValueError, FileNotFoundError)):
        return EXIT_VALIDATION
    return EXIT_RUNTIME


class ToolkitCLI:
    """Command-line interface for the toolkit."""

    def __init__(self, verbose: Optional[bool] = None):
        self.verbose = settings.verbose if verbose is None else verbose
        self.handler = ReportHandler()

    def _hoa_path(self, path: str) -> Path:
        """A HOA path as given, or the shipped fixture of that name."""
        candidate = Path(path)
        if not candidate.exists() and settings.fixture_path(candidate.name).exists():
            return settings.fixture_path(candidate.name)
        return candidate

    def translate(self, formula: str, output: Optional[str] = None, name: Optional[str] = None) -> int:
        """Translate a fragment formula to HOA."""
        ldba = translate_text(formula)
        text = emit_hoa(ldba, name=name or formula)
        if output:
            path = Path(output)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding='utf-8')
            print(f"✅ Wrote {ldba.num_states}-state automaton to {path}")
        else:
            print(text, end='')
        return EXIT_OK

    def annotate(self, source: str, output: Optional[str] = None, is_formula: bool = False) -> int:
        """Annotate an automaton given as an HOA file (or a formula with --formula)."""
        ldba = translate_text(source) if is_formula else deterministic_ldba(load_hoa(self._hoa_path(source)))
        annotated = annotate(ldba)
        if output:
            path = annotated.save_json(output)
            print(f"✅ Annotated automaton written to {path}")
            t = ldba.tgba
            print(f"📊 {t.num_states} states, {annotated.m} acceptance set(s)")
            for q in range(t.num_states):
                marked = [idx for idx in t.edges_from(q)
                          if any(annotated.annotated(i, idx) for i in range(annotated.m))]
                trap = " (trap)" if q in annotated.traps else ""
                print(f"  - {q} {t.state_name(q)}{trap}: annotated edges {marked}")
        else:
            print(json.dumps(annotated.to_dict(), indent=2))
        return EXIT_OK

    def train(
        self,
        config_path: str,
        mode: Optional[str] = None,
        seed: Optional[int] = None,
        steps: Optional[int] = None,
        output_dir: Optional[str] = None
    ) -> int:
        """Train (and evaluate) the configured reset modes."""
        cfg = load_experiment_config(config_path)
        runner = ExperimentRunner(cfg, output_dir, self.verbose)
        modes = [ResetMode.parse(mode)] if mode else None
        report = runner.run(modes=modes, steps=steps, seed=seed)
        for name, m in report.modes.items():
            print(f"✅ {name}: {m.episodes} episodes, checkpoint {m.artifacts['checkpoint']}")
        return EXIT_OK

    def evaluate(
        self,
        checkpoint: str,
        config_path: str,
        max_steps: Optional[int] = None,
        output: Optional[str] = None
    ) -> int:
        """Measure the success rate of a checkpoint on the config's start states."""
        agent = load_checkpoint(checkpoint)
        cfg = load_experiment_config(config_path)
        runner = ExperimentRunner(cfg, verbose=self.verbose)
        rate = runner.evaluate_checkpoint(agent, max_steps)
        print(f"🔍 Success rate: {rate * 100:.1f}%")
        if output:
            self.handler.write_json(output, {
                'checkpoint': str(checkpoint),
                'config': str(config_path),
                'success_rate': rate,
                'max_steps': max_steps or cfg.evaluation.max_steps or cfg.max_episode_steps
            })
            print(f"✅ Wrote {output}")
        return EXIT_OK

    def oracle(
        self,
        grid_path: str,
        hoa_path: str,
        gamma: float = 0.99,
        tol: float = 1e-8,
        r_g: float = 50.0,
        r_n: float = -0.1,
        r_d: float = -10.0
    ) -> int:
        """Run the tabular oracle; exit 2 if the greedy policy disagrees with ground truth."""
        gw = load_grid(grid_path)
        annotated = annotate(deterministic_ldba(load_hoa(self._hoa_path(hoa_path))))
        params = RewardParams(r_g=r_g, r_n=r_n, r_d=r_d, d_max=max(1, gw.diameter), separation=None)
        result = tabular_oracle(gw, annotated, params, gamma, tol)
        mismatches = result.mismatches()
        print(self.handler.format_oracle_summary(
            sum(result.satisfied.values()), sum(result.reachable.values()),
            len(result.satisfied), len(mismatches)
        ))
        if self.verbose:
            print(f"   converged in {result.iterations} iterations")
        for cell, q in mismatches:
            print(f"  - cell {cell}, state {q}: greedy {result.satisfied[(cell, q)]}, "
                  f"reachable {result.reachable[(cell, q)]}, action {ACTION_NAMES[result.policy[(cell, q)]]}")
        return EXIT_OK if not mismatches else EXIT_RUNTIME

    def plot_data(self, metrics_paths: List[str], window: Optional[int] = None,
                  output_dir: Optional[str] = None) -> int:
        """Write smoothed normalized-return CSVs for one or more metrics files."""
        metrics = {}
        for p in metrics_paths:
            path = Path(p)
            run = path.stem[:-len('_metrics')] if path.stem.endswith('_metrics') else path.stem
            metrics[run] = self.handler.read_csv(path)
        out = output_dir or str(Path(metrics_paths[0]).parent)
        paths = export_plot_data(metrics, out, window)
        for run, path in paths.items():
            print(f"✅ {run}: {path}")
        return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="LDBA reward-shaping toolkit",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Translate a formula to HOA
  python main.py translate "F (a & F b)" -o phi1.hoa

  # Annotate an automaton
  python main.py annotate data/fixtures/phi1.hoa -o annotated.json

  # Train both reset modes of an experiment
  python main.py train data/experiments/example1.json --steps 200000

  # Train one mode with another seed
  python main.py train data/experiments/example1.json --mode fixed-q0 --seed 3

  # Evaluate a checkpoint
  python main.py eval runs/example1/random_q_checkpoint.json data/experiments/example1.json

  # Check the shaped reward on a gridworld
  python main.py oracle data/grids/phi1_5x5.json data/fixtures/phi1.hoa

  # Smoothed plot data
  python main.py plot-data runs/example1/random_q_metrics.csv runs/example1/fixed_q0_metrics.csv
"""
    )
    parser.add_argument('--quiet', action='store_true', help='Suppress progress output')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('translate', help='Translate an LTL formula to HOA')
    p.add_argument('formula')
    p.add_argument('-o', '--output')
    p.add_argument('--name', help='Automaton name in the HOA header')

    p = sub.add_parser('annotate', help='Annotate an automaton')
    p.add_argument('source', help='HOA file, or formula text with --formula')
    p.add_argument('-o', '--output')
    p.add_argument('--formula', action='store_true', help='Treat source as a formula')

    p = sub.add_parser('train', help='Train on an experiment config')
    p.add_argument('config')
    p.add_argument('--mode', choices=['random-q', 'fixed-q0', 'random_q', 'fixed_q0'])
    p.add_argument('--seed', type=int)
    p.add_argument('--steps', type=int)
    p.add_argument('--output-dir')

    p = sub.add_parser('eval', help='Evaluate a checkpoint')
    p.add_argument('checkpoint')
    p.add_argument('config')
    p.add_argument('--max-steps', type=int)
    p.add_argument('--output')

    p = sub.add_parser('oracle', help='Tabular oracle on a gridworld')
    p.add_argument('grid')
    p.add_argument('hoa')
    p.add_argument('--gamma', type=float, default=0.99)
    p.add_argument('--tol', type=float, default=1e-8)
    p.add_argument('--r-g', type=float, default=50.0)
    p.add_argument('--r-n', type=float, default=-0.1)
    p.add_argument('--r-d', type=float, default=-10.0)

    p = sub.add_parser('plot-data', help='Export smoothed plot data')
    p.add_argument('metrics', nargs='+')
    p.add_argument('--window', type=int)
    p.add_argument('--output-dir')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point."""
    args = build_parser().parse_args(argv)
    cli = ToolkitCLI(verbose=False if args.quiet else None)

    try:
        if args.command == 'translate':
            return cli.translate(args.formula, args.output, args.name)
        if args.command == 'annotate':
            return cli.annotate(args.source, args.output, args.formula)
        if args.command == 'train':
            return cli.train(args.config, args.mode, args.seed, args.steps, args.output_dir)
        if args.command == 'eval':
            return cli.evaluate(args.checkpoint, args.config, args.max_steps, args.output)
        if args.command == 'oracle':
            return cli.oracle(args.grid, args.hoa, args.gamma, args.tol, args.r_g, args.r_n, args.r_d)
        if args.command == 'plot-data':
            return cli.plot_data(args.metrics, args.window, args.output_dir)
    except KeyboardInterrupt:
        print("\n👋 Interrupted by user")
        return EXIT_RUNTIME
    except Exception as e:
        print(f"❌ Error: {e}")
        return exit_code_for(e)
    return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
