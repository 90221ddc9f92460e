"""
Tests for the command-line interface.
"""
import json

import pytest

from conftest import FIXTURES, GRIDS, PHI1, WORKSPACES
from config.settings import settings
from main import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, exit_code_for, main
from src.experiment import PipelineStageError
from src.hoa import load_hoa, parse_hoa
from src.reporting import ReportHandler


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / 'tiny.json'
    path.write_text(json.dumps({
        'schema_version': 1,
        'name': 'tiny',
        'formula': PHI1,
        'workspace_path': str(WORKSPACES / 'example1.json'),
        'reward': {'r_g': 50.0, 'r_n': -0.1, 'r_d': -5.0},
        'learner': {'actor_hidden': [8], 'critic_hidden': [8], 'batch_size': 8,
                    'learning_starts': 20, 'buffer_capacity': 500},
        'training_steps': 60,
        'max_episode_steps': 20,
        'evaluation': {'count': 2, 'seed': 3, 'max_steps': 10}
    }), encoding='utf-8')
    return path


class TestTranslate:
    def test_stdout(self, capsys):
        assert main(['translate', PHI1]) == EXIT_OK
        out = capsys.readouterr().out
        assert out.startswith('HOA: v1')
        assert parse_hoa(out).num_states == 3

    def test_file(self, tmp_path, capsys):
        path = tmp_path / 'phi1.hoa'
        assert main(['translate', PHI1, '-o', str(path), '--name', 'phi1']) == EXIT_OK
        assert load_hoa(path).num_states == 3
        assert 'Wrote 3-state automaton' in capsys.readouterr().out

    @pytest.mark.parametrize('formula', ['F (a &', 'X a', 'F a & F b'])
    def test_invalid_formula(self, formula, capsys):
        assert main(['translate', formula]) == EXIT_VALIDATION
        assert 'Error' in capsys.readouterr().out


class TestAnnotate:
    def test_json_to_stdout(self, capsys):
        assert main(['annotate', str(FIXTURES / 'phi3.hoa')]) == EXIT_OK
        data = json.loads(capsys.readouterr().out)
        assert data['traps'] == [4]

    def test_file_and_summary(self, tmp_path, capsys):
        path = tmp_path / 'annotated.json'
        assert main(['annotate', str(FIXTURES / 'phi1.hoa'), '-o', str(path)]) == EXIT_OK
        assert json.loads(path.read_text(encoding='utf-8'))['b_maps'] == [[0, 1, 0, 1, 1]]
        assert '3 states' in capsys.readouterr().out

    def test_formula_source(self, capsys):
        assert main(['annotate', '--formula', PHI1]) == EXIT_OK
        assert json.loads(capsys.readouterr().out)['format'] == 'annotated-ldba'

    def test_fixture_name(self, monkeypatch, capsys):
        monkeypatch.setattr(settings, 'data_dir', FIXTURES.parent)
        assert main(['annotate', 'phi3.hoa']) == EXIT_OK
        assert json.loads(capsys.readouterr().out)['traps'] == [4]

    def test_missing_file(self, tmp_path):
        assert main(['annotate', str(tmp_path / 'none.hoa')]) == EXIT_VALIDATION


class TestOracle:
    def test_phi1(self, capsys):
        code = main(['oracle', str(GRIDS / 'phi1_5x5.json'), str(FIXTURES / 'phi1.hoa')])
        assert code == EXIT_OK
        assert 'mismatches 0' in capsys.readouterr().out

    def test_bad_reward_constants(self):
        args = ['oracle', str(GRIDS / 'phi1_5x5.json'), str(FIXTURES / 'phi1.hoa'), '--r-n', '0.5']
        assert main(args) == EXIT_VALIDATION


class TestTrainAndEval:
    def test_reproducible_artifacts(self, tiny_config, tmp_path):
        for run in ('one', 'two'):
            args = ['--quiet', 'train', str(tiny_config), '--mode', 'random-q', '--seed', '1',
                    '--output-dir', str(tmp_path / run)]
            assert main(args) == EXIT_OK
        for name in ('random_q_checkpoint.json', 'random_q_metrics.csv'):
            assert (tmp_path / 'one' / name).read_bytes() == (tmp_path / 'two' / name).read_bytes()
        assert not (tmp_path / 'one' / 'fixed_q0_checkpoint.json').exists()

    def test_eval_checkpoint(self, tiny_config, tmp_path):
        out_dir = tmp_path / 'run'
        assert main(['--quiet', 'train', str(tiny_config), '--steps', '30',
                     '--output-dir', str(out_dir)]) == EXIT_OK
        result = tmp_path / 'eval.json'
        code = main(['--quiet', 'eval', str(out_dir / 'fixed_q0_checkpoint.json'), str(tiny_config),
                     '--output', str(result)])
        assert code == EXIT_OK
        data = json.loads(result.read_text(encoding='utf-8'))
        assert 0.0 <= data['success_rate'] <= 1.0
        assert data['max_steps'] == 10

    def test_missing_config(self, tmp_path):
        assert main(['train', str(tmp_path / 'none.json')]) == EXIT_VALIDATION


class TestPlotData:
    def test_writes_plot_csv(self, tmp_path, capsys):
        handler = ReportHandler(tmp_path)
        metrics = handler.write_metrics('random_q_metrics.csv', [
            {'step': 4, 'episode': 1, 'return': -1.0, 'normalized_return': 0.0, 'accepted': 0, 'epsilon_used': 0},
            {'step': 9, 'episode': 2, 'return': 50.0, 'normalized_return': 1.0, 'accepted': 1, 'epsilon_used': 0},
        ])
        assert main(['plot-data', str(metrics), '--window', '2']) == EXIT_OK
        rows = handler.read_csv('random_q_plot.csv')
        assert [float(r['smoothed_normalized_return']) for r in rows] == [0.0, 0.5]


class TestExitCodes:
    def test_mapping(self):
        assert exit_code_for(ValueError('x')) == EXIT_VALIDATION
        assert exit_code_for(FileNotFoundError('x')) == EXIT_VALIDATION
        assert exit_code_for(RuntimeError('x')) == EXIT_RUNTIME
        assert exit_code_for(PipelineStageError('train', ValueError('x'))) == EXIT_VALIDATION
        assert exit_code_for(PipelineStageError('train', ArithmeticError('x'))) == EXIT_RUNTIME
