"""
Tests for the gridworld and the tabular oracle.
"""
import pytest
from pydantic import ValidationError

from conftest import GRIDS
from config.settings import settings
from src.gridworld import (
    ACTION_NAMES, GridSpec, Gridworld, OracleError, load_grid, progress_cells, tabular_oracle
)
from src.shaping import RewardParams, VisitVector


def grid_params(gw: Gridworld, r_g: float = 50.0, r_d: float = -10.0) -> RewardParams:
    return RewardParams(r_g=r_g, r_n=-0.1, r_d=r_d, d_max=gw.diameter, separation=None)


class TestGridworld:
    def test_moves(self):
        gw = Gridworld(3, 3, {}, walls=[(1, 1)])
        assert ACTION_NAMES[0] == 'up'
        assert gw.move((0, 0), 0) == (0, 1)
        assert gw.move((0, 0), 1) == (0, 0)
        assert gw.move((0, 0), 2) == (0, 0)
        assert gw.move((0, 1), 3) == (0, 1)
        assert (1, 1) not in gw.index
        assert len(gw.cells) == 8

    def test_labels(self):
        gw = load_grid(GRIDS / 'phi3_case2.json')
        assert gw.label((2, 1)) == {'b', 'c'}
        assert gw.label((0, 0)) == frozenset()
        assert gw.ap == {'a', 'b', 'c', 'd'}
        assert gw.diameter == 8

    def test_cell_outside(self):
        with pytest.raises(ValidationError):
            GridSpec(width=2, height=2, labels={'a': [(2, 0)]})

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_grid(tmp_path / 'grid.json')

    def test_progress_cells(self, phi1_annotated):
        gw = load_grid(GRIDS / 'phi1_5x5.json')
        ones = VisitVector.ones(1)
        assert progress_cells(gw, phi1_annotated, ones, 0) == [(0, 0)]
        assert progress_cells(gw, phi1_annotated, ones, 1) == [(4, 4)]
        # the accepting loop is guarded by true, which names no cell
        assert progress_cells(gw, phi1_annotated, ones, 2) == []


class TestOracle:
    def test_phi1_open_grid(self, phi1_annotated):
        gw = load_grid(GRIDS / 'phi1_5x5.json')
        result = tabular_oracle(gw, phi1_annotated, grid_params(gw))
        assert result.matches_ground_truth
        assert result.mismatches() == []
        assert all(result.reachable.values())

    def test_phi3_nested_regions(self, phi3_annotated):
        gw = load_grid(GRIDS / 'phi3_case2.json')
        result = tabular_oracle(gw, phi3_annotated, grid_params(gw, r_g=100.0))
        assert result.matches_ground_truth
        assert result.reachable[((0, 0), 2)]
        assert not result.reachable[((2, 2), 2)]
        assert not any(result.reachable[(c, 4)] for c in gw.cells)

    def test_phi3_greedy_route_avoids_b(self, phi3_annotated):
        gw = load_grid(GRIDS / 'phi3_case2.json')
        result = tabular_oracle(gw, phi3_annotated, grid_params(gw, r_g=100.0))
        path = result.greedy_path((0, 0), 0)
        states = [q for _, q in path]
        assert 1 in states
        assert 2 not in states
        assert states[-1] == 3
        assert (0, 4) in [c for c, _ in path]

    def test_walled_goal(self, phi1_annotated):
        gw = load_grid(GRIDS / 'phi1_walled.json')
        result = tabular_oracle(gw, phi1_annotated, grid_params(gw))
        assert result.matches_ground_truth
        for cell in gw.cells:
            if cell != (4, 4):
                assert not result.reachable[(cell, 1)]
                assert not result.satisfied[(cell, 1)]
        assert result.satisfied[((4, 4), 1)]
        assert not any(result.satisfied[(c, 0)] for c in gw.cells)

    def test_policy_names_an_action(self, phi1_annotated):
        gw = load_grid(GRIDS / 'phi1_5x5.json')
        result = tabular_oracle(gw, phi1_annotated, grid_params(gw))
        assert set(result.policy.values()) <= set(range(len(ACTION_NAMES)))
        # a is straight down from (0, 3)
        assert ACTION_NAMES[result.policy[((0, 3), 0)]] == 'down'


class TestOracleErrors:
    def test_bad_gamma(self, phi1_annotated):
        gw = load_grid(GRIDS / 'phi1_5x5.json')
        with pytest.raises(ValueError, match='gamma'):
            tabular_oracle(gw, phi1_annotated, grid_params(gw), gamma=1.0)

    def test_unknown_label(self, phi1_annotated):
        gw = Gridworld(3, 3, {'z': [(0, 0)]})
        with pytest.raises(ValueError, match='not propositions'):
            tabular_oracle(gw, phi1_annotated, grid_params(gw))

    def test_state_limit(self, phi1_annotated, monkeypatch):
        monkeypatch.setattr(settings, 'oracle_state_limit', 5)
        gw = load_grid(GRIDS / 'phi1_5x5.json')
        with pytest.raises(OracleError, match='limit'):
            tabular_oracle(gw, phi1_annotated, grid_params(gw))

    def test_no_convergence(self, phi1_annotated, monkeypatch):
        monkeypatch.setattr(settings, 'oracle_max_iterations', 3)
        gw = load_grid(GRIDS / 'phi1_5x5.json')
        with pytest.raises(OracleError, match='did not reach'):
            tabular_oracle(gw, phi1_annotated, grid_params(gw))
