"""
Shared fixtures for the test suite.
"""
import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from src.automata import deterministic_ldba
from src.hoa import load_hoa
from src.shaping import RewardParams, annotate
from src.workspace import load_workspace

ROOT = Path(__file__).parent
FIXTURES = ROOT / 'data' / 'fixtures'
WORKSPACES = ROOT / 'data' / 'workspaces'
GRIDS = ROOT / 'data' / 'grids'
EXPERIMENTS = ROOT / 'data' / 'experiments'

PHI1 = 'F (a & F b)'
PHI2 = 'F (a & F (b & F (c & F d)))'
PHI3 = 'F (a & F d) | F (b & (!c U d))'


def pytest_collection_modifyitems(config, items):
    if os.getenv('LDBA_RUN_SLOW') == '1':
        return
    skip = pytest.mark.skip(reason="set LDBA_RUN_SLOW=1 to run")
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def phi1_tgba():
    return load_hoa(FIXTURES / 'phi1.hoa')


@pytest.fixture
def phi2_tgba():
    return load_hoa(FIXTURES / 'phi2.hoa')


@pytest.fixture
def phi3_tgba():
    return load_hoa(FIXTURES / 'phi3.hoa')


@pytest.fixture
def phi1_annotated(phi1_tgba):
    return annotate(deterministic_ldba(phi1_tgba))


@pytest.fixture
def phi3_annotated(phi3_tgba):
    return annotate(deterministic_ldba(phi3_tgba))


@pytest.fixture
def example1_workspace():
    return load_workspace(WORKSPACES / 'example1.json')


@pytest.fixture
def example3_case1_workspace():
    return load_workspace(WORKSPACES / 'example3_case1.json')


@pytest.fixture
def example3_case2_workspace():
    return load_workspace(WORKSPACES / 'example3_case2.json')


@pytest.fixture
def example1_params():
    return RewardParams(r_g=50.0, r_n=-0.1, r_d=-5.0)


@pytest.fixture
def example3_params():
    return RewardParams(r_g=100.0, r_n=-0.1, r_d=-10.0)
