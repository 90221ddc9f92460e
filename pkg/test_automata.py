"""
Tests for automata structure, limit-determinism checks and lasso acceptance.
"""
import numpy as np
import pytest

from src.automata import (
    AcceptingEdgeError, Edge, EpsilonTransitionError, LassoWord, PartitionError,
    QdDeterminismError, QnDeterminismError, Tgba, TgbaError, accepts_lasso, all_symbols,
    deterministic_ldba, isomorphic, ldba_violations, out_edges, out_props, random_lasso,
    random_tgba, validate_ldba
)
from src.ltl import And, Atom, Not, TrueConst

a, b = Atom('a'), Atom('b')
NONE, A, B, AB = frozenset(), frozenset('a'), frozenset('b'), frozenset('ab')


def fg_a() -> Tgba:
    """Eventually always a: guess in state 0, then check a forever in state 1."""
    return Tgba(
        ap_list=('a',),
        num_states=3,
        initial=0,
        edges=(
            Edge(0, TrueConst(), 0),
            Edge(1, a, 1),
            Edge(1, Not(a), 2),
            Edge(2, TrueConst(), 2),
        ),
        acceptance=(frozenset({1}),)
    )


class TestTgba:
    def test_symbols_in_bitmask_order(self):
        assert all_symbols(['a', 'b']) == [NONE, A, B, AB]

    def test_step_edge(self, phi1_tgba):
        assert phi1_tgba.edges[phi1_tgba.step_edge(0, {'a'})].dst == 1
        assert phi1_tgba.edges[phi1_tgba.step_edge(0, set())].dst == 0

    def test_step_edge_ignores_unknown_names(self, phi1_tgba):
        assert phi1_tgba.step_edge(0, {'a', 'zzz'}) == phi1_tgba.step_edge(0, {'a'})

    def test_step_edge_requires_determinism(self):
        t = Tgba(('a',), 2, 0, (Edge(0, TrueConst(), 0), Edge(0, a, 1), Edge(1, TrueConst(), 1)),
                 (frozenset({2}),))
        with pytest.raises(ValueError):
            t.step_edge(0, {'a'})

    def test_unsatisfiable_edge_is_not_live(self):
        t = Tgba(('a',), 2, 0, (Edge(0, And(a, Not(a)), 1), Edge(0, TrueConst(), 0),
                                Edge(1, TrueConst(), 1)), (frozenset({2}),))
        assert out_edges(t, 0) == frozenset({1})
        assert out_props(t, 0) == {NONE, A}

    def test_missing_state_rejected(self):
        with pytest.raises(TgbaError):
            Tgba(('a',), 1, 0, (Edge(0, a, 3),), (frozenset(),))

    def test_unknown_proposition_rejected(self):
        with pytest.raises(TgbaError):
            Tgba(('a',), 1, 0, (Edge(0, b, 0),), (frozenset(),))

    def test_needs_acceptance_set(self):
        with pytest.raises(TgbaError):
            Tgba(('a',), 1, 0, (Edge(0, a, 0),), ())


class TestLdbaConditions:
    def test_fixtures_are_deterministic(self, phi1_tgba, phi2_tgba, phi3_tgba):
        for t in (phi1_tgba, phi2_tgba, phi3_tgba):
            assert deterministic_ldba(t).qd == frozenset(range(t.num_states))

    def test_fg_a_with_epsilon(self):
        ldba = validate_ldba(fg_a(), ['QN', 'QD', 'QD'], [(0, 1)])
        assert ldba.epsilon_successors(0) == [1]
        assert ldba.qn == frozenset({0})

    def test_accepting_edge_in_qn(self):
        t = fg_a()
        bad = Tgba(t.ap_list, 3, 0, t.edges, (frozenset({0}),))
        with pytest.raises(AcceptingEdgeError, match='accepting edge outside QD'):
            validate_ldba(bad, ['QN', 'QD', 'QD'], [(0, 1)])

    def test_qd_nondeterminism(self):
        t = Tgba(('a',), 2, 0, (Edge(0, TrueConst(), 0), Edge(0, a, 1), Edge(1, TrueConst(), 1)),
                 (frozenset({2}),))
        with pytest.raises(QdDeterminismError, match='nondeterminism in QD'):
            deterministic_ldba(t)

    def test_qd_incomplete(self):
        t = Tgba(('a',), 1, 0, (Edge(0, a, 0),), (frozenset({0}),))
        with pytest.raises(QdDeterminismError):
            deterministic_ldba(t)

    def test_qn_nondeterminism(self):
        t = Tgba(('a',), 3, 0, (Edge(0, TrueConst(), 0), Edge(0, TrueConst(), 1), Edge(1, TrueConst(), 1),
                                Edge(2, TrueConst(), 2)), (frozenset({3}),))
        with pytest.raises(QnDeterminismError):
            validate_ldba(t, ['QN', 'QN', 'QD'])

    def test_direct_edge_into_qd(self):
        t = Tgba(('a',), 2, 0, (Edge(0, TrueConst(), 0), Edge(0, a, 1), Edge(1, TrueConst(), 1)),
                 (frozenset({2}),))
        with pytest.raises(EpsilonTransitionError):
            validate_ldba(t, ['QN', 'QD'])

    def test_epsilon_must_leave_qn(self):
        with pytest.raises(EpsilonTransitionError):
            validate_ldba(fg_a(), ['QN', 'QD', 'QD'], [(1, 2)])

    def test_partition_must_cover_states(self):
        with pytest.raises(PartitionError):
            validate_ldba(fg_a(), {0: 'QN', 1: 'QD'}, [(0, 1)])

    def test_violations_listed_per_condition(self):
        t = Tgba(('a',), 2, 0, (Edge(0, a, 1), Edge(1, TrueConst(), 1)), (frozenset({0}),))
        problems = ldba_violations(t, ['QN', 'QD'])
        kinds = {type(p) for p in problems}
        assert {QnDeterminismError, AcceptingEdgeError, EpsilonTransitionError} <= kinds


class TestLasso:
    def test_phi1(self, phi1_tgba):
        assert accepts_lasso(phi1_tgba, LassoWord((A, NONE), (B,)))
        assert accepts_lasso(phi1_tgba, LassoWord((), (AB,)))
        assert not accepts_lasso(phi1_tgba, LassoWord((B,), (A,)))

    def test_same_symbol_cannot_fire_twice(self, phi1_tgba):
        # a and b together satisfy only the first goal on that step
        assert not accepts_lasso(phi1_tgba, LassoWord((AB,), (NONE,)))

    def test_epsilon_guess(self):
        ldba = validate_ldba(fg_a(), ['QN', 'QD', 'QD'], [(0, 1)])
        assert accepts_lasso(ldba, LassoWord((NONE, NONE), (A,)))
        assert not accepts_lasso(ldba, LassoWord((A,), (A, NONE)))

    def test_generalized_needs_every_set(self):
        t = Tgba(('a',), 1, 0, (Edge(0, a, 0), Edge(0, Not(a), 0)),
                 (frozenset({0}), frozenset({1})))
        assert accepts_lasso(t, LassoWord((), (A, NONE)))
        assert not accepts_lasso(t, LassoWord((NONE,), (A,)))

    def test_empty_cycle_rejected(self):
        with pytest.raises(ValueError):
            LassoWord((A,), ())

    def test_random_lasso_bounds(self, rng):
        for _ in range(50):
            w = random_lasso(rng, ['a', 'b'])
            assert len(w.prefix) <= 6
            assert 1 <= len(w.cycle) <= 4


class TestRandomAutomata:
    def test_deterministic_and_complete(self, rng):
        for _ in range(20):
            t = random_tgba(rng, int(rng.integers(1, 9)), num_sets=int(rng.integers(1, 4)))
            deterministic_ldba(t)

    def test_seeded(self):
        x = random_tgba(np.random.default_rng(7), 5, num_sets=2)
        y = random_tgba(np.random.default_rng(7), 5, num_sets=2)
        assert x == y


class TestIsomorphic:
    def test_renumbered_states(self, phi1_tgba):
        # swap states 1 and 2
        perm = {0: 0, 1: 2, 2: 1}
        edges = sorted(
            (Edge(perm[e.src], e.guard, perm[e.dst]) for e in phi1_tgba.edges),
            key=lambda e: e.src
        )
        acc = frozenset(i for i, e in enumerate(edges) if e.src == 1 and e.dst == 1)
        renamed = Tgba(phi1_tgba.ap_list, 3, 0, tuple(edges), (acc,))
        assert isomorphic(phi1_tgba, renamed)

    def test_different_marks(self, phi1_tgba):
        other = Tgba(phi1_tgba.ap_list, 3, 0, phi1_tgba.edges, (frozenset({0}),))
        assert not isomorphic(phi1_tgba, other)
