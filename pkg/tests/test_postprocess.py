import numpy as np
import pytest

from oracles import brute_feedback_cost, has_cycle, random_cyclic, trained_like
from tearlearn.datagen import prior_lower_triangular
from tearlearn.milp import InfeasibleTearError, PriorSpec
from tearlearn.postprocess import (
    TearConfig,
    TearError,
    preprocess,
    tear_until_acyclic,
    truncate_until_acyclic,
)


def two_cycle():
    A = np.zeros((4, 4))
    A[0, 1], A[1, 0] = 0.3, 0.7
    return A


def test_preprocess_identity():
    A = random_cyclic(np.random.default_rng(0), 5)
    assert np.array_equal(preprocess(A, PriorSpec.unknown(5), 0.0), A)


def test_preprocess_threshold():
    A = np.array([[0, 0.01, 0], [0.5, 0, 0], [0, 0.06, 0]])
    B = preprocess(A, None, 0.05)
    assert B[0, 1] == 0 and B[1, 0] == 0.5 and B[2, 1] == 0.06


def test_preprocess_obligatory_fill():
    A = np.zeros((4, 4))
    A[0, 1], A[3, 2] = -0.9, 0.4
    entries = np.full((4, 4), "U")
    entries[2, 3] = "O"
    B = preprocess(A, PriorSpec(entries), 0.0)
    assert B[2, 3] == 0.9


def test_preprocess_obligatory_exempt_from_threshold():
    A = np.zeros((3, 3))
    A[0, 1], A[1, 2] = 0.01, 1.0
    entries = np.full((3, 3), "U")
    entries[0, 1] = "O"
    assert preprocess(A, PriorSpec(entries), 0.5)[0, 1] == 0.01


def test_preprocess_forbidden_and_errors():
    A = np.array([[0, 1.0], [1.0, 0]])
    B = preprocess(A, prior_lower_triangular(2), 0.0)
    assert B.tolist() == [[0, 1.0], [0, 0]]
    entries = np.full((2, 2), "U")
    entries[0, 1] = "O"
    with pytest.raises(ValueError):
        preprocess(np.zeros((2, 2)), PriorSpec(entries), 0.0)


def test_tear_acyclic_input():
    A = np.triu(np.ones((4, 4)), 1)
    rep = tear_until_acyclic(A)
    assert rep.rounds == 0 and np.array_equal(rep.a_final, A) and rep.total_torn_weight == 0


def test_tear_two_cycle():
    rep = tear_until_acyclic(two_cycle())
    assert rep.rounds == 1
    assert rep.torn_streams == [((0, 1), 0.3)]
    assert rep.a_final[1, 0] == 0.7


def test_tear_complete_three_node_graph():
    rng = np.random.default_rng(3)
    for _ in range(10):
        A = rng.uniform(0.1, 1.0, (3, 3)) * rng.choice([-1, 1], (3, 3))
        np.fill_diagonal(A, 0)
        rep = tear_until_acyclic(A)
        assert not has_cycle(rep.a_final)
        assert rep.total_torn_weight == pytest.approx(brute_feedback_cost(A), abs=1e-12)


def test_truncate_examples():
    A = np.triu(np.ones((3, 3)), 1)
    assert truncate_until_acyclic(A).torn_streams == []
    B = two_cycle()
    B[2, 3] = 0.1
    rep = truncate_until_acyclic(B)
    assert rep.threshold == 0.3
    assert sorted(p for p, _ in rep.torn_streams) == [(0, 1), (2, 3)]
    assert rep.total_torn_weight == pytest.approx(0.4)
    C = np.zeros((3, 3))
    C[0, 1] = C[1, 2] = C[2, 0] = 0.5
    assert not truncate_until_acyclic(C).a_final.any()


def test_tear_never_tears_obligatory_and_ends_acyclic():
    rng = np.random.default_rng(4)
    for _ in range(100):
        d = int(rng.integers(3, 9))
        A = random_cyclic(rng, d, p=0.35, lo=0.1, hi=1.0)
        order = rng.permutation(d)
        entries = np.full((d, d), "U")
        rank = np.argsort(order)
        for i, j in zip(*np.nonzero(A)):
            if rank[i] < rank[j] and rng.random() < 0.3:
                entries[i, j] = "O"
        prior = PriorSpec(entries)
        rep = tear_until_acyclic(A, prior)
        assert not has_cycle(rep.a_final)
        assert np.all(rep.a_final[prior.obligatory_mask()] == A[prior.obligatory_mask()])


def test_obligatory_cycle_is_infeasible():
    A = np.zeros((3, 3))
    A[0, 1] = A[1, 0] = 1.0
    entries = np.full((3, 3), "U")
    entries[0, 1] = entries[1, 0] = "O"
    with pytest.raises(InfeasibleTearError):
        tear_until_acyclic(A, PriorSpec(entries))


def test_dominance_over_truncation():
    rng = np.random.default_rng(5)
    for _ in range(60):
        A = trained_like(rng, int(rng.integers(3, 9)))
        cfg = TearConfig(max_count=None)
        tear = tear_until_acyclic(A, None, cfg)
        trunc = truncate_until_acyclic(A)
        assert tear.milp_optimal_every_round
        assert tear.total_torn_weight <= trunc.total_torn_weight + 1e-12


def test_square_mode_frobenius_dominance():
    rng = np.random.default_rng(6)
    for _ in range(60):
        A = trained_like(rng, int(rng.integers(3, 9)))
        tear = tear_until_acyclic(A, None, TearConfig(max_count=None, weight_mode="square"))
        trunc = truncate_until_acyclic(A)
        assert np.linalg.norm(A - tear.a_final) <= np.linalg.norm(A - trunc.a_final) + 1e-12


def test_capped_enumeration_still_terminates_acyclic():
    d = 7
    A = np.random.default_rng(7).uniform(0.1, 1, (d, d))
    np.fill_diagonal(A, 0)
    rep = tear_until_acyclic(A, None, TearConfig(max_count=5))
    assert rep.rounds > 1
    assert not has_cycle(rep.a_final)


def test_config_validation():
    with pytest.raises(ValueError):
        TearConfig(omega=-1)
    with pytest.raises(ValueError):
        TearConfig(weight_mode="cube")


def test_report_dict():
    d = tear_until_acyclic(two_cycle()).to_dict()
    assert d["torn"] == [{"source": 0, "target": 1, "weight": 0.3}]
    assert d["round_stats"][0]["cycles"] == 1
    assert issubclass(TearError, RuntimeError)
