import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import fixed_point_sample
from tearlearn.datagen import GroundTruth, link, prior_lower_triangular, random_triangular_w, sample_nonlinear


def test_random_w_examples():
    full = random_triangular_w(3, 1.0, seed=0)
    assert np.count_nonzero(full.w) == 3
    assert np.all(full.w[np.triu_indices(3, 1)] != 0)
    assert not random_triangular_w(5, 0.0, seed=0).w.any()
    assert np.array_equal(random_triangular_w(6, 0.4, seed=9).w, random_triangular_w(6, 0.4, seed=9).w)


def test_random_w_dead_zone():
    w = random_triangular_w(12, 0.8, (0.5, 2.0), seed=1).w
    mags = np.abs(w[w != 0])
    assert mags.min() >= 0.5 and mags.max() <= 2.0
    with pytest.raises(ValueError):
        random_triangular_w(3, 1.5)
    with pytest.raises(ValueError):
        random_triangular_w(3, 0.5, (-1.0, 1.0))


def test_ground_truth_validation_and_roundtrip():
    with pytest.raises(ValueError):
        GroundTruth(np.array([[0, 0], [1.0, 0]]))
    g = random_triangular_w(4, 0.5, seed=3)
    back = GroundTruth.from_dict(g.to_dict())
    assert np.array_equal(back.w, g.w) and back.seed == 3
    assert g.dag_support.dtype == np.int8


def test_empty_w_gives_one_plus_noise():
    X = sample_nonlinear(np.zeros((3, 3)), 50, noise_seed=2)
    Z = np.random.default_rng(2).standard_normal((50, 3))
    assert np.allclose(X, 1.0 + Z, atol=0, rtol=0)


def test_noiseless_chain():
    W = np.array([[0, 1.0], [0, 0]])
    X = sample_nonlinear(W, 20, noise_seed=0, noise_scale=0.0)
    x0 = X[:, 0]
    assert np.allclose(X[:, 1], np.tanh(x0) + np.cos(x0) + np.sin(x0), rtol=0, atol=1e-15)


def test_rejects_cyclic():
    with pytest.raises(ValueError):
        sample_nonlinear(np.array([[0, 1.0], [1.0, 0]]), 10)
    with pytest.raises(ValueError):
        sample_nonlinear(np.zeros((2, 2)), 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 8), st.integers(0, 10_000))
def test_matches_fixed_point_oracle(d, seed):
    truth = random_triangular_w(d, 0.5, seed=seed)
    X = sample_nonlinear(truth, 30, noise_seed=seed)
    Z = np.random.default_rng(seed).standard_normal((30, d))
    # equal up to summation order inside BLAS
    assert np.allclose(X, fixed_point_sample(truth.w, Z, link), rtol=1e-13, atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_no_nan(seed):
    truth = random_triangular_w(6, 0.6, seed=seed)
    assert np.all(np.isfinite(sample_nonlinear(truth, 40, seed)))


def test_root_mean_near_one():
    truth = random_triangular_w(6, 0.3, seed=5)
    X = sample_nonlinear(truth, 5000, 6)
    roots = np.flatnonzero(~truth.w.any(axis=0))
    assert abs(X[:, roots].mean(axis=0) - 1).max() < 0.1


def test_prior_lower_triangular():
    p2 = prior_lower_triangular(2)
    assert (p2.entries == "U").sum() == 1 and p2.entries[0, 1] == "U"
    p3 = prior_lower_triangular(3)
    off = ~np.eye(3, dtype=bool)
    assert (p3.entries == "U").sum() == 3 and (p3.entries[off] == "F").sum() == 3
    assert not p3.obligatory_mask().any()
    with pytest.raises(ValueError):
        prior_lower_triangular(1)
