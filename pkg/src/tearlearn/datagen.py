"""Synthetic ground truth: triangular weight matrices and a nonlinear SEM sampler."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import check_weight_matrix
from .milp import FORBIDDEN, UNKNOWN, PriorSpec

__all__ = ["GroundTruth", "random_triangular_w", "sample_nonlinear", "link", "prior_lower_triangular"]


@dataclass
class GroundTruth:
    w: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        self.w = check_weight_matrix(self.w, "w")
        if np.any(np.tril(self.w) != 0):
            raise ValueError("ground-truth weights must be strictly upper triangular")

    @property
    def dag_support(self):
        return (self.w != 0).astype(np.int8)

    def to_dict(self):
        d = self.w.shape[0]
        return {"dim": d, "values": self.w.ravel().tolist(), "seed": self.seed}

    @classmethod
    def from_dict(cls, obj):
        d = int(obj["dim"])
        return cls(np.asarray(obj["values"], dtype=float).reshape(d, d), obj.get("seed"))


def random_triangular_w(d, edge_prob=0.3, weight_range=(0.5, 2.0), seed=0):
    """Strictly upper-triangular weights; magnitudes uniform in ``weight_range`` with random signs."""
    if not 0 <= edge_prob <= 1:
        raise ValueError("edge_prob must lie in [0, 1]")
    lo, hi = weight_range
    if not 0 < lo <= hi:
        raise ValueError("weight_range must be positive and ordered")
    rng = np.random.default_rng(seed)
    mask = np.triu(rng.random((d, d)) < edge_prob, k=1)
    mags = rng.uniform(lo, hi, size=(d, d))
    signs = rng.choice([-1.0, 1.0], size=(d, d))
    return GroundTruth(np.where(mask, mags * signs, 0.0), seed)


def link(s):
    return np.tanh(s) + np.cos(s) + np.sin(s)


def sample_nonlinear(truth, n=5000, noise_seed=0, noise_scale=1.0):
    """Draw ``n`` samples of ``x_j = tanh(s_j) + cos(s_j) + sin(s_j) + z_j``.

    ``s_j = sum_i x_i W_ij`` collects the parents ``i -> j``; nodes are filled
    in index order, which is causal for upper-triangular ``W``.  ``z`` is
    standard normal scaled by ``noise_scale`` (0 gives the noiseless map).
    """
    W = truth.w if isinstance(truth, GroundTruth) else np.asarray(truth, dtype=float)
    if np.any(np.tril(W) != 0):
        raise ValueError("sampler needs a strictly upper-triangular weight matrix")
    if n < 1:
        raise ValueError("n must be at least 1")
    d = W.shape[0]
    rng = np.random.default_rng(noise_seed)
    Z = noise_scale * rng.standard_normal((n, d))
    X = np.zeros((n, d))
    for j in range(d):
        s = X[:, :j] @ W[:j, j]
        X[:, j] = link(s) + Z[:, j]
    return X


def prior_lower_triangular(d):
    """Prior forbidding every edge ``i -> j`` with ``i > j``; the rest unknown."""
    if d < 2:
        raise ValueError("d must be at least 2")
    entries = np.full((d, d), UNKNOWN)
    entries[np.tril_indices(d)] = FORBIDDEN
    return PriorSpec(entries)
