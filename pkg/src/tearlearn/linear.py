"""Linear structural equation model trained under an acyclicity penalty.

The model reconstructs every sample as ``x A`` and minimizes

    (1/2n) ||X - X A||_F^2 + lam ||A||_1 + alpha h(A) + (beta/2) h(A)^2

by plain (sub)gradient descent, with the multiplier and penalty updated
between outer iterations.  The matrix with the lowest reconstruction loss seen
during training is returned; nothing forces it to be acyclic.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .acyclicity import AcyclicityMode, expm_taylor, h_grad, h_value
from .graph import check_weight_matrix

__all__ = [
    "TrainConfig",
    "TrainResult",
    "TrainingDivergedError",
    "check_dataset",
    "lsq_loss",
    "lsq_grad",
    "augmented_loss",
    "augmented_grad",
    "init_weights",
    "update_multipliers",
    "epoch_batches",
    "train_linear",
    "gradient_step",
    "step_identity_residual",
]

log = logging.getLogger(__name__)


class TrainingDivergedError(FloatingPointError):
    def __init__(self, message, h_trajectory=None):
        super().__init__(message)
        self.h_trajectory = list(h_trajectory or [])


@dataclass
class TrainConfig:
    lam: float = 0.0
    alpha0: float = 0.0
    beta0: float = 1.0
    beta_max: float = 1e6
    epochs: int = 200
    learning_rate: float = 1e-2
    h_mode: AcyclicityMode = field(default_factory=AcyclicityMode)
    h_tolerance: float = 1e-8
    seed: int = 0
    max_outer: int = 30
    batch_size: int | None = None
    grad_clip: float | None = None

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if not self.beta0 > 0 or not self.beta_max > 0:
            raise ValueError("beta0 and beta_max must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1 or self.max_outer < 1:
            raise ValueError("epochs and max_outer must be at least 1")
        if isinstance(self.h_mode, dict):
            self.h_mode = AcyclicityMode(**self.h_mode)


@dataclass
class TrainResult:
    a_best: np.ndarray
    loss_best: float
    h_trajectory: list
    final_h: float
    converged: bool
    best_h: float = float("nan")
    a_final: np.ndarray | None = None
    alpha_trajectory: list = field(default_factory=list)
    beta_trajectory: list = field(default_factory=list)
    l1_trajectory: list = field(default_factory=list)
    model: object = None
    eval_noise: np.ndarray | None = None


def check_dataset(X, d=None):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"data must be a 2-D array, got shape {X.shape}")
    n, p = X.shape
    if n < 1:
        raise ValueError("data must contain at least one sample")
    if p < 2:
        raise ValueError("data must contain at least two variables")
    if d is not None and p != d:
        raise ValueError(f"data has {p} variables, matrix has dimension {d}")
    if not np.all(np.isfinite(X)):
        raise ValueError("data contains non-finite values")
    return X


def lsq_loss(X, A):
    A = check_weight_matrix(A)
    X = check_dataset(X, A.shape[0])
    R = X - X @ A
    return float(0.5 / X.shape[0] * np.sum(R * R))


def lsq_grad(X, A):
    A = check_weight_matrix(A)
    X = check_dataset(X, A.shape[0])
    return X.T @ (X @ A - X) / X.shape[0]


def augmented_loss(X, A, alpha, beta, lam, h_mode=AcyclicityMode()):
    h = h_value(A, h_mode)
    return lsq_loss(X, A) + lam * float(np.abs(A).sum()) + alpha * h + 0.5 * beta * h * h


def augmented_grad(X, A, alpha, beta, lam, h_mode=AcyclicityMode()):
    """Gradient of :func:`augmented_loss`, using ``sign(A)`` (``sign(0) = 0``) for the L1 term."""
    h = h_value(A, h_mode)
    return lsq_grad(X, A) + lam * np.sign(A) + (alpha + beta * h) * h_grad(A, h_mode)


def init_weights(d, rng):
    A = rng.uniform(-0.1, 0.1, size=(d, d))
    np.fill_diagonal(A, 0.0)
    return A


def update_multipliers(alpha, beta, h, h_prev):
    """Dual ascent on ``alpha``; tenfold ``beta`` when ``h`` fell by less than 4x."""
    alpha = alpha + beta * h
    if abs(h) > 0.25 * abs(h_prev):
        beta = 10.0 * beta
    return alpha, beta


def epoch_batches(n, batch_size, rng):
    """Index arrays covering one pass over ``n`` samples (a single full batch when unbatched)."""
    if not batch_size or batch_size >= n:
        return [slice(None)]
    perm = rng.permutation(n)
    return [perm[start : start + batch_size] for start in range(0, n, batch_size)]


def train_linear(X, cfg=None):
    cfg = cfg or TrainConfig()
    X = check_dataset(X)
    n, d = X.shape
    rng = np.random.default_rng(cfg.seed)
    A = init_weights(d, rng)
    mode = cfg.h_mode
    alpha, beta = float(cfg.alpha0), float(cfg.beta0)
    a_best, loss_best = A.copy(), float("inf")
    h_prev = h_value(A, mode)
    traj, alphas, betas, l1s = [], [], [], []

    outer = 0
    while beta <= cfg.beta_max and outer < cfg.max_outer:
        for _ in range(cfg.epochs):
            for idx in epoch_batches(n, cfg.batch_size, rng):
                with np.errstate(over="ignore", invalid="ignore"):
                    try:
                        g = augmented_grad(X[idx], A, alpha, beta, cfg.lam, mode)
                    except (OverflowError, ValueError) as exc:
                        raise TrainingDivergedError(f"gradient evaluation failed: {exc}", traj) from exc
                if cfg.grad_clip is not None:
                    g = np.clip(g, -cfg.grad_clip, cfg.grad_clip)
                A = A - cfg.learning_rate * g
                np.fill_diagonal(A, 0.0)
                if not np.all(np.isfinite(A)):
                    raise TrainingDivergedError(f"weights became non-finite at outer step {outer}", traj)
            loss = lsq_loss(X, A)
            if loss < loss_best:
                loss_best, a_best = loss, A.copy()
        h = h_value(A, mode)
        traj.append((outer, h))
        alphas.append(alpha)
        betas.append(beta)
        l1s.append(float(np.abs(A).sum()))
        log.debug("outer %d: h=%.3e alpha=%.3g beta=%.3g", outer, h, alpha, beta)
        alpha, beta = update_multipliers(alpha, beta, h, h_prev)
        h_prev = h
        outer += 1
        if h <= cfg.h_tolerance:
            break

    if not traj:
        h = h_value(A, mode)
        traj.append((0, h))
        loss_best = lsq_loss(X, a_best)
    final_h = traj[-1][1]
    return TrainResult(
        a_best=a_best,
        loss_best=loss_best,
        h_trajectory=traj,
        final_h=final_h,
        converged=final_h <= cfg.h_tolerance,
        best_h=h_value(a_best, mode),
        a_final=A,
        alpha_trajectory=alphas,
        beta_trajectory=betas,
        l1_trajectory=l1s,
    )


def _step_direction(X, A, alpha):
    return lsq_grad(X, A) + 2.0 * alpha * A * expm_taylor(A * A).T


def gradient_step(X, A, lr, alpha):
    """One unregularized descent step on the exponential-trace objective (``lam = beta = 0``)."""
    A = check_weight_matrix(A)
    A_next = A - lr * _step_direction(X, A, alpha)
    np.fill_diagonal(A_next, 0.0)
    return A_next


def step_identity_residual(X, A_k, A_next, lr, alpha):
    """Largest entrywise residual of the squared-weight update identity.

    For ``A_next = A_k - lr G`` the Hadamard squares obey
    ``A_k*A_k = A_next*A_next + lr G * (A_next + A_k)`` exactly; the residual
    therefore only reflects rounding.
    """
    A_k = check_weight_matrix(A_k)
    A_next = np.asarray(A_next, dtype=float)
    G = _step_direction(X, A_k, alpha)
    expected = A_k - lr * G
    np.fill_diagonal(expected, 0.0)
    scale = max(1.0, float(np.abs(expected).max()))
    if np.abs(expected - A_next).max() > 1e-12 * scale:
        raise ValueError("A_next is not one gradient step from A_k with the given lr and alpha")
    rhs = A_next * A_next + lr * G * (A_next + A_k)
    return float(np.abs(A_k * A_k - rhs).max())
