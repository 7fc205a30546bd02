"""Smooth acyclicity measures and their matrix gradients.

Both measures act on the Hadamard square ``M = A * A`` so that signs of the
weights never matter:

* exponential trace: ``h(A) = tr(exp(M)) - d``
* polynomial trace:  ``h(A) = tr((I + gamma M)^d) - d``

Each is zero exactly when the support of ``A`` is acyclic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import check_weight_matrix

__all__ = [
    "AcyclicityMode",
    "expm_taylor",
    "h_exp",
    "h_poly",
    "grad_h_exp",
    "grad_h_poly",
    "grad_h_poly_binomial",
    "h_value",
    "h_grad",
]

EXPM_TOL = 1e-12
# exp(700) is close to the float64 ceiling
_MAX_EXP_NORM = 700.0


@dataclass(frozen=True)
class AcyclicityMode:
    """Which acyclicity measure to use; ``gamma=None`` means ``1/d`` for the polynomial form."""

    variant: str = "exp"
    gamma: float | None = None

    def __post_init__(self):
        if self.variant not in ("exp", "poly"):
            raise ValueError(f"unknown acyclicity variant {self.variant!r}")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("gamma must be positive")


def expm_taylor(M, tol=EXPM_TOL):
    """Matrix exponential by scaling and squaring of a truncated Taylor series.

    The matrix is scaled by ``2**-s`` until its infinity norm is at most 1/2,
    the series is summed until the next term's norm drops below ``tol`` and
    the result is squared ``s`` times.
    """
    M = np.asarray(M, dtype=float)
    norm = np.abs(M).sum(axis=1).max() if M.size else 0.0
    if not np.isfinite(norm) or norm > _MAX_EXP_NORM:
        raise OverflowError(f"matrix exponential overflows: infinity norm {norm:.3g}")
    s = 0
    if norm > 0.5:
        s = int(math.ceil(math.log2(norm / 0.5)))
    S = M / (2.0**s)
    E = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, 60):
        term = term @ S / k
        E = E + term
        if np.abs(term).sum(axis=1).max() < tol:
            break
    for _ in range(s):
        E = E @ E
    return E


def _poly_base(A, gamma):
    d = A.shape[0]
    return np.eye(d) + gamma * (A * A)


def _matrix_power(B, exponent):
    result = np.eye(B.shape[0])
    k = exponent
    base = B
    while k > 0:
        if k & 1:
            result = result @ base
        k >>= 1
        if k:
            base = base @ base
    if not np.all(np.isfinite(result)):
        raise OverflowError(f"matrix power overflows: max entry of base {np.abs(B).max():.3g}, exponent {exponent}")
    return result


def h_exp(A):
    A = check_weight_matrix(A)
    E = expm_taylor(A * A)
    return float(np.trace(E) - A.shape[0])


def grad_h_exp(A):
    """Gradient of ``h_exp``: ``2 A * exp(A * A)^T``."""
    A = check_weight_matrix(A)
    E = expm_taylor(A * A)
    return 2.0 * A * E.T


def _gamma(gamma, d):
    if gamma is None:
        return 1.0 / d
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    return float(gamma)


def h_poly(A, gamma=None):
    A = check_weight_matrix(A)
    d = A.shape[0]
    gamma = _gamma(gamma, d)
    P = _matrix_power(_poly_base(A, gamma), d)
    return float(np.trace(P) - d)


def grad_h_poly(A, gamma=None):
    """Gradient of ``h_poly`` in closed form: ``2 gamma d A * ((I + gamma A*A)^(d-1))^T``."""
    A = check_weight_matrix(A)
    d = A.shape[0]
    gamma = _gamma(gamma, d)
    P = _matrix_power(_poly_base(A, gamma), d - 1)
    return 2.0 * gamma * d * A * P.T


def grad_h_poly_binomial(A, gamma=None):
    """Gradient of ``h_poly`` by expanding the binomial sum term by term.

    ``2 A * [sum_k C(d,k) k gamma^k M^(k-1)]^T`` with ``M = A * A``; agrees with
    :func:`grad_h_poly` and is kept as a cross-check.
    """
    A = check_weight_matrix(A)
    d = A.shape[0]
    gamma = _gamma(gamma, d)
    M = A * A
    acc = np.zeros_like(M)
    Mk = np.eye(d)
    for k in range(1, d + 1):
        acc += math.comb(d, k) * k * gamma**k * Mk
        Mk = Mk @ M
    return 2.0 * A * acc.T


def h_value(A, mode):
    if mode.variant == "exp":
        return h_exp(A)
    return h_poly(A, mode.gamma)


def h_grad(A, mode):
    if mode.variant == "exp":
        return grad_h_exp(A)
    return grad_h_poly(A, mode.gamma)
