"""Structure-recovery metrics, decomposable DAG scores and perturbation bounds."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import multigammaln

from .graph import is_acyclic, nonzero_streams

__all__ = [
    "EdgeConfusion",
    "ScoreReport",
    "edge_confusion",
    "fdr",
    "tpr",
    "fpr",
    "shd",
    "score_report",
    "gaussian_bic",
    "gaussian_bic_local",
    "bge_score",
    "bge_local",
    "perturbation_bound",
    "perturbation_bound_nonlinear",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EdgeConfusion:
    """Edge counts of an estimated graph against the true one.

    ``tp``, ``r`` and ``fp`` classify estimated directed edges (same direction,
    reversed, absent from the true skeleton); ``e`` and ``m`` count unordered
    skeleton pairs that are extra or missing; ``f`` is the number of unordered
    node pairs not adjacent in the truth.
    """

    tp: int
    r: int
    fp: int
    e: int
    m: int
    tee: int
    t: int
    f: int


@dataclass
class ScoreReport:
    fdr: float | None = None
    tpr: float | None = None
    fpr: float | None = None
    shd: int | None = None
    bge: float | None = None
    gaussian_bic: float | None = None

    def to_dict(self):
        return asdict(self)


def _binary(G, name):
    G = np.asarray(G) != 0
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValueError(f"{name} must be a square matrix")
    if G.diagonal().any():
        raise ValueError(f"{name} has self-loops")
    return G


def edge_confusion(estimated, truth):
    B = _binary(estimated, "estimated")
    T = _binary(truth, "truth")
    if B.shape != T.shape:
        raise ValueError(f"dimension mismatch: {B.shape} vs {T.shape}")
    d = B.shape[0]
    tp = int((B & T).sum())
    r = int((B & T.T & ~T).sum())
    fp = int((B & ~T & ~T.T).sum())
    upper = np.triu(np.ones((d, d), dtype=bool), k=1)
    skel_b = (B | B.T) & upper
    skel_t = (T | T.T) & upper
    e = int((skel_b & ~skel_t).sum())
    m = int((skel_t & ~skel_b).sum())
    f = d * (d - 1) // 2 - int(skel_t.sum())
    return EdgeConfusion(tp, r, fp, e, m, int(B.sum()), int(T.sum()), f)


def _ratio(num, den, name):
    if den == 0:
        warnings.warn(f"{name}: zero denominator, reporting 0", RuntimeWarning, stacklevel=3)
        return 0.0
    return num / den


def fdr(c):
    return _ratio(c.r + c.fp, c.tee, "FDR")


def tpr(c):
    return _ratio(c.tp, c.t, "TPR")


def fpr(c):
    return _ratio(c.r + c.fp, c.f, "FPR")


def shd(c):
    return c.e + c.m + c.r


def score_report(estimated, truth=None, X=None):
    rep = ScoreReport()
    if truth is not None:
        c = edge_confusion(estimated, truth)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            rep.fdr, rep.tpr, rep.fpr = fdr(c), tpr(c), fpr(c)
        rep.shd = shd(c)
    if X is not None:
        rep.gaussian_bic = gaussian_bic(X, estimated)
        rep.bge = bge_score(X, estimated)
    return rep


def _check_dag(X, dag):
    X = np.asarray(X, dtype=float)
    G = _binary(dag, "dag")
    if X.ndim != 2 or X.shape[1] != G.shape[0]:
        raise ValueError("data columns must match the graph dimension")
    if not is_acyclic(nonzero_streams(G.astype(float)), G.shape[0]):
        raise ValueError("graph to score is cyclic")
    return X, G


def gaussian_bic_local(X, child, parents, ridge=1e-8):
    """Local Gaussian BIC of one family; regression with intercept."""
    n = X.shape[0]
    y = X[:, child]
    Z = np.column_stack([np.ones(n)] + [X[:, p] for p in parents])
    gram = Z.T @ Z
    if np.linalg.matrix_rank(gram) < gram.shape[0]:
        log.warning("collinear parents %s of node %d, using ridge %.0e", list(parents), child, ridge)
        coef = np.linalg.solve(gram + ridge * np.eye(gram.shape[0]), Z.T @ y)
    else:
        coef = np.linalg.solve(gram, Z.T @ y)
    resid = y - Z @ coef
    var = float(resid @ resid) / n
    loglik = -0.5 * n * (math.log(2 * math.pi * var) + 1.0)
    return loglik - 0.5 * math.log(n) * (len(parents) + 2)


def gaussian_bic(X, dag):
    """Gaussian BIC of a DAG (higher is better).

    Per node: maximized Gaussian log-likelihood of the regression on its
    parents minus ``(log n / 2)`` times its parameter count
    (coefficients, intercept and variance).
    """
    X, G = _check_dag(X, dag)
    return float(sum(gaussian_bic_local(X, j, np.flatnonzero(G[:, j]).tolist()) for j in range(G.shape[0])))


class _BGe:
    def __init__(self, X, alpha_mu=1.0, alpha_w=None, t_scale=None):
        n, d = X.shape
        self.n, self.d = n, d
        self.alpha_mu = float(alpha_mu)
        self.alpha_w = float(d + 2 if alpha_w is None else alpha_w)
        if self.alpha_w <= d - 1:
            raise ValueError("alpha_w must exceed d - 1")
        if t_scale is None:
            t_scale = self.alpha_mu * (self.alpha_w - d - 1) / (self.alpha_mu + 1)
        if not t_scale > 0:
            raise ValueError("t_scale must be positive; increase alpha_w")
        self.t = float(t_scale)
        xbar = X.mean(axis=0)
        C = X - xbar
        # prior mean is zero
        self.R = self.t * np.eye(d) + C.T @ C + (n * self.alpha_mu / (n + self.alpha_mu)) * np.outer(xbar, xbar)

    def logml(self, nodes):
        k = len(nodes)
        if k == 0:
            return 0.0
        n, d, aw = self.n, self.d, self.alpha_w
        R = self.R[np.ix_(nodes, nodes)]
        sign, logdet = np.linalg.slogdet(R)
        if sign <= 0:
            raise FloatingPointError(f"posterior scatter of nodes {list(nodes)} is not positive definite")
        dof = aw - d + k
        return (
            -0.5 * n * k * math.log(math.pi)
            + 0.5 * k * math.log(self.alpha_mu / (n + self.alpha_mu))
            + multigammaln(0.5 * (n + dof), k)
            - multigammaln(0.5 * dof, k)
            + 0.5 * dof * k * math.log(self.t)
            - 0.5 * (n + dof) * logdet
        )

    def local(self, child, parents):
        parents = sorted(parents)
        return self.logml(sorted(parents + [child])) - self.logml(parents)


def bge_local(X, child, parents, alpha_mu=1.0, alpha_w=None, t_scale=None):
    X = np.asarray(X, dtype=float)
    return _BGe(X, alpha_mu, alpha_w, t_scale).local(child, list(parents))


def bge_score(X, dag, alpha_mu=1.0, alpha_w=None, t_scale=None):
    """BGe log marginal likelihood of a DAG under a Normal-Wishart prior.

    The prior has zero mean, ``alpha_w`` degrees of freedom (default
    ``d + 2``) and parametric matrix ``t_scale * I`` with the default
    ``t_scale = alpha_mu (alpha_w - d - 1) / (alpha_mu + 1)``.  The score is a
    sum of family terms ``log p(X_{pa+child}) - log p(X_pa)``.
    """
    X, G = _check_dag(X, dag)
    model = _BGe(X, alpha_mu, alpha_w, t_scale)
    return float(sum(model.local(j, np.flatnonzero(G[:, j]).tolist()) for j in range(G.shape[0])))


def perturbation_bound(X, A, deltaA):
    """Relative output change of ``X A`` under ``A -> A + deltaA`` and its spectral-norm bound.

    Returns ``(bound, actual)`` with ``bound = ||X||_2 ||deltaA||_2 / ||X A||_2``
    and ``actual = ||X deltaA||_2 / ||X A||_2``.
    """
    X = np.asarray(X, dtype=float)
    A = np.asarray(A, dtype=float)
    deltaA = np.asarray(deltaA, dtype=float)
    base = np.linalg.norm(X @ A, 2)
    if base == 0:
        raise ZeroDivisionError("X A is zero; relative perturbation undefined")
    bound = np.linalg.norm(X, 2) * np.linalg.norm(deltaA, 2) / base
    actual = np.linalg.norm(X @ deltaA, 2) / base
    return float(bound), float(actual)


def perturbation_bound_nonlinear(jacobian_norm, output_norm, deltaA_norm):
    """First-order relative-error bound ``(||J|| / ||f||) ||deltaA||``."""
    if output_norm == 0:
        raise ZeroDivisionError("output norm is zero")
    return jacobian_norm / output_norm * deltaA_norm
