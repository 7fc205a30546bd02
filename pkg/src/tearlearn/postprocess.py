"""Turning a learned weight matrix into a DAG.

Two strategies are provided:

* :func:`tear_until_acyclic` removes a minimum-cost set of edges breaking
  every cycle (solving the covering program of :mod:`tearlearn.milp`),
  respecting obligatory edges from the prior, and repeats until acyclic.
* :func:`truncate_until_acyclic` is the usual thresholding baseline: raise a
  magnitude threshold until the surviving edges form a DAG.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .graph import (
    build_loop_matrix,
    check_weight_matrix,
    enumerate_simple_cycles,
    is_acyclic,
    nonzero_streams,
)
from .milp import InfeasibleTearError, make_problem, solve_tear

__all__ = [
    "TearConfig",
    "TearReport",
    "TearError",
    "preprocess",
    "tear_until_acyclic",
    "truncate_until_acyclic",
]

log = logging.getLogger(__name__)


class TearError(RuntimeError):
    pass


@dataclass
class TearConfig:
    omega: float = 0.0  # read by callers of preprocess, not by the tear loop
    max_len: int | None = None
    max_count: int | None = 10000
    weight_mode: str = "abs"
    node_budget: int = 10**6

    def __post_init__(self):
        if self.omega < 0:
            raise ValueError("omega must be non-negative")
        if self.weight_mode not in ("abs", "square"):
            raise ValueError(f"unknown weight mode {self.weight_mode!r}")


@dataclass
class TearReport:
    a_final: np.ndarray
    torn_streams: list
    rounds: int
    total_torn_weight: float
    milp_optimal_every_round: bool = True
    round_stats: list = field(default_factory=list)
    threshold: float | None = None

    def to_dict(self):
        a = np.asarray(self.a_final)
        return {
            "dim": int(a.shape[0]),
            "rounds": self.rounds,
            "total_torn_weight": self.total_torn_weight,
            "milp_optimal_every_round": self.milp_optimal_every_round,
            "threshold": self.threshold,
            "torn": [{"source": i, "target": j, "weight": w} for (i, j), w in self.torn_streams],
            "round_stats": self.round_stats,
        }


def preprocess(A, prior=None, omega=0.0):
    """Apply the magnitude threshold and the prior before tearing.

    Entries with ``|A_ij| < omega`` and entries the prior forbids are zeroed.
    Obligatory entries are exempt from the threshold; an obligatory entry that
    is zero in ``A`` receives the largest magnitude in ``A`` (positive sign).
    """
    A = check_weight_matrix(A).copy()
    amax = float(np.abs(A).max())
    keep = np.zeros(A.shape, dtype=bool)
    if prior is not None:
        if prior.dim != A.shape[0]:
            raise ValueError(f"prior has dim {prior.dim}, matrix has dim {A.shape[0]}")
        keep = prior.obligatory_mask()
    A[(np.abs(A) < omega) & ~keep] = 0.0
    if prior is not None:
        A[prior.forbidden_mask()] = 0.0
        missing = keep & (A == 0)
        if missing.any():
            if amax == 0:
                i, j = np.argwhere(missing)[0]
                raise ValueError(f"cannot synthesize obligatory edge ({i}, {j}): matrix is all zero")
            A[missing] = amax
    return A


def tear_until_acyclic(A, prior=None, cfg=None):
    """Tear minimum-cost edge sets until the support of ``A`` is acyclic.

    Each round enumerates simple cycles (subject to the caps in ``cfg``),
    solves the covering program and zeroes the torn entries.  Obligatory
    edges are never torn; a cycle made only of them raises
    :class:`~tearlearn.milp.InfeasibleTearError`.
    """
    cfg = cfg or TearConfig()
    A = check_weight_matrix(A).copy()
    d = A.shape[0]
    original = A.copy()
    torn = []
    stats = []
    all_optimal = True
    rounds = 0
    while True:
        streams = nonzero_streams(A)
        if is_acyclic(streams, d):
            break
        cycles, truncated = enumerate_simple_cycles(streams, d, cfg.max_len, cfg.max_count)
        if not cycles:
            raise TearError("cycles remain but none were enumerated; raise max_len")
        loops = build_loop_matrix(cycles, streams)
        problem = make_problem(A, streams, loops, prior, cfg.weight_mode)
        by_id = {s.id: s for s in streams}
        try:
            sol = solve_tear(problem, cfg.node_budget)
        except InfeasibleTearError as exc:
            # report edge positions rather than per-round stream ids
            raise InfeasibleTearError([by_id[i].position for i in exc.streams]) from exc
        if not sol.torn:
            raise TearError("tear round removed nothing")
        rounds += 1
        all_optimal &= sol.optimal
        for sid in sol.torn:
            s = by_id[sid]
            torn.append(((s.source, s.target), float(original[s.source, s.target])))
            A[s.source, s.target] = 0.0
        stats.append(
            {
                "round": rounds,
                "streams": len(streams),
                "cycles": len(cycles),
                "enumeration_truncated": truncated,
                "torn": len(sol.torn),
                "cost": sol.cost,
                "optimal": sol.optimal,
                "explored_nodes": sol.explored_nodes,
            }
        )
        log.debug("tear round %d: %d cycles, %d torn, cost %.6g", rounds, len(cycles), len(sol.torn), sol.cost)
    if prior is not None:
        dropped = prior.obligatory_mask() & (original != 0) & (A == 0)
        if dropped.any():
            raise TearError(f"obligatory edges were torn: {np.argwhere(dropped).tolist()}")
    total = float(sum(abs(w) for _, w in torn))
    return TearReport(A, torn, rounds, total, all_optimal, stats)


def truncate_until_acyclic(A):
    """Zero entries at or below an increasing magnitude threshold until acyclic.

    Thresholds step through the distinct nonzero magnitudes of ``A`` in
    ascending order, so the result is the densest DAG obtainable this way.
    """
    A = check_weight_matrix(A)
    d = A.shape[0]
    mags = np.abs(A)
    if is_acyclic(nonzero_streams(A), d):
        return TearReport(A.copy(), [], 0, 0.0, True, [], 0.0)
    rounds = 0
    for tau in np.unique(mags[mags > 0]):
        rounds += 1
        B = np.where(mags <= tau, 0.0, A)
        if is_acyclic(nonzero_streams(B), d):
            removed = np.argwhere((mags <= tau) & (mags > 0))
            torn = [((int(i), int(j)), float(A[i, j])) for i, j in removed]
            total = float(sum(abs(w) for _, w in torn))
            return TearReport(B, torn, rounds, total, True, [], float(tau))
    raise AssertionError("unreachable: the empty graph is acyclic")
