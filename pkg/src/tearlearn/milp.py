"""Minimum-cost loop tearing as a weighted set-cover integer program.

Every stream ``j`` carries a binary decision ``y_j`` (1 = torn, 0 = kept)
and a cost ``w_j``.  Every row of the loop matrix must contain at least one
torn stream.  Prior knowledge enters as bounds on ``y_j``: an edge whose
existence is unknown gets ``0 <= y_j <= 1``; an obligatory edge gets
``0 <= y_j <= 0.5``, which leaves ``y_j = 0`` as the only binary choice.

The program is solved exactly by best-first branch and bound.
"""
from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field

import numpy as np

from .graph import LoopMatrix, Stream

__all__ = [
    "UNKNOWN",
    "OBLIGATORY",
    "FORBIDDEN",
    "PriorSpec",
    "TearProblem",
    "TearSolution",
    "InfeasibleTearError",
    "weights_from_matrix",
    "apply_prior",
    "make_problem",
    "solve_tear",
    "dump_problem",
    "load_problem",
]

UNKNOWN = "U"
OBLIGATORY = "O"
FORBIDDEN = "F"

# bound pair of each disjunct: (lb, ub)
TEARABLE_BOUNDS = (0.0, 1.0)
KEPT_BOUNDS = (0.0, 0.5)


class InfeasibleTearError(ValueError):
    """A cycle consists only of streams that may not be torn."""

    def __init__(self, streams):
        self.streams = list(streams)
        super().__init__(f"infeasible tear problem: cycle over untearable streams {self.streams}")


@dataclass
class PriorSpec:
    """Per-edge prior knowledge, one of ``"U"``, ``"O"`` or ``"F"`` per entry."""

    entries: np.ndarray

    def __post_init__(self):
        e = np.array(self.entries, dtype="<U1")
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise ValueError(f"prior must be a square matrix, got shape {e.shape}")
        bad = ~np.isin(e, [UNKNOWN, OBLIGATORY, FORBIDDEN])
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise ValueError(f"invalid prior entry {e[i, j]!r} at ({i}, {j})")
        diag = np.diag(e)
        if np.any(diag == OBLIGATORY):
            raise ValueError("self-loops cannot be obligatory")
        np.fill_diagonal(e, FORBIDDEN)
        self.entries = e

    @property
    def dim(self):
        return self.entries.shape[0]

    @classmethod
    def unknown(cls, d):
        return cls(np.full((d, d), UNKNOWN))

    def forbidden_mask(self):
        return self.entries == FORBIDDEN

    def obligatory_mask(self):
        return self.entries == OBLIGATORY

    def to_dict(self):
        return {"dim": self.dim, "entries": ["".join(row) for row in self.entries.tolist()]}

    @classmethod
    def from_dict(cls, obj):
        rows = obj["entries"]
        d = int(obj["dim"])
        if len(rows) != d or any(len(r) != d for r in rows):
            raise ValueError(f"prior entries do not match dim {d}")
        return cls(np.array([list(r) for r in rows]))


@dataclass
class TearProblem:
    streams: list
    u: LoopMatrix
    weights: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        n = len(self.streams)
        if not (len(self.weights) == len(self.lb) == len(self.ub) == self.u.cols == n):
            raise ValueError("weights, bounds and loop-matrix columns must match the stream count")
        if np.any(self.weights < 0):
            raise ValueError("tear weights must be non-negative")
        if np.any(self.lb != 0.0):
            raise ValueError("lower bounds must be 0")
        if not np.all(np.isin(self.ub, [1.0, 0.5])):
            raise ValueError("upper bounds must be 1.0 or 0.5")

    @property
    def tearable(self):
        # binary y with y <= ub: ub = 0.5 pins y to 0
        return np.floor(self.ub) >= 1


@dataclass
class TearSolution:
    y: np.ndarray
    cost: float
    optimal: bool
    explored_nodes: int
    torn: list = field(default_factory=list)


def weights_from_matrix(A, streams, mode="abs"):
    """Tear cost per stream: ``|A_ij|`` (``mode="abs"``) or ``A_ij**2`` (``"square"``)."""
    A = np.asarray(A, dtype=float)
    vals = np.array([A[s.source, s.target] for s in streams], dtype=float)
    if mode == "abs":
        return np.abs(vals)
    if mode == "square":
        return vals**2
    raise ValueError(f"unknown weight mode {mode!r}")


def apply_prior(streams, prior=None):
    """Select the bound disjunct of every stream from the prior.

    Unknown edges take ``(lb, ub) = (0, 1.0)`` and obligatory edges
    ``(0, 0.5)``.  Forbidden edges must have been removed beforehand.
    """
    lb = np.zeros(len(streams))
    ub = np.ones(len(streams))
    if prior is None:
        return lb, ub
    for k, s in enumerate(streams):
        state = prior.entries[s.source, s.target]
        if state == FORBIDDEN:
            raise ValueError(f"stream {s.id} ({s.source}->{s.target}) is forbidden by the prior and must be removed first")
        lb[k], ub[k] = KEPT_BOUNDS if state == OBLIGATORY else TEARABLE_BOUNDS
    return lb, ub


def make_problem(A, streams, loop_matrix, prior=None, weight_mode="abs"):
    lb, ub = apply_prior(streams, prior)
    return TearProblem(list(streams), loop_matrix, weights_from_matrix(A, streams, weight_mode), lb, ub)


def _greedy_cover(U, w, avail):
    """Cheapest-ratio greedy cover followed by redundancy removal."""
    n_rows, n_cols = U.shape
    uncovered = np.ones(n_rows, dtype=bool)
    chosen = []
    while uncovered.any():
        k = U[uncovered].sum(axis=0) * avail
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(k > 0, w / np.maximum(k, 1), np.inf)
        j = int(np.argmin(ratio))
        chosen.append(j)
        uncovered &= ~U[:, j]
    y = np.zeros(n_cols, dtype=bool)
    y[chosen] = True
    for j in sorted(chosen, key=lambda c: (-w[c], -c)):
        y[j] = False
        if not np.all(U[:, y].any(axis=1)):
            y[j] = True
    return y


def solve_tear(problem, node_budget=10**6):
    """Exact minimum-cost tear set by best-first branch and bound.

    The lower bound charges every uncovered row the cheapest share
    ``w_j / k_j`` among its open streams, where ``k_j`` counts uncovered rows
    through stream ``j``; any cover pays at least that much.  Branching picks
    the open stream lying in most uncovered rows (smallest index on ties),
    trying "tear" before "keep".  Past ``node_budget`` expanded nodes, the
    incumbent is returned with ``optimal=False``.
    """
    U = problem.u.u.astype(bool)
    w = problem.weights
    n_rows, n_cols = U.shape
    tearable = problem.tearable
    stream_ids = [s.id for s in problem.streams]

    if n_rows == 0:
        return _finish(problem, np.zeros(n_cols, dtype=bool), True, 0)

    U = U & tearable[None, :]
    empty = ~U.any(axis=1)
    if empty.any():
        row = int(np.argmax(empty))
        raise InfeasibleTearError([stream_ids[j] for j in np.flatnonzero(problem.u.u[row])])

    best_y = _greedy_cover(U, w, tearable.astype(float))
    best_cost = float(w[best_y].sum())

    counter = 0
    heap = []

    def bound(uncovered, open_cols):
        sub = U[uncovered][:, open_cols]
        if sub.size == 0:
            return 0.0
        if not sub.any(axis=1).all():
            return np.inf
        k = sub.sum(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(k > 0, w[open_cols] / np.maximum(k, 1), np.inf)
        return float(np.where(sub, ratio[None, :], np.inf).min(axis=1).sum())

    def push(chosen, open_cols, uncovered, cost):
        nonlocal counter
        chosen, open_cols, uncovered, cost = _propagate(U, w, chosen, open_cols, uncovered, cost)
        if cost is None:
            return
        lb = cost + bound(uncovered, open_cols)
        if lb < best_cost - 1e-12 or (not uncovered.any() and cost < best_cost - 1e-12):
            heapq.heappush(heap, (lb, counter, chosen, open_cols, uncovered, cost))
            counter += 1

    push(np.zeros(n_cols, dtype=bool), tearable.copy(), np.ones(n_rows, dtype=bool), 0.0)
    explored = 0
    optimal = True
    while heap:
        lb, _, chosen, open_cols, uncovered, cost = heapq.heappop(heap)
        if lb >= best_cost - 1e-12:
            continue
        if not uncovered.any():
            best_y, best_cost = chosen, cost
            continue
        explored += 1
        if explored > node_budget:
            optimal = False
            break
        k = (U[uncovered] & open_cols[None, :]).sum(axis=0)
        j = int(np.argmax(k))
        rest = open_cols.copy()
        rest[j] = False
        take = chosen.copy()
        take[j] = True
        push(take, rest, uncovered & ~U[:, j], cost + float(w[j]))
        push(chosen, rest, uncovered, cost)
    return _finish(problem, best_y, optimal, explored)


def _propagate(U, w, chosen, open_cols, uncovered, cost):
    """Tear every stream that is the last open option of some uncovered row."""
    while True:
        sub = U[uncovered][:, open_cols]
        if sub.size == 0 or not uncovered.any():
            return chosen, open_cols, uncovered, cost
        counts = sub.sum(axis=1)
        if (counts == 0).any():
            return chosen, open_cols, uncovered, None
        single = counts == 1
        if not single.any():
            return chosen, open_cols, uncovered, cost
        cols = np.flatnonzero(open_cols)
        forced = np.unique(cols[np.argmax(sub[single], axis=1)])
        chosen = chosen.copy()
        open_cols = open_cols.copy()
        chosen[forced] = True
        open_cols[forced] = False
        cost = cost + float(w[forced].sum())
        uncovered = uncovered & ~U[:, forced].any(axis=1)


def _finish(problem, y, optimal, explored):
    y = np.asarray(y, dtype=bool)
    U = problem.u.u.astype(bool)
    if U.shape[0] and not U[:, y].any(axis=1).all():
        raise RuntimeError("tear solution leaves a cycle uncovered")
    if np.any(y & ~problem.tearable):
        raise RuntimeError("tear solution violates a stream upper bound")
    y_int = y.astype(np.int64)
    cost = float(np.dot(problem.weights, y_int))
    torn = [problem.streams[j].id for j in np.flatnonzero(y)]
    return TearSolution(y_int, cost, optimal, explored, torn)


def dump_problem(problem):
    """Serialize a tear problem to a JSON string."""
    rows = [np.flatnonzero(r).tolist() for r in problem.u.u]
    obj = {
        "format": "tearlearn.tear_problem",
        "version": 1,
        "streams": [[s.id, s.source, s.target, s.weight] for s in problem.streams],
        "weights": problem.weights.tolist(),
        "lb": problem.lb.tolist(),
        "ub": problem.ub.tolist(),
        "rows": rows,
    }
    return json.dumps(obj, indent=1)


def load_problem(text):
    obj = json.loads(text)
    if obj.get("format") != "tearlearn.tear_problem":
        raise ValueError("not a tear problem dump")
    streams = [Stream(int(i), int(s), int(t), float(w)) for i, s, t, w in obj["streams"]]
    u = np.zeros((len(obj["rows"]), len(streams)), dtype=np.uint8)
    for i, cols in enumerate(obj["rows"]):
        u[i, cols] = 1
    return TearProblem(streams, LoopMatrix(u, streams), obj["weights"], obj["lb"], obj["ub"])
