"""Directed graphs over weight matrices: streams, cycles and loop matrices.

A weight matrix ``A`` is a dense ``d x d`` array whose entry ``(i, j)`` is the
coefficient of the directed edge ``i -> j``.  Every nonzero off-diagonal entry
is a *stream*.  Cycles are lists of stream ids, and the loop matrix marks which
streams each cycle runs through.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Stream",
    "Cycle",
    "LoopMatrix",
    "check_weight_matrix",
    "nonzero_streams",
    "streams_from_edges",
    "is_acyclic",
    "enumerate_simple_cycles",
    "build_loop_matrix",
    "support",
]


def check_weight_matrix(A, name="A"):
    """Validate ``A`` as a weight matrix and return it as a float array.

    Raises ``ValueError`` for non-square, empty or non-finite input and for a
    nonzero diagonal (self-loops are not representable).
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ValueError(f"{name} must be a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite entries")
    if np.any(np.diag(A) != 0):
        raise ValueError(f"{name} has nonzero diagonal entries (self-loops)")
    return A


def support(A):
    """Boolean adjacency of the nonzero entries of ``A``."""
    return np.asarray(A) != 0


@dataclass(frozen=True)
class Stream:
    id: int
    source: int
    target: int
    weight: float

    def __post_init__(self):
        if self.source == self.target:
            raise ValueError(f"stream {self.id} is a self-loop on node {self.source}")
        if self.weight < 0:
            raise ValueError(f"stream {self.id} has negative weight {self.weight}")

    @property
    def position(self):
        return (self.source, self.target)


@dataclass(frozen=True)
class Cycle:
    """A simple directed cycle as an ordered tuple of stream ids.

    ``nodes`` holds the visited nodes, starting from the smallest one.
    """

    streams: tuple
    nodes: tuple

    def __len__(self):
        return len(self.streams)


@dataclass
class LoopMatrix:
    """Binary cycles x streams incidence matrix ``u``."""

    u: np.ndarray
    streams: list

    @property
    def rows(self):
        return self.u.shape[0]

    @property
    def cols(self):
        return self.u.shape[1]


def nonzero_streams(A, prior=None):
    """One stream per nonzero off-diagonal entry of ``A``, in row-major order.

    Stream weights are ``|A_ij|``.  When ``prior`` is given, entries it marks
    Forbidden are skipped.
    """
    A = check_weight_matrix(A)
    forbidden = None
    if prior is not None:
        forbidden = prior.forbidden_mask()
    streams = []
    rows, cols = np.nonzero(A)
    for i, j in zip(rows.tolist(), cols.tolist()):
        if forbidden is not None and forbidden[i, j]:
            continue
        streams.append(Stream(len(streams), i, j, float(abs(A[i, j]))))
    return streams


def streams_from_edges(edges, weights=None):
    """Build a stream list from ``(source, target)`` pairs (ids in given order)."""
    edges = list(edges)
    if weights is None:
        weights = [1.0] * len(edges)
    return [Stream(k, int(s), int(t), float(w)) for k, ((s, t), w) in enumerate(zip(edges, weights))]


def _adjacency(streams, d):
    succ = [[] for _ in range(d)]
    for s in streams:
        if not (0 <= s.source < d and 0 <= s.target < d):
            raise ValueError(f"stream {s.id} references a node outside 0..{d - 1}")
        succ[s.source].append(s.target)
    for nbrs in succ:
        nbrs.sort()
    return succ


def is_acyclic(streams, d):
    """True iff the digraph spanned by ``streams`` on ``d`` nodes has no directed cycle."""
    succ = _adjacency(streams, d)
    indeg = [0] * d
    for nbrs in succ:
        for v in nbrs:
            indeg[v] += 1
    # Kahn's algorithm: a topological order exists iff every node is removed
    stack = [v for v in range(d) if indeg[v] == 0]
    seen = 0
    while stack:
        u = stack.pop()
        seen += 1
        for v in succ[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                stack.append(v)
    return seen == d


def _distances_to(target, pred, allowed):
    """BFS hop counts from every allowed node to ``target`` along forward edges."""
    dist = {target: 0}
    frontier = [target]
    while frontier:
        nxt = []
        for v in frontier:
            for u in pred[v]:
                if u in allowed and u not in dist:
                    dist[u] = dist[v] + 1
                    nxt.append(u)
        frontier = nxt
    return dist


def enumerate_simple_cycles(streams, d, max_len=None, max_count=10000):
    """Enumerate simple directed cycles, smallest start node first.

    Each cycle is rooted at its smallest node and cycles sharing a root come
    out in lexicographic order of their node sequences.  Johnson's blocking
    scheme prunes fruitless branches when lengths are unbounded; with a length
    bound, a plain depth-first search pruned by hop distance to the root is
    used instead (blocking is unsound under a length bound).

    Returns ``(cycles, truncated)``; ``truncated`` is True when ``max_count``
    stopped the enumeration early.
    """
    if max_len is None:
        max_len = d
    if max_len < 2:
        raise ValueError("max_len must be at least 2")
    if max_count is not None and max_count < 1:
        raise ValueError("max_count must be at least 1")
    limit = float("inf") if max_count is None else max_count

    succ = _adjacency(streams, d)
    pred = [[] for _ in range(d)]
    for u in range(d):
        for v in succ[u]:
            pred[v].append(u)
    edge_id = {(s.source, s.target): s.id for s in streams}
    bounded = max_len < d

    found = []

    def emit(path):
        ids = tuple(edge_id[(path[k], path[(k + 1) % len(path)])] for k in range(len(path)))
        found.append(Cycle(ids, tuple(path)))
        return len(found) >= limit

    for root in range(d):
        allowed = set(range(root, d))
        dist = _distances_to(root, pred, allowed)
        if len(dist) < 2:
            continue
        # nodes that cannot get back to the root never lie on a cycle through it
        allowed = set(dist)
        if bounded:
            if _bounded_search(root, succ, allowed, dist, max_len, emit):
                return found, True
        else:
            if _johnson_search(root, succ, allowed, emit):
                return found, True
    return found, False


def _bounded_search(root, succ, allowed, dist, max_len, emit):
    path = [root]
    on_path = {root}

    def visit(v):
        for w in succ[v]:
            if w == root:
                if len(path) >= 2 and emit(path):
                    return True
            elif w in allowed and w not in on_path and len(path) + dist[w] <= max_len:
                path.append(w)
                on_path.add(w)
                if visit(w):
                    return True
                path.pop()
                on_path.discard(w)
        return False

    return visit(root)


def _johnson_search(root, succ, allowed, emit):
    blocked = set()
    block_map = {v: set() for v in allowed}
    path = [root]
    stop = False

    def unblock(u):
        stack = [u]
        while stack:
            x = stack.pop()
            if x in blocked:
                blocked.discard(x)
                stack.extend(block_map[x])
                block_map[x].clear()

    def circuit(v):
        nonlocal stop
        closed = False
        blocked.add(v)
        for w in succ[v]:
            if w not in allowed:
                continue
            if w == root:
                if len(path) >= 2:
                    if emit(path):
                        stop = True
                        return True
                    closed = True
            elif w not in blocked:
                path.append(w)
                if circuit(w):
                    closed = True
                path.pop()
                if stop:
                    return True
        if closed:
            unblock(v)
        else:
            for w in succ[v]:
                if w in allowed:
                    block_map[w].add(v)
        return closed

    circuit(root)
    return stop


def build_loop_matrix(cycles, streams):
    """Cycle/stream incidence matrix; column ``j`` corresponds to ``streams[j]``."""
    col = {s.id: k for k, s in enumerate(streams)}
    u = np.zeros((len(cycles), len(streams)), dtype=np.uint8)
    for i, cyc in enumerate(cycles):
        for sid in cyc.streams:
            if sid not in col:
                raise ValueError(f"cycle {i} references unknown stream id {sid}")
            u[i, col[sid]] = 1
    return LoopMatrix(u, list(streams))
