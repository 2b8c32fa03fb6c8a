"""Grid shortest-path instances and exact linear optimization over their paths.

Nodes of a ``rows x cols`` grid are numbered row-major, ``node = r * cols + c``,
with the start at the top-left and the end at the bottom-right.  Edges point
right or down only, so the row-major numbering is a topological order.  Edges
are indexed row-major by their tail node, with the right edge before the down
edge; this ordering is the tie-break rule used by every oracle in the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class InvalidInstanceError(ValueError):
    pass


@dataclass(frozen=True)
class GridInstance:
    rows: int
    cols: int
    edges: tuple[tuple[int, int], ...]
    start: int
    end: int

    @property
    def d(self) -> int:
        return len(self.edges)

    @property
    def n_nodes(self) -> int:
        return self.rows * self.cols

    @cached_property
    def out_edges(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        """Per node, the ``(edge_index, head)`` pairs in increasing edge index."""
        out: list[list[tuple[int, int]]] = [[] for _ in range(self.n_nodes)]
        for e, (u, v) in enumerate(self.edges):
            out[u].append((e, v))
        return tuple(tuple(sorted(o)) for o in out)

    def is_flow(self, z: np.ndarray) -> bool:
        """True when ``z`` is a 0/1 unit s-t flow on this grid."""
        z = np.asarray(z, dtype=float)
        if z.shape != (self.d,) or not np.all((z == 0) | (z == 1)):
            return False
        balance = np.zeros(self.n_nodes)
        for e, (u, v) in enumerate(self.edges):
            balance[u] += z[e]
            balance[v] -= z[e]
        expected = np.zeros(self.n_nodes)
        expected[self.start] = 1.0
        expected[self.end] = -1.0
        return bool(np.array_equal(balance, expected))


def build_grid(rows: int, cols: int) -> GridInstance:
    if int(rows) != rows or int(cols) != cols or rows < 2 or cols < 2:
        raise InvalidInstanceError(f"grid needs at least 2 nodes per side, got {rows}x{cols}")
    rows, cols = int(rows), int(cols)
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c < cols - 1:
                edges.append((v, v + 1))
            if r < rows - 1:
                edges.append((v, v + cols))
    return GridInstance(rows=rows, cols=cols, edges=tuple(edges), start=0, end=rows * cols - 1)


@dataclass(frozen=True)
class PathMatrix:
    """All feasible s-t paths as rows of a 0/1 edge-incidence matrix."""

    incidence: np.ndarray = field(repr=False)

    def __post_init__(self):
        inc = np.array(self.incidence, dtype=float)
        inc.setflags(write=False)
        object.__setattr__(self, "incidence", inc)

    @property
    def m(self) -> int:
        return self.incidence.shape[0]

    @property
    def d(self) -> int:
        return self.incidence.shape[1]

    @property
    def max_norm(self) -> float:
        """Largest Euclidean norm of a feasible path."""
        return float(np.sqrt(self.incidence.sum(axis=1).max()))

    def index_of(self, z: np.ndarray) -> int:
        hits = np.flatnonzero(np.all(self.incidence == np.asarray(z, dtype=float), axis=1))
        if hits.size == 0:
            raise KeyError("vector is not a feasible path")
        return int(hits[0])


def enumerate_paths(instance: GridInstance) -> PathMatrix:
    """Depth-first enumeration of every s-t path, right edge explored first."""
    rows: list[np.ndarray] = []
    used: list[int] = []

    def visit(v: int) -> None:
        if v == instance.end:
            z = np.zeros(instance.d)
            z[used] = 1.0
            rows.append(z)
            return
        for e, head in instance.out_edges[v]:
            used.append(e)
            visit(head)
            used.pop()

    visit(instance.start)
    return PathMatrix(np.vstack(rows))


def linear_oracle(instance: GridInstance, cost: np.ndarray) -> np.ndarray:
    """Incidence vector of a minimum-cost s-t path.

    Backward dynamic programming over the topological order.  On exact ties
    at a node the outgoing edge with the smaller index wins, which makes the
    winner the lexicographically smallest optimal path (equivalently the
    first optimal row of :func:`enumerate_paths`).  Negative costs are fine.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.shape != (instance.d,):
        raise ValueError(f"cost must have shape ({instance.d},), got {cost.shape}")
    if np.isnan(cost).any():
        raise ValueError("cost contains NaN")
    togo = [0.0] * instance.n_nodes
    choice = [-1] * instance.n_nodes
    for v in range(instance.n_nodes - 1, -1, -1):
        if v == instance.end:
            continue
        best = None
        for e, head in instance.out_edges[v]:
            val = cost[e] + togo[head]
            if best is None or val < best:
                best = val
                choice[v] = e
        togo[v] = best if best is not None else np.inf
    z = np.zeros(instance.d)
    v = instance.start
    while v != instance.end:
        e = choice[v]
        z[e] = 1.0
        v = instance.edges[e][1]
    return z


def span_rank(paths: PathMatrix | np.ndarray, rel_tol: float = 1e-10) -> int:
    """Numerical rank by Gaussian elimination with partial pivoting."""
    a = np.array(paths.incidence if isinstance(paths, PathMatrix) else paths, dtype=float)
    if a.ndim != 2 or a.size == 0:
        raise ValueError("need a nonempty matrix")
    tol = rel_tol * max(np.abs(a).max(), 1.0)
    n_rows, n_cols = a.shape
    rank = 0
    for col in range(n_cols):
        if rank == n_rows:
            break
        pivot = rank + int(np.argmax(np.abs(a[rank:, col])))
        if abs(a[pivot, col]) <= tol:
            continue
        a[[rank, pivot]] = a[[pivot, rank]]
        a[rank + 1 :] -= np.outer(a[rank + 1 :, col] / a[rank, col], a[rank])
        rank += 1
    return rank


class VertexOracle:
    """Batched argmin over an explicit list of vertices.

    Used on hot paths (SGD, policy evaluation).  With the rows of
    :func:`enumerate_paths` it returns the same winner as
    :func:`linear_oracle`, because ``np.argmin`` keeps the first minimizer;
    with the identity matrix it is the coordinate argmin over the simplex.
    """

    def __init__(self, vertices: np.ndarray):
        self.vertices = np.asarray(vertices, dtype=float)

    @classmethod
    def for_paths(cls, paths: PathMatrix) -> "VertexOracle":
        return cls(paths.incidence)

    @classmethod
    def simplex(cls, m: int) -> "VertexOracle":
        return cls(np.eye(m))

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    def argmin(self, costs: np.ndarray) -> np.ndarray:
        costs = np.asarray(costs, dtype=float)
        return np.argmin(costs @ self.vertices.T, axis=-1)

    def solve(self, costs: np.ndarray) -> np.ndarray:
        return self.vertices[self.argmin(costs)]
