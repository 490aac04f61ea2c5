"""Lattice LFPP: shortest paths on the grid weighted by ``exp(xi * h_eps)``.

Edge ``(u, v)`` carries the trapezoid weight
``len(u, v) * (exp(xi h(u)) + exp(xi h(v))) / 2`` with ``len`` the Euclidean
edge length, so adding a constant ``c`` to the field multiplies every edge,
and hence every distance, by ``exp(xi c)``.

Distances are reported unrescaled. :attr:`MetricOracle.normalization` gives the
first-order LFPP scale ``eps**(xi Q - 1)`` for callers that compare metrics
mollified at different ``eps``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components, dijkstra

from .gff import Field, LqgParams
from .lattice import Annulus, GeometryError, GridSpec, VertexSet, vertices_in_annulus

AXIS4 = "axis4"
KING8 = "king8"

_OFFSETS = {
    AXIS4: [(1, 0), (0, 1)],
    KING8: [(1, 0), (0, 1), (1, 1), (1, -1)],
}


class MetricError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LatticePath:
    """Ordered flat vertex ids; a closed circuit repeats its first vertex at the end."""

    grid: GridSpec
    vertices: np.ndarray
    weighted_length: float

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.int64).copy()
        v.flags.writeable = False
        object.__setattr__(self, "vertices", v)

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def positions(self) -> np.ndarray:
        return self.grid.position(self.vertices)

    @property
    def is_closed(self) -> bool:
        return len(self.vertices) > 1 and self.vertices[0] == self.vertices[-1]


@dataclass(frozen=True, eq=False)
class DistanceResult:
    value: float
    geodesic: LatticePath | None = None

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)


def _neighbour_pairs(grid: GridSpec, scheme: str):
    """Yield ``(a, b, length)`` arrays of forward edges of the full grid."""
    idx = np.arange(grid.size).reshape(grid.shape)
    for di, dj in _OFFSETS[scheme]:
        i0, i1 = max(0, -di), grid.nx - max(0, di)
        j0, j1 = max(0, -dj), grid.ny - max(0, dj)
        a = idx[i0:i1, j0:j1].ravel()
        b = idx[i0 + di:i1 + di, j0 + dj:j1 + dj].ravel()
        yield a, b, grid.spacing * math.hypot(di, dj)


class MetricOracle:
    """Immutable ``(field, xi, mask)`` bundle answering LFPP distance queries.

    Parameters
    ----------
    field
        The mollified field (plays the role of ``h_eps``).
    params
        Supplies ``xi``.
    mask
        Vertices the metric lives on. Defaults to the field's valid window.
    neighbor_scheme
        ``"king8"`` (default, diagonal length ``sqrt(2) * spacing``) or ``"axis4"``.
    epsilon
        Mollification scale, only used for :attr:`normalization`.
    """

    def __init__(self, field: Field, params: LqgParams, mask: VertexSet | None = None,
                 neighbor_scheme: str = KING8, epsilon: float | None = None):
        if neighbor_scheme not in _OFFSETS:
            raise MetricError(f"unknown neighbor scheme {neighbor_scheme!r}")
        if mask is None:
            mask = VertexSet.from_window(field.grid, field.valid_window)
        elif mask.grid != field.grid:
            raise GeometryError("mask and field live on different grids")
        self.field = field
        self.params = params
        self.mask = mask
        self.neighbor_scheme = neighbor_scheme
        self.epsilon = epsilon
        self._vertex_weight = np.exp(params.xi * field.values.ravel())
        if not np.all(np.isfinite(self._vertex_weight)) or np.any(self._vertex_weight <= 0):
            raise MetricError("field produces non-positive or non-finite edge weights")

    @property
    def grid(self) -> GridSpec:
        return self.field.grid

    @property
    def normalization(self) -> float:
        """``eps**(xi Q - 1)``; multiplies raw distances onto a common scale across ``eps``."""
        if self.epsilon is None:
            return 1.0
        return self.epsilon ** (self.params.xi * self.params.q - 1.0)

    def is_adjacent(self, u: int, v: int) -> bool:
        (iu, ju), (iv, jv) = self.grid.ij(u), self.grid.ij(v)
        di, dj = abs(int(iu) - int(iv)), abs(int(ju) - int(jv))
        if self.neighbor_scheme == AXIS4:
            return di + dj == 1
        return max(di, dj) == 1

    def edge_weight(self, u: int, v: int) -> float:
        if not self.is_adjacent(u, v):
            raise MetricError(f"vertices {u} and {v} are not adjacent under {self.neighbor_scheme}")
        m = self.mask.membership.ravel()
        if not (m[u] and m[v]):
            raise MetricError("edge endpoint outside the mask")
        length = abs(self.grid.position(u) - self.grid.position(v))
        return float(length * (self._vertex_weight[u] + self._vertex_weight[v]) / 2.0)

    @cached_property
    def graph(self) -> sparse.csr_matrix:
        """Symmetric CSR adjacency restricted to the mask."""
        m = self.mask.membership.ravel()
        ew = self._vertex_weight
        rows, cols, data = [], [], []
        for a, b, length in _neighbour_pairs(self.grid, self.neighbor_scheme):
            keep = m[a] & m[b]
            a, b = a[keep], b[keep]
            w = length * (ew[a] + ew[b]) / 2.0
            rows += [a, b]
            cols += [b, a]
            data += [w, w]
        n = self.grid.size
        if not rows:
            return sparse.csr_matrix((n, n))
        return sparse.csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        )

    def restrict(self, sub: VertexSet) -> "MetricOracle":
        """Oracle for the internal metric on ``sub`` (intersected with the mask)."""
        return MetricOracle(self.field, self.params, self.mask & sub, self.neighbor_scheme, self.epsilon)

    def _indices(self, s) -> np.ndarray:
        if isinstance(s, VertexSet):
            if s.grid != self.grid:
                raise GeometryError("vertex set lives on a different grid")
            idx = s.indices
        else:
            idx = np.atleast_1d(np.asarray(s))
            if np.iscomplexobj(idx):
                idx = np.atleast_1d(self.grid.nearest(idx))
            idx = np.unique(idx.astype(np.int64))
        if idx.size == 0:
            raise MetricError("empty source or target set")
        m = self.mask.membership.ravel()
        if not np.all(m[idx]):
            raise MetricError("source/target vertices must lie in the mask")
        return idx

    def distances_from(self, sources, return_predecessors: bool = False):
        """Distance from the set ``sources`` to every vertex (``inf`` off the mask)."""
        idx = self._indices(sources)
        out = dijkstra(self.graph, directed=True, indices=idx, min_only=True,
                       return_predecessors=return_predecessors)
        if return_predecessors:
            dist, pred, _ = out
            return dist, pred
        return out

    def distance(self, from_, to, geodesic: bool = True) -> DistanceResult:
        """Multi-source shortest-path distance between two vertex sets."""
        src = self._indices(from_)
        dst = self._indices(to)
        if geodesic:
            dist, pred = self.distances_from(src, return_predecessors=True)
        else:
            dist = self.distances_from(src)
        k = int(dst[np.argmin(dist[dst])])
        value = float(dist[k])
        if not math.isfinite(value) or not geodesic:
            return DistanceResult(value, None)
        return DistanceResult(value, LatticePath(self.grid, _walk_back(pred, k), value))

    def internal_distance(self, sub: VertexSet, from_, to, geodesic: bool = True) -> DistanceResult:
        sub_idx = sub.membership.ravel()
        for s in (from_, to):
            idx = s.indices if isinstance(s, VertexSet) else self._indices(s)
            if not np.all(sub_idx[idx]):
                raise MetricError("endpoints must lie in the sub-domain")
        return self.restrict(sub).distance(from_, to, geodesic=geodesic)

    def path_length(self, path) -> float:
        """Recompute the weighted length of a vertex sequence edge by edge."""
        verts = path.vertices if isinstance(path, LatticePath) else np.asarray(path)
        return float(sum(self.edge_weight(int(a), int(b)) for a, b in zip(verts[:-1], verts[1:])))

    def all_pairs(self, vertices=None) -> np.ndarray:
        idx = np.arange(self.grid.size) if vertices is None else np.asarray(vertices)
        return dijkstra(self.graph, directed=True, indices=idx)


def _walk_back(pred: np.ndarray, k: int) -> np.ndarray:
    path = [k]
    while pred[path[-1]] >= 0:
        path.append(int(pred[path[-1]]))
    return np.array(path[::-1], dtype=np.int64)


def edge_weight(oracle: MetricOracle, u: int, v: int) -> float:
    return oracle.edge_weight(u, v)


def distance(oracle: MetricOracle, from_, to, geodesic: bool = True) -> DistanceResult:
    return oracle.distance(from_, to, geodesic=geodesic)


def internal_distance(oracle: MetricOracle, sub: VertexSet, from_, to, geodesic: bool = True) -> DistanceResult:
    return oracle.internal_distance(sub, from_, to, geodesic=geodesic)


def weyl_scale(oracle: MetricOracle, f) -> MetricOracle:
    """Oracle for the field ``h + f`` (``f`` a :class:`Field` on the same grid or a constant)."""
    if isinstance(f, Field) and f.grid != oracle.grid:
        raise GeometryError("Weyl factor lives on a different grid")
    return MetricOracle(oracle.field + f, oracle.params, oracle.mask, oracle.neighbor_scheme, oracle.epsilon)


# ---------------------------------------------------------------------------
# annulus geometry


def _crosses_ray(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Does segment p->q cross the ray {t > 0} (positive real axis)? Upper side is ``Im >= 0``."""
    up_p, up_q = p.imag >= 0, q.imag >= 0
    straddle = up_p != up_q
    with np.errstate(divide="ignore", invalid="ignore"):
        x = p.real + (0.0 - p.imag) * (q.real - p.real) / (q.imag - p.imag)
    return straddle & (x > 0)


def disconnecting_circuit(oracle: MetricOracle, a: Annulus) -> LatticePath:
    """Minimum-weight closed lattice path inside the annulus that separates its two boundaries.

    The annulus is cut along the ray from its centre in the +x direction.
    Cut-crossing edges switch between two copies of the ring. A cycle that
    winds around the hole once is then a path from a vertex to its own copy.
    """
    ring = vertices_in_annulus(oracle.grid, a) & oracle.mask
    idx = ring.indices
    if idx.size == 0:
        raise MetricError("annulus ring contains no vertices")
    sub = oracle.graph[idx][:, idx].tocoo()
    ncomp, _ = connected_components(sub, directed=False)
    if ncomp != 1:
        raise MetricError("annulus ring is disconnected (mesh too coarse or masked gap)")
    n = idx.size
    pos = oracle.grid.position(idx) - a.center
    cross = _crosses_ray(pos[sub.row], pos[sub.col])
    cols = np.where(cross, sub.col + n, sub.col)
    rows = np.concatenate([sub.row, sub.row + n])
    cols = np.concatenate([cols, (cols + n) % (2 * n)])
    cover = sparse.csr_matrix((np.concatenate([sub.data, sub.data]), (rows, cols)), shape=(2 * n, 2 * n))
    cut = np.unique(sub.row[cross])
    if cut.size == 0:
        raise MetricError("annulus ring does not encircle the hole")
    dist, pred = dijkstra(cover, directed=True, indices=cut, return_predecessors=True)
    loop = dist[np.arange(cut.size), cut + n]
    best = int(np.argmin(loop))
    if not math.isfinite(loop[best]):
        raise MetricError("no cycle winds around the annulus (ring disconnected)")
    local = _walk_back(pred[best], int(cut[best] + n)) % n
    return LatticePath(oracle.grid, idx[local], float(loop[best]))


def geodesic_crossing_times(path: LatticePath, a: Annulus) -> list[tuple[int, int]]:
    """Maximal index intervals ``(entry, exit)`` during which the path is in the closed annulus."""
    inside = np.asarray(a.contains(path.positions, closed=True), dtype=bool)
    out = []
    start = None
    for k, flag in enumerate(inside):
        if flag and start is None:
            start = k
        elif not flag and start is not None:
            out.append((start, k - 1))
            start = None
    if start is not None:
        out.append((start, len(inside) - 1))
    return out


# ---------------------------------------------------------------------------
# export


def export_geodesic_csv(path, geodesic: LatticePath) -> None:
    i, j = geodesic.grid.ij(geodesic.vertices)
    pos = geodesic.positions
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "vertex", "i", "j", "x", "y"])
        for k, (v, a, b, p) in enumerate(zip(geodesic.vertices, i, j, pos)):
            w.writerow([k, int(v), int(a), int(b), repr(float(p.real)), repr(float(p.imag))])


def export_distance_matrix_csv(path, oracle: MetricOracle, vertices) -> np.ndarray:
    vertices = np.asarray(vertices, dtype=np.int64)
    d = oracle.all_pairs(vertices)[:, vertices]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["vertex"] + [int(v) for v in vertices])
        for v, row in zip(vertices, d):
            w.writerow([int(v)] + [repr(float(x)) for x in row])
    return d
