"""Square-lattice geometry: grid windows, vertex sets, discrete circles and annuli.

Points in the plane are plain Python/numpy ``complex`` numbers. Every
geometric quantity is expressed in continuum (plane) units; array indices only
appear inside :class:`GridSpec` and :class:`VertexSet`.

Arrays attached to a grid use ``indexing='ij'``: ``values[i, j]`` lives at
``origin + (i * spacing) + 1j * (j * spacing)`` and the flat vertex id is
``i * ny + j``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ComplexPoint = complex

_SQRT2 = math.sqrt(2.0)
# relative slack for comparisons of lattice positions computed in floating point
_GEOM_TOL = 1e-9


class GeometryError(ValueError):
    """A geometric precondition (window containment, mesh resolution) failed."""


@dataclass(frozen=True)
class GridSpec:
    origin: complex
    spacing: float
    nx: int
    ny: int

    def __post_init__(self):
        object.__setattr__(self, "origin", complex(self.origin))
        if not (self.spacing > 0 and math.isfinite(self.spacing)):
            raise GeometryError(f"spacing must be positive and finite, got {self.spacing}")
        if not (math.isfinite(self.origin.real) and math.isfinite(self.origin.imag)):
            raise GeometryError("origin must be finite")
        if self.nx < 2 or self.ny < 2:
            raise GeometryError(f"need nx, ny >= 2, got {self.nx}x{self.ny}")

    @classmethod
    def centered(cls, center: complex, half_width: float, spacing: float) -> "GridSpec":
        """Square window of vertices within ``half_width`` of ``center`` along each axis."""
        k = int(math.floor(half_width / spacing + _GEOM_TOL))
        n = 2 * k + 1
        return cls(complex(center) - k * spacing * (1 + 1j), spacing, n, n)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def width(self) -> float:
        return (self.nx - 1) * self.spacing

    @property
    def height(self) -> float:
        return (self.ny - 1) * self.spacing

    @property
    def x0(self) -> float:
        return self.origin.real

    @property
    def y0(self) -> float:
        return self.origin.imag

    @property
    def x1(self) -> float:
        return self.origin.real + self.width

    @property
    def y1(self) -> float:
        return self.origin.imag + self.height

    @property
    def center(self) -> complex:
        return self.origin + 0.5 * (self.width + 1j * self.height)

    def vertex(self, i: int, j: int) -> complex:
        return self.origin + self.spacing * (i + 1j * j)

    def points(self) -> np.ndarray:
        """Complex positions of all vertices, shape ``(nx, ny)``."""
        i = np.arange(self.nx)[:, None]
        j = np.arange(self.ny)[None, :]
        return self.origin + self.spacing * (i + 1j * j)

    def flat_points(self) -> np.ndarray:
        return self.points().ravel()

    def ij(self, flat) -> tuple[np.ndarray, np.ndarray]:
        return np.divmod(np.asarray(flat), self.ny)

    def flat(self, i, j):
        return np.asarray(i) * self.ny + np.asarray(j)

    def position(self, flat) -> np.ndarray:
        i, j = self.ij(flat)
        return self.origin + self.spacing * (i + 1j * j)

    def fractional_index(self, p) -> tuple[np.ndarray, np.ndarray]:
        """Continuous index coordinates of point(s) ``p``."""
        p = np.asarray(p, dtype=complex)
        return ((p.real - self.x0) / self.spacing, (p.imag - self.y0) / self.spacing)

    def contains(self, p, margin: float = 0.0) -> np.ndarray | bool:
        p = np.asarray(p, dtype=complex)
        tol = _GEOM_TOL * self.spacing
        inside = (
            (p.real >= self.x0 + margin - tol)
            & (p.real <= self.x1 - margin + tol)
            & (p.imag >= self.y0 + margin - tol)
            & (p.imag <= self.y1 - margin + tol)
        )
        return bool(inside) if inside.ndim == 0 else inside

    def nearest(self, p) -> np.ndarray | int:
        """Flat id of the vertex nearest to ``p``; raises if ``p`` lies outside the window."""
        p = np.asarray(p, dtype=complex)
        if not np.all(self.contains(p)):
            raise GeometryError("point outside grid window")
        fi, fj = self.fractional_index(p)
        i = np.clip(np.rint(fi).astype(int), 0, self.nx - 1)
        j = np.clip(np.rint(fj).astype(int), 0, self.ny - 1)
        out = self.flat(i, j)
        return int(out) if out.ndim == 0 else out

    def snap(self, p) -> tuple[int, float]:
        """Nearest vertex id and the snapping distance."""
        k = self.nearest(p)
        return k, float(abs(self.position(k) - complex(p)))

    def subgrid(self, i0: int, j0: int, nx: int, ny: int) -> "GridSpec":
        if i0 < 0 or j0 < 0 or i0 + nx > self.nx or j0 + ny > self.ny:
            raise GeometryError("subgrid exceeds parent window")
        return GridSpec(self.vertex(i0, j0), self.spacing, nx, ny)

    def offset_in(self, parent: "GridSpec") -> tuple[int, int]:
        """Index offset of this grid's origin inside ``parent`` (same lattice required)."""
        if not math.isclose(self.spacing, parent.spacing, rel_tol=1e-12):
            raise GeometryError("grids have different spacing")
        fi, fj = parent.fractional_index(self.origin)
        i0, j0 = int(round(float(fi))), int(round(float(fj)))
        if abs(fi - i0) > 1e-6 or abs(fj - j0) > 1e-6:
            raise GeometryError("grids are not aligned on a common lattice")
        if i0 < 0 or j0 < 0 or i0 + self.nx > parent.nx or j0 + self.ny > parent.ny:
            raise GeometryError("grid is not contained in parent window")
        return i0, j0

    def translated(self, shift: complex) -> "GridSpec":
        return GridSpec(self.origin + shift, self.spacing, self.nx, self.ny)

    def scaled(self, factor: float, about: complex = 0j) -> "GridSpec":
        """Image of the lattice under ``p -> about + factor * (p - about)``."""
        return GridSpec(about + factor * (self.origin - about), self.spacing * factor, self.nx, self.ny)

    def to_dict(self) -> dict:
        return {
            "origin": [self.origin.real, self.origin.imag],
            "spacing": self.spacing,
            "nx": self.nx,
            "ny": self.ny,
        }


@dataclass(frozen=True)
class Annulus:
    """Open annulus ``{p : inner_radius < |p - center| < outer_radius}``."""

    center: complex
    inner_radius: float
    outer_radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", complex(self.center))
        if not (0 < self.inner_radius < self.outer_radius):
            raise GeometryError(
                f"annulus needs 0 < inner < outer, got {self.inner_radius}, {self.outer_radius}"
            )

    def contains(self, p, closed: bool = False, slack: float = 0.0):
        d = np.abs(np.asarray(p, dtype=complex) - self.center)
        if closed:
            return (d >= self.inner_radius - slack) & (d <= self.outer_radius + slack)
        return (d > self.inner_radius) & (d < self.outer_radius)


@dataclass(frozen=True, eq=False)
class VertexSet:
    grid: GridSpec
    membership: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.membership, dtype=bool).reshape(self.grid.shape)
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "membership", m)

    @classmethod
    def empty(cls, grid: GridSpec) -> "VertexSet":
        return cls(grid, np.zeros(grid.shape, dtype=bool))

    @classmethod
    def full(cls, grid: GridSpec) -> "VertexSet":
        return cls(grid, np.ones(grid.shape, dtype=bool))

    @classmethod
    def where(cls, grid: GridSpec, predicate) -> "VertexSet":
        """Vertices whose complex position satisfies the vectorised ``predicate``."""
        return cls(grid, predicate(grid.points()))

    @classmethod
    def from_indices(cls, grid: GridSpec, flat) -> "VertexSet":
        m = np.zeros(grid.size, dtype=bool)
        m[np.asarray(flat, dtype=int)] = True
        return cls(grid, m)

    @classmethod
    def from_window(cls, grid: GridSpec, window: GridSpec) -> "VertexSet":
        i0, j0 = window.offset_in(grid)
        m = np.zeros(grid.shape, dtype=bool)
        m[i0:i0 + window.nx, j0:j0 + window.ny] = True
        return cls(grid, m)

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.membership.ravel())

    @property
    def points(self) -> np.ndarray:
        return self.grid.position(self.indices)

    def __len__(self) -> int:
        return int(self.membership.sum())

    def __bool__(self) -> bool:
        return bool(self.membership.any())

    def __contains__(self, flat) -> bool:
        return bool(self.membership.ravel()[int(flat)])

    def _check(self, other: "VertexSet"):
        if other.grid != self.grid:
            raise GeometryError("vertex sets live on different grids")

    def __and__(self, other: "VertexSet") -> "VertexSet":
        self._check(other)
        return VertexSet(self.grid, self.membership & other.membership)

    def __or__(self, other: "VertexSet") -> "VertexSet":
        self._check(other)
        return VertexSet(self.grid, self.membership | other.membership)

    def __sub__(self, other: "VertexSet") -> "VertexSet":
        self._check(other)
        return VertexSet(self.grid, self.membership & ~other.membership)

    def __invert__(self) -> "VertexSet":
        return VertexSet(self.grid, ~self.membership)

    def __eq__(self, other) -> bool:
        if not isinstance(other, VertexSet):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.membership, other.membership)

    def issubset(self, other: "VertexSet") -> bool:
        self._check(other)
        return not np.any(self.membership & ~other.membership)


def _distances(grid: GridSpec, center: complex) -> np.ndarray:
    return np.abs(grid.points() - complex(center))


def vertices_on_circle(grid: GridSpec, center: complex, radius: float) -> VertexSet:
    """Discrete circle: vertices within ``spacing / sqrt(2)`` of the circle ``|p - center| = radius``.

    The tolerance makes the ring connected in the 8-neighbour graph.
    """
    s = grid.spacing
    if radius < 2 * s * (1 - _GEOM_TOL):
        raise GeometryError(f"radius {radius} below two mesh spacings ({2 * s})")
    c = complex(center)
    tol = _GEOM_TOL * s
    if (c.real - radius < grid.x0 - tol or c.real + radius > grid.x1 + tol
            or c.imag - radius < grid.y0 - tol or c.imag + radius > grid.y1 + tol):
        raise GeometryError("circle leaves the grid window")
    d = _distances(grid, c)
    return VertexSet(grid, np.abs(d - radius) <= s / _SQRT2 * (1 + _GEOM_TOL))


def vertices_in_annulus(grid: GridSpec, a: Annulus) -> VertexSet:
    """All vertices strictly inside the open annulus (possibly empty)."""
    d = _distances(grid, a.center)
    return VertexSet(grid, (d > a.inner_radius) & (d < a.outer_radius))


def vertices_in_ball(grid: GridSpec, center: complex, radius: float, closed: bool = True) -> VertexSet:
    d = _distances(grid, center)
    return VertexSet(grid, d <= radius if closed else d < radius)


def vertices_outside_ball(grid: GridSpec, center: complex, radius: float, closed: bool = True) -> VertexSet:
    d = _distances(grid, center)
    return VertexSet(grid, d >= radius if closed else d > radius)


def shrink_window(grid: GridSpec, margin: float) -> GridSpec:
    """Central sub-window of vertices at distance >= ``margin`` from the window boundary."""
    if margin < 0:
        raise GeometryError("margin must be non-negative")
    k = int(math.ceil(margin / grid.spacing - _GEOM_TOL))
    nx, ny = grid.nx - 2 * k, grid.ny - 2 * k
    if nx < 2 or ny < 2:
        raise GeometryError(f"margin {margin} leaves an empty window")
    return grid.subgrid(k, k, nx, ny)
