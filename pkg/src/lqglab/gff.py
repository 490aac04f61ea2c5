"""Discrete Gaussian free fields and the field observables built on them.

Covariance convention: every sampler produces fields whose covariance is
``2*pi`` times the inverse of the (unscaled, 5-point) graph Laplacian. This is
the lattice version of the Dirichlet inner product ``(1/2pi) int |grad g|^2``,
under which circle averages satisfy ``Var h_r(z) ~ log(1/r)``.
"""
from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import fft, integrate, signal, sparse

from .lattice import GeometryError, GridSpec, shrink_window

TWO_PI = 2.0 * math.pi
SQRT_8_3 = math.sqrt(8.0 / 3.0)


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator; streams for distinct seeds are independent and platform-stable."""
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class LqgParams:
    """gamma and d_gamma plus the derived exponents xi = gamma/d_gamma and Q = 2/gamma + gamma/2."""

    gamma: float
    d_gamma: float | None = None

    def __post_init__(self):
        if not 0 < self.gamma < 2:
            raise ValueError(f"gamma must lie in (0, 2), got {self.gamma}")
        if self.d_gamma is None:
            # the only value known in closed form
            if math.isclose(self.gamma, SQRT_8_3, rel_tol=1e-9):
                object.__setattr__(self, "d_gamma", 4.0)
            else:
                raise ValueError("d_gamma is only known for gamma = sqrt(8/3); pass it explicitly")
        if not self.d_gamma > 2:
            raise ValueError(f"d_gamma must exceed 2, got {self.d_gamma}")

    @classmethod
    def pure_gravity(cls) -> "LqgParams":
        return cls(SQRT_8_3, 4.0)

    @property
    def xi(self) -> float:
        return self.gamma / self.d_gamma

    @property
    def q(self) -> float:
        return 2.0 / self.gamma + self.gamma / 2.0

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "d_gamma": self.d_gamma}


@dataclass(frozen=True, eq=False)
class Field:
    """Real values on the vertices of ``grid``.

    ``valid`` optionally records the sub-window on which the values are
    trustworthy (e.g. after a truncated convolution).
    """

    grid: GridSpec
    values: np.ndarray = field(repr=False)
    valid: GridSpec | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, grid: GridSpec, c: float = 0.0) -> "Field":
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "Field":
        """Evaluate ``fn`` (vectorised over complex positions) at every vertex."""
        return cls(grid, np.broadcast_to(fn(grid.points()), grid.shape))

    @property
    def valid_window(self) -> GridSpec:
        return self.valid if self.valid is not None else self.grid

    def _coerce(self, other):
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise GeometryError("fields live on different grids")
            return other.values
        return float(other)

    def __add__(self, other) -> "Field":
        return Field(self.grid, self.values + self._coerce(other), self.valid)

    __radd__ = __add__

    def __sub__(self, other) -> "Field":
        return Field(self.grid, self.values - self._coerce(other), self.valid)

    def __mul__(self, other) -> "Field":
        return Field(self.grid, self.values * self._coerce(other), self.valid)

    __rmul__ = __mul__

    def restrict(self, window: GridSpec) -> "Field":
        i0, j0 = window.offset_in(self.grid)
        return Field(window, self.values[i0:i0 + window.nx, j0:j0 + window.ny])

    def at(self, flat) -> np.ndarray:
        return self.values.ravel()[np.asarray(flat)]

    def interpolate(self, p, order: int = 1) -> np.ndarray:
        """Spline interpolation (``order=1`` bilinear, ``order=3`` bicubic) at points ``p``."""
        from scipy.ndimage import map_coordinates

        p = np.asarray(p, dtype=complex)
        fi, fj = self.grid.fractional_index(p)
        out = map_coordinates(self.values, [fi.ravel(), fj.ravel()], order=order, mode="nearest")
        return out.reshape(p.shape)


class SamplerTag(str, enum.Enum):
    ZERO_BOUNDARY = "zero_boundary_spectral"
    BIGBOX = "whole_plane_bigbox"
    TORUS = "whole_plane_torus"


class Normalization(str, enum.Enum):
    CIRCLE = "circle_average_at_origin"
    SMOOTHED = "smoothed_average_at_origin"
    MEAN_ZERO = "mean_zero"


@dataclass(frozen=True)
class SamplerKind:
    tag: SamplerTag = SamplerTag.BIGBOX
    expansion_factor: float = 4.0
    normalization: Normalization = Normalization.SMOOTHED
    normalization_center: complex = 0j
    normalization_radius: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "tag", SamplerTag(self.tag))
        object.__setattr__(self, "normalization", Normalization(self.normalization))
        object.__setattr__(self, "normalization_center", complex(self.normalization_center))
        if self.tag is not SamplerTag.ZERO_BOUNDARY and self.expansion_factor < 2:
            raise ValueError("expansion_factor must be >= 2 for whole-plane proxies")
        if self.normalization_radius <= 0:
            raise ValueError("normalization_radius must be positive")

    def to_dict(self) -> dict:
        c = self.normalization_center
        return {
            "tag": self.tag.value,
            "expansion_factor": self.expansion_factor,
            "normalization": self.normalization.value,
            "normalization_center": [c.real, c.imag],
            "normalization_radius": self.normalization_radius,
        }


# ---------------------------------------------------------------------------
# samplers


def _dirichlet_eigenvalues(mx: int, my: int) -> np.ndarray:
    kx = np.arange(1, mx + 1)[:, None]
    ky = np.arange(1, my + 1)[None, :]
    return 4.0 - 2.0 * np.cos(np.pi * kx / (mx + 1)) - 2.0 * np.cos(np.pi * ky / (my + 1))


def _zero_boundary_values(nx: int, ny: int, rng: np.random.Generator) -> np.ndarray:
    mx, my = nx - 2, ny - 2
    lam = _dirichlet_eigenvalues(mx, my)
    coeff = rng.standard_normal((mx, my)) * np.sqrt(TWO_PI / lam)
    out = np.zeros((nx, ny))
    # DST-I with orthonormal scaling is the (symmetric, involutive) Dirichlet eigenbasis
    out[1:-1, 1:-1] = fft.dstn(coeff, type=1, norm="ortho")
    return out


def sample_zero_boundary(grid: GridSpec, seed: int) -> Field:
    """Zero-boundary discrete GFF: boundary vertices are 0, covariance ``2*pi*L^{-1}`` inside."""
    if grid.nx < 3 or grid.ny < 3:
        raise GeometryError("zero-boundary sampling needs at least one interior vertex")
    return Field(grid, _zero_boundary_values(grid.nx, grid.ny, make_rng(seed)))


def _torus_values(n0: int, n1: int, rng: np.random.Generator) -> np.ndarray:
    k0 = np.arange(n0)[:, None]
    k1 = np.arange(n1)[None, :]
    lam = 4.0 - 2.0 * np.cos(TWO_PI * k0 / n0) - 2.0 * np.cos(TWO_PI * k1 / n1)
    scale = np.zeros_like(lam)
    scale[lam > 0] = np.sqrt(TWO_PI / lam[lam > 0])
    z = rng.standard_normal((n0, n1)) + 1j * rng.standard_normal((n0, n1))
    return fft.ifft2(scale * z, norm="ortho").real


def _enlarged_size(n: int, factor: float) -> int:
    big = int(math.ceil(factor * (n - 1))) + 1
    # keep the window centred on the enlarged lattice
    if (big - n) % 2:
        big += 1
    return big


def sample_whole_plane_proxy(window: GridSpec, kind: SamplerKind, seed: int) -> Field:
    """Whole-plane GFF proxy on ``window``, normalized per ``kind.normalization``.

    ``whole_plane_bigbox`` samples a zero-boundary field on a box
    ``expansion_factor`` times larger and keeps the centre; ``whole_plane_torus``
    samples a periodic field on an enlarged torus.
    """
    if kind.tag is SamplerTag.ZERO_BOUNDARY:
        raise ValueError("sample_whole_plane_proxy needs a whole-plane sampler kind")
    _check_normalization_fits(window, kind)
    rng = make_rng(seed)
    bx = _enlarged_size(window.nx, kind.expansion_factor)
    by = _enlarged_size(window.ny, kind.expansion_factor)
    if kind.tag is SamplerTag.BIGBOX:
        big = _zero_boundary_values(bx, by, rng)
    else:
        big = _torus_values(bx, by, rng)
    i0, j0 = (bx - window.nx) // 2, (by - window.ny) // 2
    raw = Field(window, big[i0:i0 + window.nx, j0:j0 + window.ny])
    return raw - normalization_statistic(raw, kind)


def sample_field(window: GridSpec, kind: SamplerKind, seed: int) -> Field:
    if kind.tag is SamplerTag.ZERO_BOUNDARY:
        return sample_zero_boundary(window, seed)
    return sample_whole_plane_proxy(window, kind, seed)


def _check_normalization_fits(window: GridSpec, kind: SamplerKind):
    c, r = kind.normalization_center, kind.normalization_radius
    if kind.normalization is Normalization.MEAN_ZERO:
        return
    if not window.contains(c, margin=r):
        raise GeometryError("normalization disk is not inside the window")


def normalization_statistic(f: Field, kind: SamplerKind) -> float:
    if kind.normalization is Normalization.MEAN_ZERO:
        return float(f.values.mean())
    if kind.normalization is Normalization.CIRCLE:
        return circle_average(f, kind.normalization_center, kind.normalization_radius)
    return smoothed_average(f, BumpKernel(), kind.normalization_center, kind.normalization_radius)


# ---------------------------------------------------------------------------
# averages


def bilinear_matrix(grid: GridSpec, pts) -> sparse.csr_matrix:
    """Sparse ``(len(pts), grid.size)`` operator of bilinear interpolation weights."""
    pts = np.asarray(pts, dtype=complex).ravel()
    fi, fj = grid.fractional_index(pts)
    i = np.clip(np.floor(fi).astype(int), 0, grid.nx - 2)
    j = np.clip(np.floor(fj).astype(int), 0, grid.ny - 2)
    tx, ty = fi - i, fj - j
    rows = np.repeat(np.arange(len(pts)), 4)
    cols = np.stack([grid.flat(i, j), grid.flat(i + 1, j), grid.flat(i, j + 1), grid.flat(i + 1, j + 1)], axis=1)
    w = np.stack([(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty], axis=1)
    return sparse.csr_matrix((w.ravel(), (rows, cols.ravel())), shape=(len(pts), grid.size))


def circle_points(center: complex, radius: float, spacing: float) -> np.ndarray:
    n = max(16, int(math.ceil(TWO_PI * radius / spacing)))
    theta = TWO_PI * np.arange(n) / n
    return complex(center) + radius * np.exp(1j * theta)


def circle_average_weights(grid: GridSpec, center: complex, radius: float) -> np.ndarray:
    """Dense weight vector ``w`` with ``w @ field.values.ravel() == circle_average(...)``."""
    if radius < 2 * grid.spacing * (1 - 1e-9):
        raise GeometryError("circle radius below two mesh spacings")
    if not grid.contains(center, margin=radius):
        raise GeometryError("circle leaves the grid window")
    m = bilinear_matrix(grid, circle_points(center, radius, grid.spacing))
    return np.asarray(m.mean(axis=0)).ravel()


def circle_average(f: Field, center: complex, radius: float) -> float:
    """Mean of bilinearly interpolated values at ``max(16, ceil(2 pi r / spacing))`` equally spaced angles."""
    if radius < 2 * f.grid.spacing * (1 - 1e-9):
        raise GeometryError("circle radius below two mesh spacings")
    if not f.grid.contains(center, margin=radius):
        raise GeometryError("circle leaves the grid window")
    pts = circle_points(center, radius, f.grid.spacing)
    return float(np.mean(bilinear_matrix(f.grid, pts) @ f.values.ravel()))


def _bump(rho):
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    inside = rho < 1
    out[inside] = np.exp(-1.0 / (1.0 - rho[inside] ** 2))
    return out


@dataclass(frozen=True)
class BumpKernel:
    """Radial bump ``c * exp(-1 / (1 - |w|^2))`` on the unit disk, with unit integral."""

    @cached_property
    def normalizer(self) -> float:
        mass, _ = integrate.quad(lambda t: float(_bump(t)) * t, 0.0, 1.0, epsabs=1e-14)
        return 1.0 / (TWO_PI * mass)

    def profile(self, w) -> np.ndarray:
        return self.normalizer * _bump(np.abs(np.asarray(w, dtype=complex)))

    def discrete_weights(self, grid: GridSpec, center: complex, radius: float) -> tuple[np.ndarray, np.ndarray]:
        """Flat vertex ids and weights of the kernel placed at ``(center, radius)``; weights sum to 1."""
        if not grid.contains(center, margin=radius):
            raise GeometryError("kernel support leaves the grid window")
        pts = grid.flat_points()
        rel = (pts - complex(center)) / radius
        idx = np.flatnonzero(np.abs(rel) < 1)
        w = self.profile(rel[idx])
        total = w.sum()
        if not total > 0:
            raise GeometryError("kernel support contains no vertex; radius too small for the mesh")
        return idx, w / total

    def weight_vector(self, grid: GridSpec, center: complex, radius: float) -> np.ndarray:
        idx, w = self.discrete_weights(grid, center, radius)
        out = np.zeros(grid.size)
        out[idx] = w
        return out


def smoothed_average(f: Field, kernel: BumpKernel, center: complex, radius: float) -> float:
    """Pairing of the field with the bump rescaled to the disk ``B_radius(center)``."""
    idx, w = kernel.discrete_weights(f.grid, center, radius)
    return float(w @ f.values.ravel()[idx])


# ---------------------------------------------------------------------------
# heat-kernel mollification


def heat_kernel_stencil(spacing: float, epsilon: float, time: float | None = None,
                        truncation: float = 4.0) -> np.ndarray:
    """Truncated heat kernel ``p_t(w) ~ exp(-|w|^2 / 2t)`` on the lattice, unit mass.

    ``time`` defaults to ``epsilon**2 / 2``, i.e. ``exp(-|w|^2 / epsilon^2)``.
    """
    t = epsilon ** 2 / 2.0 if time is None else time
    k = int(math.floor(truncation * epsilon / spacing + 1e-9))
    offs = spacing * np.arange(-k, k + 1)
    r2 = offs[:, None] ** 2 + offs[None, :] ** 2
    ker = np.exp(-r2 / (2.0 * t))
    ker[r2 > (truncation * epsilon) ** 2 * (1 + 1e-12)] = 0.0
    return ker / ker.sum()


def heat_mollify(f: Field, epsilon: float, time: float | None = None, truncation: float = 4.0) -> Field:
    """Convolve with the truncated, renormalized heat kernel.

    The result lives on the input grid; its ``valid`` window is the input's
    valid window shrunk by ``truncation * epsilon``.
    """
    s = f.grid.spacing
    if epsilon < s * (1 - 1e-9):
        raise GeometryError(f"epsilon {epsilon} is below the mesh spacing {s}")
    valid = shrink_window(f.valid_window, truncation * epsilon)
    ker = heat_kernel_stencil(s, epsilon, time, truncation)
    # centring makes constants pass through exactly
    mean = float(f.values.mean())
    out = signal.fftconvolve(f.values - mean, ker, mode="same") + mean
    return Field(f.grid, out, valid)


# ---------------------------------------------------------------------------
# serialization

_MAGIC = b"LQGF"
_VERSION = 1
_HEADER = struct.Struct("<4sIqqddd")


def save_field(path, f: Field) -> None:
    """Binary container: little-endian header (magic, version, nx, ny, spacing, origin.x, origin.y)
    followed by ``nx*ny`` float64 values in ``i``-major order."""
    g = f.grid
    header = _HEADER.pack(_MAGIC, _VERSION, g.nx, g.ny, g.spacing, g.origin.real, g.origin.imag)
    Path(path).write_bytes(header + f.values.astype("<f8").tobytes(order="C"))


def load_field(path) -> Field:
    data = Path(path).read_bytes()
    magic, version, nx, ny, spacing, ox, oy = _HEADER.unpack_from(data)
    if magic != _MAGIC or version != _VERSION:
        raise ValueError(f"{path}: not a field container (magic={magic!r}, version={version})")
    values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if values.size != nx * ny:
        raise ValueError(f"{path}: expected {nx * ny} values, found {values.size}")
    return Field(GridSpec(complex(ox, oy), spacing, nx, ny), values.reshape(nx, ny))


def field_to_csv(path, f: Field) -> None:
    pts = f.grid.flat_points()
    table = np.column_stack([pts.real, pts.imag, f.values.ravel()])
    np.savetxt(path, table, delimiter=",", header="x,y,value", comments="", fmt="%.10g")


def with_valid(f: Field, valid: GridSpec | None) -> Field:
    return replace(f, valid=valid)
