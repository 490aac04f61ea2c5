"""Closed-form conformal maps, pulled-back fields and the pulled-back metric.

For a conformal map ``phi`` the pulled-back field on the target lattice is

    h_phi(w) = h(phi^{-1}(w)) + Q log|(phi^{-1})'(w)|

and the pulled-back metric is ``D_h^phi(z, w) = D_{h_phi}(phi(z), phi(w))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .gff import BumpKernel, Field, LqgParams, heat_mollify, make_rng, smoothed_average
from .lattice import GeometryError, GridSpec, VertexSet
from .metric import KING8, MetricOracle


class DomainError(ValueError):
    """A point lies outside the declared (co)domain of a map."""


def _pair(c: complex) -> list[float]:
    c = complex(c)
    return [c.real, c.imag]


def _unpair(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1])
    return complex(v)


class MapDescriptor:
    """Base class. Subclasses implement the closed forms on numpy complex arrays."""

    kind: str = ""

    # -- subclass hooks
    def _eval(self, z): raise NotImplementedError
    def _inv(self, w): raise NotImplementedError
    def _deriv(self, z): raise NotImplementedError
    def _inv_deriv(self, w): raise NotImplementedError
    def in_domain(self, z): return np.ones(np.shape(z), dtype=bool)
    def in_codomain(self, w): return np.ones(np.shape(w), dtype=bool)

    @staticmethod
    def _arr(z):
        return np.asarray(z, dtype=complex)

    def _check(self, ok, what):
        if not np.all(ok):
            raise DomainError(f"{self.kind}: point outside the declared {what}")

    @staticmethod
    def _out(x):
        return complex(x) if np.ndim(x) == 0 else x

    def evaluate(self, z):
        z = self._arr(z)
        self._check(self.in_domain(z), "domain")
        return self._out(self._eval(z))

    def inverse(self, w):
        w = self._arr(w)
        self._check(self.in_codomain(w), "codomain")
        return self._out(self._inv(w))

    def derivative(self, z):
        z = self._arr(z)
        self._check(self.in_domain(z), "domain")
        return self._out(self._deriv(z))

    def inverse_derivative(self, w):
        w = self._arr(w)
        self._check(self.in_codomain(w), "codomain")
        return self._out(self._inv_deriv(w))

    def inverse_derivative_log_abs(self, w):
        """``log|(phi^{-1})'(w)|`` in closed form."""
        d = self.inverse_derivative(w)
        if np.any(d == 0):
            raise DomainError(f"{self.kind}: critical point")
        out = np.log(np.abs(d))
        return float(out) if np.ndim(out) == 0 else out

    def to_dict(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_dict(d: dict) -> "MapDescriptor":
        kind = d["kind"]
        if kind == "affine":
            return Affine(_unpair(d.get("a", 1)), _unpair(d.get("b", 0)))
        if kind == "moebius":
            return Moebius(*(_unpair(d[k]) for k in "abcd"))
        if kind == "power2":
            return Power2()
        if kind == "exp_strip":
            return ExpStrip()
        if kind == "identity":
            return Affine(1, 0)
        if kind == "composite":
            return Composite(MapDescriptor.from_dict(d["first"]), MapDescriptor.from_dict(d["then"]))
        raise ValueError(f"unknown map kind {kind!r}")


@dataclass(frozen=True)
class Affine(MapDescriptor):
    a: complex = 1
    b: complex = 0
    kind = "affine"

    def __post_init__(self):
        object.__setattr__(self, "a", complex(self.a))
        object.__setattr__(self, "b", complex(self.b))
        if self.a == 0:
            raise ValueError("affine map needs a != 0")

    def _eval(self, z): return self.a * z + self.b
    def _inv(self, w): return (w - self.b) / self.a
    def _deriv(self, z): return np.full(np.shape(z), self.a)
    def _inv_deriv(self, w): return np.full(np.shape(w), 1 / self.a)

    def to_dict(self):
        return {"kind": "affine", "a": _pair(self.a), "b": _pair(self.b)}


@dataclass(frozen=True)
class Moebius(MapDescriptor):
    a: complex = 1
    b: complex = 0
    c: complex = 0
    d: complex = 1
    kind = "moebius"

    def __post_init__(self):
        for k in "abcd":
            object.__setattr__(self, k, complex(getattr(self, k)))
        if self.a * self.d - self.b * self.c == 0:
            raise ValueError("moebius map needs ad - bc != 0")

    @property
    def det(self) -> complex:
        return self.a * self.d - self.b * self.c

    def in_domain(self, z):
        return np.abs(self.c * z + self.d) > 1e-12 * (abs(self.c) + abs(self.d))

    def in_codomain(self, w):
        return np.abs(-self.c * w + self.a) > 1e-12 * (abs(self.c) + abs(self.a))

    def _eval(self, z): return (self.a * z + self.b) / (self.c * z + self.d)
    def _inv(self, w): return (self.d * w - self.b) / (-self.c * w + self.a)
    def _deriv(self, z): return self.det / (self.c * z + self.d) ** 2
    def _inv_deriv(self, w): return self.det / (-self.c * w + self.a) ** 2

    def to_dict(self):
        return {"kind": "moebius", **{k: _pair(getattr(self, k)) for k in "abcd"}}


@dataclass(frozen=True)
class Power2(MapDescriptor):
    """``z -> z**2`` from the right half-plane onto the slit plane."""

    kind = "power2"

    def in_domain(self, z): return np.real(z) > 0
    def in_codomain(self, w): return ~((np.imag(w) == 0) & (np.real(w) <= 0))
    def _eval(self, z): return z * z
    def _inv(self, w): return np.sqrt(w)
    def _deriv(self, z): return 2 * z
    def _inv_deriv(self, w): return 0.5 / np.sqrt(w)

    def to_dict(self):
        return {"kind": "power2"}


@dataclass(frozen=True)
class ExpStrip(MapDescriptor):
    """``z -> exp(z)`` from the strip ``|Im z| < pi`` onto the slit plane."""

    kind = "exp_strip"

    def in_domain(self, z): return np.abs(np.imag(z)) < np.pi
    def in_codomain(self, w): return ~((np.imag(w) == 0) & (np.real(w) <= 0))
    def _eval(self, z): return np.exp(z)
    def _inv(self, w): return np.log(w)
    def _deriv(self, z): return np.exp(z)
    def _inv_deriv(self, w): return 1 / w

    def to_dict(self):
        return {"kind": "exp_strip"}


@dataclass(frozen=True)
class Composite(MapDescriptor):
    """``then o first``."""

    first: MapDescriptor
    then: MapDescriptor
    kind = "composite"

    def in_domain(self, z):
        ok = self.first.in_domain(z)
        w = np.where(ok, self.first._eval(np.where(ok, z, 1.0)), 1.0)
        return ok & self.then.in_domain(w)

    def in_codomain(self, w):
        ok = self.then.in_codomain(w)
        z = np.where(ok, self.then._inv(np.where(ok, w, 1.0)), 1.0)
        return ok & self.first.in_codomain(z)

    def _eval(self, z): return self.then._eval(self.first._eval(z))
    def _inv(self, w): return self.first._inv(self.then._inv(w))
    def _deriv(self, z): return self.then._deriv(self.first._eval(z)) * self.first._deriv(z)

    def _inv_deriv(self, w):
        u = self.then._inv(w)
        return self.first._inv_deriv(u) * self.then._inv_deriv(w)

    def to_dict(self):
        return {"kind": "composite", "first": self.first.to_dict(), "then": self.then.to_dict()}


IDENTITY = Affine(1, 0)


# ---------------------------------------------------------------------------
# pulled-back fields

# cubic interpolation needs this many cells of support inside the base window
_INTERP_MARGIN_CELLS = 2


@dataclass(frozen=True, eq=False)
class PullbackField:
    base: Field
    map: MapDescriptor
    target_grid: GridSpec
    values: np.ndarray = field(repr=False)
    valid: VertexSet = field(repr=False)
    log_derivative: np.ndarray = field(repr=False)

    def as_field(self) -> Field:
        return Field(self.target_grid, self.values)


def pullback_field(base: Field, phi: MapDescriptor, target_grid: GridSpec, params: LqgParams,
                   strict: bool = True) -> PullbackField:
    """Sample ``h o phi^{-1} + Q log|(phi^{-1})'|`` on ``target_grid`` by bicubic interpolation.

    With ``strict=False``, target vertices whose preimage is undefined or
    escapes the base window get clamped values and are left out of ``valid``.
    """
    w = target_grid.flat_points()
    ok = np.asarray(phi.in_codomain(w), dtype=bool)
    pre = np.full(w.shape, base.grid.center, dtype=complex)
    logd = np.zeros(w.shape)
    pre[ok] = phi._inv(w[ok])
    d = phi._inv_deriv(w[ok])
    ok_idx = np.flatnonzero(ok)
    good = np.abs(d) > 0
    logd[ok_idx[good]] = np.log(np.abs(d[good]))
    ok[ok_idx[~good]] = False
    margin = _INTERP_MARGIN_CELLS * base.grid.spacing
    inside = ok & np.asarray(base.grid.contains(pre, margin=margin), dtype=bool)
    if strict and not np.all(inside):
        raise GeometryError("preimage of the target window escapes the source window")
    fi, fj = base.grid.fractional_index(pre)
    interp = ndimage.map_coordinates(base.values, [fi, fj], order=3, mode="nearest")
    values = interp + params.q * logd
    shape = target_grid.shape
    return PullbackField(base, phi, target_grid, values.reshape(shape),
                         VertexSet(target_grid, inside.reshape(shape)), logd.reshape(shape))


def aligned_bounding_grid(points, lattice: GridSpec, margin: float) -> GridSpec:
    """Smallest window of ``lattice``'s translate-class covering ``points`` plus ``margin``."""
    pts = np.asarray(points, dtype=complex)
    s = lattice.spacing
    lo_x = math.floor((pts.real.min() - margin - lattice.x0) / s)
    hi_x = math.ceil((pts.real.max() + margin - lattice.x0) / s)
    lo_y = math.floor((pts.imag.min() - margin - lattice.y0) / s)
    hi_y = math.ceil((pts.imag.max() + margin - lattice.y0) / s)
    return GridSpec(lattice.origin + s * (lo_x + 1j * lo_y), s, hi_x - lo_x + 1, hi_y - lo_y + 1)


def _box_outline(center: complex, half_width: float, n: int = 64) -> np.ndarray:
    t = np.linspace(-1, 1, n)
    x, y = np.meshgrid(t, t, indexing="ij")
    return complex(center) + half_width * (x + 1j * y).ravel()


class CoordinateChange:
    """``D_h`` and ``D_h^phi`` for one field sample, on a common (normalized) scale.

    The source metric is LFPP of ``h`` at ``epsilon``; the target metric is LFPP
    of the pulled-back field at ``epsilon * |phi'(anchor)|**policy_exponent``.
    Unless ``target_grid`` is given, the target lattice has the source spacing and
    contains ``phi`` of the source vertex nearest ``anchor``.
    Distances returned by :meth:`d` and :meth:`d_phi` are multiplied by each
    oracle's ``eps**(xi Q - 1)`` so that the two sides are comparable.
    """

    def __init__(self, h: Field, phi: MapDescriptor, epsilon: float, params: LqgParams, *,
                 anchor: complex, region_radius: float | None = None,
                 target_grid: GridSpec | None = None, epsilon_target: float | None = None,
                 policy_exponent: float = 1.0, neighbor_scheme: str = KING8,
                 heat_time_factor: float = 0.5):
        self.h = h
        self.phi = phi
        self.params = params
        self.anchor = complex(anchor)
        self.epsilon = float(epsilon)
        self.scale_factor = float(abs(phi.derivative(self.anchor)))
        if epsilon_target is None:
            epsilon_target = self.epsilon * self.scale_factor ** policy_exponent
        self.epsilon_target = float(epsilon_target)
        self.neighbor_scheme = neighbor_scheme

        src_field = heat_mollify(h, self.epsilon, time=heat_time_factor * self.epsilon ** 2)
        self.source = MetricOracle(src_field, params, None, neighbor_scheme, self.epsilon)

        s = h.grid.spacing
        if target_grid is None:
            if region_radius is None:
                outline = src_field.valid_window.flat_points()
            else:
                outline = _box_outline(self.anchor, region_radius)
            outline = outline[np.asarray(phi.in_domain(outline), dtype=bool)]
            margin = 4.0 * self.epsilon_target + 3 * s
            # put phi(anchor vertex) on the target lattice so near-affine maps resample
            # the source lattice almost exactly
            a0 = h.grid.position(h.grid.nearest(self.anchor))
            reference = GridSpec(phi.evaluate(a0), s, 2, 2)
            target_grid = aligned_bounding_grid(phi._eval(outline), reference, margin)
        self.pullback = pullback_field(h, phi, target_grid, params, strict=False)
        tgt_field = heat_mollify(self.pullback.as_field(), self.epsilon_target,
                                 time=heat_time_factor * self.epsilon_target ** 2)
        reach = int(math.ceil(4.0 * self.epsilon_target / target_grid.spacing)) + 1
        trusted = ndimage.binary_erosion(self.pullback.valid.membership, iterations=reach,
                                         border_value=0)
        mask = VertexSet(target_grid, trusted) & VertexSet.from_window(target_grid, tgt_field.valid_window)
        self.target = MetricOracle(tgt_field, params, mask, neighbor_scheme, self.epsilon_target)
        self.max_snap = 0.0

    # -- vertex bookkeeping
    def source_vertices(self, pts) -> np.ndarray:
        pts = np.atleast_1d(np.asarray(pts, dtype=complex))
        return np.atleast_1d(self.source.grid.nearest(pts))

    def image_vertices(self, source_idx) -> np.ndarray:
        """Target vertices nearest to ``phi`` of the given source vertices."""
        p = self.phi.evaluate(self.source.grid.position(np.asarray(source_idx)))
        p = np.atleast_1d(p)
        if not np.all(self.target.grid.contains(p)):
            raise GeometryError("image point outside the target window")
        idx = np.atleast_1d(self.target.grid.nearest(p))
        snap = float(np.max(np.abs(self.target.grid.position(idx) - p)))
        self.max_snap = max(self.max_snap, snap)
        return idx

    def image_set(self, vs: VertexSet) -> VertexSet:
        return VertexSet.from_indices(self.target.grid, self.image_vertices(vs.indices))

    def target_region(self, predicate) -> VertexSet:
        """Target vertices whose (valid) preimage satisfies ``predicate``."""
        w = self.target.grid.flat_points()
        ok = self.pullback.valid.membership.ravel().copy()
        pre = np.zeros_like(w)
        pre[ok] = self.phi._inv(w[ok])
        ok[ok] = np.asarray(predicate(pre[ok]), dtype=bool)
        return VertexSet(self.target.grid, ok)

    # -- normalized distances
    def d(self, u, v) -> float:
        return self.source.normalization * self.source.distance(u, v, geodesic=False).value

    def d_phi(self, u, v) -> float:
        """``D_h^phi`` between source vertex ids / sets ``u`` and ``v``."""
        return self.target.normalization * self.target.distance(self._img(u), self._img(v), geodesic=False).value

    def _img(self, s):
        if isinstance(s, VertexSet):
            if s.grid == self.target.grid:
                return s
            return self.image_set(s)
        return self.image_vertices(np.atleast_1d(s))

    def pair_distances(self, pairs) -> tuple[np.ndarray, np.ndarray]:
        """Normalized ``(D_h, D_h^phi)`` for source vertex pairs, one Dijkstra per distinct ``u``."""
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        d = np.empty(len(pairs))
        dp = np.empty(len(pairs))
        img = self.image_vertices(pairs.ravel()).reshape(-1, 2)
        for u in np.unique(pairs[:, 0]):
            rows = np.flatnonzero(pairs[:, 0] == u)
            ds = self.source.distances_from([u])
            dt = self.target.distances_from([img[rows[0], 0]])
            d[rows] = ds[pairs[rows, 1]]
            dp[rows] = dt[img[rows, 1]]
        return d * self.source.normalization, dp * self.target.normalization

    # -- sampled statistics
    def sample_pairs(self, center: complex, r: float, budget: int, min_separation: float = 0.0,
                     seed: int = 0) -> np.ndarray:
        return sample_ball_pairs(self.source, center, r, budget, min_separation, seed)

    def ratio_sample(self, center: complex, r: float, pair_budget: int, b: float, seed: int = 0) -> list[float]:
        if not 0 < b < 1:
            raise ValueError("b must lie in (0, 1)")
        if pair_budget == 0:
            return []
        pairs = self.sample_pairs(center, r, pair_budget, b * r, seed)
        d, dp = self.pair_distances(pairs)
        return list(dp / d)

    def sup_difference(self, center: complex, r: float, pair_budget: int,
                       kernel: BumpKernel | None = None, seed: int = 0) -> float:
        kernel = kernel or BumpKernel()
        pairs = self.sample_pairs(center, r, pair_budget, 0.0, seed)
        d, dp = self.pair_distances(pairs)
        xi, q = self.params.xi, self.params.q
        scale = r ** (xi * q) * math.exp(xi * smoothed_average(self.h, kernel, center, r))
        return float(np.max(np.abs(dp - d)) / scale)


def sample_ball_pairs(oracle: MetricOracle, center: complex, r: float, budget: int,
                      min_separation: float = 0.0, seed: int = 0) -> np.ndarray:
    """``budget`` pairs of mask vertices in ``B_r(center)`` at least ``min_separation`` apart.

    Deterministic in ``seed``; a larger budget extends the smaller one's list.
    """
    grid = oracle.grid
    pts = grid.flat_points()
    cand = np.flatnonzero((np.abs(pts - complex(center)) < r) & oracle.mask.membership.ravel())
    if cand.size < 2:
        raise GeometryError("ball contains fewer than two metric vertices")
    rng = make_rng(seed)
    out = []
    tries = 0
    while len(out) < budget:
        u, v = rng.choice(cand, size=2)
        tries += 1
        if u != v and abs(pts[u] - pts[v]) >= min_separation:
            out.append((u, v))
        elif tries > 1000 * max(budget, 1):
            raise GeometryError("could not sample separated pairs in the ball")
    return np.array(out, dtype=np.int64).reshape(-1, 2)


# ---------------------------------------------------------------------------
# module-level operations


def evaluate(phi: MapDescriptor, z):
    return phi.evaluate(z)


def inverse(phi: MapDescriptor, w):
    return phi.inverse(w)


def inverse_derivative_log_abs(phi: MapDescriptor, w):
    return phi.inverse_derivative_log_abs(w)


def pulled_back_distance(pullback: PullbackField, epsilon: float, params: LqgParams, z: complex, w: complex,
                         *, anchor: complex | None = None, policy_exponent: float = 1.0,
                         neighbor_scheme: str = KING8) -> float:
    """Raw LFPP distance ``D_{h_phi}(phi(z), phi(w))`` with the pulled-back field mollified at
    ``epsilon * |phi'(anchor)|**policy_exponent`` (``anchor`` defaults to the midpoint)."""
    phi = pullback.map
    anchor = (complex(z) + complex(w)) / 2 if anchor is None else complex(anchor)
    eps_t = epsilon * abs(phi.derivative(anchor)) ** policy_exponent
    tgt = heat_mollify(pullback.as_field(), eps_t)
    reach = int(math.ceil(4.0 * eps_t / pullback.target_grid.spacing)) + 1
    trusted = ndimage.binary_erosion(pullback.valid.membership, iterations=reach, border_value=0)
    mask = VertexSet(pullback.target_grid, trusted) & VertexSet.from_window(tgt.grid, tgt.valid_window)
    oracle = MetricOracle(tgt, params, mask, neighbor_scheme, eps_t)
    a = oracle.grid.nearest(phi.evaluate(z))
    b = oracle.grid.nearest(phi.evaluate(w))
    return oracle.distance([a], [b], geodesic=False).value


def covariance_ratio_sample(h: Field, phi: MapDescriptor, ball_center: complex, r: float, epsilon: float,
                            params: LqgParams, pair_budget: int, b: float, *, seed: int = 0,
                            **kwargs) -> list[float]:
    """Ratios ``D_h^phi(u, v) / D_h(u, v)`` for sampled pairs in ``B_r`` with ``|u - v| >= b r``."""
    if pair_budget == 0:
        return []
    kwargs.setdefault("region_radius", 2 * r)
    cc = CoordinateChange(h, phi, epsilon, params, anchor=ball_center, **kwargs)
    return cc.ratio_sample(ball_center, r, pair_budget, b, seed)


def sup_difference_statistic(h: Field, phi: MapDescriptor, z: complex, r: float, epsilon: float,
                             params: LqgParams, kernel: BumpKernel, pair_budget: int, *, seed: int = 0,
                             **kwargs) -> float:
    """``max |D_h^phi - D_h|`` over sampled pairs in ``B_r(z)``, divided by ``r^{xi Q} e^{xi h_{f,r}(z)}``."""
    kwargs.setdefault("region_radius", 2 * r)
    cc = CoordinateChange(h, phi, epsilon, params, anchor=z, **kwargs)
    return cc.sup_difference(z, r, pair_budget, kernel, seed)


def rescaled_problem(h: Field, phi: MapDescriptor, z: complex, r: float,
                     kernel: BumpKernel | None = None) -> tuple[Field, MapDescriptor, float]:
    """Field ``h(r . + z) - h_{f,r}(z)`` on the rescaled lattice, the map
    ``w -> (phi(r w + z) - z) / r`` and the subtracted constant."""
    kernel = kernel or BumpKernel()
    c = smoothed_average(h, kernel, z, r)
    grid = GridSpec((h.grid.origin - complex(z)) / r, h.grid.spacing / r, h.grid.nx, h.grid.ny)
    inner = Affine(r, z)
    outer = Affine(1 / r, -complex(z) / r)
    return Field(grid, h.values - c), Composite(Composite(inner, phi), outer), c


def rescale_grid(grid: GridSpec, z: complex, r: float) -> GridSpec:
    return GridSpec((grid.origin - complex(z)) / r, grid.spacing / r, grid.nx, grid.ny)


__all__ = [
    "Affine", "Composite", "CoordinateChange", "DomainError", "ExpStrip", "IDENTITY", "MapDescriptor",
    "Moebius", "Power2", "PullbackField", "covariance_ratio_sample", "evaluate", "inverse",
    "inverse_derivative_log_abs", "pullback_field", "pulled_back_distance", "rescale_grid",
    "rescaled_problem", "sample_ball_pairs", "sup_difference_statistic",
]
