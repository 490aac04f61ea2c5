"""Regularized LQG area measure, its coordinate change, and metric-ball volume growth."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, signal

from .conformal import MapDescriptor, aligned_bounding_grid, pullback_field
from .gff import Field, LqgParams, bilinear_matrix, circle_points, heat_mollify
from .lattice import GeometryError, GridSpec, VertexSet, shrink_window
from .metric import MetricOracle


@dataclass(frozen=True, eq=False)
class MeasureField:
    """Cell masses ``eps**(gamma^2/2) * exp(gamma * h_eps) * spacing**2``."""

    grid: GridSpec
    cell_mass: np.ndarray = field(repr=False)
    epsilon: float
    gamma: float
    h_eps: Field | None = field(default=None, repr=False)

    @property
    def total(self) -> float:
        return float(self.cell_mass.sum())


def build_measure(h_mollified: Field, epsilon: float, gamma: float) -> MeasureField:
    if not 0 < gamma < 2:
        raise ValueError(f"gamma must lie in (0, 2), got {gamma}")
    s = h_mollified.grid.spacing
    mass = epsilon ** (gamma ** 2 / 2) * np.exp(gamma * h_mollified.values) * s * s
    if not np.all(np.isfinite(mass)) or np.any(mass <= 0):
        raise ValueError("measure has non-finite or non-positive cells")
    mass.flags.writeable = False
    return MeasureField(h_mollified.grid, mass, float(epsilon), float(gamma), h_mollified)


def measure_of(m: MeasureField, region: VertexSet) -> float:
    if region.grid != m.grid:
        raise GeometryError("region lives on a different grid")
    return float(m.cell_mass[region.membership].sum())


def circle_mollify(f: Field, epsilon: float) -> Field:
    """Circle average at radius ``epsilon`` around every vertex (translation-invariant stencil)."""
    s = f.grid.spacing
    k = int(math.ceil(epsilon / s)) + 1
    local = GridSpec(-k * s * (1 + 1j), s, 2 * k + 1, 2 * k + 1)
    w = np.asarray(bilinear_matrix(local, circle_points(0j, epsilon, s)).mean(axis=0)).reshape(local.shape)
    valid = shrink_window(f.valid_window, k * s)
    mean = float(f.values.mean())
    # correlation with the stencil == convolution with its point reflection
    out = signal.fftconvolve(f.values - mean, w[::-1, ::-1], mode="same") + mean
    return Field(f.grid, out, valid)


def mollify(f: Field, epsilon: float, mollifier: str = "heat") -> Field:
    if mollifier == "heat":
        return heat_mollify(f, epsilon)
    if mollifier == "circle":
        return circle_mollify(f, epsilon)
    raise ValueError(f"unknown mollifier {mollifier!r}")


def rasterize_image(region: VertexSet, phi: MapDescriptor, target: GridSpec) -> VertexSet:
    """Target vertices whose preimage falls in a cell ``[i - 1/2, i + 1/2) x [j - 1/2, j + 1/2)``
    of a region vertex."""
    src = region.grid
    w = target.flat_points()
    ok = np.asarray(phi.in_codomain(w), dtype=bool)
    pre = np.zeros_like(w)
    pre[ok] = phi._inv(w[ok])
    fi, fj = src.fractional_index(pre)
    i = np.floor(fi + 0.5).astype(np.int64)
    j = np.floor(fj + 0.5).astype(np.int64)
    ok &= (i >= 0) & (i < src.nx) & (j >= 0) & (j < src.ny)
    hit = np.zeros(w.shape, dtype=bool)
    hit[ok] = region.membership[i[ok], j[ok]]
    return VertexSet(target, hit.reshape(target.shape))


@dataclass(frozen=True)
class MeasureComparison:
    ratio: float
    source_mass: float
    image_mass: float
    source_cells: int
    image_cells: int
    epsilon_target: float


def measure_coordinate_change(h: Field, phi: MapDescriptor, region: VertexSet, epsilon: float,
                              params: LqgParams, *, policy_exponent: float = 1.0,
                              anchor: complex | None = None, mollifier: str = "heat") -> MeasureComparison:
    """Compare ``mu_h(region)`` with ``mu_{h_phi}(phi(region))``.

    The pulled-back field is mollified at ``epsilon * |phi'(anchor)|**policy_exponent``;
    ``anchor`` defaults to the centroid of the region.
    """
    src = mollify(h, epsilon, mollifier)
    valid = VertexSet.from_window(h.grid, src.valid_window)
    if not region.issubset(valid):
        raise GeometryError("region is not inside the mollified valid window")
    mu = build_measure(src, epsilon, params.gamma)
    pts = region.points
    if anchor is None:
        anchor = complex(pts.mean())
    eps_t = epsilon * abs(phi.derivative(anchor)) ** policy_exponent
    s = h.grid.spacing
    corners = (pts[:, None] + 0.5 * s * np.array([-1 - 1j, 1 - 1j, 1 + 1j, -1 + 1j])).ravel()
    target = aligned_bounding_grid(phi.evaluate(corners), h.grid, 4.0 * eps_t + 4 * s)
    pb = pullback_field(h, phi, target, params, strict=False)
    tgt = mollify(pb.as_field(), eps_t, mollifier)
    image = rasterize_image(region, phi, target)
    reach = int(math.ceil(4.0 * eps_t / s)) + 1
    trusted = ndimage.binary_erosion(pb.valid.membership, iterations=reach, border_value=0)
    trusted &= VertexSet.from_window(target, tgt.valid_window).membership
    if np.any(image.membership & ~trusted):
        raise GeometryError("image region reaches untrusted pulled-back values; enlarge the source window")
    nu = build_measure(tgt, eps_t, params.gamma)
    a, b = measure_of(mu, region), measure_of(nu, image)
    return MeasureComparison(b / a, a, b, len(region), len(image), eps_t)


def measure_coordinate_change_ratio(h: Field, phi: MapDescriptor, region: VertexSet, epsilon: float,
                                    params: LqgParams, **kwargs) -> float:
    """``mu_{h_phi}(phi(region)) / mu_h(region)``."""
    return measure_coordinate_change(h, phi, region, epsilon, params, **kwargs).ratio


# ---------------------------------------------------------------------------
# ball volume growth


def _mask_boundary(mask: VertexSet) -> np.ndarray:
    m = mask.membership
    inner = ndimage.binary_erosion(m, structure=np.ones((3, 3), dtype=bool), border_value=0)
    return (m & ~inner).ravel()


def ball_volume_profile(oracle: MetricOracle, m: MeasureField, center: complex, radii) -> list[tuple[float, float]]:
    """``(s, mu(metric ball of radius s))`` for each ``s`` in ``radii`` (raw metric units)."""
    if m.grid != oracle.grid:
        raise GeometryError("measure and metric live on different grids")
    radii = [float(x) for x in radii]
    dist = oracle.distances_from(np.atleast_1d(oracle.grid.nearest(center)))
    edge = _mask_boundary(oracle.mask)
    if np.min(dist[edge], initial=np.inf) <= max(radii):
        raise GeometryError("metric ball escapes the window")
    order = np.argsort(dist)
    sorted_d = dist[order]
    cum = np.cumsum(m.cell_mass.ravel()[order])
    out = []
    for s in radii:
        k = int(np.searchsorted(sorted_d, s, side="right"))
        out.append((s, float(cum[k - 1]) if k else 0.0))
    return out


def volume_growth_slope(profile, lo: float | None = None, hi: float | None = None) -> float:
    """Least-squares slope of ``log mass`` against ``log s`` over ``[lo, hi]``."""
    s = np.array([p[0] for p in profile])
    v = np.array([p[1] for p in profile])
    keep = (v > 0) & (s > 0)
    if lo is not None:
        keep &= s >= lo
    if hi is not None:
        keep &= s <= hi
    if keep.sum() < 2:
        raise ValueError("need at least two radii with positive mass")
    return float(np.polyfit(np.log(s[keep]), np.log(v[keep]), 1)[0])


def export_profiles_csv(path, profiles) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample", "radius", "mass"])
        for k, prof in enumerate(profiles):
            for s, mass in prof:
                w.writerow([k, repr(float(s)), repr(float(mass))])


def pooled_slope_summary(slopes) -> dict:
    x = np.asarray(slopes, dtype=float)
    n = x.size
    mean = float(x.mean())
    se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    return {"n": n, "mean": mean, "stderr": se, "ci95": [mean - 1.96 * se, mean + 1.96 * se],
            "low_n": n < 10}


def export_summary_json(path, summary: dict) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
