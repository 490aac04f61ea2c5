"""Sampled versions of the good-annulus events and related hypotheses.

Every universally quantified condition is checked on a finite, seeded sample
of point pairs. Pair lists are nested in the budget, so a larger budget can
only turn a ``True`` verdict into ``False``.

Discretization conventions (all in plane units, ``s`` the mesh spacing):

* ``dB_rho(z)`` is :func:`~lqglab.lattice.vertices_on_circle`.
* The closed annulus ``cl A_{a,b}(z)`` is ``{a - s/sqrt2 <= |p - z| <= b + s/sqrt2}``
  so that it contains both discrete boundary circles.
* ``D(dB_a, dB_b)`` between nested circles is the distance from the closed
  ball ``{|p - z| <= a}`` to ``{|p - z| >= b}``.
* ``D(u, dA_{r/2,2r})`` is the distance from ``u`` to ``{|p - z| <= r/2} u {|p - z| >= 2r}``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .conformal import CoordinateChange
from .gff import circle_average, make_rng
from .lattice import Annulus, GeometryError, VertexSet, vertices_on_circle
from .metric import LatticePath, MetricOracle, disconnecting_circuit

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class AnnulusEventParams:
    alpha: float = 0.75
    big_a: float = 25.0
    delta: float = 0.5
    pair_budget: int = 8

    def __post_init__(self):
        if not 0.5 < self.alpha < 1:
            raise ValueError("alpha must lie in (1/2, 1)")
        if not self.big_a > 1:
            raise ValueError("big_a must exceed 1")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.pair_budget < 1:
            raise ValueError("pair_budget must be >= 1")


@dataclass
class EventReport:
    event: str
    verdict: bool
    sampled: int = 0
    triggered: int = 0
    witnesses: list = field(default_factory=list)
    circuit: LatticePath | None = None
    detail: dict = field(default_factory=dict)

    def to_row(self, z: complex, r: float, params: dict) -> dict:
        """JSON-ready row ``{event, z, r, params, verdict, budgets, witnesses}``."""
        return {
            "event": self.event,
            "z": [complex(z).real, complex(z).imag],
            "r": r,
            "params": params,
            "verdict": bool(self.verdict),
            "budgets": {"sampled": self.sampled, "triggered": self.triggered},
            "witnesses": {"count": len(self.witnesses), "first": self.witnesses[:3]},
            **({"detail": self.detail} if self.detail else {}),
        }


def write_event_rows(path, rows) -> None:
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# helpers


def _closed_annulus(grid, z, inner, outer) -> VertexSet:
    slack = grid.spacing / _SQRT2 * (1 + 1e-9)
    d = np.abs(grid.points() - complex(z))
    return VertexSet(grid, (d >= inner - slack) & (d <= outer + slack))


def _wide_boundary(grid, z, r) -> VertexSet:
    d = np.abs(grid.points() - complex(z))
    return VertexSet(grid, (d <= r / 2) | (d >= 2 * r))


def _nested_pairs(first: np.ndarray, second: np.ndarray, budget: int, seed: int) -> np.ndarray:
    """Row-major uniform draws, so the first ``k`` pairs do not depend on ``budget >= k``."""
    u = make_rng(seed).random((budget, 2))
    i = np.minimum((u[:, 0] * first.size).astype(np.int64), first.size - 1)
    j = np.minimum((u[:, 1] * second.size).astype(np.int64), second.size - 1)
    return np.column_stack([first[i], second[j]]).reshape(-1, 2)


def boundary_pairs(oracle: MetricOracle, z: complex, r_in: float, r_out: float, budget: int,
                   seed: int = 0) -> np.ndarray:
    """``budget`` pairs ``(u, v)`` with ``u`` on ``dB_{r_in}(z)`` and ``v`` on ``dB_{r_out}(z)``."""
    inner = (vertices_on_circle(oracle.grid, z, r_in) & oracle.mask).indices
    outer = (vertices_on_circle(oracle.grid, z, r_out) & oracle.mask).indices
    if inner.size == 0 or outer.size == 0:
        raise GeometryError("boundary circle has no metric vertices")
    return _nested_pairs(inner, outer, budget, seed)


def ring_distance(oracle: MetricOracle, z: complex, a: float, b: float) -> float:
    """``D({|p - z| <= a}, {|p - z| >= b})`` within the oracle's mask (raw units)."""
    d = np.abs(oracle.grid.points() - complex(z))
    m = oracle.mask.membership
    inner = VertexSet(oracle.grid, (d <= a) & m)
    outer = VertexSet(oracle.grid, (d >= b) & m)
    return oracle.distance(inner, outer, geodesic=False).value


def lfpp_scale(oracle: MetricOracle, field_for_average, z: complex, r: float) -> float:
    """``r^{xi Q} e^{xi h_r(z)}`` divided by the oracle's ``eps**(xi Q - 1)`` normalization,
    i.e. the natural size of raw ``D`` on ``B_r(z)``."""
    xi, q = oracle.params.xi, oracle.params.q
    return r ** (xi * q) * math.exp(xi * circle_average(field_for_average, z, r)) / oracle.normalization


# ---------------------------------------------------------------------------
# conditions of the good-annulus event


def check_condition1(cc: CoordinateChange, z: complex, r: float, ep: AnnulusEventParams,
                     seed: int = 0) -> EventReport:
    """``D^phi(u, v) <= (1 + delta) D(u, v)`` for sampled ``u in dB_{alpha r}``, ``v in dB_r``
    whose ``D_h`` geodesic stays in the closed annulus."""
    src = cc.source
    pairs = boundary_pairs(src, z, ep.alpha * r, r, ep.pair_budget, seed)
    closed = _closed_annulus(src.grid, z, ep.alpha * r, r).membership.ravel()
    report = EventReport("condition1", True, sampled=len(pairs))
    for u, v in pairs:
        res = src.distance([u], [v])
        if not res.finite or not np.all(closed[res.geodesic.vertices]):
            continue
        report.triggered += 1
        d = res.value * src.normalization
        dp = cc.d_phi([u], [v])
        if not dp <= (1 + ep.delta) * d:
            report.verdict = False
            report.witnesses.append({"u": int(u), "v": int(v), "ratio": dp / d})
    return report


def check_condition2(cc: CoordinateChange, z: complex, r: float, ep: AnnulusEventParams,
                     seed: int = 0) -> EventReport:
    """For sampled pairs that are far apart relative to ``dA_{r/2,2r}`` (in ``D_h`` or ``D^phi``),
    the internal distance in the closed narrow annulus must strictly exceed the one in
    ``A_{r/2,2r}``."""
    src, tgt = cc.source, cc.target
    grid = src.grid
    pairs = boundary_pairs(src, z, ep.alpha * r, r, ep.pair_budget, seed)
    wide_bd = _wide_boundary(grid, z, r) & src.mask
    tgt_wide_bd = cc.target_region(lambda p: (np.abs(p - z) <= r / 2) | (np.abs(p - z) >= 2 * r)) & tgt.mask
    narrow = _closed_annulus(grid, z, ep.alpha * r, r)
    wide = VertexSet(grid, Annulus(z, r / 2, 2 * r).contains(grid.points()))
    narrow_oracle = src.restrict(narrow)
    wide_oracle = src.restrict(wide)
    report = EventReport("condition2", True, sampled=len(pairs))
    img = cc.image_vertices(pairs.ravel()).reshape(-1, 2)
    for (u, v), (iu, iv) in zip(pairs, img):
        du = src.distances_from([u])
        far = du[v] > np.min(du[wide_bd.indices], initial=np.inf)
        if not far:
            dt = tgt.distances_from([iu])
            far = dt[iv] > np.min(dt[tgt_wide_bd.indices], initial=np.inf)
        if not far:
            continue
        report.triggered += 1
        n = narrow_oracle.distance([u], [v], geodesic=False).value
        w = wide_oracle.distance([u], [v], geodesic=False).value
        if not n > w:
            report.verdict = False
            report.witnesses.append({"u": int(u), "v": int(v), "narrow": n, "wide": w})
    return report


def check_condition3(oracle: MetricOracle, z: complex, r: float, ep: AnnulusEventParams) -> EventReport:
    """A disconnecting circuit of ``A_{alpha r, r}`` no longer than ``A * D(dB_{alpha r}, dB_r)``."""
    circuit = disconnecting_circuit(oracle, Annulus(z, ep.alpha * r, r))
    crossing = ring_distance(oracle, z, ep.alpha * r, r)
    ratio = circuit.weighted_length / crossing
    return EventReport("condition3", bool(ratio <= ep.big_a), sampled=1, triggered=1, circuit=circuit,
                       detail={"circuit": circuit.weighted_length, "crossing": crossing, "ratio": ratio})


def check_event(cc: CoordinateChange, z: complex, r: float, ep: AnnulusEventParams, seed: int = 0) -> dict:
    return {
        "condition1": check_condition1(cc, z, r, ep, seed),
        "condition2": check_condition2(cc, z, r, ep, seed),
        "condition3": check_condition3(cc.source, z, r, ep),
    }


# ---------------------------------------------------------------------------
# bi-Lipschitz hypothesis


def bilip_ratio(cc: CoordinateChange, z: complex, r: float, pair_budget: int, seed: int = 0) -> float:
    """``max D^phi(u, v; A_{r/2,2r}) / D(dB_{r/2}, dB_r)`` over sampled ``u, v in dB_r``."""
    src, tgt = cc.source, cc.target
    circle = (vertices_on_circle(src.grid, z, r) & src.mask).indices
    pairs = _nested_pairs(circle, circle, pair_budget, seed)
    annulus = cc.target_region(lambda p: Annulus(z, r / 2, 2 * r).contains(p))
    inner = tgt.restrict(annulus)
    img = cc.image_vertices(pairs.ravel()).reshape(-1, 2)
    sup = 0.0
    for iu, iv in img:
        if iu == iv:
            continue
        sup = max(sup, inner.distance([iu], [iv], geodesic=False).value)
    sup *= tgt.normalization
    base = ring_distance(src, z, r / 2, r) * src.normalization
    return sup / base


def bilip_hypothesis_probability(ensemble, z: complex, r: float, C: float, pair_budget: int = 8,
                                 seed: int = 0) -> float:
    """Fraction of ensemble members (``CoordinateChange`` objects or precomputed ratios)
    with ``bilip_ratio <= C``."""
    ratios = [x if isinstance(x, (int, float)) else bilip_ratio(x, z, r, pair_budget, seed) for x in ensemble]
    if not ratios:
        raise ValueError("empty ensemble")
    return float(np.mean(np.asarray(ratios) <= C))


# ---------------------------------------------------------------------------
# narrow annulus lengths


def narrow_annulus_length_event(oracle: MetricOracle, z: complex, r: float, alpha: float, s: float,
                                big_s: float, pair_budget: int = 16, seed: int = 0,
                                field_for_average=None) -> EventReport:
    """Sampled pairs of ``A_{alpha r, r}`` with ``D(u, v) >= s N`` must have internal distance
    ``>= S N`` in the annulus, where ``N = r^{xi Q} e^{xi h_r(z)}`` on the normalized scale."""
    fld = oracle.field if field_for_average is None else field_for_average
    n_scale = lfpp_scale(oracle, fld, z, r)
    ring = VertexSet(oracle.grid, Annulus(z, alpha * r, r).contains(oracle.grid.points())) & oracle.mask
    idx = ring.indices
    if idx.size < 2:
        raise GeometryError("narrow annulus contains fewer than two metric vertices")
    pairs = _nested_pairs(idx, idx, pair_budget, seed)
    inner = oracle.restrict(ring)
    report = EventReport("narrow_annulus", True, sampled=len(pairs), detail={"scale": n_scale})
    for u, v in pairs:
        if u == v:
            continue
        d = oracle.distance([u], [v], geodesic=False).value
        if d < s * n_scale:
            continue
        report.triggered += 1
        internal = inner.distance([u], [v], geodesic=False).value
        if not internal >= big_s * n_scale:
            report.verdict = False
            report.witnesses.append({"u": int(u), "v": int(v), "d": d / n_scale, "internal": internal / n_scale})
    return report


def params_dict(ep: AnnulusEventParams) -> dict:
    return asdict(ep)
