"""Experiment kinds: one per-sample function and one pooling function each.

Per-sample functions take ``(config, seed)`` and return a JSON-safe dict that
depends on nothing else, so samples can run in any order or process.
Pooling functions turn the list of successful records into report rows.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse.linalg import spsolve

from ..conformal import Affine, CoordinateChange, sample_ball_pairs
from ..events import AnnulusEventParams, check_event, narrow_annulus_length_event
from ..gff import (
    Field,
    Normalization,
    SamplerKind,
    SamplerTag,
    circle_average,
    heat_mollify,
    make_rng,
    sample_field,
    sample_zero_boundary,
)
from ..lattice import GeometryError, GridSpec, VertexSet, vertices_in_ball
from ..measure import ball_volume_profile, build_measure, measure_coordinate_change, measure_of, volume_growth_slope
from ..metric import MetricOracle, weyl_scale
from .stats import describe, monotone, proportion


def _field(cfg, grid, seed) -> Field:
    return sample_field(grid, cfg.sampler, seed)


def _c(z: complex) -> list[float]:
    return [float(complex(z).real), float(complex(z).imag)]


# ---------------------------------------------------------------------------
# covariance_check


def _covariance_pairs(grid: GridSpec, n_pairs: int, pair_seed: int) -> np.ndarray:
    """Interior vertex pairs, fixed by ``pair_seed`` (not by the sample seed)."""
    ii, jj = np.meshgrid(np.arange(1, grid.nx - 1), np.arange(1, grid.ny - 1), indexing="ij")
    interior = grid.flat(ii.ravel(), jj.ravel())
    return make_rng(pair_seed).choice(interior, size=(n_pairs, 2))


def dirichlet_covariance(grid: GridSpec, pairs) -> np.ndarray:
    """``2 pi L^{-1}`` entries for the interior Dirichlet Laplacian, via sparse solves."""
    mx, my = grid.nx - 2, grid.ny - 2
    lap = sparse.kronsum(sparse.diags([-1, 2, -1], [-1, 0, 1], shape=(my, my)),
                         sparse.diags([-1, 2, -1], [-1, 0, 1], shape=(mx, mx)), format="csc")
    out = []
    for u, v in pairs:
        (iu, ju), (iv, jv) = grid.ij(u), grid.ij(v)
        rhs = np.zeros(mx * my)
        rhs[(iu - 1) * my + (ju - 1)] = 1.0
        col = spsolve(lap, rhs)
        out.append(2 * math.pi * col[(iv - 1) * my + (jv - 1)])
    return np.array(out)


def covariance_check_sample(cfg, seed) -> dict:
    o = cfg.options
    h = sample_zero_boundary(cfg.grid, seed)
    pairs = _covariance_pairs(cfg.grid, int(o.get("n_pairs", 20)), int(o.get("pair_seed", 0)))
    flat = h.values.ravel()
    rec = {"products": [float(flat[u] * flat[v]) for u, v in pairs]}
    circ = o.get("circle")
    if circ:
        g = GridSpec.centered(0, float(circ["half_width"]), float(circ["spacing"]))
        r0 = float(circ["r0"])
        kind = SamplerKind(SamplerTag(circ.get("tag", SamplerTag.BIGBOX.value)),
                           float(circ.get("expansion_factor", 4.0)), Normalization.CIRCLE, 0j, r0)
        # an independent stream for the whole-plane part
        hw = sample_field(g, kind, seed + int(circ.get("seed_offset", 1 << 40)))
        rec["circle"] = [circle_average(hw, 0, r0 * 2.0 ** -k) for k in range(int(circ.get("levels", 4)) + 1)]
    return rec


def covariance_check_pool(cfg, records) -> tuple[list, dict]:
    o = cfg.options
    pairs = _covariance_pairs(cfg.grid, int(o.get("n_pairs", 20)), int(o.get("pair_seed", 0)))
    prod = np.array([r["products"] for r in records])
    n = prod.shape[0]
    emp = prod.mean(axis=0)
    se = prod.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.full(emp.shape, np.nan)
    exact = dirichlet_covariance(cfg.grid, pairs)
    zscore = np.abs(emp - exact) / se
    within = proportion(zscore <= 3)
    rows = [{"label": "covariance", "eps": None, "r": None, "mesh": cfg.grid.spacing, "stat": within["p"],
             "n": n, "low_n": n < 10, "within_3se": within, "max_z": float(np.max(zscore)),
             "empirical": emp.tolist(), "exact": exact.tolist(), "stderr": se.tolist()}]
    summary = {"fraction_within_3se": within["p"], "max_z": float(np.max(zscore))}
    if records and "circle" in records[0]:
        circ = np.array([r["circle"] for r in records])
        var = circ.var(axis=0, ddof=1)
        r0 = float(o["circle"]["r0"])
        for k, v in enumerate(var):
            rows.append({"label": f"circle_k{k}", "eps": None, "r": r0 * 2.0 ** -k,
                         "mesh": float(o["circle"]["spacing"]), "stat": float(v), "n": n, "low_n": n < 10,
                         "variance": float(v)})
        ks = np.arange(1, len(var))
        slope = float(np.polyfit(ks, var[1:], 1)[0]) if len(ks) >= 2 else float("nan")
        summary.update({"circle_variance": var.tolist(), "variance_slope": slope,
                        "slope_relative_error": abs(slope / math.log(2) - 1)})
    return rows, summary


# ---------------------------------------------------------------------------
# weyl_check


def weyl_check_sample(cfg, seed) -> dict:
    c = float(cfg.options.get("shift", 1.0))
    h = _field(cfg, cfg.grid, seed)
    p = cfg.params
    out = []
    for k, eps in enumerate(cfg.epsilons):
        hm = heat_mollify(h, eps)
        o = MetricOracle(hm, p, None, cfg.neighbor_scheme, eps)
        oc = weyl_scale(o, c)
        pairs = sample_ball_pairs(o, o.field.valid_window.center, 0.5 * o.field.valid_window.width,
                                  cfg.pair_budget, 0.0, seed)
        dev = 0.0
        for u, v in pairs:
            d = o.distance([u], [v], geodesic=False).value
            dc = oc.distance([u], [v], geodesic=False).value
            dev = max(dev, abs(dc / (math.exp(p.xi * c) * d) - 1))
        region = VertexSet.from_window(hm.grid, hm.valid_window)
        mu = measure_of(build_measure(hm, eps, p.gamma), region)
        muc = measure_of(build_measure(hm + c, eps, p.gamma), region)
        out.append({"eps": eps, "max_rel_dev": dev, "measure_rel_dev": abs(muc / (math.exp(p.gamma * c) * mu) - 1)})
    return {"per_eps": out}


def weyl_check_pool(cfg, records):
    rows = []
    for k, eps in enumerate(cfg.epsilons):
        devs = [r["per_eps"][k]["max_rel_dev"] for r in records]
        mdevs = [r["per_eps"][k]["measure_rel_dev"] for r in records]
        rows.append({"label": "weyl", "eps": eps, "r": None, "mesh": cfg.grid.spacing, "stat": max(devs),
                     "n": len(devs), "low_n": len(devs) < 10, "max_rel_dev": max(devs),
                     "measure_max_rel_dev": max(mdevs)})
    return rows, {"max_rel_dev": max(r["max_rel_dev"] for r in rows),
                  "measure_max_rel_dev": max(r["measure_max_rel_dev"] for r in rows)}


# ---------------------------------------------------------------------------
# affine_covariance


def lattice_compatible(a: complex) -> bool:
    """Does ``z -> a z`` map the square lattice into itself (``a`` a nonzero Gaussian integer)?"""
    a = complex(a)
    return a != 0 and a.real == round(a.real) and a.imag == round(a.imag)


def _reindexed(hm: Field, mask: VertexSet, a: complex, b: complex, shift: float):
    """``z -> hm(a z + b) + shift`` on the same-spacing lattice whose image under ``a z + b``
    lies on ``hm``'s lattice, restricted to vertices whose image is in ``mask``.

    Returns the target field, its mask and the flat source vertex of each target vertex.
    """
    g = hm.grid
    s = g.spacing
    src = mask.indices
    w = g.position(src)
    z = (w - b) / a
    # choose the z-lattice through the preimage of one source vertex
    z0 = z[0]
    fi = np.round((z - z0).real / s).astype(np.int64)
    fj = np.round((z - z0).imag / s).astype(np.int64)
    on = np.abs(z - (z0 + s * (fi + 1j * fj))) < 1e-6 * s
    fi, fj, src = fi[on], fj[on], src[on]
    i0, j0 = fi.min(), fj.min()
    tg = GridSpec(z0 + s * (i0 + 1j * j0), s, int(fi.max() - i0 + 1), int(fj.max() - j0 + 1))
    vals = np.zeros(tg.shape)
    memb = np.zeros(tg.shape, dtype=bool)
    back = np.full(tg.shape, -1, dtype=np.int64)
    vals[fi - i0, fj - j0] = hm.values.ravel()[src] + shift
    memb[fi - i0, fj - j0] = True
    back[fi - i0, fj - j0] = src
    return Field(tg, vals), VertexSet(tg, memb), back.ravel()


def affine_pair_ratios(h: Field, a: complex, b: complex, epsilon: float, params, pair_budget: int, seed: int, *,
                       pair_radius: float, min_separation: float = 0.0, policy_exponent: float = 1.0,
                       neighbor_scheme: str = "king8", center: complex | None = None):
    """Ratios ``D_{h(a.+b)+Q log|a|}(z, w) / D_h(az+b, aw+b)`` on normalized scales.

    Lattice mode (``a`` a Gaussian integer): the right-hand field is the mollified
    ``h`` reindexed onto a same-spacing lattice. Otherwise the pulled-back field is
    interpolated. Returns ``(ratios, mode)``.
    """
    a, b = complex(a), complex(b)
    eps_t = epsilon * abs(a) ** (-policy_exponent)
    if not lattice_compatible(a):
        psi = Affine(1 / a, -b / a)
        w_anchor = h.grid.center if center is None else a * complex(center) + b
        cc = CoordinateChange(h, psi, epsilon, params, anchor=w_anchor, epsilon_target=eps_t,
                              neighbor_scheme=neighbor_scheme)
        pairs = cc.sample_pairs(w_anchor, abs(a) * pair_radius, pair_budget, abs(a) * min_separation, seed)
        d, dp = cc.pair_distances(pairs)
        return list(dp / d), "interpolate"
    hm = heat_mollify(h, epsilon)
    left = MetricOracle(hm, params, None, neighbor_scheme, epsilon)
    # matched policy: h~ mollified at eps_t in z-units is h mollified at |a| eps_t, reindexed
    base = hm if abs(abs(a) * eps_t - epsilon) < 1e-12 * epsilon else heat_mollify(h, abs(a) * eps_t)
    valid = VertexSet.from_window(hm.grid, hm.valid_window) & VertexSet.from_window(base.grid, base.valid_window)
    tf, tmask, back = _reindexed(base, valid, a, b, params.q * math.log(abs(a)))
    right = MetricOracle(tf, params, tmask, neighbor_scheme, eps_t)
    zc = tf.grid.center if center is None else complex(center)
    pairs = sample_ball_pairs(right, zc, pair_radius, pair_budget, min_separation, seed)
    ratios = []
    for u in np.unique(pairs[:, 0]):
        rows = pairs[pairs[:, 0] == u]
        dr = right.distances_from([u])
        dl = left.distances_from([back[u]])
        for _, v in rows:
            ratios.append(right.normalization * dr[v] / (left.normalization * dl[back[v]]))
    return ratios, "lattice"


def affine_covariance_sample(cfg, seed) -> dict:
    o = cfg.options
    h = _field(cfg, cfg.grid, seed)
    a, b = cfg.map.a, cfg.map.b
    out = []
    for eps in cfg.epsilons:
        ratios, mode = affine_pair_ratios(
            h, a, b, eps, cfg.params, cfg.pair_budget, seed, pair_radius=float(o.get("pair_radius", 0.25)),
            min_separation=float(o.get("min_separation", 0.0)), policy_exponent=cfg.policy_exponent,
            neighbor_scheme=cfg.neighbor_scheme,
            center=None if "pair_center" not in o else complex(*o["pair_center"]))
        out.append({"eps": eps, "ratios": [float(x) for x in ratios], "mode": mode})
    return {"per_eps": out}


def affine_covariance_pool(cfg, records):
    rows = []
    for k, eps in enumerate(cfg.epsilons):
        ratios = [x for r in records for x in r["per_eps"][k]["ratios"]]
        sample_medians = [float(np.median(r["per_eps"][k]["ratios"])) for r in records if r["per_eps"][k]["ratios"]]
        mode = records[0]["per_eps"][k]["mode"] if records else None
        st = describe(ratios)
        rows.append({"label": "affine", "eps": eps, "r": None, "mesh": cfg.grid.spacing,
                     "stat": st.get("median"), "n": len(records), "low_n": len(records) < 10,
                     "ratios": st, "sample_medians": describe(sample_medians),
                     "max_abs_dev": max((abs(x - 1) for x in ratios), default=float("nan")),
                     "mode": mode, "interpolated": mode == "interpolate"})
    return rows, {"interpolated": any(r["interpolated"] for r in rows),
                  "median_ratio": [r["stat"] for r in rows]}


# ---------------------------------------------------------------------------
# conformal_covariance


def scale_geometry(cfg, r: float) -> tuple[GridSpec, float]:
    o = cfg.options
    s = r / float(o["points_per_radius"])
    g = GridSpec.centered(cfg.center, float(o.get("window_radii", 3.0)) * r, s)
    return g, float(o["eps_over_r"]) * r


def conformal_covariance_sample(cfg, seed) -> dict:
    o = cfg.options
    out = []
    for r in cfg.radii:
        g, eps = scale_geometry(cfg, r)
        h = _field(cfg, g, seed)
        cc = CoordinateChange(h, cfg.map, eps, cfg.params, anchor=cfg.center,
                              region_radius=float(o.get("region_radii", 2.0)) * r,
                              policy_exponent=cfg.policy_exponent, neighbor_scheme=cfg.neighbor_scheme)
        sup = cc.sup_difference(cfg.center, r, cfg.pair_budget, seed=seed)
        ratios = cc.ratio_sample(cfg.center, r, cfg.pair_budget, float(o.get("b", 0.25)), seed=seed)
        out.append({"r": r, "sup": sup, "ratios": [float(x) for x in ratios]})
    return {"per_r": out}


def conformal_covariance_pool(cfg, records):
    delta = float(cfg.options.get("delta", 0.5))
    rows = []
    for k, r in enumerate(cfg.radii):
        sups = [rec["per_r"][k]["sup"] for rec in records]
        ratios = [x for rec in records for x in rec["per_r"][k]["ratios"]]
        pf = proportion([x <= delta for x in sups])
        st = describe(ratios)
        rows.append({"label": "conformal", "eps": float(cfg.options["eps_over_r"]) * r, "r": r,
                     "mesh": r / float(cfg.options["points_per_radius"]), "stat": pf["p"], "n": pf["n"],
                     "low_n": pf["low_n"], "p_F": pf, "sup": describe(sups), "ratios": st,
                     "ratio_iqr": st.get("iqr")})
    p = [row["p_F"]["p"] for row in rows]
    iqr = [row["ratio_iqr"] for row in rows]
    return rows, {
        "delta": delta,
        "p_F": p,
        "p_F_nondecreasing": monotone(p, "up"),
        "ratio_iqr": iqr,
        "iqr_shrinks": all(x > y for x, y in zip(iqr, iqr[1:])),
    }


# ---------------------------------------------------------------------------
# measure_covariance


def measure_covariance_sample(cfg, seed) -> dict:
    o = cfg.options
    eps = cfg.epsilons[0]
    out = []
    for s in o["spacings"]:
        g = GridSpec.centered(cfg.center, float(o["half_width"]), float(s))
        h = _field(cfg, g, seed)
        region = vertices_in_ball(g, cfg.center, float(o["region_radius"]))
        res = measure_coordinate_change(h, cfg.map, region, eps, cfg.params, policy_exponent=cfg.policy_exponent,
                                        mollifier=o.get("mollifier", "heat"))
        out.append({"mesh": float(s), "ratio": res.ratio, "cells": [res.source_cells, res.image_cells]})
    return {"per_mesh": out}


def measure_covariance_pool(cfg, records):
    rows = []
    for k, s in enumerate(cfg.options["spacings"]):
        st = describe([rec["per_mesh"][k]["ratio"] for rec in records])
        rows.append({"label": "measure", "eps": cfg.epsilons[0], "r": float(cfg.options["region_radius"]),
                     "mesh": float(s), "stat": st.get("mean"), "n": st["n"], "low_n": st["low_n"], "ratio": st,
                     "abs_error": abs(st.get("mean", float("nan")) - 1)})
    err = [row["abs_error"] for row in rows]
    return rows, {"mean_ratio": [row["stat"] for row in rows], "abs_error": err,
                  "improves": all(x > y for x, y in zip(err, err[1:]))}


# ---------------------------------------------------------------------------
# annulus_events


def annulus_events_sample(cfg, seed) -> dict:
    o = cfg.options
    eps = cfg.epsilons[0]
    h = _field(cfg, cfg.grid, seed)
    oracle = MetricOracle(heat_mollify(h, eps), cfg.params, None, cfg.neighbor_scheme, eps)
    alphas = [float(x) for x in o.get("alphas", [0.75])]
    s_low, s_high = float(o.get("s", 0.5)), float(o.get("big_s", 1.0))
    out = []
    for r in cfg.radii:
        row = {"r": r, "narrow": []}
        for alpha in alphas:
            rep = narrow_annulus_length_event(oracle, cfg.center, r, alpha, s_low, s_high, cfg.pair_budget, seed,
                                              field_for_average=h)
            row["narrow"].append({"alpha": alpha, "verdict": rep.verdict, "triggered": rep.triggered})
        if cfg.map is not None:
            ep = AnnulusEventParams(float(o.get("alpha", 0.75)), float(o.get("big_a", 25.0)),
                                    float(o.get("delta", 0.5)), cfg.pair_budget)
            cc = CoordinateChange(h, cfg.map, eps, cfg.params, anchor=cfg.center, region_radius=2 * r,
                                  policy_exponent=cfg.policy_exponent, neighbor_scheme=cfg.neighbor_scheme)
            ev = check_event(cc, cfg.center, r, ep, seed)
            row["event"] = {k: v.verdict for k, v in ev.items()}
            row["condition3_ratio"] = ev["condition3"].detail["ratio"]
        out.append(row)
    return {"per_r": out}


def annulus_events_pool(cfg, records):
    rows = []
    alphas = [float(x) for x in cfg.options.get("alphas", [0.75])]
    summary = {}
    for k, r in enumerate(cfg.radii):
        probs = []
        for m, alpha in enumerate(alphas):
            pr = proportion([rec["per_r"][k]["narrow"][m]["verdict"] for rec in records])
            probs.append(pr["p"])
            rows.append({"label": f"narrow_alpha{alpha:g}", "eps": cfg.epsilons[0], "r": r, "mesh": cfg.grid.spacing,
                         "stat": pr["p"], "n": pr["n"], "low_n": pr["low_n"], "alpha": alpha, "p_narrow": pr})
        summary[f"r={r:g}"] = {"p_narrow": probs, "monotone_in_alpha": monotone(probs, "up")}
        if records and "event" in records[0]["per_r"][k]:
            for cond in ("condition1", "condition2", "condition3"):
                pr = proportion([rec["per_r"][k]["event"][cond] for rec in records])
                rows.append({"label": cond, "eps": cfg.epsilons[0], "r": r, "mesh": cfg.grid.spacing, "stat": pr["p"],
                             "n": pr["n"], "low_n": pr["low_n"], "p": pr})
            pe = proportion([all(rec["per_r"][k]["event"].values()) for rec in records])
            summary[f"r={r:g}"]["p_event"] = pe
    return rows, summary


# ---------------------------------------------------------------------------
# ball_volume


def ball_volume_sample(cfg, seed) -> dict:
    o = cfg.options
    out = []
    for eps in cfg.epsilons:
        if o.get("field", "gff") == "zero":
            hm = Field.constant(cfg.grid)
        else:
            hm = heat_mollify(_field(cfg, cfg.grid, seed), eps)
        oracle = MetricOracle(hm, cfg.params, None, cfg.neighbor_scheme, eps)
        m = build_measure(hm, eps, cfg.params.gamma)
        dist = oracle.distances_from(np.atleast_1d(oracle.grid.nearest(cfg.center)))
        memb = oracle.mask.membership
        edge = memb & ~ndimage.binary_erosion(memb, structure=np.ones((3, 3), dtype=bool), border_value=0)
        top = float(o.get("max_fraction", 0.8)) * float(np.min(dist[edge.ravel()]))
        radii = np.geomspace(top * 10.0 ** -float(o.get("decades", 1.0)), top, int(o.get("n_radii", 9)))
        prof = ball_volume_profile(oracle, m, cfg.center, radii)
        out.append({"eps": eps, "slope": volume_growth_slope(prof), "profile": [[float(a), float(b)] for a, b in prof]})
    return {"per_eps": out}


def ball_volume_pool(cfg, records):
    rows = []
    for k, eps in enumerate(cfg.epsilons):
        st = describe([rec["per_eps"][k]["slope"] for rec in records])
        se = st.get("stderr", float("nan"))
        ci = [st.get("mean", float("nan")) - 1.96 * se, st.get("mean", float("nan")) + 1.96 * se]
        rows.append({"label": "ball_volume", "eps": eps, "r": None, "mesh": cfg.grid.spacing, "stat": st.get("mean"),
                     "n": st["n"], "low_n": st["low_n"], "slope": st, "ci95": ci})
    return rows, {"pooled_slope": [r["stat"] for r in rows], "ci95": [r["ci95"] for r in rows]}


KIND_FUNCS = {
    "covariance_check": (covariance_check_sample, covariance_check_pool),
    "weyl_check": (weyl_check_sample, weyl_check_pool),
    "affine_covariance": (affine_covariance_sample, affine_covariance_pool),
    "conformal_covariance": (conformal_covariance_sample, conformal_covariance_pool),
    "measure_covariance": (measure_covariance_sample, measure_covariance_pool),
    "annulus_events": (annulus_events_sample, annulus_events_pool),
    "ball_volume": (ball_volume_sample, ball_volume_pool),
}


def check_geometry(cfg) -> None:
    """Fail fast on configs whose windows cannot hold the requested geometry."""
    if cfg.kind == "conformal_covariance":
        for r in cfg.radii:
            g, eps = scale_geometry(cfg, r)
            if eps < g.spacing * (1 - 1e-9):
                raise GeometryError(f"eps {eps} below mesh {g.spacing} at r={r}")
    if cfg.kind == "annulus_events" and cfg.grid is not None:
        for r in cfg.radii:
            if not cfg.grid.contains(cfg.center, margin=r):
                raise GeometryError(f"ball of radius {r} around the center leaves the window")
