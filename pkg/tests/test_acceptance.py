"""Acceptance criteria 1-10. Each test prints one ``AC<n> PASS|FAIL`` line.

The heavy Monte Carlo criteria run the YAML configs in ``configs/`` through the
harness, exactly as ``lqglab run`` would.
"""
import math
import time
from pathlib import Path

import numpy as np
import pytest
from oracles import floyd_warshall

from lqglab.conformal import IDENTITY, CoordinateChange, Moebius, Power2
from lqglab.events import (
    AnnulusEventParams,
    bilip_ratio,
    check_condition3,
    check_event,
    narrow_annulus_length_event,
)
from lqglab.gff import Field, LqgParams, Normalization, SamplerKind, sample_field
from lqglab.harness import load_config, run
from lqglab.lattice import GridSpec, VertexSet, vertices_in_ball
from lqglab.measure import measure_coordinate_change
from lqglab.metric import AXIS4, KING8, MetricOracle

P = LqgParams.pure_gravity()
CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def verdict(capsys):
    def report(n, ok, detail, elapsed=None):
        t = "" if elapsed is None else f" [{elapsed:.1f}s]"
        with capsys.disabled():
            print(f"\nAC{n} {'PASS' if ok else 'FAIL'}: {detail}{t}")
        assert ok, f"AC{n}: {detail}"

    return report


def _random_field(g, rng, scale=1.0):
    return Field(g, scale * rng.standard_normal(g.shape))


def _run(name, workers=1):
    cfg = load_config(CONFIGS / name)
    t0 = time.perf_counter()
    rep = run(cfg, workers)
    return cfg, rep, time.perf_counter() - t0


def test_ac1_oracle_equivalence(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    identical = total = 0
    for scheme in (AXIS4, KING8):
        for nx in range(2, 6):
            for ny in range(2, 6):
                g = GridSpec(0.25 + 0.5j, 0.5, nx, ny)
                for _ in range(50):
                    h = _random_field(g, rng, 1.5)
                    got = MetricOracle(h, P, neighbor_scheme=scheme).all_pairs()
                    ref = floyd_warshall(h.values, 0.5, P.xi, scheme)
                    off = ~np.eye(g.size, dtype=bool)
                    worst = max(worst, float(np.max(np.abs(got[off] / ref[off] - 1))))
                    identical += int(np.sum(got == ref))
                    total += got.size
                    assert np.all(np.diag(got) == 0)
    dt = time.perf_counter() - t0
    ok = worst <= 1e-14 and dt < 10
    verdict(1, ok, f"1600 fields on all grids 2x2 to 5x5, both schemes: max rel diff {worst:.1e}, "
                   f"{identical}/{total} entries bit-identical", dt)


def test_ac2_metric_axioms(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    g = GridSpec(0, 1.0, 12, 12)
    o = MetricOracle(_random_field(g, rng, 2.0), P)
    d = o.all_pairs()
    sym = float(np.max(np.abs(d - d.T) / np.maximum(d, 1e-300)))
    tri = max(float(np.max(d - d[:, [k]] - d[[k], :])) for k in range(g.size))
    geo = 0.0
    for a, b in rng.integers(0, g.size, (40, 2)):
        r = o.distance([a], [b])
        geo = max(geo, abs(o.path_length(r.geodesic) - r.value) / max(r.value, 1e-300))
    mono_cases = 0
    mono_ok = True
    while mono_cases < 10:
        big = VertexSet(g, rng.random(g.shape) < 0.92)
        small = big & VertexSet(g, rng.random(g.shape) < 0.92)
        a, b = rng.choice(small.indices, 2, replace=False)
        d_s = o.internal_distance(small, [a], [b], geodesic=False).value
        d_b = o.internal_distance(big, [a], [b], geodesic=False).value
        mono_ok &= d_s >= d_b >= d[a, b]
        mono_cases += 1
    dt = time.perf_counter() - t0
    ok = sym <= 1e-14 and tri <= 1e-12 * d.max() and geo <= 1e-12 and mono_ok and dt < 60
    verdict(2, ok, f"symmetry {sym:.1e}, triangle excess {tri:.1e} (exhaustive 12x12), geodesic recompute "
                   f"{geo:.1e}, internal monotone on 10 nested masks: {mono_ok}", dt)


def test_ac3_weyl_exact(verdict):
    cfg, rep, dt = _run("ac3_weyl.yaml")
    d, m = rep.summary["max_rel_dev"], rep.summary["measure_max_rel_dev"]
    ok = not rep.failures and cfg.pair_budget == 100 and d <= 1e-12 and m <= 1e-12 and dt < 60
    verdict(3, ok, f"100 pairs: max |D_(h+1)/(e^xi D_h) - 1| = {d:.1e}, measure {m:.1e}", dt)


def test_ac4_gff_correctness(verdict):
    cfg, rep, dt = _run("ac4_covariance.yaml")
    s = rep.summary
    ok = (not rep.failures and cfg.sample_count == 10_000 and s["fraction_within_3se"] == 1.0
          and s["slope_relative_error"] <= 0.15 and dt < 600)
    verdict(4, ok, f"20 pairs within 3 SE: {s['fraction_within_3se']:.2f} (max z {s['max_z']:.2f}); circle variance "
                   f"slope {s['variance_slope']:.4f} vs log 2 = {math.log(2):.4f} "
                   f"(rel err {s['slope_relative_error']:.3f})", dt)


def test_ac5_affine(verdict):
    t0 = time.perf_counter()
    g = GridSpec(-1 - 1j, 1 / 256, 512, 512)
    h = sample_field(g, SamplerKind(normalization=Normalization.MEAN_ZERO), 0)
    from lqglab.harness import affine_pair_ratios

    exact = 0.0
    for a, b in [(1, 5 / 256 + 3j / 256), (1j, 0), (-1j, 0)]:
        ratios, mode = affine_pair_ratios(h, a, b, 1 / 64, P, 8, 0, pair_radius=0.3, min_separation=0.1)
        assert mode == "lattice"
        exact = max(exact, max(abs(x - 1) for x in ratios))
    cfg, rep, dt = _run("ac5_affine_a2.yaml")
    row = rep.rows[0]
    med = row["ratios"]["median"]
    ok = (exact <= 1e-12 and not rep.failures and cfg.sample_count >= 200 and cfg.grid.shape == (512, 512)
          and row["mode"] == "lattice" and abs(med - 1) <= 0.10 and dt < 3600)
    verdict(5, ok, f"translation/rotation max |ratio - 1| = {exact:.1e}; a=2 median ratio {med:.4f} "
                   f"(IQR {row['ratios']['iqr']:.4f}) over {row['n']} samples x {cfg.pair_budget} pairs on 512^2",
            time.perf_counter() - t0)


def test_ac6_conformal_trend(verdict):
    lines = []
    ok = True
    total = 0.0
    for name in ("ac6_power2.yaml", "ac6_moebius.yaml"):
        cfg, rep, dt = _run(name)
        total += dt
        s = rep.summary
        ok &= not rep.failures and cfg.sample_count >= 200 and s["p_F_nondecreasing"] and s["iqr_shrinks"]
        cis = ", ".join(f"r={row['r']:g}: {row['p_F']['p']:.3f} [{row['p_F']['wilson95'][0]:.3f}, "
                        f"{row['p_F']['wilson95'][1]:.3f}]" for row in rep.rows)
        iqr = ", ".join(f"{x:.4f}" for x in s["ratio_iqr"])
        lines.append(f"{cfg.map.kind}: P[F_r] {cis}; ratio IQR {iqr}")
    ok &= total < 7200
    verdict(6, ok, " | ".join(lines), total)


def test_ac7_measure(verdict):
    t0 = time.perf_counter()
    g = GridSpec.centered(0, 1.0, 1 / 32)
    ident = 0.0
    for seed in range(5):
        h = sample_field(g, SamplerKind(normalization=Normalization.MEAN_ZERO), seed)
        res = measure_coordinate_change(h, IDENTITY, vertices_in_ball(g, 0.05, 0.3), 0.0625, P)
        ident = max(ident, abs(res.ratio - 1))
    cfg, rep, dt = _run("ac7_measure.yaml")
    s = rep.summary
    ok = ident <= 1e-6 and not rep.failures and s["abs_error"][-1] <= 0.2 and s["improves"] and dt < 1800
    means = ", ".join(f"mesh {row['mesh']:g}: {row['stat']:.4f} +- {row['ratio']['stderr']:.4f}" for row in rep.rows)
    verdict(7, ok, f"identity |ratio - 1| <= {ident:.1e}; a=2 mean ratio {means}", time.perf_counter() - t0)


def test_ac8_ball_volume(verdict):
    _, flat, dt1 = _run("ac8_ball_flat.yaml")
    _, gff, dt2 = _run("ac8_ball_gff.yaml")
    slope0 = flat.rows[0]["stat"]
    row = gff.rows[0]
    ok = not flat.failures and abs(slope0 - 2) <= 0.2 and math.isfinite(row["stat"]) and dt1 + dt2 < 3600
    verdict(8, ok, f"h = 0 slope {slope0:.4f} over one radius decade; gamma = sqrt(8/3) pooled slope "
                   f"{row['stat']:.3f}, 95% CI [{row['ci95'][0]:.3f}, {row['ci95'][1]:.3f}], n = {row['n']} "
                   f"(diagnostic, compare d = 4)", dt1 + dt2)


def test_ac9_annulus_events(verdict):
    t0 = time.perf_counter()
    g = GridSpec(0, 1.0, 128, 128)
    o = MetricOracle(Field.constant(g), P)
    target = 2 * math.pi * 0.75 / 0.25
    ratio = check_condition3(o, 63.5 + 63.5j, 62.0, AnnulusEventParams(alpha=0.75)).detail["ratio"]
    c3_ok = abs(ratio / target - 1) <= 0.10

    gw = GridSpec.centered(0, 2.0, 1 / 32)
    z, r = 1.2, 0.4
    ep = AnnulusEventParams(delta=0.05, big_a=20, pair_budget=6)

    def verdicts(field):
        cc = CoordinateChange(field, Power2(), 0.0625, P, anchor=z, region_radius=2 * r)
        out = {k: v.verdict for k, v in check_event(cc, z, r, ep, seed=1).items()}
        out["F_r"] = cc.sup_difference(z, r, 6, seed=1) <= 0.5
        out["narrow"] = narrow_annulus_length_event(cc.source, z, r, 0.85, s=0.3, big_s=0.6, pair_budget=6,
                                                    field_for_average=field).verdict
        out["bilip"] = bilip_ratio(cc, z, r / 2, 6, seed=1) <= 3.0
        return out

    shift_ok = True
    for seed in range(3):
        h = sample_field(gw, SamplerKind(normalization=Normalization.MEAN_ZERO), seed)
        base = verdicts(h)
        for c in (-2.0, 0.7, 3.1):
            shift_ok &= verdicts(h + c) == base

    cfg, rep, dt = _run("ac9_annulus.yaml")
    probs = rep.summary[f"r={cfg.radii[0]:g}"]["p_narrow"]
    mono = rep.summary[f"r={cfg.radii[0]:g}"]["monotone_in_alpha"]
    ok = c3_ok and shift_ok and mono and not rep.failures and time.perf_counter() - t0 < 3600
    cis = ", ".join(f"alpha={row['alpha']:g}: {row['stat']:.3f} [{row['p_narrow']['wilson95'][0]:.3f}, "
                    f"{row['p_narrow']['wilson95'][1]:.3f}]" for row in rep.rows)
    verdict(9, ok, f"condition-3 ratio {ratio:.3f} vs 2 pi alpha/(1-alpha) = {target:.3f}; verdicts "
                   f"shift-invariant: {shift_ok}; narrow-annulus P {cis} (monotone: {mono}, probs {probs})",
            time.perf_counter() - t0)


def test_ac10_determinism(verdict, tmp_path):
    from lqglab.harness import parse_config, write_report

    t0 = time.perf_counter()
    configs = []
    for name, n in [("ac6_moebius.yaml", 6), ("ac9_annulus.yaml", 6), ("ac3_weyl.yaml", 3), ("ac7_measure.yaml", 4)]:
        raw = load_config(CONFIGS / name).raw
        raw = dict(raw, sample_count=n, base_seed=17)
        if raw["kind"] == "weyl_check":
            raw["pair_budget"] = 10
        if raw["kind"] == "measure_covariance":
            raw["options"] = dict(raw["options"], spacings=raw["options"]["spacings"][:2])
        configs.append(parse_config(raw))
    same = True
    for cfg in configs:
        texts = []
        for k, workers in enumerate((1, 3, 1)):
            rep = run(cfg, workers)
            paths = write_report(rep, tmp_path / f"{cfg.name}_{k}")
            texts.append(paths["records"].read_bytes())
        same &= texts[0] == texts[1] == texts[2]
    dt = time.perf_counter() - t0
    verdict(10, same and dt < 300, f"{len(configs)} configs x (1, 3, 1) workers: per-sample record files "
                                   f"byte-identical: {same}", dt)
