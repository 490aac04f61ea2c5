import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lqglab.conformal import (
    IDENTITY,
    Affine,
    Composite,
    CoordinateChange,
    DomainError,
    ExpStrip,
    MapDescriptor,
    Moebius,
    Power2,
    covariance_ratio_sample,
    pullback_field,
    pulled_back_distance,
    rescale_grid,
    rescaled_problem,
    sup_difference_statistic,
)
from lqglab.gff import BumpKernel, Field, LqgParams, Normalization, SamplerKind, sample_field, smoothed_average
from lqglab.lattice import GeometryError, GridSpec
from lqglab.metric import AXIS4

P = LqgParams.pure_gravity()
MAPS = {
    "affine": (Affine(1.5 - 0.7j, 0.3 + 0.2j), lambda rng, n: rng.uniform(-2, 2, n) + 1j * rng.uniform(-2, 2, n)),
    "moebius": (Moebius(1, 0.2, 0.3, 1), lambda rng, n: rng.uniform(-1, 1, n) + 1j * rng.uniform(-1, 1, n)),
    "power2": (Power2(), lambda rng, n: rng.uniform(0.1, 2, n) + 1j * rng.uniform(-2, 2, n)),
    "exp_strip": (ExpStrip(), lambda rng, n: rng.uniform(-2, 2, n) + 1j * rng.uniform(-3, 3, n)),
}


def smooth_field(grid):
    return Field.from_function(grid, lambda p: np.sin(1.3 * p.real) * np.cos(0.9 * p.imag) + 0.2 * p.real)


def test_closed_form_examples():
    a = Affine(2, 0)
    assert a.evaluate(1) == 2 and a.inverse(2) == 1
    assert a.inverse_derivative_log_abs(0.3 - 4j) == pytest.approx(math.log(0.5), abs=1e-15)
    m = Moebius(1, 0, 0, 1)
    z = np.array([0.1 + 0.2j, -3 + 1j])
    assert np.array_equal(m.evaluate(z), z)
    assert np.all(m.inverse_derivative_log_abs(z) == 0)
    p = Power2()
    assert p.evaluate(1 + 1j) == pytest.approx(2j)
    assert p.inverse(2j) == pytest.approx(1 + 1j)
    assert p.inverse_derivative_log_abs(2j) == pytest.approx(-math.log(2 * math.sqrt(2)), abs=1e-14)


def test_domain_errors():
    with pytest.raises(DomainError):
        Power2().evaluate(-1 + 0j)
    with pytest.raises(DomainError):
        Power2().inverse(-4 + 0j)
    with pytest.raises(DomainError):
        Moebius(1, 0, 1, 1).evaluate(-1)
    with pytest.raises(DomainError):
        ExpStrip().evaluate(4j)
    with pytest.raises(ValueError):
        Affine(0, 1)
    with pytest.raises(ValueError):
        Moebius(1, 2, 2, 4)


@pytest.mark.parametrize("name", list(MAPS))
def test_chain_rule_and_inverse(name):
    phi, draw = MAPS[name]
    z = draw(np.random.default_rng(1), 100)
    w = phi.evaluate(z)
    assert np.max(np.abs(phi.inverse(w) - z)) < 1e-10
    lhs = phi.inverse_derivative_log_abs(w) + np.log(np.abs(phi.derivative(z)))
    assert np.max(np.abs(lhs)) < 1e-10
    # analytic derivative agrees with a central difference (test-side check only)
    hstep = 1e-6
    fd = (phi.evaluate(z + hstep) - phi.evaluate(z - hstep)) / (2 * hstep)
    assert np.max(np.abs(fd - phi.derivative(z)) / np.abs(fd)) < 1e-7


@pytest.mark.parametrize("name", list(MAPS))
def test_descriptor_roundtrip(name):
    phi, draw = MAPS[name]
    back = MapDescriptor.from_dict(phi.to_dict())
    z = draw(np.random.default_rng(2), 10)
    assert np.allclose(back.evaluate(z), phi.evaluate(z), rtol=0, atol=0)
    comp = Composite(Affine(0.5, 1), phi)
    back = MapDescriptor.from_dict(comp.to_dict())
    assert np.array_equal(back.evaluate(z), comp.evaluate(z))


def test_pullback_examples():
    g = GridSpec.centered(0, 2.0, 1 / 16)
    h = smooth_field(g)
    inner = GridSpec.centered(0, 1.5, 1 / 16)
    pb = pullback_field(h, IDENTITY, inner, P)
    assert np.max(np.abs(pb.values - h.restrict(inner).values)) < 1e-9
    assert np.all(pb.log_derivative == 0)
    a = 2.5
    pb = pullback_field(Field.constant(g), Affine(a, 0), GridSpec.centered(0, 4.0, 1 / 16), P)
    assert np.allclose(pb.values, -P.q * math.log(a), rtol=0, atol=1e-14)
    tg = GridSpec(0.5 - 1j, 1 / 16, 24, 32)
    src = GridSpec(0, 1 / 16, 40, 40).translated(-0.0 - 1.25j)
    pb = pullback_field(Field.constant(src), Power2(), tg, P)
    rng = np.random.default_rng(0)
    for k in rng.choice(tg.size, 10, replace=False):
        w = tg.position(k)
        assert pb.values.ravel()[k] == pytest.approx(-P.q * math.log(2 * abs(np.sqrt(w))), abs=1e-12)
    with pytest.raises(GeometryError):
        pullback_field(h, Affine(0.1, 0), inner, P)


def test_group_consistency():
    g = GridSpec.centered(0, 3.0, 1 / 32)
    h = smooth_field(g)
    phi = Moebius(1, 0.1, 0.15, 1)
    psi = Affine(1.2 * np.exp(0.3j), 0.1)
    mid = GridSpec.centered(0, 1.5, 1 / 32)
    tgt = GridSpec.centered(0.1, 0.8, 1 / 32)
    step = pullback_field(pullback_field(h, phi, mid, P).as_field(), psi, tgt, P)
    direct = pullback_field(h, Composite(phi, psi), tgt, P)
    assert np.max(np.abs(step.values - direct.values)) < 2e-3
    # log terms add exactly
    w = tgt.flat_points()
    expect = phi.inverse_derivative_log_abs(psi.inverse(w)) + psi.inverse_derivative_log_abs(w)
    assert np.allclose(direct.log_derivative.ravel(), expect, atol=1e-13)


def test_pulled_back_distance_examples():
    g = GridSpec.centered(0, 3.0, 1 / 16)
    h = smooth_field(g)
    eps = 0.125
    inner = GridSpec.centered(0, 2.0, 1 / 16)
    pb = pullback_field(h, IDENTITY, inner, P)
    d_id = pulled_back_distance(pb, eps, P, -0.5 + 0.25j, 0.75 - 0.5j)
    from lqglab.gff import heat_mollify
    from lqglab.metric import MetricOracle

    ref = MetricOracle(heat_mollify(h.restrict(inner), eps), P)
    d_ref = ref.distance([inner.nearest(-0.5 + 0.25j)], [inner.nearest(0.75 - 0.5j)]).value
    assert d_id == pytest.approx(d_ref, rel=1e-6)
    c = 0.6
    pb_c = pullback_field(h + c, IDENTITY, inner, P)
    assert pulled_back_distance(pb_c, eps, P, -0.5 + 0.25j, 0.75 - 0.5j) == pytest.approx(
        math.exp(P.xi * c) * d_id, rel=1e-12)


def test_affine_fixed_eps_artifact():
    # h = 0, phi(z) = a z: the pulled-back field is the constant -Q log a, the target mesh is the
    # source mesh, so the raw distance picks up a^{-xi Q} from the weight and a from the length.
    s, a = 1 / 16, 2.0
    g = GridSpec.centered(0, 2.0, s)
    tgt = GridSpec.centered(0, 3.0, s)
    pb = pullback_field(Field.constant(g), Affine(a, 0), tgt, P)
    z, w = -0.5 + 0j, 0.5 + 0j
    d = pulled_back_distance(pb, 0.125, P, z, w, neighbor_scheme=AXIS4)
    assert d == pytest.approx(a ** (1 - P.xi * P.q) * abs(z - w), rel=1e-12)


def test_coordinate_change_normalization_makes_affine_exact():
    s = 1 / 16
    g = GridSpec.centered(0, 3.0, s)
    h = Field.constant(g, 0.4)
    cc = CoordinateChange(h, Affine(2, 0), 0.125, P, anchor=0, region_radius=1.0)
    u, v = g.nearest(-0.5), g.nearest(0.5)
    assert cc.d_phi([u], [v]) == pytest.approx(cc.d([u], [v]), rel=1e-12)


def _gff(grid, seed):
    return sample_field(grid, SamplerKind(normalization=Normalization.MEAN_ZERO), seed)


def test_identity_ratio_and_statistic():
    g = GridSpec.centered(0, 2.0, 1 / 32)
    h = _gff(g, 3)
    r = covariance_ratio_sample(h, IDENTITY, 0, 0.5, 0.0625, P, 12, 0.3)
    assert np.allclose(r, 1.0, rtol=1e-9, atol=0)
    assert covariance_ratio_sample(h, IDENTITY, 0, 0.5, 0.0625, P, 0, 0.3) == []
    s = sup_difference_statistic(h, IDENTITY, 0, 0.5, 0.0625, P, BumpKernel(), 12)
    assert s < 1e-9


def test_normalization_invariance_exact():
    g = GridSpec.centered(0, 2.0, 1 / 32)
    h = _gff(g, 4)
    phi = Moebius(1, 0.05, 0.1, 1)
    base = covariance_ratio_sample(h, phi, 0.1, 0.4, 0.0625, P, 10, 0.3, seed=1)
    shifted = covariance_ratio_sample(h + 1.7, phi, 0.1, 0.4, 0.0625, P, 10, 0.3, seed=1)
    assert np.allclose(base, shifted, rtol=1e-12, atol=0)
    k = BumpKernel()
    a = sup_difference_statistic(h, phi, 0.1, 0.4, 0.0625, P, k, 10, seed=1)
    b = sup_difference_statistic(h - 0.9, phi, 0.1, 0.4, 0.0625, P, k, 10, seed=1)
    assert a == pytest.approx(b, rel=1e-12)


def test_moebius_near_identity_iqr_shrinks():
    phi = Moebius(1, 1e-3, 1e-3, 1)
    iqr = []
    for r in (0.4, 0.2, 0.1):
        s = r / 16
        g = GridSpec.centered(0, 3 * r, s)
        ratios = []
        for seed in range(6):
            ratios += covariance_ratio_sample(_gff(g, seed), phi, 0, r, 4 * s, P, 8, 0.3, seed=seed)
        q75, q25 = np.percentile(ratios, [75, 25])
        iqr.append(q75 - q25)
    assert iqr[0] >= iqr[1] >= iqr[2]


def test_rescaling_identity_deterministic():
    s = 1 / 32
    g = GridSpec.centered(0, 2.0, s)
    h = Field.from_function(g, lambda p: np.sin(2 * p.real) + 0.5 * np.cos(3 * p.imag) + 0.3 * p.real * p.imag)
    phi = Moebius(1, 0.1, 0.2, 1)
    z, r, eps = 0.1 + 0.05j, 0.5, 0.125
    tgt = GridSpec(g.origin + s * round((phi.evaluate(z) - 1.2 - 1.2j - g.origin).real / s)
                   + 1j * s * round((phi.evaluate(z) - 1.2 - 1.2j - g.origin).imag / s), s, 77, 77)
    cc = CoordinateChange(h, phi, eps, P, anchor=z, target_grid=tgt)
    ht, phit, c = rescaled_problem(h, phi, z, r)
    cct = CoordinateChange(ht, phit, eps / r, P, anchor=0, target_grid=rescale_grid(tgt, z, r))
    rng = np.random.default_rng(0)
    k = 0
    for _ in range(40):
        u, v = z + 0.4 * (rng.uniform(-1, 1, 2) + 1j * rng.uniform(-1, 1, 2))
        iu, iv = g.nearest(u), g.nearest(v)
        ju, jv = ht.grid.nearest((g.position(iu) - z) / r), ht.grid.nearest((g.position(iv) - z) / r)
        assert (ju, jv) == (iu, iv)
        lhs = cct.d_phi([ju], [jv])
        rhs = r ** (-P.xi * P.q) * math.exp(-P.xi * c) * cc.d_phi([iu], [iv])
        if math.isfinite(rhs):
            assert lhs == pytest.approx(rhs, rel=1e-9)
            k += 1
    assert k >= 30
    assert c == pytest.approx(smoothed_average(h, BumpKernel(), z, r))


@settings(max_examples=15, deadline=None)
@given(re=st.floats(0.2, 3), im=st.floats(-3, 3), b=st.complex_numbers(max_magnitude=2))
def test_affine_group_property(re, im, b):
    a = complex(re, im)
    f = Affine(a, b)
    comp = Composite(f, Affine(1 / a, -b / a))
    z = np.linspace(-1, 1, 7) + 0.3j
    assert np.allclose(comp.evaluate(z), z, atol=1e-12)
    assert np.allclose(comp.inverse_derivative_log_abs(z), 0, atol=1e-12)
