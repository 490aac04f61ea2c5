import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lqglab.gff import (
    BumpKernel,
    Field,
    LqgParams,
    Normalization,
    SamplerKind,
    SamplerTag,
    circle_average,
    field_to_csv,
    heat_kernel_stencil,
    heat_mollify,
    load_field,
    make_rng,
    sample_field,
    sample_whole_plane_proxy,
    sample_zero_boundary,
    smoothed_average,
)
from lqglab.lattice import GeometryError, GridSpec


def dirichlet_covariance(n):
    """2*pi times the inverse of the dense 5-point Dirichlet Laplacian on the (n-2)^2 interior."""
    m = n - 2
    lap = np.zeros((m * m, m * m))
    for i in range(m):
        for j in range(m):
            k = i * m + j
            lap[k, k] = 4
            for di, dj in [(1, 0), (-1, 0), (0, 1), (0, -1)]:
                a, b = i + di, j + dj
                if 0 <= a < m and 0 <= b < m:
                    lap[k, a * m + b] = -1
    return 2 * math.pi * np.linalg.inv(lap)


def test_params():
    p = LqgParams.pure_gravity()
    assert p.xi == p.gamma / 4
    assert p.q == 2 / p.gamma + p.gamma / 2
    assert p.q > 2
    assert math.isclose(p.xi * p.q, 5 / 6, rel_tol=1e-14)
    assert LqgParams(math.sqrt(8 / 3)).d_gamma == 4
    for bad in [(0.0, 3.0), (2.0, 3.0), (1.0, 2.0)]:
        with pytest.raises(ValueError):
            LqgParams(*bad)
    with pytest.raises(ValueError):
        LqgParams(1.0)


def test_zero_boundary_contract():
    g = GridSpec(0, 1.0, 9, 7)
    h = sample_zero_boundary(g, 3)
    v = h.values
    assert np.all(v[0] == 0) and np.all(v[-1] == 0) and np.all(v[:, 0] == 0) and np.all(v[:, -1] == 0)
    assert np.array_equal(v, sample_zero_boundary(g, 3).values)
    assert not np.array_equal(v, sample_zero_boundary(g, 4).values)
    with pytest.raises(GeometryError):
        sample_zero_boundary(GridSpec(0, 1.0, 2, 5), 0)


def test_single_interior_vertex_variance():
    g = GridSpec(0, 1.0, 3, 3)
    n = 100_000
    x = np.array([sample_zero_boundary(g, s).values[1, 1] for s in range(n)])
    target = 2 * math.pi / 4
    se = target * math.sqrt(2 / (n - 1))
    assert abs(x.var(ddof=1) - target) < 3 * se


def test_small_covariance_matches_dense_inverse():
    n, samples = 8, 20_000
    g = GridSpec(0, 1.0, n, n)
    x = np.array([sample_zero_boundary(g, s).values[1:-1, 1:-1].ravel() for s in range(samples)])
    cov = dirichlet_covariance(n)
    emp = x.T @ x / samples
    # SE of a product moment for jointly Gaussian: sqrt((C_uu C_vv + C_uv^2) / n)
    se = np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov ** 2) / samples)
    assert np.mean(np.abs(emp - cov) < 3 * se) > 0.98
    assert np.all(np.abs(emp - cov) < 5 * se)


@pytest.mark.parametrize("norm", list(Normalization))
@pytest.mark.parametrize("tag", [SamplerTag.BIGBOX, SamplerTag.TORUS])
def test_whole_plane_normalization(tag, norm):
    g = GridSpec.centered(0, 3.0, 0.125)
    kind = SamplerKind(tag, normalization=norm)
    h = sample_whole_plane_proxy(g, kind, 11)
    assert np.all(np.isfinite(h.values))
    if norm is Normalization.MEAN_ZERO:
        assert abs(h.values.mean()) < 1e-12
    elif norm is Normalization.CIRCLE:
        assert abs(circle_average(h, 0, 1.0)) < 1e-12
    else:
        assert abs(smoothed_average(h, BumpKernel(), 0, 1.0)) < 1e-12
    assert np.array_equal(h.values, sample_field(g, kind, 11).values)


def test_kinds_differ_with_same_seed():
    g = GridSpec.centered(0, 3.0, 0.125)
    a = sample_field(g, SamplerKind(SamplerTag.BIGBOX), 5)
    b = sample_field(g, SamplerKind(SamplerTag.TORUS), 5)
    assert not np.allclose(a.values, b.values)


def test_whole_plane_errors():
    g = GridSpec.centered(0, 1.0, 0.125)
    with pytest.raises(GeometryError):
        sample_whole_plane_proxy(g, SamplerKind(normalization_radius=2.0), 0)
    with pytest.raises(ValueError):
        sample_whole_plane_proxy(g, SamplerKind(SamplerTag.ZERO_BOUNDARY), 0)
    with pytest.raises(ValueError):
        SamplerKind(SamplerTag.BIGBOX, expansion_factor=1.5)


def test_circle_average_examples():
    g = GridSpec.centered(0, 2.0, 1 / 64)
    assert circle_average(Field.constant(g, 3.25), 0, 1.0) == pytest.approx(3.25, abs=1e-14)
    x = Field.from_function(g, lambda p: p.real)
    assert abs(circle_average(x, 0, 1.0)) < 1e-12
    x2 = Field.from_function(g, lambda p: p.real ** 2)
    # independent quadrature of the same interpolant on a dense circle
    theta = np.linspace(0, 2 * np.pi, 20001)[:-1]
    dense = x2.interpolate(np.exp(1j * theta)).mean()
    got = circle_average(x2, 0, 1.0)
    assert abs(got - 0.5) <= 0.5 * g.spacing ** 2
    assert abs(got - dense) <= 0.5 * g.spacing ** 2
    with pytest.raises(GeometryError):
        circle_average(x, 1.5, 1.0)
    with pytest.raises(GeometryError):
        circle_average(x, 0, g.spacing)


def test_smoothed_average_examples():
    g = GridSpec.centered(0, 3.0, 1 / 32)
    k = BumpKernel()
    assert smoothed_average(Field.constant(g, -1.5), k, 0, 1.0) == pytest.approx(-1.5, abs=1e-14)
    x = Field.from_function(g, lambda p: p.real)
    assert abs(smoothed_average(x, k, 0, 1.0)) < 1e-13
    smooth = lambda p: np.sin(p.real) + np.cos(0.7 * p.imag) + 0.3 * p.real * p.imag
    h = Field.from_function(g, smooth)
    h_half = Field.from_function(g, lambda p: smooth(p / 2))
    assert abs(smoothed_average(h_half, k, 0, 2.0) - smoothed_average(h, k, 0, 1.0)) <= g.spacing
    w = k.weight_vector(g, 0.3, 0.5)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(w[np.abs(g.flat_points() - 0.3) >= 0.5] == 0)
    with pytest.raises(GeometryError):
        smoothed_average(h, k, 2.5, 1.0)


def test_bump_has_unit_integral():
    from scipy import integrate

    k = BumpKernel()
    val, _ = integrate.dblquad(lambda y, x: float(k.profile(complex(x, y))), -1, 1, -1, 1, epsabs=1e-10)
    assert val == pytest.approx(1.0, rel=1e-6)


def test_heat_mollify_examples():
    g = GridSpec.centered(0, 2.0, 1 / 32)
    eps = 0.125
    c = heat_mollify(Field.constant(g, 0.7), eps)
    assert np.all(c.values == 0.7) or np.max(np.abs(c.values - 0.7)) < 1e-15
    lin = heat_mollify(Field.from_function(g, lambda p: p.real), eps)
    win = lin.valid_window
    i0, j0 = win.offset_in(g)
    inner = lin.values[i0:i0 + win.nx, j0:j0 + win.ny]
    assert np.max(np.abs(inner - win.points().real)) < 1e-12
    assert win.x0 == pytest.approx(g.x0 + 4 * eps)


def test_heat_mollify_spike_ratio():
    s, eps = 1 / 64, 1 / 8
    g = GridSpec.centered(0, 1.0, s)
    vals = np.zeros(g.shape)
    k = g.nearest(0)
    vals[g.ij(k)] = 1.0
    out = heat_mollify(Field(g, vals), eps).values
    i, j = g.ij(k)
    ratio = out[i + 8, j] / out[i, j]
    assert abs(ratio / math.exp(-1) - 1) < 0.05
    # the stencil itself, evaluated directly
    st_ = heat_kernel_stencil(s, eps)
    assert st_.sum() == pytest.approx(1.0)
    assert np.allclose(out[i - 32:i + 33, j - 32:j + 33], st_, atol=1e-15)


def test_heat_mollify_requires_eps_above_mesh():
    g = GridSpec.centered(0, 1.0, 0.1)
    with pytest.raises(GeometryError):
        heat_mollify(Field.constant(g), 0.05)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_averages_are_linear(seed, a, b):
    g = GridSpec.centered(0, 2.0, 1 / 16)
    h = sample_field(g, SamplerKind(normalization=Normalization.MEAN_ZERO), seed)
    f = Field.from_function(g, lambda p: a * p.real + b * np.cos(p.imag))
    k = BumpKernel()
    for avg in (lambda u: circle_average(u, 0.1, 0.7), lambda u: smoothed_average(u, k, -0.2, 0.8)):
        assert avg(h + f) == pytest.approx(avg(h) + avg(f), abs=1e-11)
    lhs = heat_mollify(h + f, 0.25).values
    rhs = (heat_mollify(h, 0.25) + heat_mollify(f, 0.25)).values
    assert np.max(np.abs(lhs - rhs)) < 1e-11


def test_serialization_roundtrip(tmp_path):
    g = GridSpec(0.5 - 1j, 0.25, 6, 9)
    h = sample_zero_boundary(g, 1)
    p = tmp_path / "h.lqgf"
    from lqglab.gff import save_field

    save_field(p, h)
    back = load_field(p)
    assert back.grid == g
    assert np.array_equal(back.values, h.values)
    raw = p.read_bytes()
    assert raw[:4] == b"LQGF"
    p.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError):
        load_field(p)
    field_to_csv(tmp_path / "h.csv", h)
    table = np.loadtxt(tmp_path / "h.csv", delimiter=",", skiprows=1)
    assert table.shape == (g.size, 3)


def test_rng_is_philox_and_stable():
    a = make_rng(7).standard_normal(5)
    b = make_rng(7).standard_normal(5)
    assert np.array_equal(a, b)
    assert isinstance(make_rng(0).bit_generator, np.random.Philox)
