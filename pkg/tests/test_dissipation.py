import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from nonlocal_decay.dissipation import (
    EntropySpec,
    dissipation_direct,
    dissipation_Dk,
    dissipation_fast,
    dissipation_gradient,
    entropy_power,
    entropy_quartic,
    entropy_square,
    phi_power,
    relative_entropy_dissipation,
)
from nonlocal_decay.errors import InvalidParameter, Unsupported
from nonlocal_decay.grid import Field, GridSpec
from nonlocal_decay.kernels import (
    ConvKernel,
    GeneralKernel,
    KINDS,
    convolution_matrix,
    make_standard_kernel,
)
from nonlocal_decay.spectral import forward, fractional_derivative, gradient, kernel_symbol


def test_phi_power_examples():
    assert phi_power(-2, 2) == -4
    assert phi_power(0, 0.7) == 0
    assert phi_power(3, 1.5) == pytest.approx(3**1.5, rel=1e-15)


def test_entropy_catalog_is_convex():
    for spec in (entropy_square(), entropy_quartic(), entropy_power(2.5)):
        assert isinstance(spec, EntropySpec)
    with pytest.raises(InvalidParameter):
        EntropySpec(lambda s: -np.asarray(s) ** 2, lambda s: -2 * np.asarray(s), "concave")


def _brute_direct(J, u, p):
    # scalar loop over all pairs, minimal periodic offset
    g, n = u.grid, u.grid.points_per_axis
    v = u.flat
    total = 0.0
    for i in range(v.size):
        for j in range(v.size):
            m = (i - j + n // 2) % n
            total += J.profile[m] * (v[i] - v[j]) * (phi_power(v[i], p - 1) - phi_power(v[j], p - 1))
    return 0.5 * p * g.spacing**2 * total


def test_direct_against_scalar_loop():
    g = GridSpec(1, 4.0, 16)
    J = make_standard_kernel("box", 1.0, 0.5, g)
    u = g.sample(lambda x: np.where(np.abs(x - 0.3) < 1.0, 1.0, 0.0))
    assert dissipation_direct(J, u, 2) == pytest.approx(_brute_direct(J, u, 2), rel=1e-13)
    w = g.sample(lambda x: np.exp(-x * x) * np.cos(2 * x))
    assert dissipation_direct(J, w, 3) == pytest.approx(_brute_direct(J, w, 3), rel=1e-13)


@pytest.mark.parametrize("kind", KINDS)
def test_constant_field_has_no_dissipation(kind):
    g = GridSpec(1, 4.0, 64)
    J = make_standard_kernel(kind, 1.0, 0.7, g)
    u = g.sample(lambda x: np.full_like(x, 3.0))
    assert dissipation_direct(J, u, 3) == 0.0
    assert abs(dissipation_fast(J, u, 3)) < 1e-12
    assert abs(dissipation_Dk(J, u, 1)) < 1e-20
    assert abs(dissipation_gradient(J, u)) < 1e-20


def test_p_below_two_rejected(box1d):
    J, _ = box1d
    u = J.grid.zeros()
    with pytest.raises(InvalidParameter):
        dissipation_direct(J, u, 1.5)
    with pytest.raises(InvalidParameter):
        dissipation_fast(J, u, 1.5)


def test_fast_needs_even_kernel():
    g = GridSpec(1, 4.0, 64)
    prof = np.where((g.offset_axis() > 0) & (g.offset_axis() < 1), 1.0, 0.0)
    with pytest.raises(Unsupported):
        dissipation_fast(ConvKernel(g, prof, 1.0, is_even=False), g.zeros(), 2)


def test_fast_p2_spectral_form(rng):
    g = GridSpec(2, 4.0, 32)
    J = make_standard_kernel("bump", 1.5, 1.0, g)
    u = Field(g, rng.normal(size=g.size))
    s = kernel_symbol(J)
    spectral = 2 * np.sum((s.mass - s.values) * np.abs(forward(u).coefficients) ** 2)
    assert dissipation_fast(J, u, 2) == pytest.approx(spectral, rel=1e-10)


def test_fast_matches_direct_p4(rng):
    g = GridSpec(1, 8.0, 128)
    J = make_standard_kernel("truncated_gaussian", 1.5, 1.0, g)
    u = Field(g, rng.normal(size=128))
    assert dissipation_fast(J, u, 4) == pytest.approx(dissipation_direct(J, u, 4), rel=1e-8)


def test_dk_examples(rng):
    g = GridSpec(1, 8.0, 128)
    J = make_standard_kernel("box", 1.0, 0.5, g)
    u = g.sample(lambda x: np.exp(-x * x) * (1 + 0.3 * np.sin(3 * x)))
    assert dissipation_Dk(J, u, 0) == pytest.approx(dissipation_fast(J, u, 2), rel=1e-10)
    d1 = fractional_derivative(u, 1)
    assert dissipation_Dk(J, u, 1) == pytest.approx(dissipation_direct(J, d1, 2), rel=1e-8)
    assert dissipation_gradient(J, u) == pytest.approx(dissipation_Dk(J, u, 1), rel=1e-10)


def test_gradient_dissipation_against_double_sum(rng):
    g = GridSpec(2, 3.0, 32)
    J = make_standard_kernel("truncated_gaussian", 1.0, 1.0, g)
    u = g.sample(lambda x, y: np.exp(-(x * x + 2 * y * y)) * (1 + x))
    brute = 0.0
    for du in gradient(u):
        brute += dissipation_direct(J, du, 2)
    assert dissipation_gradient(J, u) == pytest.approx(brute, rel=1e-10)


def _mass_conserving_random(g, rng):
    M = rng.uniform(size=(g.size, g.size))
    return GeneralKernel.from_matrix(g, M, "mass_conserving")


def test_relative_entropy_dissipation_constant_f(rng):
    g = GridSpec(1, 2.0, 16)
    K = _mass_conserving_random(g, rng)
    w = Field(g, rng.uniform(0.5, 2.0, size=16))
    assert relative_entropy_dissipation(K, w, g.sample(lambda x: np.full_like(x, 0.7)), entropy_quartic()) == 0.0
    with pytest.raises(InvalidParameter):
        relative_entropy_dissipation(K, w * 0.0, w, entropy_square())


def test_relative_entropy_square_symmetrized(rng):
    # detailed balance: K(x,y) = S(x,y) w(x) with S symmetric balances u_inf = w
    g = GridSpec(1, 2.0, 32)
    S = rng.uniform(size=(32, 32))
    S = S + S.T
    w = rng.uniform(0.5, 2.0, size=32)
    K = GeneralKernel.from_matrix(g, S * w[:, None], "mass_conserving")
    f = Field(g, rng.normal(size=32))
    sym = g.spacing**2 * np.sum(K.matrix * w[None, :] * (f.flat[:, None] - f.flat[None, :]) ** 2)
    assert relative_entropy_dissipation(K, Field(g, w), f, entropy_square()) == pytest.approx(sym, rel=1e-10)


@pytest.mark.parametrize("p", [2, 3, 4.5])
def test_relative_entropy_reduces_to_convolution_case(rng, p):
    g = GridSpec(1, 4.0, 64)
    J = make_standard_kernel("bump", 1.5, 1.0, g)
    f = Field(g, rng.normal(size=64))
    ones = g.sample(lambda x: np.ones_like(x))
    E = relative_entropy_dissipation(convolution_matrix(J), ones, f, entropy_power(p))
    assert E == pytest.approx(dissipation_direct(J, f, p), rel=1e-10)


def test_scaling_law():
    # J_lam(z) = J(z/lam) on the grid stretched by lam: dissipation picks up lam^(2N)
    for dim, n in ((1, 128), (2, 32)):
        g1, g2 = GridSpec(dim, 4.0, n), GridSpec(dim, 8.0, n)
        J1 = make_standard_kernel("bump", 1.0, 1.0, g1)
        J2 = make_standard_kernel("bump", 2.0, 1.0, g2)
        f = lambda *x: np.exp(-sum(xi * xi for xi in x)) * (1 + x[0])  # noqa: E731
        u1 = g1.sample(f)
        u2 = g2.sample(lambda *x: f(*(xi / 2 for xi in x)))
        for p in (2, 3):
            assert dissipation_direct(J2, u2, p) == pytest.approx(2 ** (2 * dim) * dissipation_direct(J1, u1, p), rel=1e-6)


fields = arrays(np.float64, 32, elements=st.floats(-5, 5))


@settings(max_examples=100, deadline=None)
@given(fields, st.sampled_from([2.0, 3.0, 4.0]))
def test_dissipation_nonnegative_and_even(v, p):
    g = GridSpec(1, 2.0, 32)
    J = make_standard_kernel("truncated_gaussian", 0.9, 0.5, g)
    u = Field(g, v)
    d = dissipation_direct(J, u, p)
    scale = 1e-12 * max(1.0, float(np.max(np.abs(v))) ** p)
    assert d >= -scale
    assert dissipation_fast(J, u, p) >= -scale
    assert dissipation_direct(J, -u, p) == pytest.approx(d, rel=1e-12, abs=1e-300)


@settings(max_examples=100, deadline=None)
@given(fields, st.sampled_from([2.0, 3.0, 4.0]))
def test_abs_value_lowers_dissipation(v, p):
    g = GridSpec(1, 2.0, 32)
    J = make_standard_kernel("box", 0.8, 1.0, g)
    u = Field(g, v)
    d = dissipation_direct(J, u, p)
    assert dissipation_direct(J, abs(u), p) <= d * (1 + 1e-12) + 1e-300


def test_pointwise_elementary_bound():
    rng = np.random.default_rng(7)
    a = rng.uniform(-10, 10, 10_000)
    b = rng.uniform(-10, 10, 10_000)
    s = rng.uniform(1.0, 6.0, 10_000) + 1e-9
    lhs = (np.abs(a) - np.abs(b)) * (np.abs(a) ** s - np.abs(b) ** s)
    rhs = (a - b) * (np.sign(a) * np.abs(a) ** s - np.sign(b) * np.abs(b) ** s)
    assert np.all(lhs <= rhs + 1e-12 * np.maximum(np.abs(rhs), 1.0))


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, 16, elements=st.floats(0.1, 3.0)), arrays(np.float64, 16, elements=st.floats(-3, 3)))
def test_relative_entropy_dissipation_nonnegative(w, fv):
    g = GridSpec(1, 2.0, 16)
    rng = np.random.default_rng(3)
    K = _mass_conserving_random(g, rng)
    for spec in (entropy_square(), entropy_quartic(), entropy_power(3.0)):
        assert relative_entropy_dissipation(K, Field(g, w), Field(g, fv), spec) >= 0.0
