import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from mixeig.frac_kernel import (
    FracParams, analytic_diagonal, apply_frac, build_weights, exterior_integral, frac_matrix,
    kernel_constant, _hat_weights_1d,
)
from mixeig.grid import DomainSpec, build_grid


def bump(x):
    return np.where(np.abs(x) < 1, (1 - x * x) ** 2, 0.0)


def frac_oracle_1d(f, x, s, breaks):
    """C int_0^inf (2 f(x) - f(x+y) - f(x-y)) y^{-1-2s} dy by adaptive quadrature."""
    C = kernel_constant(1, s)
    g = lambda y: (2 * f(x) - f(x + y) - f(x - y)) * y ** (-1 - 2 * s)
    pts = sorted(b for b in breaks if b > 0)
    total, lo = 0.0, 0.0
    for b in pts + [np.inf]:
        val, _ = integrate.quad(g, lo, b, limit=500, epsabs=1e-13, epsrel=1e-12)
        total, lo = total + val, b
    return C * total


def test_kernel_constant_closed_forms():
    # Gamma(1) = 1, Gamma(1/2) = sqrt(pi)
    assert kernel_constant(1, 0.5) == pytest.approx(1 / math.pi, rel=1e-12)
    # Gamma(3/4) cancels
    assert kernel_constant(1, 0.25) == pytest.approx(math.sqrt(2) / (4 * math.sqrt(math.pi)), rel=1e-12)
    # N = 2, s = 1/2: pi^{-1} * 2 * (1/2) * Gamma(3/2) / Gamma(1/2) = 1/(2 pi)
    assert kernel_constant(2, 0.5) == pytest.approx(1 / (2 * math.pi), rel=1e-12)
    assert kernel_constant(1, 0.5) == pytest.approx(0.31830989, abs=1e-8)
    assert kernel_constant(1, 0.25) == pytest.approx(0.19947114, abs=1e-8)


def test_kernel_constant_small_s_linear():
    # C_{1,s} / s -> Gamma(1/2) / (sqrt(pi) Gamma(1)) = 1
    assert kernel_constant(1, 1e-4) / 1e-4 == pytest.approx(1.0, rel=1e-3)
    with pytest.raises(ValueError):
        kernel_constant(1, 1.0)
    with pytest.raises(ValueError):
        kernel_constant(3, 0.5)


def test_tail_coefficient_R10():
    g = build_grid(DomainSpec.interval(0, 1, 9))
    t = build_weights(g, FracParams(0.5, tail_radius_factor=10.0))
    assert t.radius == pytest.approx(10.0)
    assert t.tail_coefficient == pytest.approx(2 / (10 * math.pi), rel=1e-12)
    assert t.tail_coefficient == pytest.approx(0.063662, abs=1e-6)


@pytest.mark.parametrize("s", [0.1, 0.3, 0.7, 0.9])
def test_hat_weights_match_closed_form(s):
    # closed-form antiderivatives, valid away from s = 1/2
    p = -1 - 2 * s
    K = 60
    w = _hat_weights_1d(s, K)
    for k in range(2, K):
        lo, hi = k - 1.0, k + 1.0
        left = (k ** (p + 2) - lo ** (p + 2)) / (p + 2) - lo * (k ** (p + 1) - lo ** (p + 1)) / (p + 1)
        right = hi * (hi ** (p + 1) - k ** (p + 1)) / (p + 1) - (hi ** (p + 2) - k ** (p + 2)) / (p + 2)
        assert w[k - 1] == pytest.approx(left + right, rel=1e-9)


@pytest.mark.parametrize("s", [0.2, 0.5, 0.8])
def test_weights_positive_symmetric_and_diagonal(s):
    g = build_grid(DomainSpec.interval(0, 1, 40))
    t = build_weights(g, FracParams(s))
    assert np.all(t.weights > 0)
    k = t.offsets[:, 0]
    order = np.argsort(k)
    np.testing.assert_array_equal(t.weights[order], t.weights[order][::-1])
    assert t.tail_coefficient > 0
    assert t.diagonal == pytest.approx(analytic_diagonal(1, s, g.h), rel=1e-11)


def test_zero_and_linear():
    g = build_grid(DomainSpec.interval(-1, 1, 50))
    t = build_weights(g, FracParams(0.3))
    assert np.array_equal(apply_frac(np.zeros(50), g, t), np.zeros(50))
    rng = np.random.default_rng(0)
    u, v = rng.standard_normal(50), rng.standard_normal(50)
    np.testing.assert_allclose(apply_frac(2 * u - 3 * v, g, t),
                               2 * apply_frac(u, g, t) - 3 * apply_frac(v, g, t), atol=1e-9)
    with pytest.raises(ValueError):
        apply_frac(np.zeros(49), g, t)


@pytest.mark.parametrize("dim", [1, 2])
def test_matrix_matches_apply_and_is_symmetric(dim):
    spec = DomainSpec.interval(0, 1, 30) if dim == 1 else DomainSpec.box((0, 1), (0, 1), 9)
    g = build_grid(spec)
    t = build_weights(g, FracParams(0.35))
    M = frac_matrix(g, t)
    assert np.array_equal(M, M.T)
    u = np.random.default_rng(1).standard_normal(g.interior_count)
    np.testing.assert_allclose(M @ u, apply_frac(u, g, t), rtol=1e-12, atol=1e-9)
    off = M - np.diag(np.diag(M))
    assert np.all(off <= 0)


def test_bump_matches_quadrature_oracle_s03():
    g = build_grid(DomainSpec.interval(-1, 1, 400))
    t = build_weights(g, FracParams(0.3))
    i = int(np.argmin(np.abs(g.x)))
    val = apply_frac(bump(g.x), g, t)[i]
    x = g.x[i]
    ref = frac_oracle_1d(lambda z: float(bump(np.array(z))), x, 0.3, [1 - x, 1 + x])
    assert abs(val - ref) / abs(ref) < 1e-3


def test_2d_weights():
    g = build_grid(DomainSpec.box((0, 1), (0, 1), 8))
    t = build_weights(g, FracParams(0.4))
    assert np.all(t.weights > 0)
    W = t.kernel
    np.testing.assert_array_equal(W, W[::-1, ::-1])
    np.testing.assert_array_equal(W, W.T)
    assert t.diagonal == pytest.approx(analytic_diagonal(2, 0.4, g.h), rel=1e-10)


def test_square_exterior_integral_oracle():
    # exterior of [-1,1]^2 = {|x|>1} + {|y|>1} - {|x|>1, |y|>1}, i.e. 8a - 4b with
    # a = int_{x>1, y>0} (strip, Beta function) and b = int_{x>1, y>1} (corner)
    s = 0.4
    a = math.sqrt(math.pi) * math.gamma(s + 0.5) / (2 * math.gamma(s + 1)) / (2 * s)
    # corner with x = 1/u, y = 1/v
    b, _ = integrate.dblquad(lambda v, u: (u * v) ** (2 * s) / (u * u + v * v) ** (1 + s),
                             0, 1, 0, 1, epsabs=1e-13, epsrel=1e-10)
    assert exterior_integral(2, s, 1.0) == pytest.approx(8 * a - 4 * b, rel=1e-8)
    assert exterior_integral(2, s, 2.0) == pytest.approx((8 * a - 4 * b) * 2 ** (-2 * s), rel=1e-8)


def test_s_continuity_across_half():
    g = build_grid(DomainSpec.interval(0, 1, 60))
    u = np.sin(np.pi * g.x)
    lo = apply_frac(u, g, build_weights(g, FracParams(0.5 - 1e-7)))
    mid = apply_frac(u, g, build_weights(g, FracParams(0.5)))
    hi = apply_frac(u, g, build_weights(g, FracParams(0.5 + 1e-7)))
    assert np.max(np.abs(lo - mid)) < 1e-4 * np.max(np.abs(mid))
    assert np.max(np.abs(hi - mid)) < 1e-4 * np.max(np.abs(mid))


@settings(max_examples=30, deadline=None)
@given(s=st.floats(0.05, 0.95), seed=st.integers(0, 2**32 - 1), n=st.integers(5, 60))
def test_positivity_at_strict_maximum(s, seed, n):
    g = build_grid(DomainSpec.interval(0, 1, n))
    t = build_weights(g, FracParams(s))
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1, 1, n)
    i = int(rng.integers(n))
    u[i] = max(np.max(u), 0.0) + 0.1
    assert apply_frac(u, g, t)[i] >= 0


def test_csv_header(tmp_path):
    g = build_grid(DomainSpec.interval(0, 1, 5))
    p = build_weights(g, FracParams(0.25)).to_csv(tmp_path / "w.csv")
    lines = p.read_text().splitlines()
    assert lines[0].startswith("# s=0.25")
    assert "tail_coefficient" in lines[0]
