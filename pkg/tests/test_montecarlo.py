import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from mixeig import montecarlo as MC
from mixeig.grid import DomainSpec
from mixeig.operator import DriftField

R = np.random.default_rng


def ecf(x, k):
    return float(np.mean(np.cos(k * x)))


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.4, 1.9])
def test_stable_characteristic_function(alpha):
    x = MC.stable_sample(alpha, 1.0, R(1), 1_000_000)
    for k in (0.3, 1.0, 2.5):
        assert ecf(x, k) == pytest.approx(math.exp(-k ** alpha), abs=4e-3)


def test_stable_scale_and_symmetry():
    alpha, c = 1.3, 0.7
    x = MC.stable_sample(alpha, c, R(2), 1_000_000)
    assert ecf(x, 1.0) == pytest.approx(math.exp(-c ** alpha), abs=4e-3)
    assert abs(np.mean(np.sin(x))) < 4e-3
    assert abs(np.mean(x > 0) - 0.5) < 3e-3


@pytest.mark.parametrize("alpha", [0.6, 1.2, 1.6])
def test_tail_exponent_regression(alpha):
    x = np.abs(MC.stable_sample(alpha, 1.0, R(3), 1_000_000))
    # exact asymptote P(|X| > t) ~ (2/pi) Gamma(alpha) sin(pi alpha / 2) t^-alpha
    qs = np.array([1e-2, 3e-3, 1e-3, 3e-4])
    t = np.quantile(x, 1 - qs)
    slope = np.polyfit(np.log(t), np.log(qs), 1)[0]
    assert -slope == pytest.approx(alpha, abs=0.08)
    amp = 2 / math.pi * special.gamma(alpha) * math.sin(math.pi * alpha / 2)
    assert np.mean(x > t[-2]) == pytest.approx(amp * t[-2] ** -alpha, rel=0.1)


def test_positive_stable_laplace():
    for beta in (0.25, 0.5, 0.8):
        a = MC.positive_stable(beta, R(4), 500_000)
        assert np.all(a > 0)
        for u in (0.5, 1.0, 2.0):
            assert np.mean(np.exp(-u * a)) == pytest.approx(math.exp(-u ** beta), abs=3e-3)


def test_isotropic_jumps_2d():
    alpha, dt = 1.2, 0.3
    J = MC.isotropic_jumps(alpha, dt, R(5), 500_000, 2)
    for k in ([1.0, 0.0], [0.0, 1.5], [1.0, 1.0]):
        k = np.array(k)
        got = np.mean(np.cos(J @ k))
        assert got == pytest.approx(math.exp(-dt * np.linalg.norm(k) ** alpha), abs=4e-3)


def test_stable_increment_and_errors():
    a = MC.stable_increment(1.5, 1.0, R(6))
    b = MC.stable_increment(1.5, 1.0, R(6))
    assert isinstance(a, float) and a == b
    for bad in (0.0, 2.0, -1.0, 2.5):
        with pytest.raises(ValueError):
            MC.stable_sample(bad, 1.0, R(0), 3)
    with pytest.raises(ValueError):
        MC.positive_stable(1.0, R(0), 3)


def test_path_params_validation():
    assert MC.PathParams(1e-3, 1000, 1.0).steps == 1000
    for kw in ({"dt": 0.0}, {"n_paths": 999}, {"dt": 0.1}, {"dt": 0.0003},
               {"seed": -1}, {"horizon": -1.0}):
        args = {"dt": 1e-3, "n_paths": 1000, "horizon": 1.0, **kw}
        with pytest.raises(ValueError):
            MC.PathParams(**args)


def test_chunk_sizes():
    assert sum(MC.chunk_sizes(12345)) == 12345
    assert len(MC.chunk_sizes(1000)) == MC.MIN_GROUPS
    assert len(MC.chunk_sizes(200_000)) == 40


DOM = DomainSpec.interval(-1, 1, 10)


@pytest.fixture(scope="module")
def brownian():
    return MC.simulate_survival(DOM, None, DriftField.zero(), MC.PathParams(5e-4, 20_000, 2.0, seed=7))


def test_brownian_survival_matches_sine_mode(brownian):
    c = brownian
    assert np.all(np.diff(c.survivors) <= 0)
    assert c.survivors[0] == c.n_paths
    # discrete monitoring biases the rate slightly low
    assert c.lambda_hat == pytest.approx((math.pi / 2) ** 2, rel=0.08)
    assert 0 < c.ci_half_width < 0.1 * c.lambda_hat
    lo, hi = c.fit_window
    assert c.fraction[np.searchsorted(c.times, lo)] <= 0.5


def test_thread_independence():
    p = MC.PathParams(1e-3, 4000, 0.5, seed=99)
    a = MC.simulate_survival(DOM, 0.5, DriftField.constant(1.0), p, threads=1)
    b = MC.simulate_survival(DOM, 0.5, DriftField.constant(1.0), p, threads=4)
    assert np.array_equal(a.survivors, b.survivors)
    assert a.lambda_hat == b.lambda_hat and a.ci_half_width == b.ci_half_width
    c = MC.simulate_survival(DOM, 0.5, DriftField.constant(1.0), MC.PathParams(1e-3, 4000, 0.5, seed=100))
    assert not np.array_equal(a.survivors, c.survivors)


def test_drift_and_domain_size_monotonicity():
    p = MC.PathParams(1e-3, 6000, 1.5, seed=3)
    base = MC.simulate_survival(DOM, 0.5, DriftField.zero(), p)
    pushed = MC.simulate_survival(DOM, 0.5, DriftField.constant(3.0), p)
    assert pushed.lambda_hat > base.lambda_hat
    wide = MC.simulate_survival(DomainSpec.interval(-2, 2, 10), 0.5, DriftField.zero(),
                                MC.PathParams(1e-3, 6000, 3.0, seed=3))
    assert wide.median_survival_time() > base.median_survival_time()


def test_insufficient_statistics_carries_curve():
    with pytest.raises(MC.InsufficientStatistics) as ei:
        MC.simulate_survival(DOM, None, DriftField.zero(), MC.PathParams(1e-3, 1000, 0.1))
    assert ei.value.curve.survivors[0] == 1000


def test_simulate_argument_checks():
    p = MC.PathParams(1e-3, 1000, 0.5)
    with pytest.raises(ValueError):
        MC.simulate_survival(DOM, 1.0, DriftField.zero(), p)
    with pytest.raises(ValueError):
        MC.simulate_survival(DOM, 0.5, DriftField.constant([1.0, 0.0], 2), p)


def test_2d_box_runs():
    box = DomainSpec.box((-1, 1), (-1, 1), 4)
    c = MC.simulate_survival(box, 0.5, DriftField.zero(2), MC.PathParams(1e-3, 4000, 1.5, seed=2))
    assert c.lambda_hat > 2 * (math.pi / 2) ** 2 * 0.9


def test_csv_and_json(tmp_path, brownian):
    brownian.to_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "t,survivors,fraction" and len(lines) == brownian.times.size + 1
    import json
    d = json.loads(brownian.to_json(tmp_path / "s.json").read_text())
    assert d["lambda_hat"] == brownian.lambda_hat


def test_dt_refinement_within_ci():
    p1 = MC.PathParams(2e-4, 20_000, 1.5, seed=21)
    p2 = MC.PathParams(1e-4, 20_000, 1.5, seed=21)
    a = MC.simulate_survival(DOM, 0.5, DriftField.zero(), p1)
    b = MC.simulate_survival(DOM, 0.5, DriftField.zero(), p2)
    assert abs(a.lambda_hat - b.lambda_hat) < b.ci_half_width


@given(seed=st.integers(0, 2 ** 32), s=st.floats(0.1, 0.9), c=st.floats(-3, 3))
@settings(max_examples=10, deadline=None)
def test_survivors_nonincreasing(seed, s, c):
    G = MC._run_group(DOM, s, DriftField.constant(c), MC.PathParams(1e-2, 1000, 1.0, seed), True,
                      np.random.SeedSequence(seed), 500)
    assert G[0] == 500 and np.all(np.diff(G) <= 0)
