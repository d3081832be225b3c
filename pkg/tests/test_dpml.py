import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from dpbench.data import CONTINUOUS, ColumnMeta, DataError, Dataset, split, synth_regression
from dpbench.dpml import (
    DEFAULT_ORDERS,
    CalibrationError,
    DivergenceError,
    DpSgdParams,
    LinearModel,
    RdpCurve,
    SgdConfig,
    calibrate_sigma,
    calibrated_params,
    clip_l2,
    dp_sgd_train,
    epsilon_for,
    np_sgd_train,
    per_sample_gradient,
    rdp_subsampled_gaussian,
    rdp_to_epsilon,
    schedule,
    test_rmse as rmse_on,
)
from dpbench.dpml.sgd import random_streams
from dpbench.mechanisms import PrivacyParams

W = [1.0, -2.0, 0.5, 3.0]


# ---- gradients and clipping -------------------------------------------------


def test_gradient_zero_residual():
    m = LinearModel(np.array([1.0, 2.0]), 0.5)
    assert np.array_equal(per_sample_gradient(m, [1.0, 1.0], 3.5), np.zeros(3))


def test_gradient_hand_value():
    m = LinearModel(np.zeros(2), 0.0)
    np.testing.assert_array_equal(per_sample_gradient(m, [1.0, 0.0], 2.0), [-2.0, 0.0, -2.0])


def test_gradient_dimension_mismatch():
    with pytest.raises(ValueError):
        per_sample_gradient(LinearModel(np.zeros(2), 0.0), [1.0], 0.0)


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(0)
    h = 1e-5
    for _ in range(100):
        p = int(rng.integers(1, 6))
        theta = rng.normal(size=p + 1)
        x, y = rng.normal(size=p), float(rng.normal())

        def loss(t):
            return 0.5 * (x @ t[:-1] + t[-1] - y) ** 2

        fd = np.array([(loss(theta + h * e) - loss(theta - h * e)) / (2 * h) for e in np.eye(p + 1)])
        g = per_sample_gradient(LinearModel(theta[:-1], float(theta[-1])), x, y)
        assert np.linalg.norm(g - fd) <= 1e-6 * max(1.0, np.linalg.norm(g))


def test_clip_small_unchanged():
    np.testing.assert_array_equal(clip_l2([0.3, 0.4], 1.0), [0.3, 0.4])
    np.testing.assert_array_equal(clip_l2([0.0, 0.0], 1.0), [0.0, 0.0])


def test_clip_norm_five():
    np.testing.assert_allclose(clip_l2([3.0, 4.0], 1.0), [0.6, 0.8])


def test_clip_infinite_norm_is_identity():
    g = np.array([1e6, -3.0])
    assert np.array_equal(clip_l2(g, math.inf), g)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=8), st.floats(1e-3, 1e3))
def test_clip_norm_identity(g, c):
    out = clip_l2(g, c)
    assert np.linalg.norm(out) == pytest.approx(min(np.linalg.norm(g), c), rel=1e-9, abs=1e-12)


def test_clipped_sum_sensitivity_bruteforce():
    rng = np.random.default_rng(1)
    c = 1.0
    for _ in range(200):
        b = int(rng.integers(1, 11))
        grads = rng.normal(scale=3.0, size=(b, 3))
        clipped = np.array([clip_l2(g, c) for g in grads])
        total = clipped.sum(axis=0)
        replacement = clip_l2(rng.normal(scale=3.0, size=3), c)
        for i in range(b):
            removed = total - clipped[i]
            assert np.linalg.norm(total - removed) <= c + 1e-12
            assert np.linalg.norm(total - (removed + replacement)) <= 2 * c + 1e-12


# ---- training ---------------------------------------------------------------


@pytest.fixture(scope="module")
def noisy_train_test():
    return split(synth_regression(5000, 4, W, 0.1, seed=3), 0.8, seed=4)


def test_config_validation():
    with pytest.raises(ValueError):
        SgdConfig(learning_rate=0)
    with pytest.raises(ValueError):
        SgdConfig(epochs=0)
    with pytest.raises(ValueError):
        DpSgdParams(clip_norm=0)
    with pytest.raises(ValueError):
        DpSgdParams(clip_norm=math.inf, noise_multiplier=1.0)


def test_np_sgd_recovers_noiseless_weights():
    d = synth_regression(2000, 4, W, 0.0, seed=5)
    m = np_sgd_train(d, SgdConfig(seed=1))
    assert np.linalg.norm(m.weights - W) < 0.05


def test_np_sgd_close_to_least_squares_oracle():
    d = synth_regression(5000, 4, W, 0.1, seed=6)
    x = np.column_stack([d.column(f"x{j}") for j in range(4)] + [np.ones(d.size)])
    ols, *_ = np.linalg.lstsq(x, d.column("y"), rcond=None)
    m = np_sgd_train(d, SgdConfig(seed=2))
    assert np.linalg.norm(m.weights - ols[:4]) < 0.05
    assert np.linalg.norm(m.weights - W) < 0.05


def test_np_sgd_loss_decreases():
    d = synth_regression(1000, 3, [0.5, -0.5, 1.0], 0.2, seed=7)
    hist = []
    np_sgd_train(d, SgdConfig(learning_rate=0.01, epochs=5), history=hist)
    assert len(hist) == 6
    assert hist[-1] < hist[0]


def test_np_sgd_deterministic():
    d = synth_regression(500, 2, [1.0, 1.0], 0.1, seed=8)
    assert np_sgd_train(d, SgdConfig(seed=3)) == np_sgd_train(d, SgdConfig(seed=3))
    assert np_sgd_train(d, SgdConfig(seed=3)) != np_sgd_train(d, SgdConfig(seed=4))


def test_dp_sgd_disabled_equals_np_bitwise(noisy_train_test):
    train, _ = noisy_train_test
    cfg = SgdConfig(seed=11)
    a = dp_sgd_train(train, cfg, DpSgdParams(clip_norm=math.inf, noise_multiplier=0.0))
    b = np_sgd_train(train, cfg)
    assert a.bias == b.bias
    assert a.weights.tobytes() == b.weights.tobytes()


def test_dp_sgd_deterministic(noisy_train_test):
    train, _ = noisy_train_test
    dp = DpSgdParams(1.0, 2.0)
    assert dp_sgd_train(train, SgdConfig(seed=1), dp) == dp_sgd_train(train, SgdConfig(seed=1), dp)


def test_single_step_equals_noisy_full_batch_step():
    x_row, y_val, n, sigma, lr = (0.5, -0.25), 1.2, 16, 0.7, 0.1
    d = synth_regression(1, 2, [1.0, 1.0], 0.1, seed=0)
    d = Dataset(d.columns, (x_row + (y_val,),) * n, "y")
    half = d.meta("y").upper  # symmetric target bounds, centre 0
    cfg = SgdConfig(learning_rate=lr, epochs=1, batch_size=n, seed=42)
    model = dp_sgd_train(d, cfg, DpSgdParams(clip_norm=1e6, noise_multiplier=sigma))

    # Every row is sampled at q = 1; start from zero in scaled units.
    x_aug = np.array(x_row + (1.0,))
    grad = (0.0 - y_val / half) * x_aug
    _, noise_rng = random_streams(42)
    noisy = n * grad + sigma * 1e6 * noise_rng.standard_normal(3)
    theta = -lr * noisy / n
    np.testing.assert_allclose(model.weights, half * theta[:2], rtol=1e-12)
    assert model.bias == pytest.approx(half * theta[2], rel=1e-12)


def test_dp_sgd_utility_improves_with_epsilon(noisy_train_test):
    from dpbench.metrics import PairedSample, rmspe, trim_extremes

    train, test = noisy_train_test

    def cell(eps):
        pairs = []
        for rep in range(10):
            cfg = SgdConfig(seed=100 + rep)
            np_rmse = rmse_on(np_sgd_train(train, cfg), test)
            dp_rmse = rmse_on(dp_sgd_train(train, cfg, calibrated_params(train.size, cfg, eps)), test)
            pairs.append(PairedSample(np_rmse, dp_rmse))
        return rmspe(trim_extremes(pairs, 1, 1, key=lambda p: p.dp_value - p.np_value))

    assert cell(3.0) < cell(0.1)


def test_divergence_reported_with_step():
    d = synth_regression(200, 2, [1.0, 1.0], 0.1, seed=9)
    with pytest.raises(DivergenceError) as info:
        np_sgd_train(d, SgdConfig(learning_rate=1e200, batch_size=32))
    assert info.value.step >= 0


def test_training_errors():
    d = synth_regression(10, 1, [1.0], 0.1, seed=0)
    with pytest.raises(DataError):
        np_sgd_train(d, SgdConfig(batch_size=64))
    no_target = Dataset(d.columns, d.rows)
    with pytest.raises(DataError):
        np_sgd_train(no_target, SgdConfig(batch_size=2))
    with pytest.raises(DataError):
        schedule(0, SgdConfig())


def test_rmse_values():
    d = synth_regression(50, 2, [1.0, -1.0], 0.0, seed=1)
    perfect = LinearModel(np.array([1.0, -1.0]), 0.0, ("x0", "x1"))
    assert rmse_on(perfect, d) == pytest.approx(0.0, abs=1e-12)

    cols = (ColumnMeta("x0", CONTINUOUS, -1, 1), ColumnMeta("y", CONTINUOUS, -10, 10))
    t = Dataset(cols, ((0.3, 3.0), (-0.2, 4.0)), "y")
    zero = LinearModel(np.array([0.0]), 0.0, ("x0",))
    assert rmse_on(zero, t) == pytest.approx(math.sqrt(12.5), rel=1e-12)
    flipped = t.with_rows(t.rows[::-1])
    assert rmse_on(zero, flipped) == rmse_on(zero, t)
    with pytest.raises(DataError):
        rmse_on(zero, t.with_rows([]))


# ---- accountant ---------------------------------------------------------------


def a_alpha_by_quadrature(q, sigma, alpha):
    """E_{z ~ N(0, s^2)} [((1 - q) + q exp((2z - 1) / (2 s^2)))^alpha], integrand built in log space."""

    def integrand(z):
        log_mix = np.logaddexp(math.log1p(-q), math.log(q) + (2 * z - 1) / (2 * sigma**2))
        log_pdf = -(z**2) / (2 * sigma**2) - math.log(sigma * math.sqrt(2 * math.pi))
        return math.exp(log_pdf + alpha * log_mix)

    # The integrand peaks between 0 and alpha; 40 sigma either side covers the mass.
    val, _ = integrate.quad(integrand, -40 * sigma, alpha + 40 * sigma, epsabs=0, epsrel=1e-12,
                            limit=500, points=[0.0, 0.5, float(alpha)])
    return val


@pytest.mark.parametrize("q,sigma,alpha", [(0.01, 1.0, 2), (0.1, 1.5, 5), (0.3, 2.0, 8), (0.05, 0.8, 16)])
def test_rdp_matches_quadrature(q, sigma, alpha):
    want = math.log(a_alpha_by_quadrature(q, sigma, alpha)) / (alpha - 1)
    got = rdp_subsampled_gaussian(sigma, q, 1, [alpha]).values[0]
    assert got == pytest.approx(want, rel=1e-7)


def test_rdp_full_batch_closed_form():
    for sigma in [0.5, 1.0, 3.7]:
        curve = rdp_subsampled_gaussian(sigma, 1.0, 1, [2, 3, 10, 64])
        for a, v in zip(curve.orders, curve.values):
            assert abs(v - a / (2 * sigma**2)) <= 1e-12


@pytest.mark.parametrize("sigma,orders", [(4.0, DEFAULT_ORDERS), (1.0, range(2, 33))])
def test_rdp_vanishes_as_q_goes_to_zero(sigma, orders):
    curve = rdp_subsampled_gaussian(sigma, 1e-12, 1, orders)
    assert max(curve.values) < 1e-9


def test_rdp_additive_in_steps():
    one = rdp_subsampled_gaussian(1.1, 0.02, 1)
    two = rdp_subsampled_gaussian(1.1, 0.02, 2)
    np.testing.assert_allclose(two.values, 2 * np.array(one.values), rtol=1e-15)


def test_rdp_argument_checks():
    with pytest.raises(ValueError):
        rdp_subsampled_gaussian(1.0, 0.0, 1)
    with pytest.raises(ValueError):
        rdp_subsampled_gaussian(1.0, 1.5, 1)
    with pytest.raises(ValueError):
        rdp_subsampled_gaussian(1.0, 0.1, 1, [1.5])
    with pytest.raises(ValueError):
        rdp_subsampled_gaussian(0.0, 0.1, 1)


def test_rdp_to_epsilon_formula():
    assert rdp_to_epsilon(RdpCurve((2,), (1.0,)), math.exp(-1)) == pytest.approx(2.0)


def test_rdp_to_epsilon_errors():
    with pytest.raises(ValueError):
        rdp_to_epsilon(RdpCurve((), ()), 1e-5)
    with pytest.raises(ValueError):
        rdp_to_epsilon(RdpCurve((2,), (1.0,)), 0.0)
    with pytest.raises(ValueError):
        RdpCurve((2,), (-1.0,))


curves = st.lists(st.tuples(st.integers(2, 256), st.floats(0, 50)), min_size=1, max_size=10, unique_by=lambda t: t[0])


@given(curves, st.floats(1e-10, 0.5), st.floats(1e-10, 0.5))
def test_epsilon_nonincreasing_in_delta(pts, d1, d2):
    curve = RdpCurve(tuple(a for a, _ in pts), tuple(v for _, v in pts))
    lo, hi = sorted((d1, d2))
    assert rdp_to_epsilon(curve, hi) <= rdp_to_epsilon(curve, lo) + 1e-12


@given(curves, st.integers(2, 256), st.floats(0, 50))
def test_extra_order_never_increases_epsilon(pts, a, v):
    base = RdpCurve(tuple(o for o, _ in pts), tuple(x for _, x in pts))
    extended = RdpCurve(base.orders + (a,), base.values + (v,))
    assert rdp_to_epsilon(extended, 1e-5) <= rdp_to_epsilon(base, 1e-5)


def test_accountant_monotonicity_grid():
    sigmas, qs, steps = [0.8, 1.5, 4.0], [0.005, 0.02, 0.1], [10, 100, 1000]
    eps = {(s, q, t): epsilon_for(s, q, t, 1e-5) for s in sigmas for q in qs for t in steps}
    for s in sigmas:
        for q in qs:
            for t1, t2 in zip(steps, steps[1:]):
                assert eps[s, q, t1] <= eps[s, q, t2]
    for s in sigmas:
        for t in steps:
            for q1, q2 in zip(qs, qs[1:]):
                assert eps[s, q1, t] <= eps[s, q2, t]
    for q in qs:
        for t in steps:
            for s1, s2 in zip(sigmas, sigmas[1:]):
                assert eps[s1, q, t] >= eps[s2, q, t]


@pytest.mark.parametrize("target", [0.5, 1.0, 3.0])
def test_calibration_round_trip(target):
    sigma = calibrate_sigma(PrivacyParams(target, 1e-5), 0.01, 1000)
    achieved = epsilon_for(sigma, 0.01, 1000, 1e-5)
    assert abs(achieved - target) <= 1e-2
    assert achieved <= target


def test_calibration_monotone_in_target():
    sigmas = [calibrate_sigma(PrivacyParams(e, 1e-5), 0.02, 500) for e in (0.25, 0.5, 1.0, 2.0, 3.0)]
    assert all(a >= b for a, b in zip(sigmas, sigmas[1:]))


def test_calibration_closed_form():
    # q = 1, one step, order 2, delta = 1/e:  eps = 1 / sigma^2 + 1
    for target in (1.5, 2.0, 5.0):
        got = calibrate_sigma(PrivacyParams(target, math.exp(-1)), 1.0, 1, orders=[2])
        assert got == pytest.approx(1 / math.sqrt(target - 1), abs=1e-3)


def test_calibration_unreachable():
    with pytest.raises(CalibrationError, match="sigma=100"):
        calibrate_sigma(PrivacyParams(1e-4, 1e-5), 1.0, 10_000)
    with pytest.raises(CalibrationError):
        calibrate_sigma(PrivacyParams(1e6, 1e-5), 0.01, 10)
    with pytest.raises(ValueError):
        calibrate_sigma(PrivacyParams(1.0, 0.0), 0.01, 10)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(0.001, 0.2), st.integers(1, 2000))
def test_calibration_inverse_property(eps, q, steps):
    target = PrivacyParams(eps, 1e-5)
    try:
        sigma = calibrate_sigma(target, q, steps)
    except CalibrationError:
        return
    assert eps * (1 - 1e-2) <= epsilon_for(sigma, q, steps, 1e-5) <= eps
