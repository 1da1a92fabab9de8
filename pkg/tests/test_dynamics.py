import math

import numpy as np
import pytest
from scipy.signal import welch

from shdr.dynamics import (
    LOGISTIC_R,
    SkewSystemConfig,
    _reference_scales,
    amplitude_coupling_scale,
    dominant_period,
    gen_double_gyre,
    gen_logistic_skew,
    gen_rossler_lorenz,
    integrate,
    largest_lyapunov,
    logistic_orbit,
    rossler,
    rossler_trajectory,
    simulate,
)
from shdr.errors import ArgumentRange, ConstantSeries


def oscillator(t, y):
    return np.array([y[1], -y[0]])


def rk4_error(dt, t_end=1.0):
    n = int(round(t_end / dt))
    y = integrate(oscillator, [1.0, 0.0], dt, 2, stride=n)[-1]
    return abs(y[0] - math.cos(t_end))


def test_rk4_accuracy_and_order():
    e1, e2 = rk4_error(0.01), rk4_error(0.005)
    assert e1 < 1e-8
    assert 14 < e1 / e2 < 18


def test_rossler_lyapunov():
    lam = largest_lyapunov(rossler(), np.array([1.0, 1.0, 0.0]), dt=0.05, n_steps=40_000,
                           transient=2000)
    assert 0.05 < lam < 0.09


def test_compiled_rossler_matches_reference_integrator():
    fast = rossler_trajectory(50, sample_dt=0.05, dt=0.01, transient=0.0)
    slow = integrate(rossler(), np.array([1.0, 1.0, 0.0]), 0.01, 50, stride=5)
    np.testing.assert_allclose(fast, slow, atol=1e-10)


@pytest.mark.parametrize("regime,period", [("period2", 2), ("period4", 4), ("period8", 8)])
def test_logistic_regimes_have_stated_period(regime, period):
    z = logistic_orbit(LOGISTIC_R[regime], 0.4, 100_000, transient=1000)
    distinct = np.unique(np.round(z / 1e-9))
    assert len(distinct) == period
    assert np.abs(z[period:] - z[:-period]).max() < 1e-9


def test_logistic_chaotic_regime_is_aperiodic():
    z = logistic_orbit(LOGISTIC_R["chaotic"], 0.4, 5000, transient=1000)
    assert len(np.unique(np.round(z, 9))) > 4000


def test_logistic_dataset_structure():
    ds = gen_logistic_skew("period4", SkewSystemConfig(n_responses=5, t_points=500))
    assert ds.responses.values.shape == (500, 5)
    np.testing.assert_array_equal(ds.driver_truth.values[:8], [0, 1, 2, 3, 0, 1, 2, 3])
    np.testing.assert_array_equal(ds.coarse_truth(2)[:4], [0, 1, 0, 1])
    assert np.all((ds.responses.values > 0) & (ds.responses.values < 1))


def test_skew_structure_driver_ignores_responses():
    """The driver orbit is the same whatever the responses do."""
    a = gen_logistic_skew("chaotic", SkewSystemConfig(n_responses=2, coupling=0.1, t_points=300))
    b = gen_logistic_skew("chaotic", SkewSystemConfig(n_responses=7, coupling=0.9, t_points=300))
    np.testing.assert_array_equal(a.driver_values, b.driver_values)
    c = gen_rossler_lorenz(SkewSystemConfig(driver="rossler", response="lorenz",
                                            n_responses=2, coupling=0.0, t_points=300))
    d = gen_rossler_lorenz(SkewSystemConfig(driver="rossler", response="lorenz",
                                            n_responses=3, coupling=1.0, t_points=300))
    np.testing.assert_array_equal(c.driver_state, d.driver_state)


def test_replica_streams_independent_of_ensemble_size():
    small = simulate(SkewSystemConfig(n_responses=3, t_points=200, snr=10), "chaotic")
    large = simulate(SkewSystemConfig(n_responses=6, t_points=200, snr=10), "chaotic")
    np.testing.assert_array_equal(small.responses.values, large.responses.values[:, :3])


def test_generation_is_deterministic():
    cfg = SkewSystemConfig(driver="rossler", response="lorenz", n_responses=4, t_points=400,
                           snr=5, measurement_filter="random_gaussian", seed=3)
    a, b = simulate(cfg), simulate(cfg)
    np.testing.assert_array_equal(a.responses.values, b.responses.values)
    assert a.config == b.config


def test_observation_noise_level():
    cfg = SkewSystemConfig(n_responses=4, t_points=4000, snr=4.0)
    ds = simulate(cfg, "chaotic")
    noise = ds.responses.values - ds.clean_responses
    ratio = ds.clean_responses.var(axis=0) / noise.var(axis=0)
    np.testing.assert_allclose(ratio, 4.0, rtol=0.1)


def test_config_round_trip():
    cfg = SkewSystemConfig(snr=math.inf, coupling=0.3, filter_width=(1.0, 3.0))
    assert SkewSystemConfig.from_dict(cfg.as_dict()) == cfg


def test_config_validation():
    with pytest.raises(ArgumentRange):
        SkewSystemConfig(coupling=-1)
    with pytest.raises(ArgumentRange):
        SkewSystemConfig(coupling_scale="volume")
    with pytest.raises(ArgumentRange):
        simulate(SkewSystemConfig(), "period3")


def test_amplitude_coupling_scale_examples():
    t = np.linspace(0, 2 * np.pi, 10_000, endpoint=False)
    assert amplitude_coupling_scale(np.full(4, 2.0) * [1, -1, 1, -1],
                                    np.full(4, 6.0) * [1, 1, -1, -1]) == pytest.approx(3.0)
    x = np.sin(3 * t)
    assert amplitude_coupling_scale(x, x) == 1.0
    assert amplitude_coupling_scale(np.sin(t), np.tile([1.0, -1.0], 5000)) == \
        pytest.approx(math.sqrt(2), rel=1e-6)
    with pytest.raises(ConstantSeries):
        amplitude_coupling_scale(np.ones(5), x[:5])


def test_coupling_scale_rules_are_ordered():
    kappa, speed = _reference_scales(0.01, "speed")
    _, rate = _reference_scales(0.01, "rate")
    _, amp = _reference_scales(0.01, "amplitude")
    assert 6.5 < kappa < 9.0
    # |f| >= |f_x| pointwise, and Lorenz x velocity is larger than x in Lorenz time
    assert speed > rate > amp > 0


@pytest.mark.parametrize("seed", range(3))
def test_double_gyre_forcing_frequency(seed):
    """The forcing line is a local spectral peak; gyre circulation dominates elsewhere."""
    omega = 2 * math.pi / 10
    cfg = SkewSystemConfig(driver="sine", response="tracer", n_responses=1, t_points=20_000,
                           dt=0.05, stride=2, transient=0, gyre=(0.1, 0.25, omega), seed=seed)
    ds = gen_double_gyre(cfg)
    assert ds.config["diffusivity"] == 0.0
    f, P = welch(ds.responses.channel(0), fs=10.0, nperseg=2000)
    k = int(np.argmin(np.abs(f - omega / (2 * math.pi))))
    assert P[k] > max(P[k - 2], P[k - 1], P[k + 1], P[k + 2])


def test_double_gyre_stays_in_domain():
    cfg = SkewSystemConfig(driver="sine", response="tracer", n_responses=20, t_points=500,
                           dt=0.05, stride=2, snr=1.0, transient=0)
    ds = gen_double_gyre(cfg)
    pos = ds.driver_state
    assert pos[..., 0].min() >= 0 and pos[..., 0].max() <= 2
    assert pos[..., 1].min() >= 0 and pos[..., 1].max() <= 1
