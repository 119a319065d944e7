import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plkg.channel import (
    BeamNormError,
    ChannelParams,
    EveMode,
    calibrate_tau,
    equivalent_channels,
    eve_mode,
    evolve_ar1,
    fred_channels,
    init_channels,
)
from plkg.env import BeamPair, uniform_beams
from plkg.numerics import RngStream, cgauss_vector


@pytest.fixture(scope="module")
def ar1_series():
    """One long evolution of a 2x2 channel, shared across the moment tests."""
    params = ChannelParams(n=2, rho=0.9)
    rng = RngStream(2024, 77)
    state = init_channels(params, rng)
    steps = 10**6
    series = np.empty((steps, 4), dtype=complex)
    for t in range(steps):
        series[t] = state.H_ab.ravel()
        state = evolve_ar1(state, params, rng)
    return series


def test_init_shapes_and_mode_consistency():
    params = ChannelParams(n=8)
    state = init_channels(params, RngStream(1, 1))
    assert state.H_ab.shape == (8, 8)
    for v in (state.h_ae, state.h_be, state.h_af, state.h_bf):
        assert v.shape == (8,)
    assert state.xi is eve_mode(state.h_ae, state.h_be, params.tau)
    assert state.t == 0


def test_init_deterministic():
    params = ChannelParams(n=4)
    a = init_channels(params, RngStream(5, 5))
    b = init_channels(params, RngStream(5, 5))
    assert np.array_equal(a.H_ab, b.H_ab)
    assert np.array_equal(a.h_af, b.h_af)
    assert a.xi == b.xi


def test_init_unit_variance():
    params = ChannelParams(n=8)
    rng = RngStream(31, 4)
    acc = 0.0
    reps = 2000  # 2000 inits x 64 entries = 1.28e5 samples
    for _ in range(reps):
        state = init_channels(params, rng)
        acc += np.mean(np.abs(state.H_ab) ** 2)
    assert abs(acc / reps - 1.0) < 0.01


def test_evolve_degenerate_ar():
    params = ChannelParams(n=3, rho=1.0, sigma_zeta2=0.0)
    rng = RngStream(2, 2)
    state = init_channels(params, rng)
    nxt = evolve_ar1(state, params, rng)
    assert np.array_equal(nxt.H_ab, state.H_ab)
    assert nxt.t == 1


def test_evolve_memoryless():
    params = ChannelParams(n=2, rho=0.0)
    rng = RngStream(3, 3)
    state = init_channels(params, rng)
    prev = np.empty(10**5, dtype=complex)
    cur = np.empty(10**5, dtype=complex)
    for i in range(10**5):
        nxt = evolve_ar1(state, params, rng)
        prev[i] = state.H_ab[0, 0]
        cur[i] = nxt.H_ab[0, 0]
        state = nxt
    corr = np.mean(cur * np.conj(prev)) / np.sqrt(
        np.mean(np.abs(cur) ** 2) * np.mean(np.abs(prev) ** 2)
    )
    assert abs(corr) < 0.01


def test_lag_autocorrelation(ar1_series):
    # lag-k autocorrelation of each entry should follow rho^k (1% at lag 1)
    series = ar1_series
    power = np.mean(np.abs(series) ** 2)
    for lag, tol in ((1, 0.01), (2, 0.02), (3, 0.02)):
        corr = np.mean(series[lag:] * np.conj(series[:-lag])) / power
        assert abs(corr - 0.9**lag) < tol * 0.9**lag


def test_stationary_unit_variance(ar1_series):
    power = np.mean(np.abs(ar1_series) ** 2)
    assert abs(power - 1.0) < 0.02


def test_eve_mode_rules():
    tau = 2.0
    h_hi = np.array([2.5 + 0j, 0.0])
    h_mid = np.array([2.1 + 0j, 0.0])
    h_lo = np.array([1.9 + 0j, 0.0])
    assert eve_mode(h_hi, h_mid, tau) is EveMode.EAVESDROPPING
    assert eve_mode(h_hi, h_lo, tau) is EveMode.SLEEPING
    assert eve_mode(h_lo, h_hi, tau) is EveMode.SLEEPING


def test_eve_mode_zero_threshold_always_on():
    rng = RngStream(4, 4)
    for _ in range(10**4):
        h_ae = cgauss_vector(3, 1.0, rng)
        h_be = cgauss_vector(3, 1.0, rng)
        assert eve_mode(h_ae, h_be, 0.0) is EveMode.EAVESDROPPING


@given(tau_lo=st.floats(0, 5), bump=st.floats(0, 5))
@settings(max_examples=50, deadline=None)
def test_eve_mode_monotone_in_tau(tau_lo, bump):
    rng = RngStream(6, 6)
    h_ae = cgauss_vector(4, 1.0, rng)
    h_be = cgauss_vector(4, 1.0, rng)
    lo = eve_mode(h_ae, h_be, tau_lo)
    hi = eve_mode(h_ae, h_be, tau_lo + bump)
    # raising tau never flips sleeping -> eavesdropping
    if lo is EveMode.SLEEPING:
        assert hi is EveMode.SLEEPING


def test_fred_perfect_correlation():
    rng = RngStream(7, 7)
    h_ae = cgauss_vector(6, 1.0, rng)
    h_be = cgauss_vector(6, 1.0, rng)
    h_af, h_bf = fred_channels(h_ae, h_be, 1.0, rng)
    assert np.array_equal(h_af, h_ae)
    assert np.array_equal(h_bf, h_be)


def test_fred_independence_at_zero_kappa():
    rng = RngStream(8, 1)
    h_ae = cgauss_vector(10**5, 1.0, rng)
    h_be = cgauss_vector(10**5, 1.0, rng)
    h_af, _ = fred_channels(h_ae, h_be, 0.0, rng)
    corr = np.mean(h_af * np.conj(h_ae))
    assert abs(corr) < 0.01


def test_fred_correlation_moment():
    rng = RngStream(8, 2)
    h_ae = cgauss_vector(10**6, 1.0, rng)
    h_be = cgauss_vector(10**6, 1.0, rng)
    h_af, h_bf = fred_channels(h_ae, h_be, 0.9, rng)
    corr = np.mean(h_af * np.conj(h_ae)).real
    assert abs(corr - 0.9) < 0.009
    # unit marginal variance regardless of kappa
    assert abs(np.mean(np.abs(h_af) ** 2) - 1.0) < 0.01
    assert abs(np.mean(np.abs(h_bf) ** 2) - 1.0) < 0.01


def test_calibrated_tau_hits_duty_cycle():
    params = ChannelParams(n=4)
    rng = RngStream(9, 9)
    state = init_channels(params, rng)
    hits = 0
    steps = 2 * 10**5
    for _ in range(steps):
        state = evolve_ar1(state, params, rng)
        hits += state.xi is EveMode.EAVESDROPPING
    frac = hits / steps
    assert abs(frac - 0.5) < 0.025


def test_calibrate_tau_monotone_in_target():
    assert calibrate_tau(4, 0.3) > calibrate_tau(4, 0.7)


def test_equivalent_channels_identity():
    params = ChannelParams(n=2, tau=1.0)
    state = init_channels(params, RngStream(10, 1))
    state.H_ab = np.eye(2, dtype=complex)
    e1 = np.array([1.0 + 0j, 0.0])
    beams = BeamPair(e1.copy(), e1.copy())
    h_ab, _, _, _ = equivalent_channels(state, beams, 4.0)
    assert h_ab == pytest.approx(2.0)


def test_equivalent_channels_nulling():
    params = ChannelParams(n=2, tau=1.0)
    state = init_channels(params, RngStream(10, 2))
    state.h_ae = np.array([0.0 + 0j, 1.0 + 0j])
    beams = BeamPair(np.array([1.0 + 0j, 0.0]), uniform_beams(2).w_b)
    _, h_ae, _, _ = equivalent_channels(state, beams, 1.0)
    assert abs(h_ae) < 1e-12


def test_equivalent_channels_brute_force():
    params = ChannelParams(n=5, tau=1.0)
    rng = RngStream(10, 3)
    state = init_channels(params, rng)
    wa = cgauss_vector(5, 1.0, rng)
    wb = cgauss_vector(5, 1.0, rng)
    beams = BeamPair(wa / np.linalg.norm(wa), wb / np.linalg.norm(wb))
    pa = 7.3
    h_ab, h_ae, h_af, h_bf = equivalent_channels(state, beams, pa)
    root = np.sqrt(pa)
    ref_ab = root * sum(
        np.conj(beams.w_b[i]) * state.H_ab[i, j] * beams.w_a[j]
        for i in range(5) for j in range(5)
    )
    ref_ae = root * sum(np.conj(state.h_ae[k]) * beams.w_a[k] for k in range(5))
    ref_af = root * sum(np.conj(state.h_af[k]) * beams.w_a[k] for k in range(5))
    ref_bf = root * sum(np.conj(state.h_bf[k]) * beams.w_b[k] for k in range(5))
    assert abs(h_ab - ref_ab) < 1e-12 * max(1, abs(ref_ab))
    assert abs(h_ae - ref_ae) < 1e-12 * max(1, abs(ref_ae))
    assert abs(h_af - ref_af) < 1e-12 * max(1, abs(ref_af))
    assert abs(h_bf - ref_bf) < 1e-12 * max(1, abs(ref_bf))


def test_equivalent_channels_rejects_bad_norm():
    params = ChannelParams(n=2, tau=1.0)
    state = init_channels(params, RngStream(10, 4))
    bad = uniform_beams(2)
    bad.w_a *= 1.001
    with pytest.raises(BeamNormError):
        equivalent_channels(state, bad, 1.0)


def test_params_validation():
    with pytest.raises(ValueError):
        ChannelParams(n=0)
    with pytest.raises(ValueError):
        ChannelParams(n=2, rho=1.5)
    with pytest.raises(ValueError):
        ChannelParams(n=2, sigma_z2=0.0)
    with pytest.raises(ValueError):
        ChannelParams(n=2, kappa=-0.1)
    with pytest.raises(ValueError):
        ChannelParams(n=2, delta=-1)


def test_default_innovation_keeps_unit_power():
    params = ChannelParams(n=2, rho=0.8)
    assert params.sigma_zeta2 == pytest.approx(1 - 0.64)
    assert params.sigma2 == pytest.approx(1.0 + 1 - 0.64)
