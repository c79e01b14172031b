import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import params_from, params_khz, random_channel
from hyperpol.channel import (
    FRESH_ELECTRON,
    PolarisationTrace,
    RepetitionChannel,
    SimConfig,
    _affine_power,
    asymptotic_polarisation,
    channel_from_kraus,
    envelope_sweep,
    extract_channel,
    fast_forward,
    iterate,
    iterate_bloch,
    simulate_repetitions,
    transition_probs_measured,
    unit_propagator,
)
from hyperpol.pulsepol import SystemParams, coupling_g, resonant_period
from hyperpol.spin import I2, BlochVector, InvariantError, check_density_matrix

WEAK_SPIN = SystemParams.from_khz(428.0, -50.0, 9.0)
STRONG_SPIN = SystemParams.from_khz(428.0, -10.0, 60.0)

IDENTITY = RepetitionChannel(np.eye(3), np.zeros(3))
TO_UP = RepetitionChannel(np.zeros((3, 3)), [0, 0, 1])
DEPOLARISING = RepetitionChannel(np.zeros((3, 3)), np.zeros(3))


def brute_force_unit(p, T):
    """Independent propagator: generic scipy expm of every segment in the lab frame."""
    sx = np.array([[0, 1], [1, 0]]) / 2
    sy = np.array([[0, -1j], [1j, 0]]) / 2
    sz = np.array([[1, 0], [0, -1]]) / 2
    s_z_electron = np.array([[0, 0], [0, -1]])
    h0 = (p.omega_L * np.kron(np.eye(2), sz)
          + np.kron(s_z_electron, p.A_z * sz + p.A_x * sx))
    free = scipy.linalg.expm(-1j * h0 * T / 4)
    rx = np.kron(scipy.linalg.expm(-1j * math.pi * sx), np.eye(2))
    ry = np.kron(scipy.linalg.expm(-1j * math.pi * sy), np.eye(2))
    hx = np.kron(scipy.linalg.expm(-1j * math.pi / 2 * sx), np.eye(2))
    hy = np.kron(scipy.linalg.expm(-1j * math.pi / 2 * sy), np.eye(2))
    first = hy @ free @ rx @ free @ hy
    second = hx @ free @ ry @ free @ hx
    return second @ first


def test_unit_propagator_matches_brute_force():
    for p in (WEAK_SPIN, STRONG_SPIN):
        for T in (1.1e-6, resonant_period(p), 4.7e-6):
            assert np.abs(unit_propagator(p, T) - brute_force_unit(p, T)).max() < 1e-12


def test_unit_propagator_without_transverse_coupling():
    p = SystemParams.from_khz(428.0, -50.0, 0.0)
    u = unit_propagator(p, 3.2e-6)
    # electron blocks decouple and nuclear populations are untouched
    assert np.abs(u[:2, 2:]).max() < 1e-12 and np.abs(u[2:, :2]).max() < 1e-12
    nuclear_z = np.kron(I2, np.diag([1, -1]))
    assert np.abs(u @ nuclear_z - nuclear_z @ u).max() < 1e-12


def test_unit_propagator_rejects_bad_period():
    with pytest.raises(ValueError):
        unit_propagator(WEAK_SPIN, 0.0)


def flip_flop_unitary(g, t):
    """exp(-i g (S+ I- + S- I+) t) with electron index 0 as the raised state."""
    sp = np.array([[0, 1], [0, 0]])
    h = g * (np.kron(sp, sp.T) + np.kron(sp.T, sp))
    return scipy.linalg.expm(-1j * h * t)


def test_stroboscopic_propagator_approaches_flip_flop():
    distances = []
    for ax in (40.0, 20.0, 10.0):
        p = SystemParams.from_khz(428.0, 0.0, ax)
        T = resonant_period(p)
        n = round(197.0 / ax)
        u = np.linalg.matrix_power(unit_propagator(p, T), n)
        v = flip_flop_unitary(coupling_g(p), n * T)
        distances.append(np.abs(np.abs(u) ** 2 - np.abs(v) ** 2).max())
    assert distances[0] > distances[1] > distances[2]
    assert distances[-1] < 2e-3


def test_sim_config_validation():
    SimConfig(WEAK_SPIN, 3e-6, 4, 10)
    for bad in (dict(T=0.0, N_p=4), dict(T=1e-6, N_p=0), dict(T=1e-6, N_p=1, R=-1)):
        with pytest.raises(ValueError):
            SimConfig(WEAK_SPIN, **bad)


def test_channel_without_transverse_coupling():
    E = extract_channel(SystemParams.from_khz(428.0, 30.0, 0.0), 3.4e-6, 4)
    assert E.M[2, 2] == pytest.approx(1.0, abs=1e-12)
    assert E.c[2] == pytest.approx(0.0, abs=1e-12)


def test_extracted_channel_is_cptp(rng):
    for _ in range(20):
        p = SystemParams.from_khz(rng.uniform(200, 1000), rng.uniform(-80, 80), rng.uniform(0, 80))
        E = extract_channel(p, rng.uniform(0.5e-6, 8e-6), int(rng.integers(1, 20)))
        assert E.is_cptp()
        assert np.linalg.eigvalsh(E.choi()).min() >= -1e-10
        assert E.spectral_radius() <= 1 + 1e-10


def _full_transfer_params(n_p=20):
    ax = 20.0
    for _ in range(20):
        p = SystemParams.from_khz(428.0, 0.0, ax)
        g3_t = coupling_g(p) * n_p * resonant_period(p)
        ax *= (math.pi / 2) / g3_t
    return SystemParams.from_khz(428.0, 0.0, ax)


def test_half_period_flip_flop_polarises_fully():
    p = _full_transfer_params()
    T = resonant_period(p)
    assert coupling_g(p) * 20 * T == pytest.approx(math.pi / 2, rel=1e-9)
    E = extract_channel(p, T, 20)
    # the nucleus ends up along the electron-averaged precession axis, tilted by ~A_x/2omega_L
    axis = np.array([-p.A_x / 2, 0.0, p.omega_L - p.A_z / 2])
    axis /= np.linalg.norm(axis)
    assert np.abs(E.c - axis).max() < 1e-3
    assert E.c[2] > 0.999
    assert np.abs(E.M).max() < 2e-2
    # one repetition of the full density-matrix route lands on the same state
    for rho0 in (np.diag([0.0, 1.0]), I2 / 2):
        trace = simulate_repetitions(p, T, 20, 1, rho0)
        assert trace.polarisation[1] == pytest.approx(E.apply(
            [0, 0, np.trace(rho0 @ np.diag([1, -1])).real])[2], abs=1e-12)
        assert trace.polarisation[1] > 0.99


def test_transition_probability_examples():
    assert transition_probs_measured(IDENTITY) == (0.0, 0.0)
    assert transition_probs_measured(TO_UP) == (1.0, 0.0)
    assert transition_probs_measured(DEPOLARISING) == (0.5, 0.5)


def test_channel_from_kraus_identity_and_choi():
    E = channel_from_kraus([I2])
    assert np.allclose(E.M, np.eye(3)) and np.allclose(E.c, 0)
    phi = np.zeros(4)
    phi[0] = phi[3] = 1
    assert np.allclose(E.choi(), np.outer(phi, phi))
    assert not RepetitionChannel(2 * np.eye(3), np.zeros(3)).is_cptp()


def test_iterate_examples():
    assert iterate(IDENTITY, None, 0).polarisation == [0.0]
    up = np.diag([1.0, 0.0])
    assert iterate(IDENTITY, up, 50).polarisation == [1.0] * 51
    assert iterate(TO_UP, None, 3).polarisation == [0.0, 1.0, 1.0, 1.0]


def test_iterate_converges_at_weak_spin_resonance():
    E = extract_channel(WEAK_SPIN, resonant_period(WEAK_SPIN), 4)
    trace = iterate(E, None, 10_000)
    assert trace.polarisation[-1] >= 0.999


def test_fast_forward_examples(rng):
    E = random_channel(rng)
    b0 = np.array([0.1, -0.2, 0.3])
    assert np.abs(fast_forward(E, 1, b0).as_array() - (E.M @ b0 + E.c)).max() < 1e-15
    assert fast_forward(E, 0, b0).as_array() == pytest.approx(b0)
    with pytest.raises(ValueError):
        fast_forward(E, -1)


@pytest.mark.parametrize("R", [1, 2, 3, 10, 1000])
def test_fast_forward_matches_iterate(rng, R):
    for _ in range(10):
        E = random_channel(rng)
        b0 = rng.normal(size=3)
        b0 *= rng.uniform() / np.linalg.norm(b0)
        naive = iterate_bloch(E, R, b0)[-1]
        assert np.abs(fast_forward(E, R, b0).as_array() - naive).max() < 1e-10


def test_fast_forward_cost_is_logarithmic():
    a = np.eye(4) * 0.5
    for k in range(1, 25):
        _, squarings, mults = _affine_power(a, 2**k)
        assert squarings == k and mults == 1
    _, squarings, mults = _affine_power(a, 200_000)
    assert squarings + mults <= 2 * math.ceil(math.log2(200_000))


def test_asymptotic_examples():
    assert asymptotic_polarisation(TO_UP) == (1.0, False)
    assert asymptotic_polarisation(IDENTITY) == (0.0, True)
    assert asymptotic_polarisation(IDENTITY, BlochVector(0, 0, 0.4)) == (pytest.approx(0.4), True)
    E = extract_channel(WEAK_SPIN, resonant_period(WEAK_SPIN), 4)
    p_inf, frozen = asymptotic_polarisation(E)
    assert not frozen
    assert p_inf == pytest.approx(1.0, abs=1e-3)


def test_asymptotic_matches_long_fast_forward(rng):
    for _ in range(20):
        E = random_channel(rng)
        p_inf, frozen = asymptotic_polarisation(E)
        assert not frozen
        assert abs(p_inf - fast_forward(E, 2**24).z) < 1e-6


def test_envelope_peaks_at_resonance():
    tr = resonant_period(WEAK_SPIN)
    grid = tr * np.linspace(0.97, 1.03, 13)
    trace = envelope_sweep(WEAK_SPIN, grid, 4)
    assert int(np.argmax(trace.polarisation)) == 6
    assert trace.polarisation[6] == pytest.approx(1.0, abs=1e-3)


def test_envelope_strong_coupling_reaches_opposite_polarisation():
    grid = np.linspace(2.89e-6, 2.91e-6, 41)
    trace = envelope_sweep(STRONG_SPIN, grid, 4)
    assert min(trace.polarisation) <= -0.9


def test_envelope_singleton_and_workers():
    T = 3.25e-6
    single = envelope_sweep(WEAK_SPIN, [T], 4)
    assert single.polarisation == [asymptotic_polarisation(extract_channel(WEAK_SPIN, T, 4))[0]]
    grid = np.linspace(3.0e-6, 3.6e-6, 9)
    serial = envelope_sweep(WEAK_SPIN, grid, 4, R=2000)
    pooled = envelope_sweep(WEAK_SPIN, grid, 4, R=2000, workers=2)
    assert serial.polarisation == pooled.polarisation
    assert serial.frozen == pooled.frozen


def test_trace_validation():
    with pytest.raises(ValueError):
        PolarisationTrace([1, 2], [0.0])
    with pytest.raises(InvariantError):
        PolarisationTrace([1], [1.5])


def test_density_matrix_route_matches_bloch_route():
    T = 3.4e-6
    E = extract_channel(WEAK_SPIN, T, 4)
    rho0 = np.array([[0.3, 0.1 + 0.2j], [0.1 - 0.2j, 0.7]])
    dm = simulate_repetitions(WEAK_SPIN, T, 4, 200, rho0)
    bloch = iterate(E, rho0, 200)
    assert np.abs(np.array(dm.polarisation) - bloch.polarisation).max() < 1e-12


@settings(max_examples=100, deadline=None)
@given(params_khz, st.floats(0.5e-6, 8e-6), st.integers(1, 12))
def test_channel_invariants(t, T, n_p):
    p = params_from(t)
    E = extract_channel(p, T, n_p)
    assert np.linalg.eigvalsh(E.choi()).min() >= -1e-10
    u = unit_propagator(p, T)
    assert np.abs(u.conj().T @ u - np.eye(4)).max() < 1e-12
    for R in (1, 7, 1000):
        assert abs(fast_forward(E, R).z) <= 1 + 1e-9


@settings(max_examples=30, deadline=None)
@given(params_khz, st.floats(0.5e-6, 8e-6), st.integers(1, 8))
def test_density_matrix_invariants_along_trace(t, T, n_p):
    p = params_from(t)
    trace = simulate_repetitions(p, T, n_p, 30, np.diag([0.6, 0.4]))
    for rho in trace.metadata["states"]:
        check_density_matrix(rho, dim=2)


@settings(max_examples=50, deadline=None)
@given(st.floats(200.0, 1500.0), st.floats(-100.0, 100.0), st.floats(0.5e-6, 8e-6),
       st.integers(1, 10), st.floats(-1.0, 1.0))
def test_no_transverse_coupling_means_frozen_polarisation(larmor, az, T, n_p, p0):
    p = SystemParams.from_khz(larmor, az, 0.0)
    E = extract_channel(p, T, n_p)
    for R in (0, 1, 13, 200_000):
        # round-off in M_zz compounds as R * eps
        assert fast_forward(E, R, [0, 0, p0]).z == pytest.approx(p0, abs=1e-8)


@pytest.mark.parametrize("az, n_values", [(-50.0, (2, 4)), (0.0, (2, 4, 8, 16, 32))])
def test_measured_rates_on_resonance_follow_flip_flop(az, n_values):
    p = SystemParams.from_khz(428.0, az, 9.0)
    T = resonant_period(p)
    g3 = coupling_g(p)
    for n_p in n_values:
        r_plus, r_minus = transition_probs_measured(extract_channel(p, T, n_p))
        assert r_minus <= 1e-4
        assert abs(r_plus - math.sin(g3 * n_p * T) ** 2) < 5e-3


def test_odd_unit_count_leaks_through_axis_tilt():
    # an odd number of 3pi nuclear turns about the tilted axis leaves a small r_minus
    p = SystemParams.from_khz(428.0, 0.0, 9.0)
    _, r_minus = transition_probs_measured(extract_channel(p, resonant_period(p), 1))
    tilt = math.atan2(p.A_x / 2, p.omega_L - p.A_z / 2)
    assert 1e-5 < r_minus < 4 * tilt**2


def test_fresh_electron_is_ms0():
    assert FRESH_ELECTRON[0, 0] == 1 and np.trace(FRESH_ELECTRON) == 1
