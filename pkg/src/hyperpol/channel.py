"""Exact simulation of repeated PulsePol with electron re-initialisation.

One repetition (N_p PulsePol units followed by an electron reset) acts on the
nucleus as a qubit channel, which is stored as an affine map b -> M b + c on
the nuclear Bloch vector. Long runs are then cheap: R repetitions are a
power of a 4x4 homogeneous matrix.
"""

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .pulsepol import SystemParams, build_pulsepol_unit, resonant_period
from .spin import (
    ELECTRON_SZ,
    I2,
    PAULIS,
    SX,
    SZ,
    BlochVector,
    InvariantError,
    check_density_matrix,
    evolve,
    expm_2x2,
    polarisation,
    reinitialize_electron,
    to_bloch,
)

__all__ = [
    "FRESH_ELECTRON",
    "SimConfig",
    "RepetitionChannel",
    "PolarisationTrace",
    "free_hamiltonian",
    "unit_propagator",
    "extract_channel",
    "channel_from_kraus",
    "transition_probs_measured",
    "iterate",
    "iterate_bloch",
    "simulate_repetitions",
    "fast_forward",
    "asymptotic_polarisation",
    "envelope_sweep",
    "parallel_map",
]

# m_s = 0; with the pulse layout in build_pulsepol_unit this drives k = 3 towards |up>
FRESH_ELECTRON = np.diag([1.0, 0.0]).astype(complex)

FROZEN_EPS = 1e-9
FROZEN_HORIZON = 2**24
CHOI_TOL = 1e-10

_PULSE_GENERATORS = {"x": SX / 2, "y": np.array([[0, -0.5j], [0.5j, 0]])}


@dataclass(frozen=True)
class SimConfig:
    params: SystemParams
    T: float
    N_p: int
    R: int = 0
    harmonic: int = 3

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.N_p < 1:
            raise ValueError("N_p must be at least 1")
        if self.R < 0:
            raise ValueError("R must be non-negative")


@dataclass(frozen=True)
class RepetitionChannel:
    """Affine Bloch map b -> M b + c of one repetition on the nuclear spin."""

    M: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "M", np.asarray(self.M, dtype=float).reshape(3, 3))
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float).reshape(3))

    def apply(self, b):
        return self.M @ np.asarray(b, dtype=float) + self.c

    def spectral_radius(self):
        return float(np.abs(np.linalg.eigvals(self.M)).max())

    def image(self, x):
        """Apply the channel to an arbitrary (not necessarily physical) 2x2 operator."""
        x = np.asarray(x, dtype=complex)
        tr = np.trace(x)
        r = np.array([np.trace(x @ p) for p in PAULIS])
        out = self.M.astype(complex) @ r + tr * self.c
        return 0.5 * (tr * I2 + sum(o * p for o, p in zip(out, PAULIS)))

    def choi(self):
        """Choi matrix sum_ij |i><j| (x) E(|i><j|), input factor first."""
        j = np.zeros((4, 4), dtype=complex)
        for a in range(2):
            for b in range(2):
                unit = np.zeros((2, 2), dtype=complex)
                unit[a, b] = 1.0
                j[2 * a:2 * a + 2, 2 * b:2 * b + 2] = self.image(unit)
        return j

    def is_cptp(self, tol=CHOI_TOL):
        j = self.choi()
        if np.abs(j - j.conj().T).max() > tol:
            return False
        partial = np.einsum("ajbj->ab", j.reshape(2, 2, 2, 2))
        if np.abs(partial - I2).max() > tol:
            return False
        return np.linalg.eigvalsh(0.5 * (j + j.conj().T)).min() >= -tol


@dataclass
class PolarisationTrace:
    abscissa: list
    polarisation: list
    metadata: dict = field(default_factory=dict)
    frozen: Optional[list] = None

    def __post_init__(self):
        if len(self.abscissa) != len(self.polarisation):
            raise ValueError("abscissa and polarisation lengths differ")
        if any(abs(p) > 1 + 1e-9 for p in self.polarisation):
            raise InvariantError("polarisation outside [-1, 1]")


def free_hamiltonian(p):
    """omega_L I_z + S_z (A_z I_z + A_x I_x) on electron (x) nucleus."""
    iz, ix = SZ / 2, SX / 2
    return p.omega_L * np.kron(I2, iz) + np.kron(ELECTRON_SZ, p.A_z * iz + p.A_x * ix)


def _pulse(axis, angle):
    return np.kron(expm_2x2(_PULSE_GENERATORS[axis], angle), I2)


def unit_propagator(p, T):
    """Propagator of one ideal-pulse PulsePol unit of period T."""
    seq = build_pulsepol_unit(T)
    h0 = free_hamiltonian(p)
    free = {}
    u = np.eye(4, dtype=complex)
    for step in seq.steps:
        if isinstance(step, float):
            if step not in free:
                free[step] = evolve(h0, step)
            u = free[step] @ u
        else:
            u = _pulse(step.axis, step.angle) @ u
    return u


def _electron_trace(x):
    return np.einsum("ajak->jk", x.reshape(2, 2, 2, 2))


def _channel_from_map(fn):
    e_id = fn(I2)
    c = np.array([0.5 * np.trace(e_id @ p).real for p in PAULIS])
    M = np.array([[0.5 * np.trace(fn(q) @ p).real for q in PAULIS] for p in PAULIS])
    return RepetitionChannel(M, c)


def extract_channel(p, T, N_p, electron_state=FRESH_ELECTRON):
    """Nuclear channel of one repetition: N_p units from a fresh electron, then trace out."""
    if N_p < 1:
        raise ValueError("N_p must be at least 1")
    u = np.linalg.matrix_power(unit_propagator(p, T), N_p)
    ud = u.conj().T

    def fn(x):
        return _electron_trace(u @ np.kron(electron_state, x) @ ud)

    ch = _channel_from_map(fn)
    if not ch.is_cptp():
        raise InvariantError("extracted channel is not CPTP; propagator is broken")
    return ch


def channel_from_kraus(kraus):
    """Affine Bloch form of the channel rho -> sum K rho K^dagger."""
    kraus = [np.asarray(k, dtype=complex) for k in kraus]
    return _channel_from_map(lambda x: sum(k @ x @ k.conj().T for k in kraus))


def transition_probs_measured(E):
    """Per-repetition flip probabilities (r_plus: down->up, r_minus: up->down)."""
    mzz, cz = E.M[2, 2], E.c[2]
    r_plus = (1 - mzz + cz) / 2
    r_minus = (1 - mzz - cz) / 2
    return float(np.clip(r_plus, 0.0, 1.0)), float(np.clip(r_minus, 0.0, 1.0))


def iterate_bloch(E, R, b0=None):
    """Naive loop b_{r+1} = M b_r + c; returns all R + 1 Bloch vectors."""
    out = np.empty((R + 1, 3))
    out[0] = np.zeros(3) if b0 is None else np.asarray(b0, dtype=float)
    for r in range(R):
        out[r + 1] = E.M @ out[r] + E.c
    return out


def iterate(E, rho0_n=None, R=0):
    """Polarisation after each of R repetitions, starting by default from the mixed state."""
    b0 = None if rho0_n is None else to_bloch(check_density_matrix(rho0_n, dim=2))
    bs = iterate_bloch(E, R, b0)
    return PolarisationTrace(list(range(R + 1)), bs[:, 2].tolist(), {"R": R})


def simulate_repetitions(p, T, N_p, R, rho0_n=None, electron_state=FRESH_ELECTRON):
    """Full density-matrix run: evolve, reset the electron, repeat.

    Independent of the Bloch-map route; useful as a cross-check and for
    watching density-matrix invariants along a trace.
    """
    rho_n = 0.5 * I2 if rho0_n is None else check_density_matrix(rho0_n, dim=2)
    u = np.linalg.matrix_power(unit_propagator(p, T), N_p)
    rho = np.kron(electron_state, rho_n)
    pols = [polarisation(rho_n)]
    states = [rho_n]
    for _ in range(R):
        rho = reinitialize_electron(u @ rho @ u.conj().T, electron_state)
        rho_n = _electron_trace(rho)
        pols.append(polarisation(rho_n))
        states.append(rho_n)
    return PolarisationTrace(list(range(R + 1)), pols, {"states": states})


def _affine_power(a, n):
    """a**n by binary exponentiation; returns (result, squarings, multiplications)."""
    result = np.eye(a.shape[0])
    base = a.copy()
    squarings = multiplications = 0
    while n:
        if n & 1:
            result = result @ base
            multiplications += 1
        n >>= 1
        if n:
            base = base @ base
            squarings += 1
    return result, squarings, multiplications


def _homogeneous(E):
    a = np.eye(4)
    a[:3, :3] = E.M
    a[:3, 3] = E.c
    return a


def fast_forward(E, R, b0=None):
    """Bloch vector after R repetitions via exponentiation by squaring."""
    if R < 0:
        raise ValueError("R must be non-negative")
    v = np.zeros(4)
    v[3] = 1.0
    if b0 is not None:
        v[:3] = np.asarray(b0, dtype=float)
    a = _affine_power(_homogeneous(E), R)[0]
    return BlochVector(*(a @ v)[:3])


def asymptotic_polarisation(E, p0=None):
    """Saturated polarisation and whether the channel has a frozen subspace.

    A contracting channel has the unique fixed point (I - M)^-1 c. When the
    spectral radius reaches 1 the limit depends on the start, so it is taken
    from a very long fast-forward instead of an ill-posed inversion.
    """
    if E.spectral_radius() < 1 - FROZEN_EPS:
        fixed = np.linalg.solve(np.eye(3) - E.M, E.c)
        return float(fixed[2]), False
    b = fast_forward(E, FROZEN_HORIZON, p0)
    return float(b.z), True


def _sweep_point(args):
    p, T, N_p, R, b0 = args
    E = extract_channel(p, T, N_p)
    if R is None:
        return asymptotic_polarisation(E, b0)
    return float(fast_forward(E, R, b0).z), False


def _workers(n):
    if n == 0:
        return os.cpu_count() or 1
    return max(1, n or 1)


def parallel_map(fn, jobs, workers=1):
    """Ordered map over independent jobs, in processes when workers != 1 (0 = all cores)."""
    jobs = list(jobs)
    n = _workers(workers)
    if n > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n) as pool:
            return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * n))))
    return [fn(j) for j in jobs]


def envelope_sweep(p, T_grid, N_p, R=None, p0=0.0, workers=1):
    """Polarisation at R repetitions (R=None: asymptotic) for every period in T_grid.

    Grid points are independent; with ``workers`` > 1 (0 = all cores) they are
    farmed out to processes and reassembled in grid order.
    """
    b0 = BlochVector(0.0, 0.0, float(p0))
    jobs = [(p, float(T), N_p, R, b0) for T in T_grid]
    results = parallel_map(_sweep_point, jobs, workers)
    meta = {"params": p, "N_p": N_p, "R": "inf" if R is None else R, "p0": p0,
            "T_r3": resonant_period(p, 3)}
    return PolarisationTrace(
        [float(T) for T in T_grid],
        [r[0] for r in results],
        meta,
        [r[1] for r in results],
    )
