"""Dense linear algebra on the electron-nucleus spin pair.

Tensor ordering is electron (x) nucleus everywhere. The electron is the NV
pseudospin-1/2 spanned by {|0>, |-1>} (index 0 is m_s = 0), so its S_z is
diag(0, -1) rather than sigma_z / 2. The nuclear basis is (|up>, |down>) with
|up> the +1 eigenstate of sigma_z.
"""

from typing import NamedTuple

import numpy as np

__all__ = [
    "InvariantError",
    "BlochVector",
    "I2",
    "SX",
    "SY",
    "SZ",
    "ELECTRON_SZ",
    "kron",
    "expm_2x2",
    "evolve",
    "check_density_matrix",
    "partial_trace_electron",
    "reinitialize_electron",
    "polarisation",
    "to_bloch",
    "from_bloch",
]

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
ELECTRON_SZ = np.diag([0.0, -1.0]).astype(complex)

PAULIS = (SX, SY, SZ)

TOL = 1e-12


class InvariantError(ValueError):
    """A numerical invariant (hermiticity, trace, positivity, CPTP) was violated."""


class BlochVector(NamedTuple):
    x: float
    y: float
    z: float

    def as_array(self):
        return np.array([self.x, self.y, self.z], dtype=float)

    def norm(self):
        return float(np.linalg.norm(self.as_array()))


def _square(a, dims=(2, 4)):
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] not in dims:
        raise ValueError(f"expected a square matrix of dimension {dims}, got shape {a.shape}")
    return a


def _hermitian_tol(h):
    return TOL * max(1.0, float(np.abs(h).max(initial=0.0)))


def kron(a, b):
    """Tensor product of two 2x2 operators, electron factor first."""
    a = _square(a, (2,))
    b = _square(b, (2,))
    return np.kron(a, b)


def expm_2x2(h, t):
    """exp(-i h t) for a 2x2 Hermitian h via its Pauli decomposition."""
    h = _square(h, (2,))
    a0 = 0.5 * np.trace(h).real
    a = np.array([0.5 * np.trace(h @ p).real for p in PAULIS])
    norm = np.sqrt(a @ a)
    phase = np.exp(-1j * a0 * t)
    if norm == 0.0:
        return phase * I2
    n = a / norm
    n_sigma = n[0] * SX + n[1] * SY + n[2] * SZ
    return phase * (np.cos(norm * t) * I2 - 1j * np.sin(norm * t) * n_sigma)


def evolve(h, t):
    """Unitary exp(-i h t) for a Hermitian 2x2 or 4x4 generator.

    4x4 generators that are block diagonal in the electron basis (as the
    free Hamiltonian is) are exponentiated block by block in closed form;
    anything else goes through a Hermitian eigendecomposition.
    """
    h = _square(h)
    if np.abs(h - h.conj().T).max() > _hermitian_tol(h):
        raise InvariantError("generator is not Hermitian")
    if t < 0:
        raise ValueError("evolution time must be non-negative")
    if h.shape[0] == 2:
        return expm_2x2(h, t)
    if np.abs(h[:2, 2:]).max() == 0.0:
        u = np.zeros((4, 4), dtype=complex)
        u[:2, :2] = expm_2x2(h[:2, :2], t)
        u[2:, 2:] = expm_2x2(h[2:, 2:], t)
        return u
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def check_density_matrix(rho, dim=None, tol=TOL):
    """Validate hermiticity, unit trace and positivity; returns rho as an array."""
    rho = _square(rho)
    if dim is not None and rho.shape[0] != dim:
        raise ValueError(f"expected a {dim}x{dim} density matrix, got {rho.shape}")
    if np.abs(rho - rho.conj().T).max() > tol:
        raise InvariantError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > tol:
        raise InvariantError(f"density matrix trace {np.trace(rho).real:.3e} != 1")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -tol:
        raise InvariantError("density matrix has a negative eigenvalue")
    return rho


def partial_trace_electron(rho):
    """Reduced nuclear state Tr_e(rho) of a 4x4 electron (x) nucleus state."""
    rho = check_density_matrix(rho, dim=4)
    return np.einsum("ajak->jk", rho.reshape(2, 2, 2, 2))


def reinitialize_electron(rho, electron_state):
    """Replace the electron by a fresh state, keeping the nuclear marginal.

    The output is a product state, so any electron-nuclear correlation built up
    during the pulse train is discarded.
    """
    electron_state = check_density_matrix(electron_state, dim=2)
    return np.kron(electron_state, partial_trace_electron(rho))


def polarisation(rho_n):
    """Nuclear polarisation Tr(rho_n sigma_z) in [-1, 1]."""
    rho_n = check_density_matrix(rho_n, dim=2)
    return float(np.trace(rho_n @ SZ).real)


def to_bloch(rho_n):
    rho_n = _square(rho_n, (2,))
    return BlochVector(*(float(np.trace(rho_n @ p).real) for p in PAULIS))


def from_bloch(b):
    x, y, z = (float(v) for v in b)
    return 0.5 * (I2 + x * SX + y * SY + z * SZ)
