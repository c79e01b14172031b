"""Markov-chain model of repeated polarisation.

Distributions are column vectors and transition matrices are column
stochastic, so one step is ``p_next = Q @ p``. The two-state chain uses the
state order (up, down).
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from .pulsepol import G2Choice, coupling_g, detuning, second_order_couplings

__all__ = [
    "DegenerateChainError",
    "FrozenChainError",
    "Prefactor",
    "ModelOrder",
    "FIRST_ORDER",
    "SECOND_ORDER",
    "TransitionMatrix",
    "TwoStateChain",
    "chain_evolve",
    "stationary_distribution",
    "stationary_polarisation",
    "polarisation_at_R",
    "rabi_transfer",
    "analytic_rates",
    "analytic_envelope",
]

STOCHASTIC_TOL = 1e-12
UNIT_EIG_TOL = 1e-9
# rates below this are treated as an exactly frozen chain
FROZEN_RATE = 1e-14
# eigenvector matrices worse conditioned than this are treated as defective
MAX_EIGVEC_COND = 1e8


class DegenerateChainError(ValueError):
    """The chain has more than one stationary distribution."""


class FrozenChainError(ValueError):
    """Both transition probabilities vanish; the initial state never moves."""


class Prefactor(str, enum.Enum):
    """Amplitude convention of the detuned transfer probability.

    ``RABI`` is (2g/Omega)^2, reaching full transfer on resonance; ``PRINTED``
    is (g/Omega)^2, which caps on-resonance transfer at 1/4. The exact
    simulation follows ``RABI``.
    """

    RABI = "rabi"
    PRINTED = "printed"


@dataclass(frozen=True)
class ModelOrder:
    order: int = 2
    prefactor: Prefactor = Prefactor.RABI
    g2: G2Choice = G2Choice.G5

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ValueError("model order must be 1 or 2")
        object.__setattr__(self, "prefactor", Prefactor(self.prefactor))
        object.__setattr__(self, "g2", G2Choice(self.g2))


FIRST_ORDER = ModelOrder(1)
SECOND_ORDER = ModelOrder(2)


@dataclass(frozen=True)
class TransitionMatrix:
    Q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.Q, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] < 2:
            raise ValueError("transition matrix must be square with D >= 2")
        if (q < -STOCHASTIC_TOL).any() or (q > 1 + STOCHASTIC_TOL).any():
            raise ValueError("transition probabilities must lie in [0, 1]")
        if np.abs(q.sum(axis=0) - 1).max() > STOCHASTIC_TOL:
            raise ValueError("columns of a transition matrix must sum to 1")
        object.__setattr__(self, "Q", q)

    @property
    def D(self):
        return self.Q.shape[0]


@dataclass(frozen=True)
class TwoStateChain:
    r_plus: float
    r_minus: float

    def __post_init__(self):
        for name in ("r_plus", "r_minus"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} is not a probability")

    def transition_matrix(self):
        rp, rm = self.r_plus, self.r_minus
        return TransitionMatrix(np.array([[1 - rm, rp], [rm, 1 - rp]]))

    @property
    def frozen(self):
        return self.r_plus + self.r_minus < FROZEN_RATE


def _as_tm(Q):
    return Q if isinstance(Q, TransitionMatrix) else TransitionMatrix(Q)


def _matrix_power(q, n):
    result = np.eye(q.shape[0])
    while n:
        if n & 1:
            result = result @ q
        n >>= 1
        if n:
            q = q @ q
    return result


def chain_evolve(Q, p0, R):
    """Distribution after R steps, Q^R p0.

    Uses the eigen-expansion p_R = sum_n lambda_n^R c_n v_n when Q is safely
    diagonalisable and falls back to repeated squaring otherwise.
    """
    tm = _as_tm(Q)
    p0 = np.asarray(p0, dtype=float)
    if p0.shape != (tm.D,) or (p0 < 0).any() or abs(p0.sum() - 1) > 1e-12:
        raise ValueError("p0 must be a probability distribution over the chain's states")
    if R < 0:
        raise ValueError("R must be non-negative")
    w, v = np.linalg.eig(tm.Q)
    if np.linalg.cond(v) < MAX_EIGVEC_COND:
        coeffs = np.linalg.solve(v, p0)
        return (v @ (w**R * coeffs)).real
    return _matrix_power(tm.Q, R) @ p0


def stationary_distribution(Q):
    tm = _as_tm(Q)
    w, v = np.linalg.eig(tm.Q)
    unit = np.flatnonzero(np.abs(w - 1) < UNIT_EIG_TOL)
    if len(unit) != 1:
        raise DegenerateChainError(f"{len(unit)} unit eigenvalues; chain is reducible")
    pi = v[:, unit[0]].real
    pi = pi / pi.sum()
    pi[(pi < 0) & (pi >= -1e-12)] = 0.0
    return pi


def stationary_polarisation(c):
    """Saturated polarisation (r_plus - r_minus) / (r_plus + r_minus)."""
    if c.frozen:
        raise FrozenChainError("r_plus = r_minus = 0: stationary polarisation undefined")
    return (c.r_plus - c.r_minus) / (c.r_plus + c.r_minus)


def polarisation_at_R(c, R, P0=0.0):
    """Closed-form polarisation after R repetitions from initial polarisation P0."""
    if c.frozen:
        return float(P0)
    p_inf = stationary_polarisation(c)
    return p_inf + (P0 - p_inf) * (1 - c.r_plus - c.r_minus) ** R


def rabi_transfer(g, delta, duration, prefactor=Prefactor.RABI):
    """Transfer probability of a detuned two-level exchange after ``duration``."""
    omega = math.sqrt(delta**2 + 4 * g**2)
    if omega == 0.0:
        return 0.0
    amp = (2 * g / omega) ** 2 if Prefactor(prefactor) is Prefactor.RABI else (g / omega) ** 2
    return amp * math.sin(omega * duration / 2) ** 2


def analytic_rates(p, T, N_p, order=SECOND_ORDER):
    """Model transition probabilities per repetition at period T."""
    if not T > 0 or N_p < 1:
        raise ValueError("need T > 0 and N_p >= 1")
    d = detuning(T, p, 3)
    if order.order == 1:
        g_plus, g_minus = coupling_g(p, 3), 0.0
    else:
        g_plus, g_minus = second_order_couplings(p, T, order.g2)
    r_plus = rabi_transfer(g_plus, d, N_p * T, order.prefactor)
    r_minus = rabi_transfer(g_minus, d, N_p * T, order.prefactor)
    return TwoStateChain(min(r_plus, 1.0), min(r_minus, 1.0))


def analytic_envelope(p, T_grid, N_p, order=SECOND_ORDER, P0=0.0, R=None):
    """Model polarisation over a period grid, asymptotic unless R is given.

    Frozen points report P0.
    """
    from .channel import PolarisationTrace

    pols, frozen = [], []
    for T in T_grid:
        chain = analytic_rates(p, T, N_p, order)
        frozen.append(chain.frozen)
        if R is None:
            pols.append(float(P0) if chain.frozen else stationary_polarisation(chain))
        else:
            pols.append(polarisation_at_R(chain, R, P0))
    meta = {"params": p, "N_p": N_p, "order": order, "P0": P0, "R": "inf" if R is None else R}
    return PolarisationTrace([float(T) for T in T_grid], pols, meta, frozen)
