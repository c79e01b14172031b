"""Repeated PulsePol hyperpolarisation of a single nuclear spin.

Exact electron-nuclear simulation, nuclear repetition channels, and the
two-state Markov model of the saturated polarisation envelope.
"""

__version__ = "0.1.0"

from .channel import (
    FRESH_ELECTRON,
    PolarisationTrace,
    RepetitionChannel,
    SimConfig,
    asymptotic_polarisation,
    envelope_sweep,
    extract_channel,
    fast_forward,
    iterate,
    simulate_repetitions,
    transition_probs_measured,
    unit_propagator,
)
from .markov import (
    FIRST_ORDER,
    SECOND_ORDER,
    ModelOrder,
    Prefactor,
    TransitionMatrix,
    TwoStateChain,
    analytic_envelope,
    analytic_rates,
    chain_evolve,
    polarisation_at_R,
    stationary_distribution,
    stationary_polarisation,
)
from .pulsepol import (
    G2Choice,
    SystemParams,
    build_pulsepol_unit,
    coupling_g,
    detuning,
    omega_I,
    resonant_period,
    second_order_couplings,
)
from .spin import BlochVector, InvariantError
