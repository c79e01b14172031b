"""PulsePol sequence layout, resonance arithmetic and effective couplings.

All frequencies are angular (rad/s) and all times are in seconds. Use
:meth:`SystemParams.from_khz` to build parameters from the usual A/2pi values
in kHz.
"""

import enum
import math
from dataclasses import dataclass, field

__all__ = [
    "KHZ",
    "C13_GAMMA_KHZ_PER_GAUSS",
    "SUPPORTED_HARMONICS",
    "G2Choice",
    "SystemParams",
    "PulseEvent",
    "PulseSequence",
    "omega_I",
    "resonant_period",
    "detuning",
    "coupling_g",
    "second_order_couplings",
    "build_pulsepol_unit",
]

KHZ = 2 * math.pi * 1e3
C13_GAMMA_KHZ_PER_GAUSS = 1.0705
SUPPORTED_HARMONICS = (1, 3, 5)

SQRT2 = math.sqrt(2.0)


class G2Choice(str, enum.Enum):
    """Reading of the undefined ``g_2`` inside the counter-rotating coupling.

    ``G5`` substitutes the fifth-harmonic coupling, ``ZERO`` drops the term.
    ``G5`` tracks the exact simulation more closely on the weak-coupling
    envelope, so it is the default.
    """

    G5 = "g5"
    ZERO = "zero"


@dataclass(frozen=True)
class SystemParams:
    """Larmor frequency and hyperfine couplings of one nuclear spin (rad/s)."""

    omega_L: float
    A_z: float
    A_x: float

    def __post_init__(self):
        for name in ("omega_L", "A_z", "A_x"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.omega_L <= 0:
            raise ValueError("omega_L must be positive")
        # only |A_x| is observable; the perpendicular axis sign is a gauge choice
        object.__setattr__(self, "A_x", abs(self.A_x))

    @classmethod
    def from_khz(cls, larmor_khz, az_khz, ax_khz):
        return cls(larmor_khz * KHZ, az_khz * KHZ, ax_khz * KHZ)

    @classmethod
    def from_gauss(cls, b0_gauss, az_khz, ax_khz):
        return cls.from_khz(b0_gauss * C13_GAMMA_KHZ_PER_GAUSS, az_khz, ax_khz)


@dataclass(frozen=True)
class PulseEvent:
    axis: str
    angle: float
    offset: float

    def __post_init__(self):
        if self.axis not in ("x", "y"):
            raise ValueError(f"pulse axis must be 'x' or 'y', got {self.axis!r}")
        if not any(math.isclose(self.angle, a) for a in (math.pi / 2, math.pi)):
            raise ValueError("pulse angle must be pi/2 or pi")


@dataclass(frozen=True)
class PulseSequence:
    """One unit of instantaneous pulses interleaved with free evolution.

    ``steps`` lists the unit in time order: a :class:`PulseEvent` is an
    instantaneous rotation, a float is a free-evolution interval in seconds.
    """

    period_T: float
    events: tuple
    intervals: tuple
    steps: tuple = field(repr=False)


def _check_harmonic(k):
    if k not in SUPPORTED_HARMONICS:
        raise ValueError(f"unsupported harmonic k={k}; expected one of {SUPPORTED_HARMONICS}")


def omega_I(p):
    """Nuclear precession frequency under the electron-averaged field."""
    w = math.hypot(p.omega_L - p.A_z / 2, p.A_x / 2)
    if w == 0.0:
        raise ValueError("average nuclear precession frequency vanishes; resonance undefined")
    return w


def resonant_period(p, k=3):
    _check_harmonic(k)
    return k * math.pi / omega_I(p)


def detuning(T, p, k=3):
    if T <= 0:
        raise ValueError("period must be positive")
    return omega_I(p) - k * math.pi / T


def coupling_g(p, k=3):
    """Effective flip-flop coupling g_k of harmonic k."""
    _check_harmonic(k)
    if k == 1:
        return p.A_x * (2 - SQRT2) / (2 * math.pi)
    if k == 3:
        return p.A_x * (SQRT2 + 2) / (6 * math.pi)
    return p.A_x * (SQRT2 + 2) / (10 * math.pi)


def second_order_couplings(p, T, g2=G2Choice.G5):
    """Co- and counter-rotating couplings (g_plus, g_minus) of the third harmonic.

    Both keep every term linear in A_x * detuning. ``g2`` selects how the
    undefined ``g_2`` contribution to ``g_minus`` is read.
    """
    g2 = G2Choice(g2)
    d = detuning(T, p, 3)
    g1, g3, g5 = coupling_g(p, 1), coupling_g(p, 3), coupling_g(p, 5)
    g2_value = g5 if g2 is G2Choice.G5 else 0.0
    g_plus = g3 + d * T * (2 * g1 - g5) / (8 * math.pi)
    g_minus = d * T * (g3 + 3 * g1 + 3 * g2_value) / (6 * math.pi)
    return g_plus, g_minus


def build_pulsepol_unit(T):
    """One PulsePol unit of period T with four free intervals of T/4.

    Layout: (pi/2)_y - tau - (pi)_x - tau - (pi/2)_y | (pi/2)_x - tau - (pi)_y -
    tau - (pi/2)_x. The two pi/2 pulses meeting at the half boundary stay
    separate rotations.
    """
    if not T > 0:
        raise ValueError("period must be positive")
    tau = T / 4
    layout = [
        ("y", math.pi / 2), tau, ("x", math.pi), tau, ("y", math.pi / 2),
        ("x", math.pi / 2), tau, ("y", math.pi), tau, ("x", math.pi / 2),
    ]
    steps = []
    events = []
    t = 0.0
    for item in layout:
        if isinstance(item, tuple):
            ev = PulseEvent(item[0], item[1], t)
            events.append(ev)
            steps.append(ev)
        else:
            t += item
            steps.append(item)
    return PulseSequence(T, tuple(events), (tau,) * 4, tuple(steps))
