"""Parameter sweeps producing CSV tables.

Each ``cmd_*`` function takes a validated :class:`RunSpec` and returns a
:class:`ResultTable`; the CLI only parses arguments and writes files.
"""

import math
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from . import __version__
from .channel import (
    asymptotic_polarisation,
    extract_channel,
    fast_forward,
    parallel_map,
    transition_probs_measured,
)
from .markov import (
    ModelOrder,
    analytic_rates,
    polarisation_at_R,
    stationary_polarisation,
)
from .pulsepol import (
    KHZ,
    SystemParams,
    coupling_g,
    detuning,
    omega_I,
    resonant_period,
)
from .spin import BlochVector, InvariantError

__all__ = [
    "UsageError",
    "RunSpec",
    "ResultTable",
    "COMMAND_DEFAULTS",
    "cmd_envelope",
    "cmd_convergence_map",
    "cmd_harmonics",
    "cmd_strong_coupling",
    "cmd_rates",
    "COMMANDS",
]

US = 1e-6


class UsageError(ValueError):
    """Invalid run settings."""


@dataclass(frozen=True)
class RunSpec:
    command: str = "envelope"
    larmor_khz: Optional[float] = 428.0
    b0_gauss: Optional[float] = None
    az_khz: float = -50.0
    ax_khz: float = 9.0
    np: int = 4
    reps: Optional[int] = 200_000  # None means the asymptotic limit
    t_min_us: Optional[float] = None
    t_max_us: Optional[float] = None
    t_steps: int = 201
    harmonic: int = 3
    order: int = 2
    prefactor: str = "rabi"
    g2: str = "g5"
    p0: float = 0.0
    r_points: int = 31
    threads: int = 1
    out: Optional[str] = None
    plot: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        if self.b0_gauss is None and self.larmor_khz is None:
            raise UsageError("need --larmor-khz or --b0-gauss")
        for name in ("larmor_khz", "b0_gauss", "az_khz", "ax_khz", "p0", "t_min_us", "t_max_us"):
            v = getattr(self, name)
            if v is not None and not math.isfinite(v):
                raise UsageError(f"{name} must be finite")
        if (self.b0_gauss if self.b0_gauss is not None else self.larmor_khz) <= 0:
            raise UsageError("Larmor frequency / field must be positive")
        if self.np < 1:
            raise UsageError("--np must be >= 1")
        if self.reps is not None and self.reps < 0:
            raise UsageError("--reps must be >= 0")
        if self.t_steps < 1:
            raise UsageError("--t-steps must be >= 1")
        if self.t_min_us is not None and self.t_min_us <= 0:
            raise UsageError("--t-min-us must be positive")
        if self.t_min_us is not None and self.t_max_us is not None:
            if self.t_steps > 1 and not self.t_min_us < self.t_max_us:
                raise UsageError("--t-min-us must be below --t-max-us")
        if self.harmonic not in (1, 3, 5):
            raise UsageError("--harmonic must be 1, 3 or 5")
        if self.order not in (1, 2):
            raise UsageError("--order must be 1 or 2")
        if self.prefactor not in ("rabi", "printed"):
            raise UsageError("--prefactor must be 'rabi' or 'printed'")
        if self.g2 not in ("g5", "zero"):
            raise UsageError("--g2 must be 'g5' or 'zero'")
        if not -1.0 <= self.p0 <= 1.0:
            raise UsageError("--p0 must lie in [-1, 1]")
        if self.r_points < 1:
            raise UsageError("--r-points must be >= 1")
        if self.threads < 0:
            raise UsageError("--threads must be >= 0")
        if self.plot and not self.out:
            raise UsageError("--plot needs --out")

    @property
    def params(self):
        if self.b0_gauss is not None:
            return SystemParams.from_gauss(self.b0_gauss, self.az_khz, self.ax_khz)
        return SystemParams.from_khz(self.larmor_khz, self.az_khz, self.ax_khz)

    def model(self, order=None):
        return ModelOrder(order or self.order, self.prefactor, self.g2)

    def t_grid(self):
        """Period grid in seconds; a single step means the single point t_min."""
        lo, hi = self._t_bounds()
        if self.t_steps == 1:
            return np.array([lo * US])
        return np.linspace(lo, hi, self.t_steps) * US

    def _t_bounds(self):
        lo, hi = self.t_min_us, self.t_max_us
        if lo is not None and (hi is not None or self.t_steps == 1):
            return lo, hi if hi is not None else lo
        d_lo, d_hi = _default_window(self)
        return (lo if lo is not None else d_lo), (hi if hi is not None else d_hi)


def _default_window(spec):
    """Default period window (us) for a command whose grid was not given."""
    p = spec.params
    tr = resonant_period(p, spec.harmonic) / US
    if spec.command == "harmonics":
        return 0.5 * resonant_period(p, 1) / US, 1.25 * resonant_period(p, 5) / US
    if spec.command == "strong-coupling":
        return 0.75 * tr, 1.27 * tr
    if spec.command == "rates":
        w = omega_I(p)
        k = spec.harmonic * math.pi
        return k / (w + 5 * KHZ) / US, k / (w - 5 * KHZ) / US
    if spec.command == "convergence-map":
        return 0.97 * tr, 1.03 * tr
    t_larmor = spec.harmonic * math.pi / p.omega_L / US
    half = max(2 * abs(tr - t_larmor), 0.05 * tr)
    return tr - half, tr + half


@dataclass
class ResultTable:
    columns: list
    rows: list
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(len(r) != len(self.columns) for r in self.rows):
            raise ValueError("table is not rectangular")

    def column(self, name):
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    def to_csv(self):
        lines = [f"# {k}: {_fmt(v)}" for k, v in self.provenance.items()]
        lines.append(",".join(self.columns))
        lines.extend(",".join(_fmt(v) for v in row) for row in self.rows)
        return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, bool) or v is None:
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.12g" % v
    return str(v)


def _provenance(spec, **derived):
    p = spec.params
    prov = {"tool": f"hyperpol {__version__}"}
    for f in fields(spec):
        if f.name in ("out", "plot", "threads"):
            continue
        prov[f"spec.{f.name}"] = getattr(spec, f.name)
    if spec.reps is None:
        prov["spec.reps"] = "inf"
    prov["omega_I_kHz"] = omega_I(p) / KHZ
    prov["T_r_us"] = resonant_period(p, spec.harmonic) / US
    prov["g3_kHz"] = coupling_g(p, 3) / KHZ
    prov.update(derived)
    return prov


def _sim_point(args):
    p, T, N_p, R, p0 = args
    E = extract_channel(p, T, N_p)
    b0 = BlochVector(0.0, 0.0, p0)
    if R is None:
        return asymptotic_polarisation(E, b0)[0]
    return float(fast_forward(E, R, b0).z)


def _markov_point(p, T, N_p, R, p0, model):
    chain = analytic_rates(p, T, N_p, model)
    if R is None:
        return p0 if chain.frozen else stationary_polarisation(chain)
    return polarisation_at_R(chain, R, p0)


def _checked(values):
    values = list(values)
    if any(not math.isfinite(v) or abs(v) > 1 + 1e-9 for v in values):
        raise InvariantError("polarisation left [-1, 1]")
    return values


def _envelope_rows(spec):
    p = spec.params
    grid = spec.t_grid()
    sim = _checked(parallel_map(_sim_point, [(p, T, spec.np, spec.reps, spec.p0) for T in grid],
                                spec.threads))
    m1, m2 = spec.model(1), spec.model(2)
    rows = []
    for T, ps in zip(grid, sim):
        rows.append([
            T / US,
            detuning(T, p, spec.harmonic) / KHZ,
            ps,
            _markov_point(p, T, spec.np, spec.reps, spec.p0, m1),
            _markov_point(p, T, spec.np, spec.reps, spec.p0, m2),
        ])
    return ["T_us", "delta_kHz", "P_sim", "P_markov1", "P_markov2"], rows


def cmd_envelope(spec):
    """Simulated and modelled polarisation versus period.

    The provenance block also records the simulated value at the period
    matched to the bare Larmor frequency.
    """
    p = spec.params
    cols, rows = _envelope_rows(spec)
    t_larmor = spec.harmonic * math.pi / p.omega_L
    p_larmor = _sim_point((p, t_larmor, spec.np, spec.reps, spec.p0))
    return ResultTable(cols, rows, _provenance(spec, T_larmor_us=t_larmor / US,
                                               P_sim_at_T_larmor=p_larmor))


def cmd_strong_coupling(spec):
    cols, rows = _envelope_rows(spec)
    return ResultTable(cols, rows, _provenance(spec))


def r_values(reps, points):
    if reps == 0:
        return [0]
    logs = np.logspace(0, math.log10(reps), points)
    return [0] + sorted({int(round(v)) for v in logs})


def _convergence_point(args):
    p, T, N_p, rs, p0 = args
    E = extract_channel(p, T, N_p)
    b0 = BlochVector(0.0, 0.0, p0)
    return [float(fast_forward(E, r, b0).z) for r in rs]


def cmd_convergence_map(spec):
    """Long-format (T, R, P) map with logarithmically spaced repetition counts."""
    if spec.reps is None:
        raise UsageError("convergence-map needs a finite --reps")
    p = spec.params
    grid = spec.t_grid()
    rs = r_values(spec.reps, spec.r_points)
    per_t = parallel_map(_convergence_point, [(p, T, spec.np, rs, spec.p0) for T in grid],
                         spec.threads)
    rows = []
    for T, pols in zip(grid, per_t):
        rows.extend([T / US, r, v] for r, v in zip(rs, _checked(pols)))
    return ResultTable(["T_us", "R", "P"], rows, _provenance(spec))


def _nearest_harmonic(p, T):
    x = T * omega_I(p) / math.pi
    return min((1, 3, 5), key=lambda k: abs(x - k))


def cmd_harmonics(spec):
    """Polarisation after a few repetitions across the k = 1, 3, 5 resonances."""
    if spec.reps is None:
        raise UsageError("harmonics needs a finite --reps")
    p = spec.params
    grid = spec.t_grid()
    sim = _checked(parallel_map(_sim_point, [(p, T, spec.np, spec.reps, spec.p0) for T in grid],
                                spec.threads))
    rows = [[T / US, _nearest_harmonic(p, T), detuning(T, p, _nearest_harmonic(p, T)) / KHZ, v]
            for T, v in zip(grid, sim)]
    extra = {f"T_r{k}_us": resonant_period(p, k) / US for k in (1, 3, 5)}
    return ResultTable(["T_us", "k_nearest", "delta_nearest_kHz", "P"], rows, _provenance(spec, **extra))


def _rates_point(args):
    p, T, N_p = args
    return transition_probs_measured(extract_channel(p, T, N_p))


def cmd_rates(spec):
    """Measured per-repetition flip probabilities against the chosen analytic model."""
    p = spec.params
    grid = spec.t_grid()
    measured = parallel_map(_rates_point, [(p, T, spec.np) for T in grid], spec.threads)
    model = spec.model()
    rows = []
    for T, (rp, rm) in zip(grid, measured):
        chain = analytic_rates(p, T, spec.np, model)
        rows.append([T / US, detuning(T, p, 3) / KHZ, rp, rm, chain.r_plus, chain.r_minus])
    cols = ["T_us", "delta_kHz", "r_plus_sim", "r_minus_sim", "r_plus_model", "r_minus_model"]
    return ResultTable(cols, rows, _provenance(spec))


COMMANDS = {
    "envelope": cmd_envelope,
    "convergence-map": cmd_convergence_map,
    "harmonics": cmd_harmonics,
    "strong-coupling": cmd_strong_coupling,
    "rates": cmd_rates,
}

# per-command defaults; the envelope uses a spin detuned by a 30 kHz A_z
COMMAND_DEFAULTS = {
    "envelope": dict(az_khz=30.0, ax_khz=10.0, np=4, reps=200_000, t_steps=201),
    "convergence-map": dict(az_khz=-50.0, ax_khz=9.0, np=4, reps=200_000, t_steps=41),
    "harmonics": dict(az_khz=-10.0, ax_khz=60.0, np=4, reps=1, t_steps=3001),
    "strong-coupling": dict(az_khz=-10.0, ax_khz=60.0, np=4, reps=200_000, t_steps=901),
    "rates": dict(az_khz=-50.0, ax_khz=9.0, np=4, reps=1, t_steps=101, order=2),
}


def plot_script(spec, table, csv_path):
    """gnuplot script that draws the table written to csv_path."""
    head = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set title '{spec.command}'",
    ]
    cols = table.columns
    if spec.command == "convergence-map":
        body = [
            "set xlabel 'T (us)'", "set ylabel 'R'", "set logscale y",
            f"plot '{csv_path}' using 1:($2>0?$2:1/0):3 with points pt 5 ps 0.5 palette",
        ]
    else:
        ylab = "probability" if spec.command == "rates" else "polarisation"
        series = [i + 1 for i, c in enumerate(cols) if c.startswith(("P", "r_"))]
        body = ["set xlabel 'T (us)'", f"set ylabel '{ylab}'",
                "plot " + ", ".join(f"'{csv_path}' using 1:{i} with lines" for i in series)]
    return "\n".join(head + body) + "\n"
