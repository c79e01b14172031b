"""Command-line entry point: ``hyperpol <command> [flags]``.

Exit codes: 0 success, 2 usage error, 3 numeric-invariant failure.
"""

import argparse
import logging
import os
import sys
import tempfile
from dataclasses import fields

from .spin import InvariantError
from .sweeps import COMMAND_DEFAULTS, COMMANDS, RunSpec, UsageError, plot_script

log = logging.getLogger("hyperpol")

EXIT_USAGE = 2
EXIT_INVARIANT = 3

_SPEC_FIELDS = {f.name: f for f in fields(RunSpec)}


def _reps(text):
    if str(text).lower() in ("inf", "asymptotic"):
        return None
    value = int(float(text))
    if value != float(text):
        raise argparse.ArgumentTypeError(f"--reps must be an integer or 'inf', got {text!r}")
    return value


_CONVERTERS = {
    "larmor_khz": float, "b0_gauss": float, "az_khz": float, "ax_khz": float,
    "np": int, "reps": _reps, "t_min_us": float, "t_max_us": float, "t_steps": int,
    "harmonic": int, "order": int, "prefactor": str, "g2": str, "p0": float,
    "r_points": int, "threads": int, "out": str,
    "plot": lambda s: str(s).lower() in ("1", "true", "yes", "on"),
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hyperpol",
        description="Repeated PulsePol hyperpolarisation of a single nuclear spin.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "envelope": "saturated polarisation versus period: simulation and both Markov models",
        "convergence-map": "polarisation versus period and repetition count",
        "harmonics": "single-pass polarisation across the k = 1, 3, 5 resonances",
        "strong-coupling": "envelope for a strongly coupled spin (broad side dips)",
        "rates": "measured versus modelled flip probabilities per repetition",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name], argument_default=argparse.SUPPRESS)
        field_group = p.add_mutually_exclusive_group()
        field_group.add_argument("--larmor-khz", type=float, help="nuclear Larmor frequency / 2pi")
        field_group.add_argument("--b0-gauss", type=float,
                                 help="static field; Larmor = 1.0705 kHz/G * B0 (13C)")
        p.add_argument("--az-khz", type=float, help="parallel hyperfine A_z / 2pi")
        p.add_argument("--ax-khz", type=float, help="perpendicular hyperfine A_x / 2pi")
        p.add_argument("--np", type=int, help="PulsePol units per repetition")
        p.add_argument("--reps", type=_reps, help="repetitions R, or 'inf' for the limit")
        p.add_argument("--t-min-us", type=float)
        p.add_argument("--t-max-us", type=float)
        p.add_argument("--t-steps", type=int)
        p.add_argument("--harmonic", type=int, choices=(1, 3, 5))
        p.add_argument("--order", type=int, choices=(1, 2), help="analytic model order (rates)")
        p.add_argument("--prefactor", choices=("rabi", "printed"))
        p.add_argument("--g2", choices=("g5", "zero"))
        p.add_argument("--p0", type=float, help="initial nuclear polarisation")
        p.add_argument("--r-points", type=int, help="number of log-spaced R values (convergence-map)")
        p.add_argument("--out", help="CSV path; stdout when omitted")
        p.add_argument("--plot", action="store_true", help="also write a gnuplot script next to --out")
        p.add_argument("--config", help="key=value file supplying defaults")
        p.add_argument("--threads", type=int, help="worker processes, 0 = all cores")
    return parser


def read_config(path):
    """Parse ``key = value`` lines; '#' starts a comment. Keys use - or _."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.lstrip("-").replace("-", "_")
            if key not in _CONVERTERS:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                values[key] = _CONVERTERS[key](value)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return values


def make_spec(args):
    """Merge command defaults, config file and explicit flags (in that order)."""
    merged = dict(COMMAND_DEFAULTS[args.command])
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    if getattr(args, "config", None):
        merged.update(read_config(args.config))
    merged.update(flags)
    if "b0_gauss" in flags:
        merged["larmor_khz"] = None
    elif "larmor_khz" in flags:
        merged["b0_gauss"] = None
    merged = {k: v for k, v in merged.items() if k in _SPEC_FIELDS}
    return RunSpec(command=args.command, **merged)


def _write_atomic(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".hyperpol-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def run(spec, stdout=None):
    stdout = stdout or sys.stdout
    table = COMMANDS[spec.command](spec)
    text = table.to_csv()
    if spec.out:
        _write_atomic(spec.out, text)
        if spec.plot:
            _write_atomic(os.path.splitext(spec.out)[0] + ".gp", plot_script(spec, table, spec.out))
        log.info("wrote %d rows to %s", len(table.rows), spec.out)
    else:
        stdout.write(text)
    return table


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        spec = make_spec(args)
        run(spec)
    except (UsageError, OSError) as exc:
        print(f"hyperpol: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvariantError as exc:
        print(f"hyperpol: numeric invariant failed: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    return 0


if __name__ == "__main__":
    sys.exit(main())
