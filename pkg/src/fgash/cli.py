"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical abort.
"""
from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import config as config_mod
from .errors import ConfigError, NumericalError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _configs(args):
    cfgs = config_mod.load(args.config)
    overrides = {k: getattr(args, k) for k in ("replications", "seed", "workers")
                 if getattr(args, k, None) is not None}
    if overrides:
        cfgs = [config_mod.with_overrides(c, **overrides) for c in cfgs]
    return cfgs


def _out_dirs(cfgs, out):
    from .experiments import eps_label
    out = Path(out)
    if len(cfgs) == 1:
        return [out]
    return [out / eps_label(c.epsilon) for c in cfgs]


def cmd_run_fga(args):
    from .experiments import run_fga
    cfgs = _configs(args)
    for cfg, out in zip(cfgs, _out_dirs(cfgs, args.out)):
        res = run_fga(cfg, out)
        for size, e0, e1 in zip(cfg.sizes, res.errors[:, :, 0].mean(1), res.errors[:, :, 1].mean(1)):
            print(f"eps={cfg.epsilon:g} size={size} E(e0)={e0:.4e} E(e1)={e1:.4e}")


def cmd_run_reference(args):
    from .experiments import run_reference
    from .reconstruct import transition_rate
    cfgs = _configs(args)
    for cfg, out in zip(cfgs, _out_dirs(cfgs, args.out)):
        ref = run_reference(cfg, out)
        print(f"eps={cfg.epsilon:g} t={cfg.t_final:g} transition rate {transition_rate(ref):.6f}")


def cmd_transition_curve(args):
    from .experiments import run_transition_curve
    cfgs = _configs(args)
    for cfg, out in zip(cfgs, _out_dirs(cfgs, args.out)):
        times = args.times
        if times is None and args.t_step is not None:
            n = int(np.floor(cfg.t_final / args.t_step + 1e-9))
            times = [i * args.t_step for i in range(n + 1)]
        if times is None:
            times = list(cfg.times)
        if not times:
            raise ConfigError("give sample times with --times, --t-step or the 'times' key")
        rows = run_transition_curve(cfg, times, out)
        dev = max(abs(a - b) for _, a, b in rows)
        print(f"eps={cfg.epsilon:g} max |rate_fga - rate_ref| = {dev:.4f}")


def cmd_inspect_model(args):
    from .experiments import inspect_model
    from .model import ModelPotential
    if args.n < 2 or not args.x_max > args.x_min:
        raise ConfigError("need n >= 2 and x_max > x_min")
    try:
        model = ModelPotential.from_name(args.model, args.delta)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    xs = np.linspace(args.x_min, args.x_max, args.n)
    if args.out:
        inspect_model(model, xs, args.out)
    else:
        for row in inspect_model(model, xs):
            print(",".join(repr(float(v)) for v in row))


def cmd_sample_init(args):
    from .experiments import sample_init
    cfgs = _configs(args)
    for cfg, out in zip(cfgs, _out_dirs(cfgs, args.out)):
        field, summary = sample_init(cfg, out)
        for M, d_M, nodes, n in summary:
            print(f"eps={cfg.epsilon:g} M={M} d_M={d_M:.4e} active nodes={nodes} trajectories={n}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fgash", description=(
        "Frozen Gaussian approximation with surface hopping for two-level "
        "semiclassical Schroedinger equations."))
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config", help="JSON run configuration")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--replications", type=int, help="override R")
        sp.add_argument("--seed", type=int, help="override the master seed")
        sp.add_argument("--workers", type=int, help="numba thread count")
        sp.set_defaults(func=fn)
        return sp

    with_config("run-fga", cmd_run_fga, "replicated FGA-SH runs with error statistics")
    with_config("run-reference", cmd_run_reference, "time-splitting spectral reference")
    tc = with_config("transition-curve", cmd_transition_curve,
                     "transition rate versus time, FGA-SH and reference")
    g = tc.add_mutually_exclusive_group()
    g.add_argument("--times", type=float, nargs="+", help="sample times")
    g.add_argument("--t-step", type=float, help="uniform sample spacing from 0 to t_final")
    with_config("sample-init", cmd_sample_init, "dump the initial amplitude field and partition")

    im = sub.add_parser("inspect-model", help="energies and couplings along an x grid")
    im.add_argument("--model", required=True)
    im.add_argument("--delta", type=float, default=1.0)
    im.add_argument("--x-min", type=float, default=-5.0)
    im.add_argument("--x-max", type=float, default=5.0)
    im.add_argument("--n", type=int, default=1001)
    im.add_argument("--out", help="CSV path (default: stdout)")
    im.set_defaults(func=cmd_inspect_model)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    warnings.filterwarnings("ignore", message=".*TBB.*")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical abort: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
