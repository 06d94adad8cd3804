"""Command-line entry point: ``metaphase solve | verify | residual | demo``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings

from ..errors import (
    ConfigError,
    DomainTouchesEquator,
    FootprintExceeded,
    FormatError,
    GradientOutOfRange,
    MassImbalance,
    NoConvergence,
)
from .config import PRESETS, load_config, parse_config, preset_text
from .pipeline import run_residual, run_solve, run_verify

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_MASS = 3
EXIT_NO_CONVERGENCE = 4
EXIT_VERIFY = 5

log = logging.getLogger("metaphase")


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="metaphase", description="Metasurface phase design and verification.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve for the phase and write grids plus a report")
    s.add_argument("-c", "--config", required=True)
    s.add_argument("-o", "--out", required=True)

    v = sub.add_parser("verify", help="ray-trace a phase grid against the target")
    v.add_argument("-c", "--config", required=True)
    v.add_argument("--phase", required=True)
    v.add_argument("-o", "--out", required=True)

    r = sub.add_parser("residual", help="finite-difference Monge-Ampere residual of a phase grid")
    r.add_argument("-c", "--config", required=True)
    r.add_argument("--phase", required=True)

    d = sub.add_parser("demo", help="run a shipped preset end to end")
    d.add_argument("name", choices=sorted(PRESETS))
    d.add_argument("-o", "--out", default=None)
    d.add_argument("--rays", type=int, default=None, help="override the number of traced rays")
    return p


def _solve(cfg, out) -> int:
    outcome = run_solve(cfg, out)
    rep = outcome.report
    log.info("solver iterations %d, residual median %.3g", rep["solver"]["iterations"], rep["residual"]["median"])
    print(json.dumps({"converged": rep["solver"]["converged"], "residual": rep["residual"]}, sort_keys=True))
    return EXIT_OK if rep["solver"]["converged"] else EXIT_NO_CONVERGENCE


def _verify(cfg, phase, out) -> int:
    rep = run_verify(cfg, phase, out)
    summary = {k: rep[k] for k in ("L1", "Linf", "evanescent_fraction", "passed")}
    summary["energy_balance_full"] = rep["energy_balance"]["full"]["rel_err"]
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK if rep["passed"] else EXIT_VERIFY


def _dispatch(args) -> int:
    if args.command == "solve":
        return _solve(load_config(args.config), args.out)
    if args.command == "verify":
        return _verify(load_config(args.config), args.phase, args.out)
    if args.command == "residual":
        print(json.dumps(run_residual(load_config(args.config), args.phase), sort_keys=True))
        return EXIT_OK
    out = args.out or f"demo-{args.name}"
    os.makedirs(out, exist_ok=True)
    text = preset_text(args.name)
    with open(os.path.join(out, "config.json"), "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    cfg = parse_config(text)
    if args.rays is not None:
        cfg.verify.rays = args.rays
    code = _solve(cfg, out)
    if code != EXIT_OK:
        return code
    return _verify(cfg, os.path.join(out, "phase.grid"), out)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    with warnings.catch_warnings():
        warnings.simplefilter("default")
        try:
            return _dispatch(args)
        except (ConfigError, DomainTouchesEquator, FormatError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        except MassImbalance as exc:
            print(f"error: mass imbalance: {exc}", file=sys.stderr)
            return EXIT_MASS
        except NoConvergence as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_NO_CONVERGENCE
        except (FootprintExceeded, GradientOutOfRange) as exc:
            print(f"error: verification failed: {exc}", file=sys.stderr)
            return EXIT_VERIFY
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
