"""Command-line entry point: ``nlac run | converge-time | converge-space``.

Exit codes: 0 success, 1 bad input, 2 invariant violation, 3 solver failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .experiments import converge_space, converge_time, run_experiment
from .iofmt import FormatError, format_convergence, load_config, write_convergence
from .linsolve import SolverError
from .model import NonpositiveRadicand
from .schemes import InvariantViolation

EXIT_INPUT = 1
EXIT_INVARIANT = 2
EXIT_SOLVER = 3

log = logging.getLogger("nlac")


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nlac", description="Volume-constrained Allen-Cahn simulations and convergence studies.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one simulation")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--out", type=Path, default=Path("out"))

    ct = sub.add_parser("converge-time", help="temporal successive-halving study")
    ct.add_argument("--config", required=True, type=Path)
    ct.add_argument("--dt-max", type=float, default=0.1)
    ct.add_argument("--levels", type=int, default=6)
    ct.add_argument("--out", type=Path, default=Path("."))
    ct.add_argument("--workers", type=int, default=1)
    ct.add_argument("--full-scale", action="store_true",
                    help="run at n=256 and T=1 (slow)")

    cs = sub.add_parser("converge-space", help="spatial successive-doubling study")
    cs.add_argument("--config", required=True, type=Path)
    cs.add_argument("--n-min", type=int, default=8)
    cs.add_argument("--levels", type=int, default=5)
    cs.add_argument("--out", type=Path, default=Path("."))
    cs.add_argument("--workers", type=int, default=1)
    cs.add_argument("--full-scale", action="store_true",
                    help="run at dt=1e-4 and T=1 (slow)")
    return ap


def _run(args):
    cfg = replace(load_config(args.config), out=args.out)
    state, records = run_experiment(cfg)
    last = records[-1]
    print(f"finished {state.step} steps: t={last.t:.6g} volume={last.volume:.12g} "
          f"energy={last.energy_modified:.12g}")


def _converge_time(args):
    cfg = load_config(args.config)
    if args.full_scale:
        cfg = replace(cfg, n=256, t_end=1.0)
    dts = [args.dt_max / 2**k for k in range(args.levels)]
    rows = converge_time(cfg, dts, workers=args.workers)
    args.out.mkdir(parents=True, exist_ok=True)
    write_convergence(rows, args.out / "convergence_time.csv")
    print(format_convergence(rows))


def _converge_space(args):
    cfg = load_config(args.config)
    if args.full_scale:
        cfg = replace(cfg, dt=1e-4, t_end=1.0)
    ns = [args.n_min * 2**k for k in range(args.levels)]
    rows = converge_space(cfg, ns, workers=args.workers)
    args.out.mkdir(parents=True, exist_ok=True)
    write_convergence(rows, args.out / "convergence_space.csv")
    print(format_convergence(rows))


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _run, "converge-time": _converge_time,
               "converge-space": _converge_space}[args.command]
    try:
        handler(args)
    except (InvariantViolation, NonpositiveRadicand) as exc:
        log.error("invariant violation: %s", exc)
        return EXIT_INVARIANT
    except SolverError as exc:
        log.error("solver failure: %s", exc)
        return EXIT_SOLVER
    except (FormatError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    return 0


if __name__ == "__main__":
    sys.exit(main())
