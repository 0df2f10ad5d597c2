"""Command line entry point ``adapid``.

Exit codes: 0 pass, 1 bound violation (or a run directory that fails
verification), 2 configuration or excitation failure, 3 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .errors import (ConfigurationError, ContractViolation, IngestionError,
                     NumericalError, PECertificationError)

EXIT_PASS, EXIT_VIOLATION, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adapid", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides the config)")
    r.add_argument("--trials", type=int, help="number of trials (overrides the config)")
    r.add_argument("--seed", type=int, help="base seed (overrides the config)")
    r.add_argument("--jobs", type=int, default=1, help="worker processes for trials")
    r.add_argument("--plots", action="store_true", help="also write plot data and SVG charts")

    c = sub.add_parser("certify-pe", help="certify excitation of a trajectory CSV")
    c.add_argument("trajectory")
    c.add_argument("--loss", required=True, help='e.g. "power:2", "huber:1" or a JSON fragment')
    c.add_argument("--T", type=int, required=True, dest="T")
    c.add_argument("--method", default="auto", choices=("auto", "eigen", "sampling"))
    c.add_argument("--floor", type=float, default=None, help="gamma floor")
    c.add_argument("--seed", type=int, default=0)

    v = sub.add_parser("verify", help="recompute and check a run directory")
    v.add_argument("run_dir")
    v.add_argument("--rerun", action="store_true", help="also re-run the identifier")

    pl = sub.add_parser("plot", help="write plot data for a run directory")
    pl.add_argument("run_dir")
    pl.add_argument("--no-svg", action="store_true")
    return p


def _cmd_run(args) -> int:
    from .harness import ExperimentConfig, emit_plot_data, run_experiment

    cfg = ExperimentConfig.load(args.config)
    d = cfg.to_dict()
    if args.trials is not None:
        d["trials"] = args.trials
    if args.seed is not None:
        d["seed"] = args.seed
    if args.plots:
        d["emit_plots"] = True
    cfg = ExperimentConfig.from_dict(d)
    out = args.out or cfg.output_dir or f"runs/{cfg.name}"
    report = run_experiment(cfg, out=out, jobs=args.jobs)
    if cfg.emit_plots:
        emit_plot_data(out)
    sys.stdout.write(report.text())
    return EXIT_PASS if report.passed else EXIT_VIOLATION


def _cmd_certify(args) -> int:
    from .losses import LossSpec
    from .pe import GAMMA_FLOOR, certify_pe
    from .signals import ingest_trajectory

    loss = LossSpec.parse(args.loss)
    traj = ingest_trajectory(args.trajectory)
    floor = GAMMA_FLOOR if args.floor is None else args.floor
    cert = certify_pe(traj, loss, args.T, gamma_floor=floor, method=args.method, seed=args.seed)
    sys.stdout.write(cert.to_json() + "\n")
    return EXIT_PASS if cert.is_pe else EXIT_CONFIG


def _cmd_verify(args) -> int:
    from .harness import verify_run

    res = verify_run(args.run_dir, rerun=args.rerun)
    for msg in res.problems:
        sys.stdout.write(f"mismatch: {msg}\n")
    state = "consistent" if res.consistent else "INCONSISTENT"
    verdict = "PASS" if res.passed else "FAIL"
    sys.stdout.write(f"{args.run_dir}: {state}, bound dominance {verdict}\n")
    return res.exit_code


def _cmd_plot(args) -> int:
    from .harness import emit_plot_data

    dirs = emit_plot_data(args.run_dir, svg=not args.no_svg)
    sys.stdout.write(f"wrote plot data for {len(dirs)} trials\n")
    return EXIT_PASS


COMMANDS = {"run": _cmd_run, "certify-pe": _cmd_certify, "verify": _cmd_verify,
            "plot": _cmd_plot}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (IngestionError, OSError) as exc:
        sys.stderr.write(f"adapid: I/O error: {exc}\n")
        return EXIT_IO
    except PECertificationError as exc:
        sys.stderr.write(f"adapid: {exc}\n")
        return EXIT_CONFIG
    except (ConfigurationError, ContractViolation, NumericalError) as exc:
        sys.stderr.write(f"adapid: configuration error: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
