"""Command line entry point: ``miranda-layers <command> [options]``."""
from __future__ import annotations

import argparse
import sys

from . import harness
from ._accel import backend_name, set_threads
from .errors import ConfigError, MirandaError, QuadratureConvergenceError

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NONCONVERGED = 0, 1, 2, 3


def build_parser():
    p = argparse.ArgumentParser(prog="miranda-layers",
                                description="Layer potential regularity experiments on planar C^{1,1} curves.")
    p.add_argument("command", choices=[*harness.COMMANDS, "all"])
    p.add_argument("--config", help="JSON file overriding the default experiment configuration")
    p.add_argument("--out", default="out", help="output directory (default: ./out)")
    p.add_argument("--seed", type=int, help="override the configuration seed")
    p.add_argument("--threads", type=int, default=0, help="numba threads, 0 = automatic")
    p.add_argument("--side", choices=["interior", "exterior"], help="holder: restrict to one side")
    p.add_argument("--p-param", type=float, help="cylinder: boundary parameter of the base point")
    p.add_argument("--r", type=float, help="cylinder: half-width")
    p.add_argument("--delta", type=float, help="cylinder: half-height")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    set_threads(args.threads)
    try:
        cfg = harness.load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        kw = {}
        if args.command == "holder" and args.side:
            kw["sides"] = [args.side]
        if args.command == "cylinder":
            kw = {"p_param": args.p_param, "r": args.r, "delta": args.delta}
        reports, code = harness.run(args.command, cfg, args.out, **kw)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QuadratureConvergenceError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except MirandaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK
    for rep in reports:
        failed = [c.name for c in rep.checks if not c.passed]
        status = "PASS" if rep.passed and not rep.unconverged else "FAIL"
        extra = f" failed={','.join(failed)}" if failed else ""
        if rep.unconverged:
            extra += f" unconverged={rep.unconverged}"
        print(f"{status} {rep.command} ({len(rep.checks)} checks, backend={backend_name()}){extra}")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
