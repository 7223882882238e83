"""Command line front end for the experiment harness.

Usage: ``sim <experiment> [--config FILE_OR_JSON] [--seed N] [--workers K]
[--out DIR]``.  The subcommand picks the experiment; an explicit
"experiment" field in the config must agree with it.  Without --config the
stock parameters run.  Exit codes: 0 on success with all checks passing,
1 when a verify criterion fails or the simulation itself errors, 2 for
config problems or an empty result bundle.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from typing import Optional, Sequence

from . import harness
from .errors import ParseError, SimulationError, ValidationError

_HELP = {
    "full_chain": "billiard-style particle ensemble in the moving potential",
    "xi_chain": "reduced scalar chain ensemble",
    "bessel": "squared-radius growth of the limiting diffusion",
    "moments": "single-collision energy transfer moments",
    "aux": "dyadic level walk over the scalar chain",
    "exit_prob": "two-barrier exit frequency of the scalar chain",
    "verify": "run the acceptance criteria and report pass/fail",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sim",
        description="Run stochastic-acceleration experiments and write result bundles.",
    )
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="experiment")
    for name in harness.EXPERIMENTS:
        p = sub.add_parser(name, help=_HELP[name])
        p.add_argument("--config", help="JSON config: a file path or inline object text")
        p.add_argument("--seed", type=int, help="override master_seed")
        p.add_argument("--workers", type=int, help="override worker count")
        p.add_argument("--out", help="override output directory")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = harness.parse_config(args.config if args.config is not None else "{}",
                                      experiment=args.experiment)
        overrides = {}
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ValidationError([f"--seed: expected an integer in [0, 2^64), got {args.seed}"])
            overrides["master_seed"] = args.seed
        if args.workers is not None:
            if args.workers < 1:
                raise ValidationError([f"--workers: expected an integer >= 1, got {args.workers}"])
            overrides["workers"] = args.workers
        if args.out is not None:
            overrides["output_dir"] = args.out
        if overrides:
            config = replace(config, **overrides)
        bundle = harness.run(config)
    except (ParseError, ValidationError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except SimulationError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    text, code = harness.emit_report(bundle)
    print(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
