"""Command-line entry point.

Subcommands: `run` executes a preset or config file and writes artifacts;
`list-presets` enumerates scenario names; `validate` checks a config file
without running anything; `report` renders figures from a finished run
directory. Exit codes: 0 success, 2 configuration error, 3 runtime failure
(trial failures beyond tolerance). Errors are emitted as one-line JSON
records on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import DecoyPlanError, ParseError, UnknownPreset
from .harness import EMIT_TOKENS, RunSpec, load_config, run
from .scenarios import build, list_presets

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _error_record(kind: str, exc: Exception) -> str:
    record = {"error": kind, "message": str(exc)}
    field = getattr(exc, "field", None)
    if field is not None:
        record["field"] = field
    return json.dumps(record)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="decoyplan",
        description="Monte-Carlo runner for deceptive grid-world path planning.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a preset or a JSON config file")
    p_run.add_argument("preset", nargs="?", help="preset name (see list-presets)")
    p_run.add_argument("--config", help="JSON config file path")
    p_run.add_argument("--trials", type=int, help="number of Monte-Carlo trials")
    p_run.add_argument("--seed", type=int, help="master seed (non-negative)")
    p_run.add_argument("--scale", type=int, help="divisor for grid and schedule sizes")
    p_run.add_argument("--out", help="output directory")
    p_run.add_argument(
        "--emit", help=f"comma-separated subset of {{{','.join(EMIT_TOKENS)}}}"
    )
    p_run.add_argument("--parallel", type=int, help="worker processes (1 = inline)")
    p_run.add_argument(
        "--figures", action="store_true", help="render PNG figures after the run"
    )

    sub.add_parser("list-presets", help="print available preset names")

    p_val = sub.add_parser("validate", help="check a config file and exit")
    p_val.add_argument("--config", required=True, help="JSON config file path")

    p_rep = sub.add_parser("report", help="render figures from a run directory")
    p_rep.add_argument("run_dir", help="directory holding run artifacts")
    p_rep.add_argument("--out", help="directory for figures (default: run_dir)")
    return parser


def _spec_from_args(args: argparse.Namespace) -> RunSpec:
    if args.config:
        spec = load_config(args.config)
        if args.preset:
            raise ParseError("give either a preset or --config, not both")
    else:
        if not args.preset:
            raise ParseError("a preset name or --config is required")
        spec = RunSpec(
            preset=args.preset,
            trials=args.trials if args.trials is not None else 100,
            seed=args.seed if args.seed is not None else 0,
        )
    updates = {}
    if args.config:
        if args.trials is not None:
            updates["trials"] = args.trials
        if args.seed is not None:
            updates["seed"] = args.seed
    if args.scale is not None:
        updates["scale"] = args.scale
    if args.out is not None:
        updates["output_dir"] = args.out
    if args.emit is not None:
        updates["emit"] = frozenset(
            token.strip() for token in args.emit.split(",") if token.strip()
        )
    if args.parallel is not None:
        updates["parallel"] = args.parallel
    if updates:
        from dataclasses import replace

        spec = replace(spec, **updates)
    return spec


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "list-presets":
        for name in list_presets():
            print(name)
        return EXIT_OK

    if args.command == "validate":
        try:
            spec = load_config(args.config)
            build(spec.preset, spec.scale)
        except (ParseError, UnknownPreset, ValueError) as e:
            print(_error_record("config", e), file=sys.stderr)
            return EXIT_CONFIG
        print(f"ok: {spec.preset} trials={spec.trials} seed={spec.seed} scale={spec.scale}")
        return EXIT_OK

    if args.command == "report":
        from .report import render_run

        try:
            written = render_run(args.run_dir, args.out)
        except OSError as e:
            print(_error_record("io", e), file=sys.stderr)
            return EXIT_RUNTIME
        for path in written:
            print(path)
        if not written:
            print("no renderable artifacts found", file=sys.stderr)
            return EXIT_RUNTIME
        return EXIT_OK

    # run
    try:
        spec = _spec_from_args(args)
        outcome = run(spec)
    except (ParseError, UnknownPreset, ValueError) as e:
        print(_error_record("config", e), file=sys.stderr)
        return EXIT_CONFIG
    except DecoyPlanError as e:
        print(_error_record("runtime", e), file=sys.stderr)
        return EXIT_RUNTIME
    if outcome.exit_code != 0:
        print(json.dumps(outcome.error), file=sys.stderr)
        return outcome.exit_code
    print(f"wrote: {outcome.output_dir}")
    if args.figures:
        from .report import render_run

        for path in render_run(outcome.output_dir):
            print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
