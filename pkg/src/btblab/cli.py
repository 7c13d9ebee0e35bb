"""Command-line surface: trace generation, analysis, accounting, simulation.

Every file-producing command drops a sibling `<output>.manifest.json`
recording the resolved configuration plus SHA-256 digests of inputs and
outputs; re-running the same invocation reproduces outputs byte for byte,
so equal manifests mean equal results.

Exit codes: 0 success, 1 usage error, 2 input/parse error, 3 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from typing import List, Optional

from . import __version__
from .core import KINDS_BY_NAME, profile_for_mode
from .models import ConfigError, MODEL_NAMES, build_model
from .models.base import InvariantError
from .sim import SimConfig, compare, compare_csv, offset_histogram, run
from .storage import capacity_table, capacity_table_csv
from .trace import (GeneratorSpec, GeneratorSpecError, TraceFormatError,
                    generate, load_trace, save_trace)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_INTERNAL = 3

_ISA_MODES = {"aligned4": 0, "arm64": 0, "byte": 1, "x86": 1}


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags by default; usage errors are exit 1 here.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(output_path, command: str, config: dict,
                   inputs: Optional[List[str]] = None) -> str:
    manifest = {
        "schema": "btblab.manifest/v1",
        "tool": "btblab",
        "version": __version__,
        "command": command,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in (inputs or [])},
        "outputs": {str(output_path): _sha256(output_path)},
    }
    path = f"{output_path}.manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _parse_dist(text: str):
    """`0-6:0.54,7-10:0.22,...`; a bare number is a single-width bucket."""
    buckets = []
    for part in text.split(","):
        try:
            span, prob = part.split(":")
            lo, _, hi = span.partition("-")
            lo_i = int(lo)
            hi_i = int(hi) if hi else lo_i
            buckets.append((lo_i, hi_i, float(prob)))
        except ValueError:
            raise UsageError(f"bad width bucket {part!r}; expected lo-hi:prob") from None
    return tuple(buckets)


def _parse_kind_mix(text: str):
    mix = []
    for part in text.split(","):
        try:
            name, prob = part.split(":")
            mix.append((KINDS_BY_NAME[name], float(prob)))
        except (ValueError, KeyError):
            names = ", ".join(KINDS_BY_NAME)
            raise UsageError(f"bad kind {part!r}; expected one of {names}, "
                             "as name:prob") from None
    return tuple(mix)


def _write_text(path: Optional[str], text: str) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# -- subcommands --------------------------------------------------------------

def cmd_gen_trace(args) -> int:
    spec = GeneratorSpec(
        static_branches=args.branches,
        records=args.records,
        width_buckets=_parse_dist(args.dist) if args.dist else GeneratorSpec.width_buckets,
        kind_mix=_parse_kind_mix(args.kind_mix) if args.kind_mix else GeneratorSpec.kind_mix,
        taken_rate=args.taken_rate,
        gap_mean=args.gap_mean,
        pattern=args.pattern.replace("-", "_"),
        zipf_s=args.zipf_s,
        seed=args.seed,
        isa_mode=_ISA_MODES[args.isa],
    )
    spec.validate()
    trace = generate(spec)
    save_trace(args.output, trace)
    manifest = write_manifest(args.output, "gen-trace", spec.to_dict())
    print(f"wrote {args.output} ({len(trace.records)} records), {manifest}")
    return EXIT_OK


def cmd_analyze_offsets(args) -> int:
    trace = load_trace(args.trace)
    csv_text = offset_histogram(trace).csv()
    _write_text(args.output, csv_text)
    if args.output:
        write_manifest(args.output, "analyze-offsets", {"trace": str(args.trace)},
                       inputs=[args.trace])
    return EXIT_OK


def cmd_capacity_table(args) -> int:
    budgets = None
    if args.budgets:
        try:
            budgets = [float(b) for b in args.budgets.split(",")]
        except ValueError:
            raise UsageError(f"bad budget list {args.budgets!r}") from None
    isa = profile_for_mode(_ISA_MODES[args.isa])
    rows = capacity_table(budgets, isa)
    _write_text(args.output, capacity_table_csv(rows))
    if args.output:
        write_manifest(args.output, "capacity-table",
                       {"budgets": budgets, "isa": args.isa})
    return EXIT_OK


def _sim_config(args, trace) -> SimConfig:
    return SimConfig(isa=trace.isa, warmup_records=args.warmup,
                     measure_records=args.measure)


def cmd_simulate(args) -> int:
    trace = load_trace(args.trace)
    config = _sim_config(args, trace)
    model = build_model(args.model, budget_kb=args.budget_kb, sets=args.sets,
                        isa=config.isa)
    metrics = run(model, trace, config)
    doc = {
        "schema": "btblab.metrics/v1",
        "model": args.model,
        "budget_kb": args.budget_kb,
        "sets": args.sets,
        "warmup_records": config.warmup_records,
        "trace": str(args.trace),
        **metrics.to_dict(),
    }
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    _write_text(args.output, text)
    if args.output:
        write_manifest(args.output, "simulate", doc, inputs=[args.trace])
    return EXIT_OK


def cmd_compare(args) -> int:
    names = [m.strip() for m in args.models.split(",") if m.strip()]
    for name in names:
        if name not in MODEL_NAMES:
            raise ConfigError(f"unknown model {name!r}; choose from "
                              f"{', '.join(MODEL_NAMES)}")
    trace = load_trace(args.trace)
    config = _sim_config(args, trace)
    results = compare(names, trace, args.budget_kb, config)
    _write_text(args.output, compare_csv(results, args.budget_kb))
    if args.output:
        write_manifest(args.output, "compare",
                       {"models": names, "budget_kb": args.budget_kb,
                        "warmup_records": config.warmup_records,
                        "trace": str(args.trace)},
                       inputs=[args.trace])
    return EXIT_OK


# -- wiring -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="btblab",
                     description="BTB organization simulator and accounting tool")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("gen-trace", help="generate a synthetic branch trace")
    p.add_argument("--branches", type=int, required=True,
                   help="static branch working-set size")
    p.add_argument("--records", type=int, required=True,
                   help="dynamic records to emit")
    p.add_argument("--dist", help="width buckets, e.g. 0-6:0.54,7-10:0.22,...")
    p.add_argument("--kind-mix", help="branch kind mix, e.g. cond:0.8,ret:0.2")
    p.add_argument("--pattern", default="round-robin",
                   choices=["round-robin", "uniform", "zipf"])
    p.add_argument("--zipf-s", type=float, default=1.2)
    p.add_argument("--taken-rate", type=float, default=0.9)
    p.add_argument("--gap-mean", type=int, default=9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--isa", default="aligned4", choices=sorted(_ISA_MODES))
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_gen_trace)

    p = sub.add_parser("analyze-offsets",
                       help="stored-offset-width histogram of a trace")
    p.add_argument("trace")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_analyze_offsets)

    p = sub.add_parser("capacity-table",
                       help="branch capacity per organization and budget")
    p.add_argument("--budgets", help="comma-separated KB values (default: presets)")
    p.add_argument("--isa", default="aligned4", choices=sorted(_ISA_MODES))
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_capacity_table)

    p = sub.add_parser("simulate", help="run one model over a trace")
    p.add_argument("--model", required=True, choices=MODEL_NAMES)
    p.add_argument("--budget-kb", type=float)
    p.add_argument("--sets", type=int)
    p.add_argument("--warmup", type=int, help="warmup records (default: 10%%)")
    p.add_argument("--measure", type=int, help="records to measure after warmup")
    p.add_argument("trace")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="run several models at one budget")
    p.add_argument("--models", required=True,
                   help=f"comma-separated subset of: {','.join(MODEL_NAMES)}")
    p.add_argument("--budget-kb", type=float, required=True)
    p.add_argument("--warmup", type=int)
    p.add_argument("--measure", type=int)
    p.add_argument("trace")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="btblab: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, GeneratorSpecError) as exc:
        print(f"btblab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TraceFormatError, OSError, ValueError) as exc:
        print(f"btblab: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InvariantError, AssertionError) as exc:
        print(f"btblab: internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
