"""Command-line entry point: ``probxp explain|export-cnf|count|bench``.

Every ``explain``/``bench`` option can also be set through a ``PROBXP_``
environment variable (``PROBXP_TAU``, ``PROBXP_ESTIMATOR``, ...); explicit
flags win over the environment, which wins over the family preset.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .counting import CeilingExceeded, OracleTimeout, approx_count, exact_count
from .encoding import encode, parse_dimacs, to_dimacs, to_opb
from .io import (
    ModelFormatError,
    RunConfig,
    load_instances,
    load_model,
)
from .runner import COMMANDS, bench_table, run_benchmark, run_explain, select_instances

EXIT_OK = 0
EXIT_PARSE = 3
EXIT_VALIDATION = 4
EXIT_BUDGET = 5

FLAG_FIELDS = {
    "tau": "tau", "estimator": "estimator", "epsilon": "epsilon", "delta": "delta", "seed": "seed",
    "call_budget": "call_budget", "total_budget": "total_budget", "order": "order", "seed_set": "seed_set",
    "heuristic_budget": "heuristic_budget", "ceiling": "ceiling",
}


def _run_options(p: argparse.ArgumentParser):
    p.add_argument("--tau", type=float)
    p.add_argument("--estimator", choices=("exact", "amc", "mc"))
    p.add_argument("--epsilon", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--call-budget", type=float, help="seconds per oracle call")
    p.add_argument("--total-budget", type=float, help="seconds per explanation")
    p.add_argument("--order", choices=("heuristic", "ffa", "lex"))
    p.add_argument("--seed-set", choices=("all", "axp"))
    p.add_argument("--heuristic-budget", type=int, help="samples per feature for the ordering probe")
    p.add_argument("--ceiling", type=int, help="largest free space counted exactly")
    p.add_argument("--count", type=int, help="explain at most this many instances")
    p.add_argument("--fraction", type=float, help="explain this fraction of the instances")
    p.add_argument("--no-trace", action="store_true")
    p.add_argument("--no-timings", action="store_true", help="omit wall-clock fields (byte-stable output)")
    p.add_argument("--out", help="write JSON lines here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="probxp", description="Abductive and probabilistic explanations")
    sub = parser.add_subparsers(dest="cmd", required=True)

    ex = sub.add_parser("explain", help="explain instances of a model")
    ex.add_argument("command", choices=COMMANDS)
    ex.add_argument("--model", required=True)
    ex.add_argument("--data", required=True)
    _run_options(ex)

    cnf = sub.add_parser("export-cnf", help="print the encoding for one target class")
    cnf.add_argument("--model", required=True)
    cnf.add_argument("--target-class", required=True)
    cnf.add_argument("--format", choices=("dimacs", "opb"), default="dimacs")
    cnf.add_argument("--out")

    cnt = sub.add_parser("count", help="projected model count of a DIMACS file")
    cnt.add_argument("path")
    cnt.add_argument("--exact", action="store_true")
    cnt.add_argument("--epsilon", type=float, default=0.8)
    cnt.add_argument("--delta", type=float, default=0.2)
    cnt.add_argument("--seed", type=int, default=0)
    cnt.add_argument("--call-budget", type=float)
    cnt.add_argument("--ceiling", type=int, default=2 ** 20)

    bench = sub.add_parser("bench", help="Len/%%/Prec/Time table over several models")
    bench.add_argument("--model", action="append", required=True)
    bench.add_argument("--data", action="append", required=True)
    _run_options(bench)
    return parser


def _config(args, family: str) -> RunConfig:
    cfg = RunConfig.from_env(RunConfig.preset(family))
    changes = {field: getattr(args, flag) for flag, field in FLAG_FIELDS.items() if getattr(args, flag, None) is not None}
    if args.no_trace:
        changes["trace"] = False
    if args.no_timings:
        changes["timings"] = False
    return dataclasses.replace(cfg, **changes)


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.cmd == "explain":
            doc = load_model(args.model)
            cfg = _config(args, doc.family)
            chosen = select_instances(load_instances(args.data, doc), args.count, args.fraction, cfg.seed)
            report = run_explain(args.command, doc, chosen, cfg)
            _emit(report.dumps(), args.out)
            sys.stderr.write(report.table())
            return EXIT_BUDGET if report.summary["timeouts"] else EXIT_OK
        if args.cmd == "export-cnf":
            doc = load_model(args.model)
            target = next((c for c in doc.classes if str(c) == args.target_class), None)
            if target is None:
                sys.stderr.write(f"unknown class {args.target_class!r}\n")
                return EXIT_VALIDATION
            formula = encode(doc.classifier, doc.space, target)
            _emit(to_dimacs(formula) if args.format == "dimacs" else to_opb(formula), args.out)
            return EXIT_OK
        if args.cmd == "count":
            with open(args.path, encoding="utf-8") as fh:
                formula = parse_dimacs(fh.read())
            if args.exact:
                res = exact_count(formula, ceiling=args.ceiling, call_budget=args.call_budget)
            else:
                res = approx_count(formula, epsilon=args.epsilon, delta=args.delta, seed=args.seed,
                                   call_budget=args.call_budget)
            sys.stdout.write(json.dumps(res.to_record(), sort_keys=True) + "\n")
            return EXIT_OK
        if args.cmd == "bench":
            if len(args.model) != len(args.data):
                sys.stderr.write("give one --data per --model\n")
                return 2
            entries = []
            cfg = None
            for mpath, dpath in zip(args.model, args.data):
                doc = load_model(mpath)
                cfg = cfg or _config(args, doc.family)
                chosen = select_instances(load_instances(dpath, doc), args.count, args.fraction, cfg.seed)
                entries.append((mpath, doc, chosen))
            rows = run_benchmark(entries, cfg)
            _emit("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows), args.out)
            sys.stderr.write(bench_table(rows))
            return EXIT_BUDGET if any(r["timeouts"] for r in rows) else EXIT_OK
    except ModelFormatError as exc:
        sys.stderr.write(f"parse error: {exc}\n")
        return EXIT_PARSE
    except ValueError as exc:
        # ModelValidationError, InstanceError and bad configuration values
        sys.stderr.write(f"validation error: {exc}\n")
        return EXIT_VALIDATION
    except (OracleTimeout, CeilingExceeded) as exc:
        sys.stderr.write(f"budget exhausted: {exc}\n")
        return EXIT_BUDGET
    return 2


if __name__ == "__main__":
    sys.exit(main())
