"""Per-instance orchestration of the explanation commands and the benchmark table."""

from __future__ import annotations

import time
from typing import Sequence

import numpy as np

from .counting import CountingError
from .explain import (
    Explanation,
    Oracles,
    enumerate_axps,
    extract_axp,
    extract_lmpaxp,
    extract_lmpffaxp,
    ffa,
    ffaxp_set,
    make_estimator,
    min_paxp_bruteforce,
)
from .io import ModelDocument, Report, RunConfig
from .model import ExplanationProblem, Instance, validate_problem
from .sampling import derive_seed

COMMANDS = ("axp", "lmpaxp", "ffa", "ffaxp", "lmpffaxp", "minpaxp-oracle")
TAG_INSTANCE = 5


def select_instances(instances: Sequence[Instance], count: int | None = None, fraction: float | None = None,
                     seed: int = 0) -> list[tuple[int, Instance]]:
    """Random subset (kept in file order) of the instances, with their row ids."""
    idx = list(range(len(instances)))
    n = len(idx)
    if fraction is not None:
        n = max(1, round(fraction * len(idx)))
    if count is not None:
        n = min(n, count)
    if n < len(idx):
        rng = np.random.default_rng(seed)
        idx = sorted(int(i) for i in rng.choice(len(idx), size=n, replace=False))
    return [(i, instances[i]) for i in idx]


def _names(doc: ModelDocument, units) -> list[str]:
    names = doc.space.unit_names()
    return [names[u] for u in units]


def _ratio(n: int, base: int) -> float:
    return 100.0 if base == 0 else 100.0 * n / base


def _expl_fields(doc, expl: Explanation, base_len: int | None, config: RunConfig) -> dict:
    rec = {
        "kind": expl.kind,
        "units": list(expl.units),
        "features": _names(doc, expl.units),
        "length": len(expl.units),
        "seed_length": len(expl.seed_units),
        "complete": expl.complete,
    }
    if base_len is not None:
        rec["pct"] = round(_ratio(len(expl.units), base_len), 6)
    if expl.precision is not None:
        rec["prec"] = expl.precision.value
        rec["precision"] = expl.precision.to_record()
    if expl.confirmation is not None:
        rec["confirmation"] = expl.confirmation.to_record()
    if config.trace:
        rec["trace"] = [[p.unit, p.decision, p.precision, p.sweep] for p in expl.trace]
    return rec


def explain_one(command: str, problem: ExplanationProblem, doc: ModelDocument, config: RunConfig,
                seed: int, deadline: float) -> dict:
    estimator = make_estimator(config.estimator, config.epsilon, config.delta, seed, config.ceiling)
    oracles = Oracles(problem, call_budget=config.call_budget)
    try:
        if command == "axp":
            return _expl_fields(doc, extract_axp(problem, oracles=oracles, deadline=deadline), None, config)
        if command == "lmpaxp":
            order = config.order
            if order == "ffa":
                axps, complete = enumerate_axps(problem, oracles=oracles, deadline=deadline)
                rep = ffa(problem, axps, complete)
                order = sorted(rep.scores, key=lambda u: (rep.scores[u], u))
            expl = extract_lmpaxp(problem, config.tau, estimator, config.seed_set, order,
                                  config.heuristic_budget, oracles, deadline)
            return _expl_fields(doc, expl, len(expl.seed_units), config)
        if command in ("ffa", "ffaxp"):
            axps, complete = enumerate_axps(problem, oracles=oracles, deadline=deadline)
            rep = ffa(problem, axps, complete)
            units, _ = ffaxp_set(rep)
            names = doc.space.unit_names()
            rec = {"kind": "FFAXp", "units": list(units), "features": _names(doc, units), "length": len(units),
                   "axp_count": rep.axp_count, "complete": complete}
            if command == "ffa":
                rec["ffa"] = {names[u]: float(s) for u, s in sorted(rep.scores.items())}
                rec["axps"] = [list(a) for a in axps]
            return rec
        if command == "lmpffaxp":
            expl = extract_lmpffaxp(problem, config.tau, estimator, oracles=oracles, deadline=deadline)
            return _expl_fields(doc, expl, len(expl.seed_units), config)
        if command == "minpaxp-oracle":
            return _expl_fields(doc, min_paxp_bruteforce(problem, config.tau), None, config)
        raise ValueError(f"unknown command {command!r}")
    finally:
        oracles.close()


def run_explain(command: str, doc: ModelDocument, instances: Sequence[tuple[int, Instance]] | Sequence[Instance],
                config: RunConfig) -> Report:
    """Run one explanation command over every instance; failures become records."""
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}")
    records = []
    for pos, item in enumerate(instances):
        iid, inst = item if isinstance(item, tuple) else (pos, item)
        problem = ExplanationProblem(doc.classifier, inst, doc.space)
        rec = {"type": "instance", "instance": iid, "command": command,
               "values": [str(v) for v in doc.space.value_point(inst.values)], "label": str(inst.label)}
        bad = validate_problem(problem)
        if bad:
            rec.update(status="error", error=str(bad))
            records.append(rec)
            continue
        start = time.monotonic()
        deadline = start + config.total_budget
        try:
            rec.update(explain_one(command, problem, doc, config, derive_seed(config.seed, TAG_INSTANCE, iid), deadline))
            elapsed = time.monotonic() - start
            timed_out = not rec.get("complete", True) or elapsed > config.total_budget
            rec["status"] = "timeout" if timed_out else "ok"
        except (CountingError, ValueError) as exc:
            elapsed = time.monotonic() - start
            rec.update(status="error", error=f"{type(exc).__name__}: {exc}")
        rec["time"] = round(elapsed, 6) if config.timings else None
        records.append(rec)
    return Report(command, records, config)


BENCH_COLUMNS = ("model", "m", "K", "n", "axp_len", "axp_time", "lmpaxp_len", "lmpaxp_pct", "lmpaxp_prec",
                 "lmpaxp_time", "ffaxp_len", "ffaxp_time", "lmpffaxp_len", "lmpffaxp_pct", "lmpffaxp_prec",
                 "lmpffaxp_time", "timeouts")


def run_benchmark(models: Sequence[tuple[str, ModelDocument, Sequence]], config: RunConfig) -> list[dict]:
    """One row per model: AXp / LmPAXp / FFAXp / LmPFFAXp length, ratio, precision and time."""
    rows = []
    for name, doc, instances in models:
        reps = {cmd: run_explain(cmd, doc, instances, config) for cmd in ("axp", "lmpaxp", "ffaxp", "lmpffaxp")}
        s = {cmd: r.summary for cmd, r in reps.items()}
        rows.append({
            "type": "bench", "model": name, "m": len(doc.space.units), "K": len(doc.classes),
            "n": len(reps["axp"].records),
            "axp_len": s["axp"]["mean_len"], "axp_time": s["axp"]["mean_time"],
            "lmpaxp_len": s["lmpaxp"]["mean_len"], "lmpaxp_pct": s["lmpaxp"]["mean_pct"],
            "lmpaxp_prec": s["lmpaxp"]["mean_prec"], "lmpaxp_time": s["lmpaxp"]["mean_time"],
            "ffaxp_len": s["ffaxp"]["mean_len"], "ffaxp_time": s["ffaxp"]["mean_time"],
            "lmpffaxp_len": s["lmpffaxp"]["mean_len"], "lmpffaxp_pct": s["lmpffaxp"]["mean_pct"],
            "lmpffaxp_prec": s["lmpffaxp"]["mean_prec"], "lmpffaxp_time": s["lmpffaxp"]["mean_time"],
            "timeouts": sum(x["timeouts"] for x in s.values()),
        })
    return rows


def bench_table(rows: Sequence[dict]) -> str:
    head = ("model", "m", "K", "AXp Len", "Time", "LmPAXp Len", "%", "Prec", "Time",
            "FFAXp Len", "Time", "LmPFFAXp Len", "%", "Prec", "Time", "#TO")
    keys = BENCH_COLUMNS[:3] + BENCH_COLUMNS[4:]
    lines = ["\t".join(head)]
    for r in rows:
        cells = []
        for k in keys:
            v = r[k]
            cells.append("-" if v is None else (f"{v:.2f}" if isinstance(v, float) else str(v)))
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"
