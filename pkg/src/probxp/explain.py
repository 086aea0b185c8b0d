"""Abductive and locally-minimal probabilistic explanations.

Explanations are sets of *units* (see ``FeatureSpace.units``); without
categorical groups a unit is simply a feature index.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .counting import (
    DEFAULT_CEILING,
    CeilingExceeded,
    OracleTimeout,
    SatOracle,
    approx_count,
    precision_from_count,
)
from .encoding import Formula, assume_fixed, encode
from .model import ExplanationProblem, free_space_size, predict_batch
from .sampling import (
    DEFAULT_HEURISTIC_BUDGET,
    TAG_CONFIRM,
    TAG_COUNT,
    TAG_MC,
    derive_seed,
    heuristic_scores,
    mc_estimate_precision,
    order_by_scores,
)

EXHAUSTIVE_AXP_MAX = 20


def as_fraction(tau) -> Fraction:
    """Thresholds are read as the decimal they print as, so 0.95 means 19/20."""
    return tau if isinstance(tau, Fraction) else Fraction(str(tau))


# --------------------------------------------------------------------------
# precision estimators
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PrecisionEstimate:
    value: float
    kind: str  # exact | amc | mc
    exact: Fraction | None = None
    epsilon: float | None = None
    delta: float | None = None
    seed: int | None = None
    numerator: int | None = None  # model count or sample hits
    denominator: int | None = None  # free-space size or sample count
    oracle_calls: int = 0

    def to_record(self) -> dict:
        rec = {"value": self.value, "kind": self.kind}
        if self.exact is not None:
            rec["exact"] = f"{self.exact.numerator}/{self.exact.denominator}"
        for key in ("epsilon", "delta", "seed", "numerator", "denominator"):
            if getattr(self, key) is not None:
                rec[key] = getattr(self, key)
        return rec


class Oracles:
    """Lazily built per-class formulas and incremental SAT oracles for one problem."""

    def __init__(self, problem: ExplanationProblem, call_budget: float | None = None):
        self.problem = problem
        self.call_budget = call_budget
        self._formulas: dict[int, Formula] = {}
        self._oracles: dict[int, SatOracle] = {}
        self.exact_cache: dict[tuple[int, ...], PrecisionEstimate] = {}

    def formula(self, k: int) -> Formula:
        if k not in self._formulas:
            p = self.problem
            self._formulas[k] = encode(p.classifier, p.space, p.classifier.classes[k])
        return self._formulas[k]

    def oracle(self, k: int) -> SatOracle:
        if k not in self._oracles:
            self._oracles[k] = SatOracle(self.formula(k), call_budget=self.call_budget)
        return self._oracles[k]

    def assumptions(self, units: Iterable[int]) -> list[int]:
        return assume_fixed(self.formula(self.problem.target_index), self.problem.instance.values, units)

    def close(self):
        for o in self._oracles.values():
            o.close()
        self._oracles.clear()


class ExactEstimator:
    """Exact precision from projected model counting on the target-class formula."""

    kind = "exact"

    def __init__(self, ceiling: int = DEFAULT_CEILING):
        self.ceiling = ceiling

    def precision(self, problem: ExplanationProblem, units: Iterable[int], oracles: Oracles,
                  deadline: float | None = None) -> PrecisionEstimate:
        units = tuple(sorted(set(units)))
        cache = oracles.exact_cache
        if units not in cache:
            free = free_space_size(problem.space, units)
            if free > self.ceiling:
                raise CeilingExceeded(f"free space {free} exceeds exact-count ceiling {self.ceiling}")
            oracle = oracles.oracle(problem.target_index)
            before = oracle.calls
            n = oracle.bounded_count(oracles.assumptions(units), None, deadline)
            p = precision_from_count(n, problem.space, units)
            cache[units] = PrecisionEstimate(float(p), "exact", p, numerator=n, denominator=free,
                                             oracle_calls=oracle.calls - before)
        return cache[units]

    def confirm(self, problem, units, oracles, deadline=None) -> PrecisionEstimate:
        return self.precision(problem, units, oracles, deadline)


class ApproxCountEstimator:
    """(epsilon, delta) hash-based counting; the sub-seed depends on the unit set."""

    kind = "amc"

    def __init__(self, epsilon: float = 0.8, delta: float = 0.2, seed: int = 0):
        self.epsilon, self.delta, self.seed = epsilon, delta, seed

    def _estimate(self, problem, units, oracles, deadline, tag) -> PrecisionEstimate:
        units = tuple(sorted(set(units)))
        sub = derive_seed(self.seed, tag, len(units), *units)
        budget = None if deadline is None else max(deadline - time.monotonic(), 0.0)
        res = approx_count(oracles.formula(problem.target_index), oracles.assumptions(units),
                           self.epsilon, self.delta, sub, call_budget=oracles.call_budget, count_budget=budget)
        free = free_space_size(problem.space, units)
        p = precision_from_count(res.count, problem.space, units)
        exact = p if res.kind == "exact" else None
        return PrecisionEstimate(float(p), "amc", exact, self.epsilon, self.delta, sub, res.count, free,
                                 res.oracle_calls)

    def precision(self, problem, units, oracles, deadline=None) -> PrecisionEstimate:
        return self._estimate(problem, units, oracles, deadline, TAG_COUNT)

    def confirm(self, problem, units, oracles, deadline=None) -> PrecisionEstimate:
        return self._estimate(problem, units, oracles, deadline, TAG_CONFIRM)


class MonteCarloEstimator:
    kind = "mc"

    def __init__(self, epsilon: float = 0.05, delta: float = 0.05, seed: int = 0):
        self.epsilon, self.delta, self.seed = epsilon, delta, seed

    def _estimate(self, problem, units, tag) -> PrecisionEstimate:
        est = mc_estimate_precision(problem, units, self.epsilon, self.delta, self.seed, tag)
        return PrecisionEstimate(est.mean, "mc", None, self.epsilon, self.delta, self.seed, est.hits, est.n)

    def precision(self, problem, units, oracles=None, deadline=None) -> PrecisionEstimate:
        return self._estimate(problem, units, TAG_MC)

    def confirm(self, problem, units, oracles=None, deadline=None) -> PrecisionEstimate:
        return self._estimate(problem, units, TAG_CONFIRM)


def make_estimator(kind: str, epsilon: float = 0.05, delta: float = 0.05, seed: int = 0,
                   ceiling: int = DEFAULT_CEILING):
    if kind == "exact":
        return ExactEstimator(ceiling)
    if kind == "amc":
        return ApproxCountEstimator(epsilon, delta, seed)
    if kind == "mc":
        return MonteCarloEstimator(epsilon, delta, seed)
    raise ValueError(f"unknown estimator {kind!r}")


# --------------------------------------------------------------------------
# explanation records
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Probe:
    unit: int
    decision: str  # "drop" | "keep"
    precision: float | None
    sweep: int = 0


@dataclass(frozen=True)
class Explanation:
    units: tuple[int, ...]
    kind: str
    tau: float | None = None
    precision: PrecisionEstimate | None = None
    confirmation: PrecisionEstimate | None = None
    trace: tuple[Probe, ...] = ()
    seed_units: tuple[int, ...] = ()
    complete: bool = True

    def __len__(self):
        return len(self.units)


@dataclass(frozen=True)
class FfaReport:
    scores: dict[int, Fraction]
    axp_count: int
    complete: bool

    def __post_init__(self):
        if any(not 0 <= s <= 1 for s in self.scores.values()):
            raise ValueError("ffa scores must lie in [0, 1]")


# --------------------------------------------------------------------------
# brute-force references
# --------------------------------------------------------------------------


def bruteforce_precision(problem: ExplanationProblem, units: Iterable[int], ceiling: int = DEFAULT_CEILING) -> Fraction:
    """Exact precision by sweeping every point of the restricted space."""
    units = set(units)
    free = free_space_size(problem.space, units)
    if free > ceiling:
        raise CeilingExceeded(f"free space {free} exceeds ceiling {ceiling}")
    pts = problem.space.points_array(units, problem.instance.values)
    hits = int(np.count_nonzero(predict_batch(problem.classifier, pts) == problem.target_index))
    return Fraction(hits, free)


# --------------------------------------------------------------------------
# abductive explanations
# --------------------------------------------------------------------------


def all_units(problem: ExplanationProblem) -> tuple[int, ...]:
    return tuple(range(len(problem.space.units)))


def is_weak_axp(problem: ExplanationProblem, units: Iterable[int], engine: str = "sat",
                oracles: Oracles | None = None, ceiling: int = DEFAULT_CEILING) -> bool:
    """True iff fixing ``units`` to the instance values entails the predicted class."""
    units = set(units)
    if engine == "brute-force":
        return bruteforce_precision(problem, units, ceiling) == 1
    if engine != "sat":
        raise ValueError(f"unknown engine {engine!r}")
    own = oracles is None
    oracles = oracles or Oracles(problem)
    try:
        assumptions = oracles.assumptions(units)
        c = problem.target_index
        return not any(oracles.oracle(k).solve(assumptions)
                       for k in range(len(problem.classifier.classes)) if k != c)
    finally:
        if own:
            oracles.close()


def extract_axp(problem: ExplanationProblem, order: Sequence[int] | None = None, engine: str = "sat",
                oracles: Oracles | None = None, deadline: float | None = None) -> Explanation:
    """Deletion-based AXp: drop each unit in ``order`` whose removal keeps a weak AXp."""
    units = all_units(problem)
    order = list(order) if order is not None else list(units)
    if sorted(order) != list(units):
        raise ValueError("order must be a permutation of the units")
    own = oracles is None
    oracles = oracles or Oracles(problem)
    current = set(units)
    trace = []
    complete = True
    try:
        for u in order:
            if deadline is not None and time.monotonic() > deadline:
                complete = False
                break
            rest = current - {u}
            if is_weak_axp(problem, rest, engine, oracles):
                current = rest
                trace.append(Probe(u, "drop", None))
            else:
                trace.append(Probe(u, "keep", None))
    except OracleTimeout:
        complete = False
    finally:
        if own:
            oracles.close()
    return Explanation(tuple(sorted(current)), "AXp", 1.0, trace=tuple(trace), seed_units=units, complete=complete)


def is_weak_paxp(problem: ExplanationProblem, units: Iterable[int], tau: float, estimator,
                 oracles: Oracles | None = None, deadline: float | None = None) -> tuple[bool, PrecisionEstimate]:
    """Whether the (estimated) precision of ``units`` reaches ``tau``, with the evidence."""
    if not 0 < tau <= 1:
        raise ValueError("tau must lie in (0, 1]")
    own = oracles is None
    oracles = oracles or Oracles(problem)
    try:
        est = estimator.precision(problem, units, oracles, deadline)
    finally:
        if own:
            oracles.close()
    ok = est.exact >= as_fraction(tau) if est.exact is not None else est.value >= tau
    return ok, est


def _visit_order(problem, seed_units, order, estimator, heuristic_budget):
    if isinstance(order, (list, tuple)):
        return [u for u in order if u in seed_units]
    if order == "lex":
        return sorted(seed_units)
    if order == "heuristic":
        seed = getattr(estimator, "seed", 0)
        return order_by_scores(heuristic_scores(problem, seed_units, heuristic_budget, seed))
    raise ValueError(f"unknown order policy {order!r}")


def extract_lmpaxp(problem: ExplanationProblem, tau: float, estimator, seed_set="axp", order="heuristic",
                   heuristic_budget: int = DEFAULT_HEURISTIC_BUDGET, oracles: Oracles | None = None,
                   deadline: float | None = None, kind: str = "LmPAXp") -> Explanation:
    """Deletion sweeps from a seed set, keeping every step a weak PAXp.

    The first sweep visits the seed in ``order``.  Since weak PAXps are not
    monotone, a unit kept early may become removable after later drops, so
    the kept units are swept again (same relative order) until a sweep drops
    nothing; that last sweep certifies local minimality.

    ``seed_set`` is ``"all"``, ``"axp"`` or an explicit unit collection.
    ``order`` is ``"heuristic"``, ``"lex"`` or an explicit unit sequence.
    """
    if not 0 < tau <= 1:
        raise ValueError("tau must lie in (0, 1]")
    own = oracles is None
    oracles = oracles or Oracles(problem)
    complete = True
    trace: list[Probe] = []
    start = current = set(all_units(problem))
    final = confirmation = None
    try:
        if seed_set == "all":
            start = set(all_units(problem))
        elif seed_set == "axp":
            ax_order = None if isinstance(order, str) else list(order) + [u for u in all_units(problem) if u not in order]
            axp = extract_axp(problem, ax_order, "sat", oracles, deadline)
            complete = axp.complete
            start = set(axp.units) if axp.complete else set(all_units(problem))
        else:
            start = set(seed_set)
        current = set(start)
        visit = _visit_order(problem, start, order, estimator, heuristic_budget)
        sweep, changed = 0, True
        while changed:
            changed = False
            for u in [v for v in visit if v in current]:
                if deadline is not None and time.monotonic() > deadline:
                    complete = changed = False
                    break
                ok, est = is_weak_paxp(problem, current - {u}, tau, estimator, oracles, deadline)
                trace.append(Probe(u, "drop" if ok else "keep", est.value, sweep))
                if ok:
                    current.discard(u)
                    changed = True
            sweep += 1
        final = estimator.precision(problem, current, oracles, None)
        confirmation = estimator.confirm(problem, current, oracles, None)
    except OracleTimeout:
        complete = False
    finally:
        if own:
            oracles.close()
    return Explanation(tuple(sorted(current)), kind, tau, final, confirmation, tuple(trace),
                       tuple(sorted(start)), complete)


# --------------------------------------------------------------------------
# formal feature attribution
# --------------------------------------------------------------------------


def enumerate_axps(problem: ExplanationProblem, limit: int | None = None, engine: str = "sat",
                   oracles: Oracles | None = None, deadline: float | None = None,
                   seed: int = 0, tries: int = 200) -> tuple[list[tuple[int, ...]], bool]:
    """All AXps of the instance, and whether the enumeration is complete.

    Up to ``EXHAUSTIVE_AXP_MAX`` units every subset is considered by
    increasing size (supersets of found AXps are skipped); larger problems
    fall back to randomised deletion orders and report an incomplete set.
    """
    units = all_units(problem)
    own = oracles is None
    oracles = oracles or Oracles(problem)
    found: list[tuple[int, ...]] = []
    try:
        if len(units) <= EXHAUSTIVE_AXP_MAX:
            for size in range(len(units) + 1):
                for cand in itertools.combinations(units, size):
                    if deadline is not None and time.monotonic() > deadline:
                        return found, False
                    cs = set(cand)
                    if any(set(a) <= cs for a in found):
                        continue
                    if is_weak_axp(problem, cs, engine, oracles):
                        found.append(cand)
                        if limit is not None and len(found) >= limit:
                            return found, False
            return found, True
        rng = np.random.default_rng(seed)
        seen = set()
        for _ in range(tries):
            ax = extract_axp(problem, list(rng.permutation(units)), engine, oracles, deadline)
            if ax.units not in seen:
                seen.add(ax.units)
                found.append(ax.units)
                if limit is not None and len(found) >= limit:
                    break
        return sorted(found), False
    finally:
        if own:
            oracles.close()


def ffa(problem: ExplanationProblem, axps: Sequence[Sequence[int]], complete: bool = True) -> FfaReport:
    """Fraction of the given AXps containing each unit.

    An interrupted enumeration may have found nothing; every score is then 0.
    """
    if not axps and complete:
        raise ValueError("a complete enumeration has at least one AXp")
    n = len(axps)
    scores = {u: Fraction(sum(u in a for a in axps), n) if n else Fraction(0) for u in all_units(problem)}
    return FfaReport(scores, n, complete)


def ffaxp_set(report: FfaReport) -> tuple[tuple[int, ...], bool]:
    """Units with positive attribution; the flag is False when the report is incomplete."""
    return tuple(sorted(u for u, s in report.scores.items() if s > 0)), report.complete


def extract_lmpffaxp(problem: ExplanationProblem, tau: float, estimator, report: FfaReport | None = None,
                     oracles: Oracles | None = None, deadline: float | None = None) -> Explanation:
    """LmPAXp seeded with the FFAXp and visiting the least attributed units first."""
    own = oracles is None
    oracles = oracles or Oracles(problem)
    try:
        if report is None:
            axps, complete = enumerate_axps(problem, oracles=oracles, deadline=deadline)
            report = ffa(problem, axps, complete)
        seed, complete = ffaxp_set(report)
        order = sorted(seed, key=lambda u: (report.scores[u], u))
        expl = extract_lmpaxp(problem, tau, estimator, seed, order, oracles=oracles, deadline=deadline,
                              kind="LmPFFAXp")
    finally:
        if own:
            oracles.close()
    if not complete:
        expl = Explanation(expl.units, expl.kind, expl.tau, expl.precision, expl.confirmation, expl.trace,
                           expl.seed_units, False)
    return expl


# --------------------------------------------------------------------------
# exhaustive minimality oracles
# --------------------------------------------------------------------------


def min_paxp_bruteforce(problem: ExplanationProblem, tau: float, max_units: int = EXHAUSTIVE_AXP_MAX) -> Explanation:
    """Smallest weak PAXp by exhaustive search; ties broken lexicographically."""
    units = all_units(problem)
    if len(units) > max_units:
        raise ValueError(f"{len(units)} units exceed the exhaustive limit {max_units}")
    for size in range(len(units) + 1):
        for cand in itertools.combinations(units, size):
            p = bruteforce_precision(problem, cand)
            if p >= as_fraction(tau):
                est = PrecisionEstimate(float(p), "exact", p)
                return Explanation(cand, "MinPAXp", tau, est)
    raise AssertionError("the full unit set always has precision 1")


def is_paxp_bruteforce(problem: ExplanationProblem, units: Iterable[int], tau: float,
                       max_units: int = EXHAUSTIVE_AXP_MAX) -> bool:
    """Weak PAXp with no weak-PAXp proper subset (all subsets checked exactly)."""
    units = tuple(sorted(set(units)))
    if len(units) > max_units:
        raise ValueError(f"{len(units)} units exceed the exhaustive limit {max_units}")
    t = as_fraction(tau)
    if bruteforce_precision(problem, units) < t:
        return False
    for size in range(len(units)):
        for sub in itertools.combinations(units, size):
            if bruteforce_precision(problem, sub) >= t:
                return False
    return True
