"""Exact and hash-based approximate projected model counting.

The approximate counter follows the usual recipe of random parity (XOR)
constraints over the projection set: cut the solution space into cells,
enumerate one cell exhaustively up to a pivot, scale by the number of
cells and take the median over independent rounds.
"""

from __future__ import annotations

import math
import statistics
import threading
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from pysat.solvers import Solver

from .encoding import Formula
from .model import FeatureSpace, free_space_size

DEFAULT_CEILING = 2 ** 20
ROUND_SUCCESS_PROB = 0.62  # lower bound on a single round landing in the (1+eps) band


class CountingError(Exception):
    pass


class CeilingExceeded(CountingError):
    """Free space too large for exact counting; use the approximate path."""


class OracleTimeout(CountingError):
    def __init__(self, message: str, rounds_completed: int = 0, partial: Sequence[int] = ()):
        super().__init__(message)
        self.rounds_completed = rounds_completed
        self.partial = tuple(partial)


@dataclass(frozen=True)
class CountResult:
    count: int
    kind: str  # "exact" | "approximate"
    oracle_calls: int = 0
    elapsed: float = 0.0
    epsilon: float | None = None
    delta: float | None = None
    seed: int | None = None
    rounds: tuple[int, ...] = field(default=(), compare=False)

    def to_record(self) -> dict:
        return {
            "count": self.count,
            "kind": self.kind,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "seed": self.seed,
            "oracle_calls": self.oracle_calls,
            "rounds": list(self.rounds),
            "elapsed_ms": round(self.elapsed * 1000, 3),
        }


class SatOracle:
    """Incremental SAT oracle over one formula, with XOR support.

    Temporary constraints are guarded by selector variables and retired by
    asserting the negated selector.
    """

    def __init__(self, formula: Formula, solver: str = "m22", call_budget: float | None = None):
        self.formula = formula
        self.call_budget = call_budget
        self.top = formula.nvars
        self.calls = 0
        self._solver = Solver(name=solver, bootstrap_with=[list(c) for c in formula.clauses])
        if formula.input_vars:
            # one-hot blocks: the true value variables identify the point
            self._block_vars = tuple(v for row in formula.input_vars for v in row)
            self._positive_block = True
        else:
            self._block_vars = tuple(formula.projection)
            self._positive_block = False

    def close(self):
        self._solver.delete()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def new_var(self) -> int:
        self.top += 1
        return self.top

    def add_clause(self, clause: Iterable[int]):
        self._solver.add_clause(list(clause))

    def add_xor(self, variables: Sequence[int], rhs: int) -> int:
        """Guarded parity constraint ``xor(variables) = rhs``; returns its selector."""
        sel = self.new_var()
        if not variables:
            if rhs:
                self.add_clause([-sel])
            return sel
        acc = variables[0]
        for v in variables[1:]:
            t = self.new_var()
            # t <-> acc xor v
            self.add_clause([-t, acc, v])
            self.add_clause([-t, -acc, -v])
            self.add_clause([t, -acc, v])
            self.add_clause([t, acc, -v])
            acc = t
        self.add_clause([-sel, acc if rhs else -acc])
        return sel

    def _run(self, assumptions: Sequence[int], budget: float | None) -> bool:
        self.calls += 1
        if budget is None:
            return self._solver.solve(assumptions=list(assumptions))
        timer = threading.Timer(budget, self._solver.interrupt)
        timer.start()
        try:
            res = self._solver.solve_limited(assumptions=list(assumptions), expect_interrupt=True)
        finally:
            timer.cancel()
        if res is None:
            self._solver.clear_interrupt()
            raise OracleTimeout(f"SAT call exceeded {budget:g} s")
        return res

    def solve(self, assumptions: Sequence[int] = ()) -> bool:
        return self._run(assumptions, self.call_budget)

    def get_model(self) -> list[int]:
        return self._solver.get_model()

    def bounded_count(self, assumptions: Sequence[int], limit: int | None, deadline: float | None = None) -> int:
        """Number of projected solutions, stopping once ``limit`` is reached."""
        guard = self.new_var()
        assumptions = list(assumptions) + [guard]
        found = 0
        try:
            while limit is None or found < limit:
                if deadline is not None and time.monotonic() > deadline:
                    raise OracleTimeout("counting budget exhausted")
                if not self.solve(assumptions):
                    break
                found += 1
                model = self.get_model()
                if self._positive_block:
                    block = [-v for v in self._block_vars if model[v - 1] > 0]
                else:
                    block = [-model[v - 1] for v in self._block_vars]
                self.add_clause([-guard] + block)
        finally:
            self.add_clause([-guard])
        return found


def free_size_under(formula: Formula, assumptions: Sequence[int]) -> int:
    """Size of the projected space left free by the assumptions."""
    assumed = {l for l in assumptions if l > 0}
    if formula.space is None:
        fixed = {abs(l) for l in assumptions} & set(formula.projection)
        return 2 ** (len(formula.projection) - len(fixed))
    space = formula.space
    fixed_features = {i for i, row in enumerate(formula.input_vars) if assumed & set(row)}
    fixed_units = [u for u, unit in enumerate(space.units) if set(unit) <= fixed_features]
    return free_space_size(space, fixed_units)


def exact_count(formula: Formula, assumptions: Sequence[int] = (), ceiling: int = DEFAULT_CEILING,
                call_budget: float | None = None, count_budget: float | None = None,
                solver: str = "m22") -> CountResult:
    """Projected model count by blocking-clause enumeration."""
    free = free_size_under(formula, assumptions)
    if free > ceiling:
        raise CeilingExceeded(f"free space {free} exceeds exact-count ceiling {ceiling}")
    start = time.monotonic()
    deadline = start + count_budget if count_budget is not None else None
    with SatOracle(formula, solver, call_budget) as oracle:
        n = oracle.bounded_count(assumptions, None, deadline)
        calls = oracle.calls
    return CountResult(n, "exact", calls, time.monotonic() - start)


def pivot_size(epsilon: float) -> int:
    return math.ceil(9.84 * (1 + epsilon / (1 + epsilon)) * (1 + 1 / epsilon) ** 2)


def round_count(delta: float, success: float = ROUND_SUCCESS_PROB) -> int:
    """Smallest odd number of rounds whose median fails with probability <= delta."""
    t = 1
    while True:
        need = t // 2 + 1  # successes needed for a good median
        fail = sum(math.comb(t, k) * success ** k * (1 - success) ** (t - k) for k in range(need))
        if fail <= delta:
            return t
        t += 2


def _free_projection(formula: Formula, assumptions: Sequence[int]) -> list[int]:
    assumed = {abs(l) for l in assumptions}
    if formula.input_vars:
        return [v for row in formula.input_vars if not assumed & set(row) for v in row]
    return [v for v in formula.projection if v not in assumed]


def _round_rng(seed: int, r: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(r,))))


def approx_count(formula: Formula, assumptions: Sequence[int] = (), epsilon: float = 0.8, delta: float = 0.2,
                 seed: int = 0, call_budget: float | None = None, count_budget: float | None = None,
                 rounds: int | None = None, solver: str = "m22") -> CountResult:
    """(epsilon, delta)-approximate projected model count.

    Every round draws its parity constraints from a sub-seed derived from
    ``seed`` and the round index, so the result is reproducible.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    start = time.monotonic()
    deadline = start + count_budget if count_budget is not None else None
    thresh = pivot_size(epsilon)
    t = rounds if rounds is not None else round_count(delta)
    assumptions = list(assumptions)
    hash_vars = _free_projection(formula, assumptions)

    def result(count, kind, calls, estimates=()):
        return CountResult(count, kind, calls, time.monotonic() - start, epsilon, delta, seed, tuple(estimates))

    with SatOracle(formula, solver, call_budget) as oracle:
        if free_size_under(formula, assumptions) <= thresh:
            return result(oracle.bounded_count(assumptions, None, deadline), "exact", oracle.calls)
        first = oracle.bounded_count(assumptions, thresh + 1, deadline)
        if first <= thresh:
            return result(first, "exact", oracle.calls)

        n = len(hash_vars)
        estimates: list[int] = []
        prev_m = 1
        for r in range(t):
            rng = _round_rng(seed, r)
            try:
                est, prev_m = _one_round(oracle, assumptions, hash_vars, n, thresh, prev_m, rng, deadline)
            except OracleTimeout as exc:
                raise OracleTimeout(str(exc), r, estimates) from None
            if est is not None:
                estimates.append(est)
        if not estimates:
            return result(0, "approximate", oracle.calls)
        return result(int(statistics.median_low(sorted(estimates))), "approximate", oracle.calls, estimates)


def _one_round(oracle: SatOracle, assumptions, hash_vars, n, thresh, start_m, rng, deadline):
    """Locate the smallest hash prefix whose cell holds <= thresh solutions."""
    mask = rng.integers(0, 2, size=(n, n)).astype(bool)
    rhs = rng.integers(0, 2, size=n)
    selectors: list[int] = []
    cache = {0: thresh + 1}

    def cell(m):
        if m not in cache:
            while len(selectors) < m:
                k = len(selectors)
                selectors.append(oracle.add_xor([v for v, keep in zip(hash_vars, mask[k]) if keep], int(rhs[k])))
            cache[m] = oracle.bounded_count(assumptions + selectors[:m], thresh + 1, deadline)
        return cache[m]

    try:
        # smallest m with cell(m) <= thresh; cell counts shrink with m because hashes are nested
        lo, hi = 0, None
        m = min(max(start_m, 1), n)
        while hi is None:
            if cell(m) <= thresh:
                hi = m
            else:
                lo = m
                if m == n:
                    return None, start_m
                m = min(2 * m, n)
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if cell(mid) <= thresh:
                hi = mid
            else:
                lo = mid
        return cell(hi) * 2 ** hi, hi
    finally:
        for s in selectors:
            oracle.add_clause([-s])


def precision_from_count(count: int, space: FeatureSpace, fixed: Iterable[int]) -> Fraction:
    """Count divided by the size of the free space, clamped to [0, 1]."""
    p = Fraction(count, free_space_size(space, fixed))
    return min(max(p, Fraction(0)), Fraction(1))
