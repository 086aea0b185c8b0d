"""Monte-Carlo precision estimates with Hoeffding guarantees.

All randomness comes from counter-based Philox streams keyed by the master
seed plus a purpose tag and the fixed unit set, so an estimate depends only
on (seed, set) and never on the order in which estimates are requested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .model import ExplanationProblem, FeatureSpace, predict_batch

TAG_MC = 1
TAG_HEURISTIC = 2
TAG_CONFIRM = 3
TAG_COUNT = 4

DEFAULT_HEURISTIC_BUDGET = 64


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *key: int) -> int:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class Estimate:
    mean: float
    n: int
    hits: int
    epsilon: float | None
    delta: float | None
    seed: int

    @property
    def guaranteed(self) -> bool:
        return self.epsilon is not None and self.n >= hoeffding_sample_size(self.epsilon, self.delta)


def hoeffding_sample_size(epsilon: float, delta: float) -> int:
    """Smallest N with 2 exp(-2 eps^2 N) <= delta."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return math.ceil(math.log(2 / delta) / (2 * epsilon ** 2))


def sample_free(space: FeatureSpace, values: Sequence[int], fixed: Iterable[int],
                rng: np.random.Generator | int, n: int | None = None) -> np.ndarray:
    """Uniform points of the space agreeing with ``values`` on the fixed units.

    Returns one point (1-d array) when ``n`` is None, else an ``(n, m)`` array.
    A free one-hot group draws a single active member.
    """
    if not isinstance(rng, np.random.Generator):
        rng = derive_rng(rng)
    single = n is None
    count = 1 if single else n
    fixed = set(fixed)
    out = np.empty((count, space.m), dtype=np.int64)
    grouped = {i for g in space.groups for i in g}
    for u, unit in enumerate(space.units):
        if u in fixed:
            for i in unit:
                out[:, i] = values[i]
        elif len(unit) == 1 and unit[0] not in grouped:
            out[:, unit[0]] = rng.integers(0, space.sizes[unit[0]], size=count)
        else:
            pick = rng.integers(0, len(unit), size=count)
            for pos, i in enumerate(unit):
                out[:, i] = (pick == pos).astype(np.int64)
    return out[0] if single else out


def _hits(problem: ExplanationProblem, fixed, rng, n) -> int:
    pts = sample_free(problem.space, problem.instance.values, fixed, rng, n)
    return int(np.count_nonzero(predict_batch(problem.classifier, pts) == problem.target_index))


def mc_estimate_precision(problem: ExplanationProblem, fixed: Iterable[int], epsilon: float, delta: float,
                          seed: int, tag: int = TAG_MC) -> Estimate:
    fixed = sorted(set(fixed))
    n = hoeffding_sample_size(epsilon, delta)
    hits = _hits(problem, fixed, derive_rng(seed, tag, len(fixed), *fixed), n)
    return Estimate(hits / n, n, hits, epsilon, delta, seed)


def heuristic_scores(problem: ExplanationProblem, candidates: Iterable[int], budget: int = DEFAULT_HEURISTIC_BUDGET,
                     seed: int = 0) -> dict[int, float]:
    """Drop-one precision probes: score of ``i`` is the sampled precision without ``i``.

    A high score marks a unit that contributes little and is safe to drop.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    cand = sorted(set(candidates))
    scores = {}
    for i in cand:
        rest = [j for j in cand if j != i]
        rng = derive_rng(seed, TAG_HEURISTIC, len(rest), *rest)
        scores[i] = _hits(problem, rest, rng, budget) / budget
    return scores


def order_by_scores(scores: dict[int, float]) -> list[int]:
    """Highest drop-score first; ties by ascending unit index."""
    return sorted(scores, key=lambda i: (-scores[i], i))
