"""Shared fixture families and brute-force oracles for the test suite."""

from __future__ import annotations

from fractions import Fraction
from itertools import product

import numpy as np
from pysat.solvers import Solver

from probxp.encoding import assume_fixed, encode
from probxp.model import DecisionTree, FeatureSpace, Leaf, RandomForest, Split, make_problem, predict
from probxp.synth import (
    NEG,
    POS,
    bool_space,
    constant_tree,
    disjunction_tree,
    fix_dt1,
    fix_rf1,
    random_bnn,
    random_forest,
    random_tree,
    stump,
)


def dt_fixtures():
    out = [fix_dt1(), disjunction_tree(), (constant_tree(), bool_space(2))]
    rng = np.random.default_rng(101)
    for _ in range(5):
        space = FeatureSpace(tuple(tuple(range(int(rng.integers(2, 5)))) for _ in range(4)))
        out.append((random_tree(rng, space, 3, ("a", "b", "c")), space))
    return out


def rf_fixtures():
    out = [fix_rf1()]
    space = bool_space(3)
    out.append((RandomForest((stump(2),), (POS, NEG)), space))
    rng = np.random.default_rng(202)
    for _ in range(3):
        sp = bool_space(7)
        out.append((random_forest(rng, sp, n_trees=5, depth=3, classes=("a", "b", "c")), sp))
    for _ in range(2):
        sp = FeatureSpace(((0, 1, 2), (0, 1), (0, 1, 2, 3), (0, 1), (0, 1)))
        out.append((random_forest(rng, sp, n_trees=4, depth=2), sp))
    return out


def bnn_fixtures():
    rng = np.random.default_rng(303)
    out = []
    for n, widths, k in [(4, (3,), 2), (6, (4,), 2), (8, (4, 3), 3), (10, (5,), 3), (12, (4,), 2)]:
        out.append((random_bnn(rng, n, widths, k), bool_space(n)))
    return out


def all_fixtures():
    return dt_fixtures() + rf_fixtures() + bnn_fixtures()


def enumerate_points(space: FeatureSpace):
    return list(space.points())


_TABLES: dict = {}


def truth_table(clf, space):
    """All points with their labels from the scalar ``predict`` (memoised per model)."""
    key = id(clf), id(space)
    if key not in _TABLES:
        pts = list(space.points())
        labels = np.array([clf.classes.index(predict(clf, p)) for p in pts])
        _TABLES[key] = (clf, space, np.array(pts, dtype=np.int64), labels)
    return _TABLES[key][2:]


def class_counts(clf, space) -> dict:
    _, labels = truth_table(clf, space)
    return {c: int(np.count_nonzero(labels == k)) for k, c in enumerate(clf.classes)}


def brute_precision(clf, space, point, units) -> Fraction:
    """Independent oracle: fraction of the free space agreeing with predict(point)."""
    pts, labels = truth_table(clf, space)
    feats = [i for u in units for i in space.units[u]]
    mask = np.all(pts[:, feats] == np.array(point)[feats], axis=1) if feats else np.ones(len(pts), bool)
    target = clf.classes.index(predict(clf, point))
    return Fraction(int(np.count_nonzero(labels[mask] == target)), int(np.count_nonzero(mask)))


def brute_weak_axp(clf, space, point, units) -> bool:
    return brute_precision(clf, space, point, units) == 1


def brute_axps(clf, space, point):
    n = len(space.units)
    found = []
    for r in range(n + 1):
        for s in _subsets(n, r):
            if not any(set(t) <= set(s) for t in found) and brute_weak_axp(clf, space, point, s):
                found.append(s)
    return found


def _subsets(n, r):
    from itertools import combinations
    return [tuple(c) for c in combinations(range(n), r)]


def sat_agreement_errors(clf, space) -> int:
    """Points where formula satisfiability under full assumptions disagrees with predict."""
    errors = 0
    for target in clf.classes:
        f = encode(clf, space, target)
        with Solver(name="m22", bootstrap_with=f.clauses) as s:
            for p in space.points():
                sat = s.solve(assumptions=assume_fixed(f, p, range(len(space.units))))
                errors += sat != (predict(clf, p) == target)
    return errors


def bool_assignments(n):
    return list(product((0, 1), repeat=n))


def problems_of(clf, space, limit=None, seed=0):
    pts = list(space.points())
    if limit is not None and len(pts) > limit:
        rng = np.random.default_rng(seed)
        pts = [pts[i] for i in sorted(rng.choice(len(pts), size=limit, replace=False))]
    return [make_problem(clf, space, p) for p in pts]


def random_cnf_text(rng, n, n_clauses, width=3, proj=None):
    proj = list(range(1, n + 1)) if proj is None else proj
    lines = ["c ind " + " ".join(map(str, proj)) + " 0", f"p cnf {n} {n_clauses}"]
    for _ in range(n_clauses):
        vs = rng.choice(np.arange(1, n + 1), size=width, replace=False)
        signs = rng.choice([-1, 1], size=width)
        lines.append(" ".join(str(int(v * s)) for v, s in zip(vs, signs)) + " 0")
    return "\n".join(lines) + "\n"


def brute_projected_count(clauses, n, proj) -> int:
    """Count projections of satisfying assignments by full enumeration."""
    seen = set()
    for bits in product((0, 1), repeat=n):
        if all(any((bits[abs(l) - 1] == 1) == (l > 0) for l in cl) for cl in clauses):
            seen.add(tuple(bits[v - 1] for v in proj))
    return len(seen)


ACCEPTANCE_LINES: list[str] = []


def report_criterion(n: int, ok: bool, detail: str):
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def order_witness():
    """Found by exhaustive search: the deletion order changes the LmPAXp size at tau = 0.9."""
    fs = frozenset
    nodes = {
        0: Split(2, ((fs({1}), 1), (fs({0}), 8))),
        1: Split(0, ((fs({0, 1, 2}), 2), (fs({3}), 5))),
        2: Split(1, ((fs({3}), 3), (fs({0, 1, 2}), 4))),
        3: Leaf(POS),
        4: Leaf(POS),
        5: Split(1, ((fs({0, 3}), 6), (fs({1, 2}), 7))),
        6: Leaf(POS),
        7: Leaf(NEG),
        8: Split(1, ((fs({1, 3}), 9), (fs({0, 2}), 12))),
        9: Split(0, ((fs({0, 3}), 10), (fs({1, 2}), 11))),
        10: Leaf(POS),
        11: Leaf(NEG),
        12: Split(0, ((fs({3}), 13), (fs({0, 1, 2}), 14))),
        13: Leaf(NEG),
        14: Leaf(POS),
    }
    space = FeatureSpace(((0, 1, 2, 3), (0, 1, 2, 3), (0, 1)))
    return make_problem(DecisionTree(nodes, 0, (POS, NEG)), space, (0, 3, 1))
