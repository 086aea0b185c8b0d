from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pysat.solvers import Solver

from probxp.encoding import (
    FormulaBuilder,
    PBConstraint,
    add_domains,
    assume_fixed,
    encode,
    encode_bnn_neuron,
    encode_bnn_output,
    encode_domains,
    encode_rf_target,
    encode_tree,
    fold_batchnorm,
    parse_dimacs,
    pb_to_cnf,
    to_dimacs,
    to_opb,
)
from probxp.model import BinarizedNN, BnnLayer, FeatureSpace, RandomForest, predict
from probxp.synth import NEG, POS, bool_space, constant_tree, random_forest

from helpers import all_fixtures, class_counts, rf_fixtures, sat_agreement_errors


def projected_models(clauses, proj):
    """Assignments to ``proj`` that extend to a model (independent enumeration)."""
    out = []
    with Solver(name="m22", bootstrap_with=clauses) as s:
        for bits in product((0, 1), repeat=len(proj)):
            if s.solve(assumptions=[v if b else -v for v, b in zip(proj, bits)]):
                out.append(bits)
    return out


def all_models(clauses, nvars):
    """Full models over every variable (blocking on all of them)."""
    n = 0
    with Solver(name="m22", bootstrap_with=clauses) as s:
        while s.solve():
            model = [l for l in s.get_model() if abs(l) <= nvars]
            s.add_clause([-l for l in model])
            n += 1
    return n


# ----------------------------------------------------------------- domains


def test_boolean_domain_clauses():
    f = encode_domains(bool_space(1))
    a, b = f.input_vars[0]
    assert sorted(f.clauses) == sorted([(a, b), (-a, -b)])


def test_size4_domain_pairwise():
    f = encode_domains(FeatureSpace(((0, 1, 2, 3),)))
    assert f.nvars == 4
    longs = [c for c in f.clauses if len(c) == 4]
    pairs = [c for c in f.clauses if len(c) == 2]
    assert len(longs) == 1 and len(pairs) == 6 and len(f.clauses) == 7


@pytest.mark.parametrize("d", [1, 2, 3, 5, 6, 7, 9, 12])
def test_domain_count_is_d(d):
    f = encode_domains(FeatureSpace((tuple(range(d)),)))
    assert len(projected_models(f.clauses, f.projection)) == d
    assert all_models(f.clauses, f.nvars) == d  # ladder auxiliaries are determined


def test_group_exactly_one():
    space = FeatureSpace(((0, 1),) * 3, groups=((0, 1, 2),))
    f = encode_domains(space)
    ones = [tuple(bits[1::2]) for bits in projected_models(f.clauses, f.projection)]
    assert sorted(ones) == [(0, 0, 1), (0, 1, 0), (1, 0, 0)]


# ----------------------------------------------------------------- trees / forests


def test_fix_dt1_paths(dt1):
    tree, space = dt1
    paths = tree.paths()
    assert len(paths) == 3
    consistent = [label for lits, label in paths if all(v in lits.get(f, {v}) for f, v in enumerate((1, 0)))]
    assert consistent == [POS]
    assert paths[0] == ({0: frozenset({1})}, POS)
    f = encode_tree(tree, space)
    # paths of length two get their own variable; the length-one path is the x1=1 literal
    conj = [v for v, r in enumerate(f.roles, 1) if r == "path"]
    assert len(conj) == 2
    with Solver(name="m22", bootstrap_with=f.clauses) as s:
        assert s.solve(assumptions=assume_fixed(f, (1, 0), (0, 1)))
        model = set(s.get_model())
    assert f.input_vars[0][1] in model
    assert not any(v in model for v in conj)


def test_constant_tree_class_literal_is_true():
    space = bool_space(2)
    f = encode_tree(constant_tree(POS), space, POS)
    assert len(projected_models(f.clauses, f.projection)) == 4
    g = encode_tree(constant_tree(POS), space, NEG)
    assert projected_models(g.clauses, g.projection) == []


@pytest.mark.parametrize("target,expected", [(POS, 2), (NEG, 2)])
def test_fix_rf1_counts(rf1, target, expected):
    rf, space = rf1
    f = encode_rf_target(rf, space, target)
    assert len(projected_models(f.clauses, f.projection)) == expected


def test_single_tree_forest_counts():
    for rf, space in rf_fixtures():
        if len(rf.trees) != 1:
            continue
        counts = class_counts(rf.trees[0], space)
        for c in rf.classes:
            f = encode_rf_target(rf, space, c)
            assert len(projected_models(f.clauses, f.projection)) == counts[c]


def test_rf_tie_semantics_in_encoding():
    space = bool_space(2)
    from probxp.synth import stump
    for order in [(POS, NEG), (NEG, POS)]:
        rf = RandomForest((stump(0), stump(1)), (POS, NEG), order)
        for c in rf.classes:
            f = encode_rf_target(rf, space, c)
            got = {tuple(b[1::2]) for b in projected_models(f.clauses, f.projection)}
            assert got == {p for p in space.points() if predict(rf, p) == c}


def test_encoding_soundness_all_families():
    assert sum(sat_agreement_errors(c, s) for c, s in all_fixtures()) == 0


def test_projected_count_equals_total_count():
    rng = np.random.default_rng(4)
    space = bool_space(4)
    rf = random_forest(rng, space, n_trees=3, depth=2)
    for c in rf.classes:
        f = encode_rf_target(rf, space, c)
        assert all_models(f.clauses, f.nvars) == len(projected_models(f.clauses, f.projection))


# ----------------------------------------------------------------- BNN


def _layer(w, alpha=1.0, mu=0.0, sigma=1.0, bias=0.0):
    return BnnLayer((tuple(w),), (bias,), (alpha,), (mu,), (sigma,))


def test_fold_batchnorm_examples():
    n = fold_batchnorm(_layer((1, 1)), 0)
    assert (n.sense, n.bound) == (">=", 0)
    n = fold_batchnorm(_layer((1, 1), alpha=-1.0), 0)
    assert (n.sense, n.bound) == ("<=", 0)
    n = fold_batchnorm(_layer((1, 1), mu=0.5, sigma=2.0), 0)
    assert (n.sense, n.bound) == (">=", 2)
    assert fold_batchnorm(_layer((1, 1), alpha=0.0), 0).constant is True


def test_fold_batchnorm_matches_raw_test():
    rng = np.random.default_rng(9)
    for _ in range(200):
        w = tuple(int(x) for x in rng.integers(-1, 2, size=4))
        layer = _layer(w, float(rng.choice([-2, -1, 0.5, 1])), float(np.round(rng.normal(0, 2), 2)),
                       float(rng.choice([-1, 0.5, 2])), float(np.round(rng.normal(0, 1), 2)))
        folded = fold_batchnorm(layer, 0)
        for xs in product((-1, 1), repeat=4):
            pre = sum(a * x for a, x in zip(w, xs)) + Fraction(layer.bias[0])
            z = Fraction(layer.alpha[0]) * (pre - Fraction(layer.mu[0])) / Fraction(layer.sigma[0])
            assert folded.fires(xs) == (z >= 0)


def test_neuron_constraint_example():
    first, second = encode_bnn_neuron((1, -1, 1), 0, 4, (1, 2, 3))
    assert first.terms[-1] == (3, -4) and first.sense == ">=" and first.bound == 0
    # the second constraint carries -(N+1) on y so that ~y forces sum <= b - 1
    assert second.terms[-1] == (-4, 4) and second.sense == "<=" and second.bound == -1


def _check_reified(weights, b):
    n = len(weights)
    fb = FormulaBuilder()
    lits = [fb.new_var(f"l{i}", "input") for i in range(n)]
    y = fb.new_var("y", "neuron")
    for con in encode_bnn_neuron(weights, b, y, lits):
        fb.add_pb(con)
    f = fb.build()
    with Solver(name="m22", bootstrap_with=f.clauses) as s:
        for bits in product((0, 1), repeat=n):
            assume = [v if x else -v for v, x in zip(lits, bits)]
            want = sum(w * x for w, x in zip(weights, bits)) >= b
            assert s.solve(assumptions=assume + [y if want else -y])
            assert not s.solve(assumptions=assume + [-y if want else y])


def test_neuron_reification_exhaustive_small():
    _check_reified((1, -1, 1), 0)
    _check_reified((1, 1, 1), 2)


def test_neuron_reification_exhaustive_random():
    rng = np.random.default_rng(17)
    for n in (1, 4, 7, 12):
        w = tuple(int(x) for x in rng.integers(-2, 3, size=n))
        for b in (-3, 0, 1, n // 2 + 1):
            _check_reified(w, b)


def test_all_zero_weights_force_y():
    _check_reified((0, 0, 0), 0)
    _check_reified((0, 0, 0), -2)
    _check_reified((0, 0), 1)


def test_bnn_output_two_class_counts():
    from helpers import bnn_fixtures
    bnn, space = bnn_fixtures()[0]
    counts = class_counts(bnn, space)
    for c in bnn.classes:
        f = encode_bnn_output(bnn, space, c)
        assert len(projected_models(f.clauses, f.projection)) == counts[c]


def test_bnn_single_class_selector_true():
    layer = _layer((1, -1))
    bnn = BinarizedNN(2, (layer,), ((1,),), (0.0,), ("only",))
    f = encode_bnn_output(bnn, bool_space(2), "only")
    assert len(projected_models(f.clauses, f.projection)) == 4


@pytest.mark.parametrize("order", [("a", "b"), ("b", "a")])
def test_bnn_output_ties_follow_class_order(order):
    # identical score rows: every input ties, so the first class in the order wins
    layer = _layer((1, 1))
    bnn = BinarizedNN(2, (layer,), ((1,), (1,)), (0.5, 0.5), ("a", "b"), order)
    space = bool_space(2)
    for c in bnn.classes:
        f = encode_bnn_output(bnn, space, c)
        want = 4 if c == order[0] else 0
        assert len(projected_models(f.clauses, f.projection)) == want
        assert sum(predict(bnn, p) == c for p in space.points()) == want


def test_bnn_output_near_ties():
    # score gap of exactly one unit of bias: checks the strict/non-strict offset
    layer = _layer((1, 1))
    space = bool_space(2)
    for ba, bb in [(0.0, 2.0), (2.0, 0.0), (0.0, 1.5), (1.0, -1.0)]:
        for order in [("a", "b"), ("b", "a")]:
            bnn = BinarizedNN(2, (layer,), ((1,), (-1,)), (ba, bb), ("a", "b"), order)
            for c in bnn.classes:
                f = encode_bnn_output(bnn, space, c)
                got = {tuple(x[1::2]) for x in projected_models(f.clauses, f.projection)}
                assert got == {p for p in space.points() if predict(bnn, p) == c}


# ----------------------------------------------------------------- PB


def _pb_count(terms, sense, bound, n):
    fb = FormulaBuilder()
    vs = [fb.new_var(f"l{i}", "input") for i in range(n)]
    lits = [(a, vs[i] if i >= 0 else -vs[-i - 1]) for a, i in terms]
    clauses = pb_to_cnf(PBConstraint(tuple(lits), sense, bound), fb)
    return clauses, vs, fb


def test_pb_examples():
    clauses, vs, fb = _pb_count(((1, 0), (1, 1), (1, 2)), ">=", 2, 3)
    assert len(projected_models(clauses, vs)) == 4
    clauses, vs, fb = _pb_count(((1, 0), (1, 1), (1, 2)), ">=", 0, 3)
    assert clauses == []
    clauses, vs, fb = _pb_count(((2, 0), (1, 1)), ">=", 2, 2)
    assert sorted(projected_models(clauses, vs)) == [(1, 0), (1, 1)]


def test_pb_unsatisfiable():
    clauses, vs, _ = _pb_count(((1, 0), (1, 1)), ">=", 3, 2)
    assert projected_models(clauses, vs) == []


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 10).flatmap(lambda n: st.tuples(
        st.just(n),
        st.lists(st.tuples(st.integers(-4, 4), st.integers(-n, n - 1)), min_size=1, max_size=n),
        st.sampled_from([">=", "<="]),
        st.integers(-8, 10),
    ))
)
def test_pb_to_cnf_preserves_count(case):
    n, raw, sense, bound = case
    fb = FormulaBuilder()
    vs = [fb.new_var(f"l{i}", "input") for i in range(n)]
    terms = tuple((a, vs[i] if i >= 0 else -vs[-i - 1]) for a, i in raw)
    con = PBConstraint(terms, sense, bound)
    clauses = pb_to_cnf(con, fb)
    got = set(projected_models(clauses, vs))
    want = set()
    for bits in product((0, 1), repeat=n):
        true = {v if b else -v for v, b in zip(vs, bits)}
        if con.holds(true):
            want.add(bits)
    assert got == want
    # auxiliaries are functionally determined: full count equals projected count
    if n <= 6:
        assert all_models(clauses + [(v, -v) for v in vs], fb.build().nvars) == len(want)


# ----------------------------------------------------------------- assumptions / export


def test_assume_fixed_examples(dt1):
    tree, space = dt1
    f = encode_tree(tree, space, POS)
    assert assume_fixed(f, (1, 0), ()) == []
    x1, x2 = f.input_vars
    assert assume_fixed(f, (1, 0), (0, 1)) == [x1[1], x2[0]]


def test_assume_fixed_group_emits_member_literals():
    space = FeatureSpace(((0, 1),) * 4, groups=((0, 1, 2),))
    f = encode_domains(space)
    lits = assume_fixed(f, (0, 1, 0, 1), (0,))
    assert lits == [f.input_vars[0][0], f.input_vars[1][1], f.input_vars[2][0]]


def test_export_is_deterministic(rf1):
    rf, space = rf1
    a = encode_rf_target(rf, space, POS)
    b = encode_rf_target(rf, space, POS)
    assert to_dimacs(a) == to_dimacs(b)
    assert to_opb(a) == to_opb(b)
    text = to_dimacs(a)
    lines = text.splitlines()
    assert lines[1] == "c p show " + " ".join(map(str, a.projection)) + " 0"
    assert lines[2] == f"p cnf {a.nvars} {len(a.clauses)}"
    back = parse_dimacs(text)
    assert back.projection == a.projection and back.clauses == a.clauses and back.nvars == a.nvars


def test_opb_rows():
    fb = FormulaBuilder()
    space = bool_space(2)
    add_domains(fb, space)
    fb.add_pb(PBConstraint(((1, fb.input_vars[0][1]), (2, -fb.input_vars[1][1])), ">=", 2))
    text = to_opb(fb.build())
    assert text.splitlines()[0].startswith("* #variable=")
    assert "+1 x2 +2 ~x4 >= 2 ;" in text


def test_unknown_target_rejected(dt1):
    tree, space = dt1
    with pytest.raises(ValueError):
        encode(tree, space, "nope")
