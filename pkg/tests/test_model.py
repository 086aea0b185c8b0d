from fractions import Fraction
from itertools import combinations, permutations

import numpy as np
import pytest

from probxp.model import (
    BinarizedNN,
    BnnLayer,
    DecisionTree,
    ExplanationProblem,
    FeatureSpace,
    Instance,
    Leaf,
    RandomForest,
    Split,
    free_space_size,
    make_problem,
    neuron_test,
    predict,
    predict_batch,
    validate_classifier,
    validate_problem,
)
from probxp.synth import NEG, POS, bool_space, random_forest, stump

from helpers import all_fixtures, bnn_fixtures

SPACE_454 = FeatureSpace(((1, 2, 3, 4), (1, 2, 3, 4, 5), (1, 2, 3, 4)))


def test_predict_examples(dt1, rf1):
    tree, _ = dt1
    assert predict(tree, (1, 0)) == POS
    truth = {(0, 0): NEG, (0, 1): POS, (1, 0): POS, (1, 1): POS}
    assert {p: predict(tree, p) for p in truth} == truth
    forest, _ = rf1
    assert predict(forest, (0, 1)) == NEG
    for p in [(0, 0), (0, 1), (1, 0), (1, 1)]:
        assert predict(forest, p) == (POS if p[0] else NEG)


def test_single_neuron_bnn():
    # identity batch-norm with mu = 1: fires iff sum >= 1
    layer = BnnLayer(((1, 1, -1),), (0.0,), (1.0,), (1.0,), (1.0,))
    assert neuron_test(layer, 0) == (">=", Fraction(1))
    bnn = BinarizedNN(3, (layer,), ((1,), (-1,)), (0.0, 0.0), ("on", "off"))
    assert predict(bnn, (1, 1, 1)) == "on"  # 1 + 1 - 1 = 1 >= 1
    assert predict(bnn, (1, 1, 0)) == "on"
    assert predict(bnn, (0, 1, 1)) == "off"


def test_neuron_test_cases():
    base = dict(weights=((1, 1),), bias=(0.0,), mu=(0.0,))
    assert neuron_test(BnnLayer(alpha=(0.0,), sigma=(1.0,), **base), 0) is True
    assert neuron_test(BnnLayer(alpha=(-1.0,), sigma=(1.0,), **base), 0) == ("<=", 0)
    assert neuron_test(BnnLayer(alpha=(-1.0,), sigma=(-2.0,), **base), 0) == (">=", 0)
    with pytest.raises(ValueError, match="zero variance"):
        neuron_test(BnnLayer(alpha=(1.0,), sigma=(0.0,), **base), 0)


@pytest.mark.parametrize("fixed,expected", [((0, 1), 4), ((), 80), ((0, 1, 2), 1)])
def test_free_space_size_examples(fixed, expected):
    assert free_space_size(SPACE_454, fixed) == expected


def test_free_space_size_antitone_and_bigint():
    space = FeatureSpace(tuple(tuple(range(k)) for k in (2, 3, 4, 5)))
    units = range(4)
    for r in range(5):
        for a in combinations(units, r):
            for extra in units:
                b = set(a) | {extra}
                assert free_space_size(space, a) >= free_space_size(space, b)
    assert free_space_size(space, ()) == 120
    huge = FeatureSpace(tuple((0, 1, 2, 3) for _ in range(100)))
    assert free_space_size(huge, ()) == 4 ** 100


def test_grouped_space_units():
    space = FeatureSpace(((0, 1), (0, 1), (0, 1), (0, 1, 2)), groups=((0, 1, 2),))
    assert space.units == ((0, 1, 2), (3,))
    assert free_space_size(space, ()) == 9
    assert free_space_size(space, (1,)) == 3
    assert space.total_size() == 9
    pts = list(space.points())
    assert len(pts) == 9 and all(sum(p[:3]) == 1 for p in pts)


def test_validate_problem_examples(dt1):
    tree, space = dt1
    assert validate_problem(make_problem(tree, space, (1, 0), POS)) is None
    assert validate_problem(make_problem(tree, space, (1, 0), NEG)).code == "label mismatch"
    bad = DecisionTree({0: Split(0, ((frozenset({1}), 1),)), 1: Leaf(POS)}, 0, (POS, NEG))
    assert validate_classifier(bad, space).code == "non-partitioning edges"
    overlap = DecisionTree({0: Split(0, ((frozenset({0, 1}), 1), (frozenset({1}), 2))), 1: Leaf(POS), 2: Leaf(NEG)},
                           0, (POS, NEG))
    assert validate_classifier(overlap, space).code == "non-partitioning edges"


def test_validate_problem_other_violations(dt1):
    tree, space = dt1
    assert validate_problem(ExplanationProblem(tree, Instance((2, 0), POS), space)).code == "value outside domain"
    bnn = BinarizedNN(2, (BnnLayer(((1, 1),), (0.0,), (1.0,), (0.0,), (0.0,)),), ((1,), (-1,)), (0.0, 0.0), ("a", "b"))
    assert validate_classifier(bnn, space).code == "zero variance neuron"
    assert validate_classifier(bnn, bool_space(3)).code == "dimension mismatch"


def test_rf_tie_break_uses_class_order():
    space = bool_space(2)
    trees = (stump(0), stump(1))  # one vote each whenever x1 != x2
    rf = RandomForest(trees, (POS, NEG))
    assert predict(rf, (1, 0)) == POS
    rf_rev = RandomForest(trees, (POS, NEG), class_order=(NEG, POS))
    assert predict(rf_rev, (1, 0)) == NEG
    assert predict(rf_rev, (1, 1)) == POS
    for clf in (rf, rf_rev):
        got = predict_batch(clf, space.points_array())
        assert [clf.classes[k] for k in got] == [predict(clf, p) for p in space.points()]


def test_rf_prediction_invariant_under_tree_permutation():
    rng = np.random.default_rng(5)
    space = bool_space(5)
    rf = random_forest(rng, space, n_trees=4, depth=2, classes=("a", "b", "c"))
    base = [predict(rf, p) for p in space.points()]
    for perm in permutations(rf.trees):
        other = RandomForest(perm, rf.classes)
        assert [predict(other, p) for p in space.points()] == base


def test_predict_batch_agrees_with_predict():
    for clf, space in all_fixtures():
        got = predict_batch(clf, space.points_array())
        assert [clf.classes[k] for k in got] == [predict(clf, p) for p in space.points()]


def test_bnn_hidden_activations_are_pm1():
    for bnn, space in bnn_fixtures()[:3]:
        for p in space.points():
            h = [Fraction(2 * k - 1) for k in p]
            for layer in bnn.layers:
                h = [Fraction(1) if Fraction(layer.alpha[j]) * (sum(w * x for w, x in zip(layer.weights[j], h))
                                                                 + Fraction(layer.bias[j]) - Fraction(layer.mu[j]))
                     / Fraction(layer.sigma[j]) >= 0 else Fraction(-1) for j in range(layer.width)]
                assert set(h) <= {1, -1}


def test_predict_is_total_and_deterministic():
    for clf, space in all_fixtures():
        first = [predict(clf, p) for p in space.points()]
        assert first == [predict(clf, p) for p in space.points()]
        assert set(first) <= set(clf.classes)
