"""Small hand-checkable fixtures and random model generators."""

from __future__ import annotations

import numpy as np

from .model import BinarizedNN, BnnLayer, DecisionTree, FeatureSpace, Leaf, RandomForest, Split

POS, NEG = "+", "-"


def bool_space(m: int, names=None) -> FeatureSpace:
    return FeatureSpace(tuple((0, 1) for _ in range(m)), tuple(names or ()))


def stump(feature: int, on_one=POS, on_zero=NEG) -> DecisionTree:
    nodes = {0: Split(feature, ((frozenset({0}), 1), (frozenset({1}), 2))), 1: Leaf(on_zero), 2: Leaf(on_one)}
    return DecisionTree(nodes, 0, (POS, NEG))


def fix_dt1() -> tuple[DecisionTree, FeatureSpace]:
    """x1 = 1 -> '+'; otherwise x2 = 1 -> '+', else '-'."""
    nodes = {
        0: Split(0, ((frozenset({1}), 1), (frozenset({0}), 2))),
        1: Leaf(POS),
        2: Split(1, ((frozenset({1}), 3), (frozenset({0}), 4))),
        3: Leaf(POS),
        4: Leaf(NEG),
    }
    return DecisionTree(nodes, 0, (POS, NEG)), bool_space(2)


def fix_rf1() -> tuple[RandomForest, FeatureSpace]:
    """Three stumps on x1, x2, x1: the majority vote equals x1."""
    return RandomForest((stump(0), stump(1), stump(0)), (POS, NEG)), bool_space(2)


def constant_tree(label=POS) -> DecisionTree:
    return DecisionTree({0: Leaf(label)}, 0, (POS, NEG))


def disjunction_tree() -> tuple[DecisionTree, FeatureSpace]:
    """x1 or x2."""
    nodes = {
        0: Split(0, ((frozenset({1}), 1), (frozenset({0}), 2))),
        1: Leaf(POS),
        2: Split(1, ((frozenset({1}), 3), (frozenset({0}), 4))),
        3: Leaf(POS),
        4: Leaf(NEG),
    }
    return DecisionTree(nodes, 0, (POS, NEG)), bool_space(2)


def random_tree(rng: np.random.Generator, space: FeatureSpace, depth: int, classes=(POS, NEG),
                leaf_prob: float = 0.15) -> DecisionTree:
    """Random tree; multi-valued features split into two random non-empty value sets."""
    nodes: dict = {}

    def grow(d, used):
        nid = len(nodes)
        nodes[nid] = None
        free = [f for f in range(space.m) if f not in used]
        if d == 0 or not free or (nodes and nid > 0 and rng.random() < leaf_prob):
            nodes[nid] = Leaf(classes[int(rng.integers(len(classes)))])
            return nid
        f = int(rng.choice(free))
        size = space.sizes[f]
        perm = rng.permutation(size)
        cut = int(rng.integers(1, size))
        left, right = frozenset(int(v) for v in perm[:cut]), frozenset(int(v) for v in perm[cut:])
        a = grow(d - 1, used | {f})
        b = grow(d - 1, used | {f})
        nodes[nid] = Split(f, ((left, a), (right, b)))
        return nid

    grow(depth, frozenset())
    return DecisionTree(nodes, 0, tuple(classes))


def random_forest(rng: np.random.Generator, space: FeatureSpace, n_trees: int = 10, depth: int = 3,
                  classes=(POS, NEG)) -> RandomForest:
    return RandomForest(tuple(random_tree(rng, space, depth, classes) for _ in range(n_trees)), tuple(classes))


def random_bnn(rng: np.random.Generator, n_inputs: int, widths=(4,), n_classes: int = 2) -> BinarizedNN:
    """Random dense BNN; batch-norm parameters include negative scales and zero alpha."""
    layers = []
    fan_in = n_inputs
    for w in widths:
        weights = tuple(tuple(int(x) for x in row) for row in rng.integers(-1, 2, size=(w, fan_in)))
        alpha = tuple(float(rng.choice([-1.5, -1.0, 0.5, 1.0, 2.0, 0.0], p=[.15, .15, .2, .25, .2, .05])) for _ in range(w))
        sigma = tuple(float(rng.choice([0.5, 1.0, 2.0, -1.0])) for _ in range(w))
        mu = tuple(float(np.round(rng.normal(0, 1.5), 2)) for _ in range(w))
        bias = tuple(float(np.round(rng.normal(0, 1.0), 2)) for _ in range(w))
        layers.append(BnnLayer(weights, bias, alpha, mu, sigma))
        fan_in = w
    out_w = tuple(tuple(int(x) for x in row) for row in rng.integers(-1, 2, size=(n_classes, fan_in)))
    out_b = tuple(float(rng.choice([0.0, 0.5, 1.0, -1.0])) for _ in range(n_classes))
    classes = tuple(f"c{k}" for k in range(n_classes))
    return BinarizedNN(n_inputs, tuple(layers), out_w, out_b, classes)
