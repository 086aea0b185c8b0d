"""Feature spaces, instances and the three classifier families.

Points are represented as tuples of *value indices*: ``point[i]`` is the
position of the feature value inside ``space.domains[i]``.  Boolean features
use the domain ``(0, 1)`` so that index and value coincide.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Hashable, Iterable, Iterator, Sequence, Union

import numpy as np


@dataclass(frozen=True)
class FeatureSpace:
    """Finite per-feature domains, optionally with one-hot categorical groups.

    A group is a set of boolean features that together one-hot encode a single
    categorical attribute.  Exactly one member of a group is 1, so a free group
    of ``k`` members contributes ``k`` points rather than ``2**k``.
    """

    domains: tuple[tuple[Hashable, ...], ...]
    names: tuple[str, ...] = ()
    groups: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        doms = tuple(tuple(d) for d in self.domains)
        object.__setattr__(self, "domains", doms)
        if not self.names:
            object.__setattr__(self, "names", tuple(f"x{i + 1}" for i in range(len(doms))))
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "groups", tuple(tuple(sorted(g)) for g in self.groups))
        if len(self.names) != len(doms):
            raise ValueError("feature names and domains differ in length")
        for i, d in enumerate(doms):
            if not d:
                raise ValueError(f"feature {i} has an empty domain")
            if len(set(d)) != len(d):
                raise ValueError(f"feature {i} has repeated domain values")
        seen: set[int] = set()
        for g in self.groups:
            if not g:
                raise ValueError("empty feature group")
            for i in g:
                if not 0 <= i < len(doms):
                    raise ValueError(f"group member {i} is not a feature")
                if i in seen:
                    raise ValueError(f"feature {i} appears in two groups")
                if doms[i] != (0, 1):
                    raise ValueError(f"group member {i} must have domain (0, 1)")
                seen.add(i)

    @property
    def m(self) -> int:
        return len(self.domains)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(d) for d in self.domains)

    @property
    def units(self) -> tuple[tuple[int, ...], ...]:
        """Atomic explanation units: each group, plus every ungrouped feature.

        Sorted by smallest member, so without groups unit ``i`` is feature ``i``.
        """
        grouped = {i for g in self.groups for i in g}
        units = [g for g in self.groups] + [(i,) for i in range(self.m) if i not in grouped]
        return tuple(sorted(units, key=lambda u: u[0]))

    def unit_size(self, unit: Sequence[int]) -> int:
        if len(unit) == 1 and unit[0] not in self._grouped:
            return len(self.domains[unit[0]])
        return len(unit)

    @property
    def _grouped(self) -> frozenset[int]:
        return frozenset(i for g in self.groups for i in g)

    def expand(self, units: Iterable[int]) -> tuple[int, ...]:
        """Feature indices covered by a set of unit indices."""
        all_units = self.units
        return tuple(sorted(i for u in units for i in all_units[u]))

    def unit_names(self) -> tuple[str, ...]:
        return tuple("+".join(self.names[i] for i in u) for u in self.units)

    def index_point(self, values: Sequence[Hashable]) -> tuple[int, ...]:
        """Map domain values to value indices, raising on out-of-domain values."""
        if len(values) != self.m:
            raise ValueError(f"expected {self.m} values, got {len(values)}")
        out = []
        for i, (v, d) in enumerate(zip(values, self.domains)):
            try:
                out.append(d.index(v))
            except ValueError:
                raise ValueError(f"value {v!r} outside domain of feature {self.names[i]}") from None
        return tuple(out)

    def value_point(self, point: Sequence[int]) -> tuple[Hashable, ...]:
        return tuple(d[k] for d, k in zip(self.domains, point))

    def contains(self, point: Sequence[int]) -> bool:
        if len(point) != self.m:
            return False
        if any(not 0 <= k < n for k, n in zip(point, self.sizes)):
            return False
        return all(sum(point[i] for i in g) == 1 for g in self.groups)

    def total_size(self) -> int:
        return free_space_size(self, ())

    def points(self, fixed: Iterable[int] = (), anchor: Sequence[int] | None = None) -> Iterator[tuple[int, ...]]:
        """Enumerate all points agreeing with ``anchor`` on the ``fixed`` units."""
        fixed = set(fixed)
        choices = []
        for u, unit in enumerate(self.units):
            if u in fixed:
                choices.append([tuple(anchor[i] for i in unit)])
            elif len(unit) == 1 and unit[0] not in self._grouped:
                choices.append([(k,) for k in range(self.sizes[unit[0]])])
            else:
                choices.append([tuple(int(i == j) for i in unit) for j in unit])
        units = self.units
        for combo in itertools.product(*choices):
            point = [0] * self.m
            for unit, vals in zip(units, combo):
                for i, k in zip(unit, vals):
                    point[i] = k
            yield tuple(point)

    def points_array(self, fixed: Iterable[int] = (), anchor: Sequence[int] | None = None) -> np.ndarray:
        pts = list(self.points(fixed, anchor))
        return np.asarray(pts, dtype=np.int64).reshape(len(pts), self.m)


def free_space_size(space: FeatureSpace, fixed: Iterable[int]) -> int:
    """Number of points agreeing with any anchor on the ``fixed`` units.

    Python ints give the required big-integer semantics.
    """
    fixed = set(fixed)
    units = space.units
    if any(not 0 <= u < len(units) for u in fixed):
        raise ValueError("fixed set refers to unknown units")
    return math.prod(space.unit_size(unit) for u, unit in enumerate(units) if u not in fixed)


# --------------------------------------------------------------------------
# classifiers
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Leaf:
    label: Hashable


@dataclass(frozen=True)
class Split:
    feature: int
    branches: tuple[tuple[frozenset[int], int], ...]  # (value-index set, child id)


@dataclass(frozen=True)
class DecisionTree:
    nodes: dict[int, Union[Leaf, Split]]
    root: int = 0
    classes: tuple[Hashable, ...] = ()
    class_order: tuple[Hashable, ...] = ()

    def __post_init__(self):
        if not self.classes:
            labels = []
            for n in self.nodes.values():
                if isinstance(n, Leaf) and n.label not in labels:
                    labels.append(n.label)
            object.__setattr__(self, "classes", tuple(labels))
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "class_order", tuple(self.class_order or self.classes))

    def paths(self) -> list[tuple[dict[int, frozenset[int]], Hashable]]:
        """Root-to-leaf paths as (feature -> allowed value indices, leaf label).

        Repeated tests of a feature along a path are intersected.
        """
        out = []

        def walk(nid, lits):
            node = self.nodes[nid]
            if isinstance(node, Leaf):
                out.append((dict(lits), node.label))
                return
            for values, child in node.branches:
                allowed = frozenset(values) & lits.get(node.feature, frozenset(values))
                if not allowed:
                    continue
                nxt = dict(lits)
                nxt[node.feature] = allowed
                walk(child, nxt)

        walk(self.root, {})
        return out

    def leaf_of(self, point: Sequence[int]) -> int:
        nid = self.root
        while True:
            node = self.nodes[nid]
            if isinstance(node, Leaf):
                return nid
            k = point[node.feature]
            for values, child in node.branches:
                if k in values:
                    nid = child
                    break
            else:
                raise ValueError(f"value index {k} of feature {node.feature} matches no branch")


@dataclass(frozen=True)
class RandomForest:
    trees: tuple[DecisionTree, ...]
    classes: tuple[Hashable, ...]
    class_order: tuple[Hashable, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "class_order", tuple(self.class_order or self.classes))
        if not self.trees:
            raise ValueError("a forest needs at least one tree")


@dataclass(frozen=True)
class BnnLayer:
    """Hidden layer: sign(alpha * ((W x + b - mu) / sigma)), one entry per neuron."""

    weights: tuple[tuple[int, ...], ...]
    bias: tuple[float, ...]
    alpha: tuple[float, ...]
    mu: tuple[float, ...]
    sigma: tuple[float, ...]

    @property
    def width(self) -> int:
        return len(self.weights)

    @property
    def fan_in(self) -> int:
        return len(self.weights[0]) if self.weights else 0


@dataclass(frozen=True)
class BinarizedNN:
    n_inputs: int
    layers: tuple[BnnLayer, ...]
    out_weights: tuple[tuple[int, ...], ...]  # one row per class
    out_bias: tuple[float, ...]
    classes: tuple[Hashable, ...]
    class_order: tuple[Hashable, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "class_order", tuple(self.class_order or self.classes))


Classifier = Union[DecisionTree, RandomForest, BinarizedNN]


def neuron_test(layer: BnnLayer, j: int) -> tuple[str, Fraction] | bool:
    """Exact rational test on the integer pre-activation ``s = W_j x``.

    Returns ``(">=", t)`` or ``("<=", t)`` meaning the neuron fires (+1) iff
    ``s >= t`` (resp. ``s <= t``), or a bool when the neuron is constant.
    """
    a, m, s, b = (Fraction(v) for v in (layer.alpha[j], layer.mu[j], layer.sigma[j], layer.bias[j]))
    if s == 0:
        raise ValueError("zero variance neuron")
    if a == 0:
        return True
    # alpha * (S + b - mu) / sigma >= 0  <=>  (S + b - mu) * sign(alpha * sigma) >= 0
    if (a > 0) == (s > 0):
        return (">=", m - b)
    return ("<=", m - b)


def _rank(classifier) -> dict[Hashable, int]:
    return {c: r for r, c in enumerate(classifier.class_order)}


def predict(classifier: Classifier, point: Sequence[int]):
    """Class label of a single point (value-index vector)."""
    if isinstance(classifier, DecisionTree):
        return classifier.nodes[classifier.leaf_of(point)].label
    if isinstance(classifier, RandomForest):
        votes = {c: 0 for c in classifier.classes}
        for t in classifier.trees:
            votes[t.nodes[t.leaf_of(point)].label] += 1
        best = max(votes.values())
        return next(c for c in classifier.class_order if votes[c] == best)
    if isinstance(classifier, BinarizedNN):
        if len(point) != classifier.n_inputs:
            raise ValueError("dimension mismatch")
        h = [Fraction(2 * k - 1) for k in point]
        for layer in classifier.layers:
            out = []
            for j in range(layer.width):
                pre = sum(w * x for w, x in zip(layer.weights[j], h)) + Fraction(layer.bias[j])
                if layer.sigma[j] == 0:
                    raise ValueError("zero variance neuron")
                z = Fraction(layer.alpha[j]) * (pre - Fraction(layer.mu[j])) / Fraction(layer.sigma[j])
                out.append(Fraction(1) if z >= 0 else Fraction(-1))
            h = out
        scores = [sum(w * x for w, x in zip(row, h)) + Fraction(b)
                  for row, b in zip(classifier.out_weights, classifier.out_bias)]
        by_label = dict(zip(classifier.classes, scores))
        best = max(scores)
        return next(c for c in classifier.class_order if by_label[c] == best)
    raise TypeError(f"unknown classifier {type(classifier).__name__}")


def predict_batch(classifier: Classifier, points: np.ndarray) -> np.ndarray:
    """Vectorised prediction; returns indices into ``classifier.classes``."""
    points = np.asarray(points, dtype=np.int64)
    if points.ndim != 2:
        raise ValueError("expected a 2-d array of points")
    cls_index = {c: k for k, c in enumerate(classifier.classes)}
    if isinstance(classifier, DecisionTree):
        return _tree_batch(classifier, points, cls_index)
    if isinstance(classifier, RandomForest):
        votes = np.zeros((len(points), len(classifier.classes)), dtype=np.int64)
        rows = np.arange(len(points))
        for t in classifier.trees:
            votes[rows, _tree_batch(t, points, cls_index)] += 1
        order = [cls_index[c] for c in classifier.class_order]
        ranked = votes[:, order]
        return np.asarray(order)[np.argmax(ranked == ranked.max(axis=1, keepdims=True), axis=1)]
    if isinstance(classifier, BinarizedNN):
        return _bnn_batch(classifier, points)
    raise TypeError(f"unknown classifier {type(classifier).__name__}")


def _tree_batch(tree: DecisionTree, points: np.ndarray, cls_index) -> np.ndarray:
    out = np.full(len(points), -1, dtype=np.int64)
    stack = [(tree.root, np.arange(len(points)))]
    while stack:
        nid, idx = stack.pop()
        if idx.size == 0:
            continue
        node = tree.nodes[nid]
        if isinstance(node, Leaf):
            out[idx] = cls_index[node.label]
            continue
        col = points[idx, node.feature]
        for values, child in node.branches:
            stack.append((child, idx[np.isin(col, list(values))]))
    if (out < 0).any():
        raise ValueError("point matches no branch")
    return out


def _bnn_batch(bnn: BinarizedNN, points: np.ndarray) -> np.ndarray:
    if points.shape[1] != bnn.n_inputs:
        raise ValueError("dimension mismatch")
    h = 2 * points - 1
    for layer in bnn.layers:
        w = np.asarray(layer.weights, dtype=np.int64).reshape(layer.width, -1)
        pre = h @ w.T
        out = np.empty_like(pre)
        for j in range(layer.width):
            test = neuron_test(layer, j)
            if isinstance(test, bool):
                fire = np.full(len(h), test)
            elif test[0] == ">=":
                fire = pre[:, j] >= math.ceil(test[1])
            else:
                fire = pre[:, j] <= math.floor(test[1])
            out[:, j] = np.where(fire, 1, -1)
        h = out
    w = np.asarray(bnn.out_weights, dtype=np.int64).reshape(len(bnn.classes), -1)
    scores = h @ w.T
    rank = _rank(bnn)
    K = len(bnn.classes)
    result = np.full(len(h), -1, dtype=np.int64)
    for j in sorted(range(K), key=lambda c: rank[bnn.classes[c]]):
        wins = np.ones(len(h), dtype=bool)
        for k in range(K):
            if k != j:
                wins &= scores[:, j] - scores[:, k] >= beat_threshold(bnn, j, k)
        result[(result < 0) & wins] = j
    return result


def beat_threshold(bnn: BinarizedNN, j: int, k: int) -> int:
    """Least integer value of ``(W_j - W_k) . h`` for which class j beats class k."""
    rank = _rank(bnn)
    gap = Fraction(bnn.out_bias[k]) - Fraction(bnn.out_bias[j])
    if rank[bnn.classes[j]] < rank[bnn.classes[k]]:
        return math.ceil(gap)
    return math.floor(gap) + 1


# --------------------------------------------------------------------------
# problems and validation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Instance:
    values: tuple[int, ...]  # value indices
    label: Hashable


@dataclass(frozen=True)
class ExplanationProblem:
    classifier: Classifier
    instance: Instance
    space: FeatureSpace

    @property
    def target_index(self) -> int:
        return self.classifier.classes.index(self.instance.label)


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    location: str = ""

    def __str__(self):
        return f"{self.code}: {self.message}" + (f" (at {self.location})" if self.location else "")


def make_problem(classifier: Classifier, space: FeatureSpace, point: Sequence[int], label=None) -> ExplanationProblem:
    """Build a problem, labelling the point by ``predict`` when no label is given."""
    point = tuple(int(k) for k in point)
    if label is None:
        label = predict(classifier, point)
    return ExplanationProblem(classifier, Instance(point, label), space)


def _check_tree(tree: DecisionTree, space: FeatureSpace, where: str) -> Violation | None:
    if tree.root not in tree.nodes:
        return Violation("malformed tree", "root id is not a node", where)
    for nid, node in sorted(tree.nodes.items()):
        if isinstance(node, Leaf):
            if node.label not in tree.classes:
                return Violation("unknown class", f"leaf label {node.label!r}", f"{where} node {nid}")
            continue
        if not 0 <= node.feature < space.m:
            return Violation("malformed tree", f"feature {node.feature} out of range", f"{where} node {nid}")
        covered: list[int] = []
        for values, child in node.branches:
            if child not in tree.nodes:
                return Violation("malformed tree", f"dangling child {child}", f"{where} node {nid}")
            covered.extend(values)
        if sorted(covered) != list(range(space.sizes[node.feature])):
            return Violation("non-partitioning edges",
                             "branch value sets do not partition the feature domain", f"{where} node {nid}")
    # reachability guards against cycles
    seen, stack = set(), [tree.root]
    while stack:
        nid = stack.pop()
        if nid in seen:
            return Violation("malformed tree", "cycle or shared node", f"{where} node {nid}")
        seen.add(nid)
        node = tree.nodes[nid]
        if isinstance(node, Split):
            stack.extend(c for _, c in node.branches)
    return None


def validate_classifier(classifier: Classifier, space: FeatureSpace) -> Violation | None:
    if sorted(map(repr, classifier.class_order)) != sorted(map(repr, classifier.classes)):
        return Violation("bad class order", "class_order is not a permutation of classes")
    if isinstance(classifier, DecisionTree):
        return _check_tree(classifier, space, "tree")
    if isinstance(classifier, RandomForest):
        for t, tree in enumerate(classifier.trees):
            if not set(tree.classes) <= set(classifier.classes):
                return Violation("unknown class", "tree predicts a class the forest lacks", f"tree {t}")
            v = _check_tree(tree, space, f"tree {t}")
            if v:
                return v
        return None
    if isinstance(classifier, BinarizedNN):
        if classifier.n_inputs != space.m:
            return Violation("dimension mismatch", f"{classifier.n_inputs} inputs vs {space.m} features")
        if any(d != (0, 1) for d in space.domains):
            return Violation("non-boolean input", "BNN inputs must have domain (0, 1)")
        width = classifier.n_inputs
        for li, layer in enumerate(classifier.layers):
            params = (layer.bias, layer.alpha, layer.mu, layer.sigma)
            if any(len(p) != layer.width for p in params):
                return Violation("layer shape", "per-neuron parameter lengths differ", f"layer {li}")
            for j, row in enumerate(layer.weights):
                if len(row) != width:
                    return Violation("layer shape", "weight row width mismatch", f"layer {li} neuron {j}")
                if any(w not in (-1, 0, 1) for w in row):
                    return Violation("non-binary weight", "weights must be in {-1,0,1}", f"layer {li} neuron {j}")
                if layer.sigma[j] == 0:
                    return Violation("zero variance neuron", "sigma is 0", f"layer {li} neuron {j}")
            width = layer.width
        if len(classifier.out_weights) != len(classifier.classes) or len(classifier.out_bias) != len(classifier.classes):
            return Violation("layer shape", "output layer needs one row per class", "output")
        for k, row in enumerate(classifier.out_weights):
            if len(row) != width:
                return Violation("layer shape", "output weight row width mismatch", f"output row {k}")
            if any(w not in (-1, 0, 1) for w in row):
                return Violation("non-binary weight", "weights must be in {-1,0,1}", f"output row {k}")
        return None
    return Violation("unknown family", type(classifier).__name__)


def validate_problem(problem: ExplanationProblem) -> Violation | None:
    """First invariant violation of the problem, or None when it is well formed."""
    space = problem.space
    v = validate_classifier(problem.classifier, space)
    if v:
        return v
    point = problem.instance.values
    if len(point) != space.m:
        return Violation("dimension mismatch", f"instance has {len(point)} values, space has {space.m}")
    for i, (k, n) in enumerate(zip(point, space.sizes)):
        if not 0 <= k < n:
            return Violation("value outside domain", f"value index {k}", f"feature {space.names[i]}")
    for g in space.groups:
        if sum(point[i] for i in g) != 1:
            return Violation("bad one-hot group", "exactly one group member must be 1",
                             "group " + "+".join(space.names[i] for i in g))
    pred = predict(problem.classifier, point)
    if pred != problem.instance.label:
        return Violation("label mismatch", f"classifier predicts {pred!r}, instance says {problem.instance.label!r}")
    return None
