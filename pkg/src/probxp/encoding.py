"""Propositional / pseudo-Boolean encodings of classifiers.

Every formula asserts ``kappa(x) = c`` for one target class.  Input features
are one-hot encoded: feature ``i`` owns one variable per domain value, and the
projection set is the union of those variables.  All auxiliary variables are
defined by full equivalences, so they are functionally determined by the
inputs and the projected model count equals the plain model count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Hashable, Iterable, Sequence

from .model import (
    BinarizedNN,
    BnnLayer,
    Classifier,
    DecisionTree,
    FeatureSpace,
    RandomForest,
    beat_threshold,
    neuron_test,
)

PAIRWISE_AMO_MAX = 6


@dataclass(frozen=True)
class PBConstraint:
    """``sum(coef * lit) <sense> bound`` over DIMACS literals."""

    terms: tuple[tuple[int, int], ...]
    sense: str
    bound: int

    def __post_init__(self):
        if self.sense not in (">=", "<="):
            raise ValueError(f"bad sense {self.sense!r}")
        object.__setattr__(self, "terms", tuple((int(a), int(l)) for a, l in self.terms))
        object.__setattr__(self, "bound", int(self.bound))

    def holds(self, true_lits: set[int]) -> bool:
        total = sum(a for a, l in self.terms if l in true_lits)
        return total >= self.bound if self.sense == ">=" else total <= self.bound


@dataclass(frozen=True)
class Formula:
    nvars: int
    clauses: tuple[tuple[int, ...], ...]
    projection: tuple[int, ...]
    pb_constraints: tuple[PBConstraint, ...] = ()
    base_clauses: tuple[tuple[int, ...], ...] = ()  # clauses not produced by PB translation
    names: tuple[str, ...] = ()  # names[v - 1] for variable v
    roles: tuple[str, ...] = ()
    input_vars: tuple[tuple[int, ...], ...] = ()  # input_vars[i][k] <-> x_i = D_i[k]
    space: FeatureSpace | None = None

    def var(self, name: str) -> int:
        return self.names.index(name) + 1


class FormulaBuilder:
    def __init__(self):
        self.names: list[str] = []
        self.roles: list[str] = []
        self.clauses: list[tuple[int, ...]] = []
        self.base_clauses: list[tuple[int, ...]] = []
        self.pbs: list[PBConstraint] = []
        self.input_vars: list[tuple[int, ...]] = []
        self.space: FeatureSpace | None = None
        self._true: int | None = None
        self._or_cache: dict[tuple[int, ...], int] = {}

    def new_var(self, name: str, role: str = "aux") -> int:
        self.names.append(name)
        self.roles.append(role)
        return len(self.names)

    @property
    def true(self) -> int:
        """Literal of a variable fixed to true."""
        if self._true is None:
            self._true = self.new_var("TRUE", "const")
            self.add_clause([self._true])
        return self._true

    def const(self, value: bool) -> int:
        return self.true if value else -self.true

    def add_clause(self, lits: Iterable[int]):
        cl = tuple(lits)
        self.clauses.append(cl)
        self.base_clauses.append(cl)

    def add_pb(self, con: PBConstraint):
        """Store the constraint natively and add its CNF translation."""
        con = self._fold_constants(con)
        self.pbs.append(con)
        self.clauses.extend(pb_to_cnf(con, self))

    def _fold_constants(self, con: PBConstraint) -> PBConstraint:
        if self._true is None:
            return con
        t = self._true
        terms, bound = [], con.bound
        for a, l in con.terms:
            if l == t:
                bound -= a
            elif l != -t:
                terms.append((a, l))
        return PBConstraint(tuple(terms), con.sense, bound)

    def define_and(self, lits: Sequence[int], name: str, role: str = "aux") -> int:
        if not lits:
            return self.true
        if len(lits) == 1:
            return lits[0]
        v = self.new_var(name, role)
        for l in lits:
            self.add_clause([-v, l])
        self.add_clause([v] + [-l for l in lits])
        return v

    def define_or(self, lits: Sequence[int], name: str, role: str = "aux") -> int:
        if not lits:
            return -self.true
        if len(lits) == 1:
            return lits[0]
        key = tuple(sorted(lits))
        if key in self._or_cache:
            return self._or_cache[key]
        v = self.new_var(name, role)
        for l in lits:
            self.add_clause([v, -l])
        self.add_clause([-v] + list(lits))
        self._or_cache[key] = v
        return v

    def build(self) -> Formula:
        proj = tuple(v for row in self.input_vars for v in row)
        return Formula(
            nvars=len(self.names),
            clauses=tuple(self.clauses),
            projection=proj,
            pb_constraints=tuple(self.pbs),
            base_clauses=tuple(self.base_clauses),
            names=tuple(self.names),
            roles=tuple(self.roles),
            input_vars=tuple(self.input_vars),
            space=self.space,
        )


# --------------------------------------------------------------------------
# PB -> CNF
# --------------------------------------------------------------------------


def _normalise(con: PBConstraint) -> tuple[list[tuple[int, int]], int]:
    """Rewrite as ``sum(a * lit) >= bound`` with a > 0 and one term per variable."""
    sign = 1 if con.sense == ">=" else -1
    bound = sign * con.bound
    per_var: dict[int, int] = {}
    for a, l in con.terms:
        a *= sign
        if l < 0:
            # a * ~v = a - a * v
            bound -= a
            a, l = -a, -l
        per_var[l] = per_var.get(l, 0) + a
    terms = []
    for v, a in per_var.items():
        if a > 0:
            terms.append((a, v))
        elif a < 0:
            bound -= a
            terms.append((-a, -v))
    terms.sort(key=lambda t: (-t[0], abs(t[1])))
    return terms, bound


def pb_to_cnf(con: PBConstraint, pool: FormulaBuilder) -> list[tuple[int, ...]]:
    """Clausal form of a PB constraint through a reduced ordered BDD.

    Every BDD node gets a variable defined as ``ite(lit, hi, lo)`` in both
    directions, so the translation preserves the model count over the
    constraint's own literals.  With unit coefficients the BDD is the usual
    sequential counter.
    """
    terms, bound = _normalise(con)
    suffix = [0] * (len(terms) + 1)
    for i in range(len(terms) - 1, -1, -1):
        suffix[i] = suffix[i + 1] + terms[i][0]
    clauses: list[tuple[int, ...]] = []
    memo: dict[tuple[int, int], object] = {}

    def emit(*lits):
        out = []
        for l in lits:
            if l is True:
                return
            if l is False:
                continue
            out.append(l)
        clauses.append(tuple(out))

    def neg(x):
        return (not x) if isinstance(x, bool) else -x

    def node(i: int, need: int):
        if need <= 0:
            return True
        if suffix[i] < need:
            return False
        key = (i, need)
        if key in memo:
            return memo[key]
        a, x = terms[i]
        hi = node(i + 1, need - a)
        lo = node(i + 1, need)
        if hi == lo and type(hi) is type(lo):
            res = hi
        else:
            n = pool.new_var(f"pb{len(pool.names) + 1}", "pb")
            emit(-n, -x, hi)
            emit(-n, x, lo)
            emit(n, -x, neg(hi))
            emit(n, x, neg(lo))
            res = n
        memo[key] = res
        return res

    root = node(0, bound)
    if root is True:
        return []
    if root is False:
        r = pool.new_var(f"pb{len(pool.names) + 1}", "pb")
        return [(r,), (-r,)]
    clauses.append((root,))
    return clauses


# --------------------------------------------------------------------------
# domains and trees
# --------------------------------------------------------------------------


def _exactly_one(fb: FormulaBuilder, lits: Sequence[int], tag: str):
    fb.add_clause(lits)
    if len(lits) <= PAIRWISE_AMO_MAX:
        for a in range(len(lits)):
            for b in range(a + 1, len(lits)):
                fb.add_clause([-lits[a], -lits[b]])
        return
    # prefix-or ladder: s_k <-> (l_0 | ... | l_k), with l_{k+1} -> ~s_k
    prev = lits[0]
    for k in range(1, len(lits)):
        fb.add_clause([-prev, -lits[k]])
        if k == len(lits) - 1:
            break
        s = fb.new_var(f"amo_{tag}_{k}", "aux")
        fb.add_clause([-lits[k], s])
        fb.add_clause([-prev, s])
        fb.add_clause([-s, prev, lits[k]])
        prev = s


def add_domains(fb: FormulaBuilder, space: FeatureSpace):
    fb.space = space
    for i, dom in enumerate(space.domains):
        row = tuple(fb.new_var(f"{space.names[i]}={v}", "input") for v in dom)
        fb.input_vars.append(row)
    for i, row in enumerate(fb.input_vars):
        _exactly_one(fb, row, space.names[i])
    for g in space.groups:
        _exactly_one(fb, [fb.input_vars[i][1] for i in g], "g" + "_".join(map(str, g)))


def encode_domains(space: FeatureSpace) -> Formula:
    """Exactly-one constraints over each feature's value variables."""
    fb = FormulaBuilder()
    add_domains(fb, space)
    return fb.build()


def add_tree(fb: FormulaBuilder, tree: DecisionTree, classes: Sequence[Hashable], tag: str = "t") -> dict:
    """Define one literal per class that is true iff the tree votes for it."""
    space = fb.space
    path_lits: dict[Hashable, list[int]] = {c: [] for c in classes}
    for pi, (lits, label) in enumerate(tree.paths()):
        conj = []
        for f, allowed in sorted(lits.items()):
            if len(allowed) == space.sizes[f]:
                continue
            row = fb.input_vars[f]
            conj.append(fb.define_or([row[k] for k in sorted(allowed)], f"{tag}_in_{f}_{'_'.join(map(str, sorted(allowed)))}"))
        path_lits[label].append(fb.define_and(conj, f"{tag}_path{pi}", "path"))
    out = {}
    for ci, c in enumerate(classes):
        out[c] = fb.define_or(path_lits[c], f"{tag}_p_{ci}", "class")
    lits = [out[c] for c in classes]
    # redundant: exactly one class literal per tree
    fb.add_clause(lits)
    for a in range(len(lits)):
        for b in range(a + 1, len(lits)):
            fb.add_clause([-lits[a], -lits[b]])
    return out


def encode_tree(tree: DecisionTree, space: FeatureSpace, target: Hashable | None = None) -> Formula:
    """Domains plus path definitions; with a target, also assert the tree predicts it."""
    fb = FormulaBuilder()
    add_domains(fb, space)
    cls = add_tree(fb, tree, tree.classes)
    if target is not None:
        if target not in tree.classes:
            raise ValueError(f"unknown class {target!r}")
        fb.add_clause([cls[target]])
    return fb.build()


def _ties_to(classifier, j: Hashable, k: Hashable) -> bool:
    """True if class j wins a tie against class k."""
    order = classifier.class_order
    return order.index(j) < order.index(k)


def add_rf_target(fb: FormulaBuilder, rf: RandomForest, target: Hashable):
    votes = [add_tree(fb, t, rf.classes, f"t{i}") for i, t in enumerate(rf.trees)]
    M = len(rf.trees)
    for k in rf.classes:
        if k == target:
            continue
        b_k = 1 if _ties_to(rf, target, k) else 0
        terms = [(1, v[target]) for v in votes] + [(1, -v[k]) for v in votes]
        fb.add_pb(PBConstraint(tuple(terms), ">=", M + 1 - b_k))


def encode_rf_target(rf: RandomForest, space: FeatureSpace, target: Hashable) -> Formula:
    """Majority-vote constraints making ``target`` the forest's prediction."""
    if target not in rf.classes:
        raise ValueError(f"unknown class {target!r}")
    fb = FormulaBuilder()
    add_domains(fb, space)
    add_rf_target(fb, rf, target)
    return fb.build()


# --------------------------------------------------------------------------
# binarized neural networks
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FoldedNeuron:
    """Neuron test on +-1 inputs: fires iff ``sum(w * x) <sense> bound``.

    ``constant`` is set when the test does not depend on the inputs.
    """

    weights: tuple[int, ...]
    sense: str = ">="
    bound: int = 0
    constant: bool | None = None

    def as_ge(self) -> tuple[tuple[int, ...], int]:
        if self.sense == ">=":
            return self.weights, self.bound
        return tuple(-w for w in self.weights), -self.bound

    def fires(self, xs: Sequence[int]) -> bool:
        if self.constant is not None:
            return self.constant
        s = sum(w * x for w, x in zip(self.weights, xs))
        return s >= self.bound if self.sense == ">=" else s <= self.bound


def fold_batchnorm(layer: BnnLayer, j: int) -> FoldedNeuron:
    """Fold Lin + BatchNorm + sign of neuron ``j`` into an integer threshold test.

    The pre-activation over +-1 inputs has the parity of the number of
    non-zero weights, so the threshold is tightened to the nearest sum that
    can actually occur.
    """
    weights = tuple(layer.weights[j])
    test = neuron_test(layer, j)
    if isinstance(test, bool):
        return FoldedNeuron(weights, constant=test)
    sense, t = test
    parity = sum(abs(w) for w in weights) % 2
    if sense == ">=":
        b = math.ceil(t)
        if b % 2 != parity:
            b += 1
    else:
        b = math.floor(t)
        if b % 2 != parity:
            b -= 1
    return FoldedNeuron(weights, sense, b)


def encode_bnn_neuron(weights: Sequence[int], threshold: int, y: int, lits: Sequence[int]) -> tuple[PBConstraint, PBConstraint]:
    """Reified ``y <-> sum(w * l) >= threshold`` as two PB constraints over 0/1 literals.

    ``y -> sum >= b`` uses the big-M ``b + N`` on ``~y``; ``~y -> sum <= b - 1``
    uses ``b - 1 - N`` on ``y``; ``N`` is the sum of absolute weights.
    """
    b = int(threshold)
    N = sum(abs(w) for w in weights)
    terms = tuple((w, l) for w, l in zip(weights, lits) if w != 0)
    first = PBConstraint(terms + ((b + N, -y),), ">=", b)
    second = PBConstraint(terms + ((b - 1 - N, y),), "<=", b - 1)
    return first, second


def _pm1_to_01(weights: Sequence[int], bound: Fraction | int) -> int:
    """Threshold for ``sum(w * l) >= .`` equivalent to ``sum(w * (2l - 1)) >= bound``."""
    return math.ceil(Fraction(bound + sum(weights), 2))


def add_bnn_hidden(fb: FormulaBuilder, bnn: BinarizedNN) -> list[int]:
    """Define hidden-neuron output literals; returns the last layer's literals."""
    lits = [row[1] for row in fb.input_vars]
    for li, layer in enumerate(bnn.layers):
        out = []
        for j in range(layer.width):
            folded = fold_batchnorm(layer, j)
            if folded.constant is not None:
                out.append(fb.const(folded.constant))
                continue
            w, bound = folded.as_ge()
            y = fb.new_var(f"y{li}_{j}", "neuron")
            for con in encode_bnn_neuron(w, _pm1_to_01(w, bound), y, lits):
                fb.add_pb(con)
            out.append(y)
        lits = out
    return lits


def add_bnn_output(fb: FormulaBuilder, bnn: BinarizedNN, hidden: Sequence[int], target: Hashable) -> int:
    """Define ``s_j`` true iff class ``target`` wins the argmax; returns ``s_j``.

    ``y_k`` holds iff competitor k beats the target, with ties resolved by
    ``class_order``.
    """
    j = bnn.classes.index(target)
    beaten = []
    for k, ck in enumerate(bnn.classes):
        if k == j:
            continue
        diff = [a - b for a, b in zip(bnn.out_weights[k], bnn.out_weights[j])]
        # k beats j  <=>  (W_k - W_j) . h >= 1 - beat_threshold(j, k)
        bound = _pm1_to_01(diff, 1 - beat_threshold(bnn, j, k))
        y = fb.new_var(f"beats_{k}", "neuron")
        for con in encode_bnn_neuron(diff, bound, y, hidden):
            fb.add_pb(con)
        beaten.append(-y)
    return fb.define_and(beaten, f"s_{j}", "selector")


def encode_bnn_output(bnn: BinarizedNN, space: FeatureSpace, target: Hashable) -> Formula:
    """Full BNN encoding restricted to inputs classified as ``target``."""
    if target not in bnn.classes:
        raise ValueError(f"unknown class {target!r}")
    fb = FormulaBuilder()
    add_domains(fb, space)
    s = add_bnn_output(fb, bnn, add_bnn_hidden(fb, bnn), target)
    fb.add_clause([s])
    return fb.build()


def encode(classifier: Classifier, space: FeatureSpace, target: Hashable) -> Formula:
    """Formula whose projected models are exactly the points classified as ``target``."""
    if isinstance(classifier, DecisionTree):
        return encode_tree(classifier, space, target)
    if isinstance(classifier, RandomForest):
        return encode_rf_target(classifier, space, target)
    if isinstance(classifier, BinarizedNN):
        return encode_bnn_output(classifier, space, target)
    raise TypeError(f"unknown classifier {type(classifier).__name__}")


def assume_fixed(formula: Formula, values: Sequence[int], units: Iterable[int]) -> list[int]:
    """Unit literals fixing every feature of the given units to its instance value."""
    space = formula.space
    all_units = space.units
    out = []
    for u in sorted(set(units)):
        for i in all_units[u]:
            row = formula.input_vars[i]
            if not 0 <= values[i] < len(row):
                raise ValueError(f"feature {i} has no variable for value index {values[i]}")
            out.append(row[values[i]])
    return out


# --------------------------------------------------------------------------
# export / import
# --------------------------------------------------------------------------


def to_dimacs(formula: Formula) -> str:
    lines = [
        "c probxp formula",
        "c p show " + " ".join(map(str, formula.projection)) + " 0",
        f"p cnf {formula.nvars} {len(formula.clauses)}",
    ]
    lines += [" ".join(map(str, cl)) + " 0" for cl in formula.clauses]
    return "\n".join(lines) + "\n"


def to_opb(formula: Formula) -> str:
    """OPB text: plain clauses as ``>= 1`` rows followed by the native PB rows."""

    def term(a, l):
        name = f"x{abs(l)}" if l > 0 else f"~x{abs(l)}"
        return f"{a:+d} {name}"

    rows = []
    for cl in formula.base_clauses:
        rows.append(" ".join(term(1, l) for l in cl) + " >= 1 ;")
    for con in formula.pb_constraints:
        lhs = " ".join(term(a, l) for a, l in con.terms) or "0"
        rows.append(f"{lhs} {con.sense} {con.bound} ;")
    head = f"* #variable= {formula.nvars} #constraint= {len(rows)}"
    return "\n".join([head] + rows) + "\n"


def parse_dimacs(text: str) -> Formula:
    """Read DIMACS CNF; ``c p show`` / ``c ind`` lines set the projection."""
    nvars = 0
    clauses: list[tuple[int, ...]] = []
    proj: list[int] = []
    cur: list[int] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("c"):
            toks = line.split()
            if toks[1:3] == ["p", "show"]:
                proj.extend(int(t) for t in toks[3:] if t != "0")
            elif toks[1:2] == ["ind"]:
                proj.extend(int(t) for t in toks[2:] if t != "0")
            continue
        if line.startswith("p"):
            toks = line.split()
            if len(toks) != 4 or toks[1] != "cnf":
                raise ValueError(f"bad problem line: {line!r}")
            nvars = int(toks[2])
            continue
        for t in line.split():
            lit = int(t)
            if lit == 0:
                clauses.append(tuple(cur))
                cur = []
            else:
                cur.append(lit)
    if cur:
        clauses.append(tuple(cur))
    if not proj:
        proj = list(range(1, nvars + 1))
    return Formula(nvars=nvars, clauses=tuple(clauses), projection=tuple(proj), base_clauses=tuple(clauses))
