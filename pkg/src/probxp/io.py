"""Model documents, instance files, run configuration and reports."""

from __future__ import annotations

import csv
import dataclasses
import json
import os
from dataclasses import dataclass
from typing import Any, Sequence

from .counting import DEFAULT_CEILING
from .model import (
    BinarizedNN,
    BnnLayer,
    Classifier,
    DecisionTree,
    FeatureSpace,
    Instance,
    Leaf,
    RandomForest,
    Split,
    predict,
    validate_classifier,
)

FORMAT_VERSION = 1
ENV_PREFIX = "PROBXP_"


class ModelFormatError(ValueError):
    """The model file is not well-formed JSON or misses required fields."""


class ModelValidationError(ValueError):
    """The model parses but violates a classifier invariant."""


class InstanceError(ValueError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        loc = f" (row {row}, column {column})" if row is not None else ""
        super().__init__(message + loc)
        self.row, self.column = row, column


# --------------------------------------------------------------------------
# model documents
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelDocument:
    family: str  # dt | rf | bnn
    space: FeatureSpace
    classifier: Classifier
    group_names: tuple[str, ...] = ()
    format_version: int = FORMAT_VERSION

    @property
    def classes(self):
        return self.classifier.classes

    def to_dict(self) -> dict:
        sp = self.space
        doc: dict[str, Any] = {
            "format_version": self.format_version,
            "family": self.family,
            "features": [{"name": n, "domain": list(d)} for n, d in zip(sp.names, sp.domains)],
            "classes": list(self.classifier.classes),
            "class_order": list(self.classifier.class_order),
        }
        if sp.groups:
            names = self.group_names or tuple(f"group{k}" for k in range(len(sp.groups)))
            doc["groups"] = [{"name": gn, "members": [sp.names[i] for i in g]} for gn, g in zip(names, sp.groups)]
        if self.family == "dt":
            doc["tree"] = _tree_to_dict(self.classifier, sp)
        elif self.family == "rf":
            doc["trees"] = [_tree_to_dict(t, sp) for t in self.classifier.trees]
        else:
            bnn = self.classifier
            doc["layers"] = [
                {"weights": [list(r) for r in L.weights], "bias": list(L.bias), "alpha": list(L.alpha),
                 "mu": list(L.mu), "sigma": list(L.sigma)}
                for L in bnn.layers
            ]
            doc["output"] = {"weights": [list(r) for r in bnn.out_weights], "bias": list(bnn.out_bias)}
        return doc

    def dumps(self) -> str:
        """Canonical text: sorted keys, two-space indent, trailing newline."""
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    def save(self, path: str):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())


def _tree_to_dict(tree: DecisionTree, space: FeatureSpace) -> dict:
    nodes = []
    for nid in sorted(tree.nodes):
        node = tree.nodes[nid]
        if isinstance(node, Leaf):
            nodes.append({"id": nid, "leaf": node.label})
        else:
            dom = space.domains[node.feature]
            branches = [{"values": [dom[k] for k in sorted(vals)], "child": child} for vals, child in node.branches]
            nodes.append({"id": nid, "feature": space.names[node.feature], "branches": branches})
    return {"root": tree.root, "nodes": nodes}


def _need(obj: dict, key: str, where: str):
    if not isinstance(obj, dict) or key not in obj:
        raise ModelFormatError(f"missing field '{key}' in {where}")
    return obj[key]


def _tree_from_dict(d: dict, space: FeatureSpace, classes, where: str) -> DecisionTree:
    name_to_idx = {n: i for i, n in enumerate(space.names)}
    nodes = {}
    for k, nd in enumerate(_need(d, "nodes", where)):
        loc = f"{where}.nodes[{k}]"
        nid = _need(nd, "id", loc)
        if "leaf" in nd:
            nodes[nid] = Leaf(nd["leaf"])
            continue
        fname = _need(nd, "feature", loc)
        if fname not in name_to_idx:
            raise ModelFormatError(f"unknown feature {fname!r} in {loc}")
        f = name_to_idx[fname]
        dom = space.domains[f]
        branches = []
        for b, br in enumerate(_need(nd, "branches", loc)):
            vals = []
            for v in _need(br, "values", f"{loc}.branches[{b}]"):
                if v not in dom:
                    raise ModelFormatError(f"value {v!r} outside domain of {fname} in {loc}.branches[{b}]")
                vals.append(dom.index(v))
            branches.append((frozenset(vals), _need(br, "child", f"{loc}.branches[{b}]")))
        nodes[nid] = Split(f, tuple(branches))
    return DecisionTree(nodes, _need(d, "root", where), tuple(classes), tuple(classes))


def model_from_dict(doc: dict) -> ModelDocument:
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be a JSON object")
    version = _need(doc, "format_version", "document")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format_version {version!r}")
    family = _need(doc, "family", "document")
    if family not in ("dt", "rf", "bnn"):
        raise ModelFormatError(f"unknown family {family!r}")
    feats = _need(doc, "features", "document")
    names = tuple(_need(f, "name", f"features[{k}]") for k, f in enumerate(feats))
    domains = tuple(tuple(_need(f, "domain", f"features[{k}]")) for k, f in enumerate(feats))
    groups, gnames = [], []
    for k, g in enumerate(doc.get("groups", [])):
        members = _need(g, "members", f"groups[{k}]")
        try:
            groups.append(tuple(names.index(mb) for mb in members))
        except ValueError:
            raise ModelFormatError(f"groups[{k}] names an unknown feature") from None
        gnames.append(_need(g, "name", f"groups[{k}]"))
    try:
        space = FeatureSpace(domains, names, tuple(groups))
    except ValueError as exc:
        raise ModelValidationError(str(exc)) from None
    classes = tuple(_need(doc, "classes", "document"))
    order = tuple(doc.get("class_order", classes))
    if family == "dt":
        clf = _tree_from_dict(_need(doc, "tree", "document"), space, classes, "tree")
        clf = DecisionTree(clf.nodes, clf.root, classes, order)
    elif family == "rf":
        trees = tuple(_tree_from_dict(t, space, classes, f"trees[{k}]") for k, t in enumerate(_need(doc, "trees", "document")))
        clf = RandomForest(trees, classes, order)
    else:
        layers = []
        for k, L in enumerate(_need(doc, "layers", "document")):
            where = f"layers[{k}]"
            layers.append(BnnLayer(
                tuple(tuple(r) for r in _need(L, "weights", where)),
                tuple(_need(L, "bias", where)), tuple(_need(L, "alpha", where)),
                tuple(_need(L, "mu", where)), tuple(_need(L, "sigma", where)),
            ))
        out = _need(doc, "output", "document")
        clf = BinarizedNN(len(names), tuple(layers), tuple(tuple(r) for r in _need(out, "weights", "output")),
                          tuple(_need(out, "bias", "output")), classes, order)
    v = validate_classifier(clf, space)
    if v:
        raise ModelValidationError(str(v))
    return ModelDocument(family, space, clf, tuple(gnames), version)


def loads_model(text: str) -> ModelDocument:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"parse error at byte offset {exc.pos} (line {exc.lineno}, column {exc.colno}): {exc.msg}") from None
    return model_from_dict(doc)


def load_model(path: str) -> ModelDocument:
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())


def model_document(classifier: Classifier, space: FeatureSpace, group_names=()) -> ModelDocument:
    family = {DecisionTree: "dt", RandomForest: "rf", BinarizedNN: "bnn"}[type(classifier)]
    return ModelDocument(family, space, classifier, tuple(group_names))


# --------------------------------------------------------------------------
# instances
# --------------------------------------------------------------------------


LABEL_COLUMNS = ("label", "class")


def load_instances(path: str, doc: ModelDocument) -> list[Instance]:
    """Read a CSV whose header names the features (and optionally a label column).

    A declared group may be given as a single column named after the group
    whose cell names the active member; it is expanded to one-hot values.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return parse_instances(rows, doc)


def parse_instances(rows: Sequence[Sequence[str]], doc: ModelDocument) -> list[Instance]:
    if not rows:
        raise InstanceError("empty instance file")
    header = [h.strip() for h in rows[0]]
    space = doc.space
    gname_to_group = dict(zip(doc.group_names, space.groups))
    label_col = next((h for h in header if h in LABEL_COLUMNS), None)
    known = set(space.names) | set(gname_to_group) | ({label_col} if label_col else set())
    for h in header:
        if h not in known:
            raise InstanceError(f"unknown column {h!r}", 1, h)
    out = []
    for r, row in enumerate(rows[1:], start=2):
        if not any(cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise InstanceError(f"expected {len(header)} cells, got {len(row)}", r)
        cells = dict(zip(header, (c.strip() for c in row)))
        point = [None] * space.m
        for gname, group in gname_to_group.items():
            if gname in cells:
                member_names = [space.names[i] for i in group]
                if cells[gname] not in member_names:
                    raise InstanceError(f"{cells[gname]!r} is not a member of group {gname}", r, gname)
                for i in group:
                    point[i] = int(space.names[i] == cells[gname])
        for i, name in enumerate(space.names):
            if name in cells:
                point[i] = _domain_index(space.domains[i], cells[name], r, name)
            elif point[i] is None:
                raise InstanceError(f"missing value for feature {name}", r, name)
        point = tuple(point)
        for g in space.groups:
            if sum(point[i] for i in g) != 1:
                raise InstanceError("one-hot group needs exactly one active member", r)
        pred = predict(doc.classifier, point)
        if label_col and cells[label_col] != "":
            label = _class_of(doc.classifier.classes, cells[label_col], r, label_col)
        else:
            label = pred
        out.append(Instance(point, label))
    return out


def _domain_index(domain, text: str, row: int, col: str) -> int:
    for k, v in enumerate(domain):
        if str(v) == text:
            return k
    raise InstanceError(f"value {text!r} outside domain {list(domain)}", row, col)


def _class_of(classes, text: str, row: int, col: str):
    for c in classes:
        if str(c) == text:
            return c
    raise InstanceError(f"unknown class {text!r}", row, col)


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    tau: float = 0.95
    estimator: str = "mc"  # exact | amc | mc
    epsilon: float = 0.05
    delta: float = 0.05
    seed: int = 0
    call_budget: float = 120.0
    total_budget: float = 600.0
    ceiling: int = DEFAULT_CEILING
    order: str = "heuristic"  # heuristic | ffa | lex
    seed_set: str = "axp"  # axp | all
    heuristic_budget: int = 64
    trace: bool = True
    timings: bool = True

    def __post_init__(self):
        if not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        if self.call_budget <= 0 or self.total_budget <= 0:
            raise ValueError("budgets must be positive")
        if self.estimator not in ("exact", "amc", "mc"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.order not in ("heuristic", "ffa", "lex"):
            raise ValueError(f"unknown order policy {self.order!r}")
        if self.seed_set not in ("axp", "all"):
            raise ValueError(f"unknown seed-set policy {self.seed_set!r}")
        if not self.epsilon > 0 or not 0 < self.delta < 1:
            raise ValueError("need epsilon > 0 and 0 < delta < 1")

    @classmethod
    def preset(cls, family: str, **overrides) -> "RunConfig":
        """Family defaults: BNNs use counting with tau = 0.99, forests and trees sampling with 0.95."""
        base = {"tau": 0.99, "estimator": "amc"} if family == "bnn" else {}
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_env(cls, base: "RunConfig | None" = None, environ=None) -> "RunConfig":
        """Apply ``PROBXP_<FIELD>`` environment overrides (e.g. ``PROBXP_TAU=0.9``)."""
        environ = os.environ if environ is None else environ
        base = base or cls()
        changes = {}
        for f in dataclasses.fields(cls):
            key = ENV_PREFIX + f.name.upper()
            if key in environ:
                raw = environ[key]
                cur = getattr(base, f.name)
                if isinstance(cur, bool):
                    changes[f.name] = raw.lower() in ("1", "true", "yes", "on")
                else:
                    changes[f.name] = type(cur)(raw)
        return dataclasses.replace(base, **changes)


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------


def aggregate(records: Sequence[dict]) -> dict:
    """Mean Len / % / Prec / Time over the successful records, plus the timeout count."""
    ok = [r for r in records if r.get("status") == "ok"]

    def mean(key):
        vals = [r[key] for r in ok if r.get(key) is not None]
        return round(sum(vals) / len(vals), 6) if vals else None

    return {
        "type": "aggregate",
        "instances": len(records),
        "ok": len(ok),
        "timeouts": sum(r.get("status") == "timeout" for r in records),
        "errors": sum(r.get("status") == "error" for r in records),
        "mean_len": mean("length"),
        "mean_pct": mean("pct"),
        "mean_prec": mean("prec"),
        "mean_time": mean("time"),
    }


@dataclass
class Report:
    command: str
    records: list[dict]
    config: RunConfig

    @property
    def summary(self) -> dict:
        return aggregate(self.records)

    def lines(self) -> list[str]:
        recs = sorted(self.records, key=lambda r: r["instance"])
        head = {"type": "config", "command": self.command, **dataclasses.asdict(self.config)}
        out = [json.dumps(head, sort_keys=True)]
        out += [json.dumps(r, sort_keys=True) for r in recs]
        out.append(json.dumps(self.summary, sort_keys=True))
        return out

    def dumps(self) -> str:
        return "\n".join(self.lines()) + "\n"

    def table(self) -> str:
        s = self.summary
        rows = [f"{'inst':>5} {'status':>8} {'len':>4} {'%':>6} {'prec':>7} {'time':>8}  features"]
        for r in sorted(self.records, key=lambda r: r["instance"]):
            rows.append(
                f"{r['instance']:>5} {r['status']:>8} {_fmt(r.get('length'), 'd'):>4} {_fmt(r.get('pct'), '.0f'):>6} "
                f"{_fmt(r.get('prec'), '.3f'):>7} {_fmt(r.get('time'), '.3f'):>8}  {','.join(r.get('features', []))}"
            )
        rows.append(
            f"mean Len {_fmt(s['mean_len'], '.2f')}  % {_fmt(s['mean_pct'], '.0f')}  Prec {_fmt(s['mean_prec'], '.3f')}"
            f"  Time {_fmt(s['mean_time'], '.3f')}  #TO {s['timeouts']}"
        )
        return "\n".join(rows) + "\n"


def _fmt(v, spec):
    if v is None:
        return "-"
    return format(v, spec)


def read_report(text: str) -> tuple[list[dict], dict]:
    """Parse report lines and check the aggregate against its own records."""
    objs = [json.loads(line) for line in text.splitlines() if line.strip()]
    records = [o for o in objs if o.get("type") == "instance"]
    agg = next(o for o in objs if o.get("type") == "aggregate")
    if aggregate(records) != agg:
        raise ValueError("report aggregate does not match its records")
    return records, agg
