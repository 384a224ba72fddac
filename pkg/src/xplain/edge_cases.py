"""Edge-case mining and construction.

An edge case is an instance satisfying a conjunction of user criteria:
canonically, it is mispredicted and its misprediction consequence (a
declarative risk function) exceeds a threshold. Criteria may be global or
local to a query instance via a distance bound and an optional
prediction-flip requirement.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Any, Callable, Optional

import numpy as np

from .dataset import LabeledDataset
from .distance import DistanceMetric
from .errors import SchemaError, XplainError
from .models import Model
from .schema import FeatureSchema, Instance, instance_to_dict

CLASS_TABLE = "class-table"
FEATURE_RULE = "feature-rule"

_OPS = ("==", "<", ">", "in")


@dataclass(frozen=True)
class FeaturePredicate:
    feature: int
    op: str
    value: Any

    def __post_init__(self) -> None:
        if self.op not in _OPS:
            raise SchemaError(f"unknown predicate op {self.op!r}")

    def holds(self, x: Instance) -> bool:
        v = x.values[self.feature]
        if self.op == "==":
            return v == self.value
        if self.op == "<":
            return float(v) < float(self.value)
        if self.op == ">":
            return float(v) > float(self.value)
        return v in self.value

    def describe(self, schema: FeatureSchema) -> str:
        name = schema.features[self.feature].name
        if self.op == "in":
            return f"{name} in {list(self.value)}"
        return f"{name} {self.op} {self.value}"


@dataclass(frozen=True)
class RiskFunction:
    kind: str
    class_risks: Optional[dict[str, float]] = None
    rules: tuple[tuple[FeaturePredicate, float], ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in (CLASS_TABLE, FEATURE_RULE):
            raise SchemaError(f"unknown risk function kind {self.kind!r}")
        values = list((self.class_risks or {}).values()) + [r for _, r in self.rules]
        for r in values:
            if not math.isfinite(r) or r < 0:
                raise SchemaError("risk values must be finite and >= 0")

    def value(self, schema: FeatureSchema, x: Instance, truth: int) -> float:
        if self.kind == CLASS_TABLE:
            return float((self.class_risks or {}).get(schema.classes[truth], 0.0))
        matched = [r for pred, r in self.rules if pred.holds(x)]
        return float(max(matched)) if matched else 0.0

    def to_dict(self, schema: FeatureSchema) -> dict:
        if self.kind == CLASS_TABLE:
            return {"kind": CLASS_TABLE, "risks": dict(self.class_risks or {})}
        return {"kind": FEATURE_RULE, "rules": [
            {"feature": schema.features[p.feature].name, "op": p.op,
             "value": list(p.value) if p.op == "in" else p.value, "risk": r}
            for p, r in self.rules
        ]}

    @classmethod
    def from_dict(cls, schema: FeatureSchema, doc: dict) -> "RiskFunction":
        kind = doc.get("kind")
        if kind == CLASS_TABLE:
            risks = {c: float(v) for c, v in doc.get("risks", {}).items()}
            unknown = [c for c in risks if c not in schema.classes]
            if unknown:
                raise SchemaError(f"risk table names unknown classes: {unknown}")
            return cls(kind=CLASS_TABLE, class_risks=risks)
        if kind == FEATURE_RULE:
            rules = []
            for r in doc.get("rules", []):
                pred = FeaturePredicate(
                    feature=schema.feature_index(r["feature"]), op=r["op"],
                    value=tuple(r["value"]) if r["op"] == "in" else r["value"])
                rules.append((pred, float(r["risk"])))
            return cls(kind=FEATURE_RULE, rules=tuple(rules))
        raise SchemaError(f"unknown risk function kind {kind!r}")


@dataclass(frozen=True)
class Locality:
    x_opt: Instance
    max_distance: float
    require_prediction_flip: bool = False

    def __post_init__(self) -> None:
        if not (0 < self.max_distance <= 1):
            raise SchemaError("max_distance must be in (0, 1]")


@dataclass(frozen=True)
class EdgeCriterion:
    risk_threshold: float
    require_misprediction: bool = True
    extra_predicates: tuple[FeaturePredicate, ...] = ()
    locality: Optional[Locality] = None

    def __post_init__(self) -> None:
        if not math.isfinite(self.risk_threshold):
            raise SchemaError("risk threshold must be finite")


@dataclass(frozen=True)
class EdgeCase:
    x: Instance
    predicted: int
    truth: int
    risk: float
    distance_to_query: Optional[float] = None
    synthetic: bool = False
    truth_source: str = "dataset"
    index: Optional[int] = None


@dataclass(frozen=True)
class EdgeSummary:
    count: int
    confusion: tuple[tuple[int, ...], ...]  # confusion[truth][predicted] within the set
    histogram_edges: tuple[float, ...]
    histogram_counts: tuple[int, ...]
    top_features: tuple[tuple[int, float, str], ...]  # (feature, gain, rule)

    def to_dict(self, schema: FeatureSchema) -> dict:
        return {
            "count": self.count,
            "confusion": [list(row) for row in self.confusion],
            "histogram": {"edges": list(self.histogram_edges),
                          "counts": list(self.histogram_counts)},
            "top_features": [
                {"feature": schema.features[f].name, "gain": g, "rule": rule}
                for f, g, rule in self.top_features
            ],
        }


@dataclass(frozen=True)
class EdgeCaseSet:
    schema: FeatureSchema
    cases: tuple[EdgeCase, ...]
    summary: EdgeSummary

    def __len__(self) -> int:
        return len(self.cases)

    def to_dict(self) -> dict:
        return {
            "cases": [
                {
                    "instance": instance_to_dict(self.schema, c.x),
                    "predicted": self.schema.classes[c.predicted],
                    "truth": self.schema.classes[c.truth],
                    "risk": c.risk,
                    "distance_to_query": c.distance_to_query,
                    "synthetic": c.synthetic,
                    "truth_source": c.truth_source,
                    "index": c.index,
                }
                for c in self.cases
            ],
            "summary": self.summary.to_dict(self.schema),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        names = [f.name for f in self.schema.features]
        writer.writerow(names + ["predicted", "truth", "risk", "synthetic",
                                 "distance_to_query"])
        for c in self.cases:
            row = [repr(v) if isinstance(v, float) else str(v) for v in c.x.values]
            row += [self.schema.classes[c.predicted], self.schema.classes[c.truth],
                    repr(c.risk), str(c.synthetic).lower(),
                    "" if c.distance_to_query is None else repr(c.distance_to_query)]
            writer.writerow(row)
        return buf.getvalue()


def criterion_holds(model: Model, risk: RiskFunction, crit: EdgeCriterion,
                    x: Instance, truth: int,
                    metric: Optional[DistanceMetric] = None
                    ) -> tuple[bool, float, int, Optional[float]]:
    """Evaluate the full conjunction; returns (holds, risk, predicted, distance)."""
    metric = metric or DistanceMetric()
    schema = model.schema
    risk_value = risk.value(schema, x, truth)
    predicted = model.predict(x)
    dist = None
    if crit.locality is not None:
        dist = metric.distance(schema, crit.locality.x_opt, x)

    if not risk_value > crit.risk_threshold:
        return False, risk_value, predicted, dist
    if crit.require_misprediction and predicted == truth:
        return False, risk_value, predicted, dist
    for pred in crit.extra_predicates:
        if not pred.holds(x):
            return False, risk_value, predicted, dist
    if crit.locality is not None:
        if dist > crit.locality.max_distance:
            return False, risk_value, predicted, dist
        if crit.locality.require_prediction_flip and \
                predicted == model.predict(crit.locality.x_opt):
            return False, risk_value, predicted, dist
    return True, risk_value, predicted, dist


def _sort_cases(cases: list[EdgeCase]) -> tuple[EdgeCase, ...]:
    def key(item):
        pos, c = item
        dist = c.distance_to_query if c.distance_to_query is not None else math.inf
        idx = c.index if c.index is not None else pos
        return (-c.risk, dist, idx)

    return tuple(c for _, c in sorted(enumerate(cases), key=key))


def mine_edge_cases(model: Model, data: LabeledDataset, risk: RiskFunction,
                    crit: EdgeCriterion, metric: Optional[DistanceMetric] = None,
                    bins: int = 10) -> EdgeCaseSet:
    """Exact filter of the dataset by the criterion conjunction.

    Result ordering: descending risk, ties by ascending distance to the query
    then dataset index. An empty result is a valid outcome.
    """
    if len(data) == 0:
        raise XplainError("dataset is empty")
    metric = metric or DistanceMetric()
    if crit.locality is not None:
        model.schema.check_instance(crit.locality.x_opt)
    cases = []
    for i, (x, truth) in enumerate(zip(data.instances, data.labels)):
        ok, risk_value, predicted, dist = criterion_holds(model, risk, crit, x,
                                                          truth, metric)
        if ok:
            cases.append(EdgeCase(x=x, predicted=predicted, truth=truth,
                                  risk=risk_value, distance_to_query=dist, index=i))
    ordered = _sort_cases(cases)
    summary = summarize_edge_cases(ordered, bins=bins, schema=model.schema,
                                   data=data, model=model)
    return EdgeCaseSet(schema=model.schema, cases=ordered, summary=summary)


LabelOracle = Callable[[Instance], int]


def construct_edge_cases(model: Model, data: LabeledDataset, risk: RiskFunction,
                         crit: EdgeCriterion, budget: int, seed: int,
                         oracle: Optional[LabelOracle] = None,
                         allow_nearest_neighbor: bool = False,
                         metric: Optional[DistanceMetric] = None,
                         bins: int = 10) -> EdgeCaseSet:
    """Sample synthetic candidates by per-feature resampling around the data.

    Ground truth for a synthetic instance comes from the labeling oracle or,
    when explicitly allowed, from its nearest labeled neighbor; either way the
    case is flagged synthetic with its truth source.
    """
    if budget < 1:
        raise XplainError("budget >= 1 required")
    if oracle is None and not allow_nearest_neighbor:
        raise XplainError("no labeling source available: "
                          "pass an oracle or allow nearest-neighbor labels")
    if len(data) == 0:
        raise XplainError("dataset is empty")
    metric = metric or DistanceMetric()
    if crit.locality is not None:
        model.schema.check_instance(crit.locality.x_opt)
    schema = model.schema
    rng = np.random.default_rng(seed)
    n, d = len(data), schema.n_features

    seen: set[tuple] = set()
    cases: list[EdgeCase] = []
    for _ in range(budget):
        base = data.instances[int(rng.integers(n))]
        n_mut = 1 + int(rng.integers(d))
        chosen = rng.choice(d, size=n_mut, replace=False)
        values = list(base.values)
        for f in sorted(int(j) for j in chosen):
            feat = schema.features[f]
            if feat.is_numeric:
                lo, hi = feat.domain
                values[f] = float(rng.uniform(lo, hi))
            else:
                values[f] = feat.domain[int(rng.integers(len(feat.domain)))]
        x = Instance(tuple(values))
        key = tuple(values)
        if key in seen:
            continue
        seen.add(key)

        if oracle is not None:
            truth = int(oracle(x))
            if not 0 <= truth < schema.n_classes:
                raise XplainError(f"oracle returned invalid class {truth}")
            source = "oracle"
        else:
            dists = metric.matrix_distances(schema, np.array(schema.encode(x)),
                                            data.matrix)
            truth = int(data.labels[int(np.argmin(dists))])
            source = "nearest-neighbor"

        ok, risk_value, predicted, dist = criterion_holds(model, risk, crit, x,
                                                          truth, metric)
        if ok:
            cases.append(EdgeCase(x=x, predicted=predicted, truth=truth,
                                  risk=risk_value, distance_to_query=dist,
                                  synthetic=True, truth_source=source))
    ordered = _sort_cases(cases)
    summary = summarize_edge_cases(ordered, bins=bins, schema=schema,
                                   data=data, model=model)
    return EdgeCaseSet(schema=schema, cases=ordered, summary=summary)


def _binary_entropy(pos: float, neg: float) -> float:
    total = pos + neg
    if total == 0:
        return 0.0
    h = 0.0
    for c in (pos, neg):
        if c > 0:
            p = c / total
            h -= p * math.log2(p)
    return h


def _stump_gain(values: np.ndarray, labels: np.ndarray, feat) -> tuple[float, str]:
    """Best single-feature split separating edge (1) from non-edge (0) rows."""
    n = len(labels)
    pos = float(labels.sum())
    h_parent = _binary_entropy(pos, n - pos)
    best_gain, best_rule = 0.0, ""
    if feat.is_numeric:
        order = np.argsort(values, kind="stable")
        v_sorted = values[order]
        y_sorted = labels[order]
        pos_prefix = np.concatenate([[0.0], np.cumsum(y_sorted)])
        for i in range(1, n):
            if v_sorted[i - 1] >= v_sorted[i]:
                continue
            pl, nl = pos_prefix[i], i - pos_prefix[i]
            pr, nr = pos - pl, (n - i) - (pos - pl)
            gain = h_parent - (i * _binary_entropy(pl, nl)
                               + (n - i) * _binary_entropy(pr, nr)) / n
            if gain > best_gain:
                best_gain = gain
                best_rule = f"{feat.name} <= {float((v_sorted[i - 1] + v_sorted[i]) / 2)}"
    else:
        for code, category in enumerate(feat.domain):
            mask = values == code
            nl = float(mask.sum())
            if nl == 0 or nl == n:
                continue
            pl = float(labels[mask].sum())
            pr = pos - pl
            gain = h_parent - (nl * _binary_entropy(pl, nl - pl)
                               + (n - nl) * _binary_entropy(pr, (n - nl) - pr)) / n
            if gain > best_gain:
                best_gain = gain
                best_rule = f"{feat.name} == {category}"
    return best_gain, best_rule


def summarize_edge_cases(cases, bins: int = 10,
                         schema: Optional[FeatureSchema] = None,
                         data: Optional[LabeledDataset] = None,
                         model: Optional[Model] = None,
                         top_k: int = 5) -> EdgeSummary:
    """Aggregate an edge-case list: confusion, risk histogram, stump ranking.

    The stump ranking (features whose single-feature split best separates the
    edge cases from correctly predicted data) needs the dataset and model for
    the non-edge side; without them it is left empty.
    """
    if bins < 1:
        raise XplainError("bins >= 1 required")
    if isinstance(cases, EdgeCaseSet):
        schema = cases.schema
        cases = cases.cases
    cases = list(cases)
    if schema is None and cases:
        raise XplainError("schema required to summarize bare case lists")

    count = len(cases)
    k = schema.n_classes if schema is not None else 0
    confusion = [[0] * k for _ in range(k)]
    for c in cases:
        confusion[c.truth][c.predicted] += 1

    if count == 0:
        hist_edges: tuple[float, ...] = ()
        hist_counts: tuple[int, ...] = ()
    else:
        risks = np.array([c.risk for c in cases])
        lo, hi = float(risks.min()), float(risks.max())
        if lo == hi:
            hist_edges, hist_counts = (lo, hi), (count,)
        else:
            counts, edges = np.histogram(risks, bins=bins, range=(lo, hi))
            hist_edges = tuple(float(e) for e in edges)
            hist_counts = tuple(int(c) for c in counts)

    top: list[tuple[int, float, str]] = []
    if count > 0 and data is not None and model is not None:
        edge_keys = {tuple(c.x.values) for c in cases}
        non_edge = [x for x, y in zip(data.instances, data.labels)
                    if model.predict(x) == y and tuple(x.values) not in edge_keys]
        if non_edge:
            rows = [schema.encode(c.x) for c in cases] + \
                   [schema.encode(x) for x in non_edge]
            X = np.array(rows)
            labels = np.concatenate([np.ones(count), np.zeros(len(non_edge))])
            scored = []
            for f, feat in enumerate(schema.features):
                gain, rule = _stump_gain(X[:, f], labels, feat)
                scored.append((f, gain, rule))
            scored.sort(key=lambda t: (-t[1], t[0]))
            top = [t for t in scored[:top_k] if t[1] > 0]

    return EdgeSummary(count=count,
                       confusion=tuple(tuple(row) for row in confusion),
                       histogram_edges=hist_edges, histogram_counts=hist_counts,
                       top_features=tuple(top))
