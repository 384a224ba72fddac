"""Constrained counterfactual search.

A query asks for instances near x that the model assigns a different target
class, subject to user constraints: locked features that must not change,
forced features that must change, per-feature value ranges for changes, and
an overall dissimilarity bound. Two engines are provided: an exhaustive grid
enumerator (the exactness oracle, guarded to small problems) and a seeded
growing-ring sampler suitable for interactive latency budgets.
"""

from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import dataclass, field, replace
from typing import Any, Optional

import numpy as np

from .distance import DistanceMetric
from .errors import GridTooLargeError, QueryError, SchemaError
from .models import Model
from .schema import FeatureSchema, Instance, instance_from_payload, instance_to_dict

# A numeric feature counts as changed iff it moved more than this fraction
# of its domain width.
CHANGE_TOLERANCE = 1e-9

MAX_FREE_FEATURES = 8
MAX_GRID_CELLS = 1_000_000


@dataclass(frozen=True)
class CounterfactualQuery:
    x: Instance
    target_class: int
    epsilon: float = 1.0
    unchangeable: frozenset[int] = frozenset()
    must_change: frozenset[int] = frozenset()
    ranges: dict[int, tuple] = field(default_factory=dict)
    max_results: Optional[int] = None
    time_budget_ms: Optional[float] = None

    def validate(self, schema: FeatureSchema) -> None:
        schema.check_instance(self.x)
        if not 0 <= self.target_class < schema.n_classes:
            raise QueryError(f"unknown target class index {self.target_class}")
        if not 0 < self.epsilon <= 1:
            raise QueryError("epsilon must be in (0, 1]")
        overlap = self.unchangeable & self.must_change
        if overlap:
            raise QueryError(f"features {sorted(overlap)} are both locked and forced")
        for idx_set in (self.unchangeable, self.must_change):
            for i in idx_set:
                if not 0 <= i < schema.n_features:
                    raise QueryError(f"feature index {i} out of range")
        for i, rng in self.ranges.items():
            feat = schema.features[i]
            if feat.is_numeric:
                lo, hi = rng
                if lo > hi:
                    raise QueryError(f"range for {feat.name!r} has lo > hi")
                if lo < feat.domain[0] or hi > feat.domain[1]:
                    raise QueryError(f"range for {feat.name!r} exceeds its domain")
            else:
                bad = [c for c in rng if c not in feat.domain]
                if bad:
                    raise QueryError(f"range for {feat.name!r} names unknown "
                                     f"categories {bad}")
        if self.max_results is not None and self.max_results < 1:
            raise QueryError("max_results must be >= 1")


def _changed(feat, old, new) -> bool:
    if feat.is_numeric:
        width = feat.width
        tol = CHANGE_TOLERANCE * width if width > 0 else CHANGE_TOLERANCE
        return abs(float(new) - float(old)) > tol
    return old != new


def delta_features(schema: FeatureSchema, x: Instance,
                   candidate: Instance) -> tuple[tuple[int, Any, Any], ...]:
    out = []
    for i, feat in enumerate(schema.features):
        old, new = x.values[i], candidate.values[i]
        if _changed(feat, old, new):
            out.append((i, old, new))
    return tuple(out)


@dataclass(frozen=True)
class Violation:
    clause: str  # prediction | distance | unchangeable | must-change | range
    feature: Optional[int]
    message: str

    def to_dict(self, schema: FeatureSchema) -> dict:
        return {
            "clause": self.clause,
            "feature": None if self.feature is None
            else schema.features[self.feature].name,
            "message": self.message,
        }


def check_constraints(model: Model, q: CounterfactualQuery, candidate: Instance,
                      metric: Optional[DistanceMetric] = None) -> list[Violation]:
    """Evaluate every constraint clause independently; empty list = satisfied."""
    metric = metric or DistanceMetric()
    schema = model.schema
    schema.check_instance(candidate)
    violations: list[Violation] = []

    predicted = model.predict(candidate)
    if predicted != q.target_class:
        violations.append(Violation(
            "prediction", None,
            f"model predicts {schema.classes[predicted]!r}, "
            f"target is {schema.classes[q.target_class]!r}"))

    dist = metric.distance(schema, q.x, candidate)
    if not dist < q.epsilon:
        violations.append(Violation(
            "distance", None, f"distance {dist:.6g} not below epsilon {q.epsilon:.6g}"))

    changes = {i for i, _, _ in delta_features(schema, q.x, candidate)}
    for i in sorted(q.unchangeable & changes):
        violations.append(Violation(
            "unchangeable", i, f"locked feature {schema.features[i].name!r} changed"))
    for i in sorted(q.must_change - changes):
        violations.append(Violation(
            "must-change", i, f"forced feature {schema.features[i].name!r} unchanged"))
    for i in sorted(changes & set(q.ranges)):
        feat = schema.features[i]
        new = candidate.values[i]
        rng = q.ranges[i]
        if feat.is_numeric:
            lo, hi = rng
            if not lo <= float(new) <= hi:
                violations.append(Violation(
                    "range", i, f"{feat.name!r} changed to {new} outside [{lo}, {hi}]"))
        elif new not in rng:
            violations.append(Violation(
                "range", i, f"{feat.name!r} changed to {new!r} outside allowed set"))
    return violations


@dataclass(frozen=True)
class Counterfactual:
    x_c: Instance
    delta: tuple[tuple[int, Any, Any], ...]
    distance: float
    sparsity: int
    rank: int = 0

    def to_dict(self, schema: FeatureSchema) -> dict:
        return {
            "instance": instance_to_dict(schema, self.x_c),
            "changes": [
                {"feature": schema.features[i].name, "old": old, "new": new}
                for i, old, new in self.delta
            ],
            "distance": self.distance,
            "sparsity": self.sparsity,
            "rank": self.rank,
        }


@dataclass(frozen=True)
class SearchStats:
    engine: str
    candidates_evaluated: int
    wall_time_ms: float
    partial: bool = False      # stopped early on the time budget
    exhausted: bool = False    # budget spent without finding anything


@dataclass(frozen=True)
class CounterfactualSet:
    schema: FeatureSchema
    query: CounterfactualQuery
    results: tuple[Counterfactual, ...]
    stats: SearchStats

    def __len__(self) -> int:
        return len(self.results)

    def to_dict(self, include_timing: bool = False) -> dict:
        stats = {
            "engine": self.stats.engine,
            "candidates_evaluated": self.stats.candidates_evaluated,
            "partial": self.stats.partial,
            "exhausted": self.stats.exhausted,
        }
        if include_timing:
            stats["wall_time_ms"] = self.stats.wall_time_ms
        return {
            "query": query_to_dict(self.schema, self.query),
            "results": [r.to_dict(self.schema) for r in self.results],
            "stats": stats,
        }

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing=include_timing), sort_keys=True)


def _sorted_results(found: dict[tuple, Counterfactual],
                    max_results: Optional[int]) -> tuple[Counterfactual, ...]:
    ordered = sorted(found.values(),
                     key=lambda r: (r.sparsity, r.distance,
                                    tuple(i for i, _, _ in r.delta)))
    if max_results is not None:
        ordered = ordered[:max_results]
    return tuple(replace(r, rank=i + 1) for i, r in enumerate(ordered))


def _effective_numeric_range(feat, q: CounterfactualQuery, i: int) -> tuple[float, float]:
    if i in q.ranges:
        return q.ranges[i]
    return feat.domain


def _effective_categories(feat, q: CounterfactualQuery, i: int) -> tuple:
    if i in q.ranges:
        return tuple(q.ranges[i])
    return feat.domain


def _precheck(model: Model, q: CounterfactualQuery) -> None:
    q.validate(model.schema)
    if model.predict(q.x) == q.target_class:
        raise QueryError("target equals current prediction")


def search_exhaustive(model: Model, q: CounterfactualQuery, grid_steps: int = 11,
                      metric: Optional[DistanceMetric] = None) -> CounterfactualSet:
    """Enumerate the full value grid over free features; the oracle engine.

    Guarded to at most 8 free features and 10^6 grid cells; larger problems
    should go through the sampling engine instead.
    """
    t0 = time.perf_counter()
    metric = metric or DistanceMetric()
    _precheck(model, q)
    schema = model.schema
    if grid_steps < 2:
        raise QueryError("grid_steps must be >= 2")

    free = [i for i in range(schema.n_features) if i not in q.unchangeable]
    if len(free) > MAX_FREE_FEATURES:
        raise GridTooLargeError(
            f"{len(free)} free features exceed the exhaustive guard of "
            f"{MAX_FREE_FEATURES}; use the sampling engine")

    options: list[list[float]] = []  # encoded values per free feature
    for i in free:
        feat = schema.features[i]
        current = q.x.values[i]
        if feat.is_numeric:
            lo, hi = _effective_numeric_range(feat, q, i)
            pts = [float(v) for v in np.linspace(lo, hi, grid_steps)] \
                if hi > lo else [float(lo)]
            if i in q.must_change:
                pts = [v for v in pts if _changed(feat, current, v)]
            elif not any(not _changed(feat, current, v) for v in pts):
                pts.append(float(current))
            vals = pts
        else:
            cats = _effective_categories(feat, q, i)
            if i in q.must_change:
                cats = tuple(c for c in cats if c != current)
            elif current not in cats:
                cats = cats + (current,)
            vals = [float(feat.category_code(c)) for c in cats]
        seen: list[float] = []
        for v in vals:
            if v not in seen:
                seen.append(v)
        if not seen:
            # a forced feature with no legal alternative value
            stats = SearchStats("exhaustive", 0,
                                (time.perf_counter() - t0) * 1000, exhausted=True)
            return CounterfactualSet(schema, q, (), stats)
        options.append(seen)

    cells = math.prod(len(o) for o in options)
    if cells > MAX_GRID_CELLS:
        raise GridTooLargeError(
            f"grid has {cells} cells, above the exhaustive guard of "
            f"{MAX_GRID_CELLS}; use the sampling engine")

    x_enc = np.array(schema.encode(q.x))
    rows = np.fromiter(
        (v for combo in itertools.product(*options) for v in combo),
        dtype=float, count=cells * len(free)).reshape(cells, len(free))
    X = np.tile(x_enc, (cells, 1))
    X[:, free] = rows

    predicted = model.predict_encoded(X)
    dists = metric.matrix_distances(schema, x_enc, X)

    widths = np.array([schema.features[i].width if schema.features[i].is_numeric
                       else 1.0 for i in free])
    tol = np.where(widths > 0, CHANGE_TOLERANCE * widths, CHANGE_TOLERANCE)
    changed = np.abs(rows - x_enc[free]) > tol

    ok = (predicted == q.target_class) & (dists < q.epsilon)
    for pos, i in enumerate(free):
        if i in q.must_change:
            ok &= changed[:, pos]

    found: dict[tuple, Counterfactual] = {}
    for row_idx in np.nonzero(ok)[0]:
        cand = schema.decode_row(X[row_idx])
        key = tuple(cand.values)
        if key in found:
            continue
        delta = delta_features(schema, q.x, cand)
        found[key] = Counterfactual(x_c=cand, delta=delta,
                                    distance=float(dists[row_idx]),
                                    sparsity=len(delta))
    stats = SearchStats("exhaustive", int(cells),
                        (time.perf_counter() - t0) * 1000,
                        exhausted=len(found) == 0)
    return CounterfactualSet(schema, q, _sorted_results(found, q.max_results), stats)


def _sparsify(model: Model, q: CounterfactualQuery, values: list,
              metric: DistanceMetric) -> list:
    """Greedily revert optional changes that are not needed for the target."""
    schema = model.schema
    for i, feat in enumerate(schema.features):
        if i in q.must_change or not _changed(feat, q.x.values[i], values[i]):
            continue
        trial = list(values)
        trial[i] = q.x.values[i]
        # Reverting toward x never increases the distance and removes the
        # feature from the change set, so only the prediction needs rechecking.
        if model.predict(Instance(tuple(trial))) == q.target_class:
            values = trial
    return values


def search_sampling(model: Model, q: CounterfactualQuery, seed: int,
                    budget: int, metric: Optional[DistanceMetric] = None,
                    batch_size: int = 128) -> CounterfactualSet:
    """Seeded anytime engine: growing-ring perturbations plus greedy
    sparsification. Honors the query's time budget by stopping between
    batches and flagging the result set partial."""
    t0 = time.perf_counter()
    metric = metric or DistanceMetric()
    _precheck(model, q)
    if budget < 1:
        raise QueryError("budget must be >= 1")
    schema = model.schema
    rng = np.random.default_rng(seed)
    x_enc = np.array(schema.encode(q.x))

    free = [i for i in range(schema.n_features) if i not in q.unchangeable]
    optional = [i for i in free if i not in q.must_change]
    forced = sorted(q.must_change)
    found: dict[tuple, Counterfactual] = {}
    evaluated = 0
    partial = False

    def over_budget() -> bool:
        if q.time_budget_ms is None:
            return False
        return (time.perf_counter() - t0) * 1000 >= q.time_budget_ms

    while evaluated < budget and not partial:
        size = min(batch_size, budget - evaluated)
        batch = np.tile(x_enc, (size, 1))
        row_ok = np.ones(size, dtype=bool)
        for r in range(size):
            t = evaluated + r
            shell = 0.05 + 0.95 * (t / max(budget - 1, 1))
            extra = int(rng.geometric(0.5)) - 1
            if not forced:
                extra = max(extra, 1)
            extra = min(extra, len(optional))
            picks = list(forced)
            if extra > 0 and optional:
                picks += [optional[int(j)] for j in
                          rng.choice(len(optional), size=extra, replace=False)]
            for i in picks:
                feat = schema.features[i]
                current = q.x.values[i]
                if feat.is_numeric:
                    lo, hi = _effective_numeric_range(feat, q, i)
                    if hi <= lo:
                        new = float(lo)
                    else:
                        new = float(np.clip(float(current) + rng.uniform(-1, 1)
                                            * shell * (hi - lo), lo, hi))
                        if not _changed(feat, current, new):
                            new = float(rng.uniform(lo, hi))
                    if i in q.must_change and not _changed(feat, current, new):
                        row_ok[r] = False
                        break
                    batch[r, i] = new
                else:
                    cats = [c for c in _effective_categories(feat, q, i)
                            if c != current]
                    if not cats:
                        if i in q.must_change:
                            row_ok[r] = False
                            break
                        continue
                    choice = cats[int(rng.integers(len(cats)))]
                    batch[r, i] = feat.category_code(choice)
        evaluated += size

        idx = np.nonzero(row_ok)[0]
        if len(idx):
            predicted = model.predict_encoded(batch[idx])
            dists = metric.matrix_distances(schema, x_enc, batch[idx])
            hits = idx[(predicted == q.target_class) & (dists < q.epsilon)]
            for r in hits:
                values = list(schema.decode_row(batch[r]).values)
                values = _sparsify(model, q, values, metric)
                cand = Instance(tuple(values))
                key = tuple(values)
                if key in found:
                    continue
                if check_constraints(model, q, cand, metric):
                    continue  # defensive: never return an unsound result
                delta = delta_features(schema, q.x, cand)
                found[key] = Counterfactual(
                    x_c=cand, delta=delta,
                    distance=metric.distance(schema, q.x, cand),
                    sparsity=len(delta))
        if over_budget():
            partial = evaluated < budget
            break

    stats = SearchStats("sampling", evaluated,
                        (time.perf_counter() - t0) * 1000,
                        partial=partial, exhausted=len(found) == 0)
    return CounterfactualSet(schema, q, _sorted_results(found, q.max_results), stats)


def rank_results(cset: CounterfactualSet,
                 weights: tuple[float, float]) -> CounterfactualSet:
    """Reorder by weighted sparsity fraction + distance; ranks rewritten."""
    w_sparsity, w_distance = weights
    if w_sparsity < 0 or w_distance < 0 or (w_sparsity == 0 and w_distance == 0):
        raise QueryError("weights must be >= 0 and not both zero")
    n_features = cset.schema.n_features

    def score(r: Counterfactual) -> float:
        return w_sparsity * (r.sparsity / n_features) + w_distance * r.distance

    reordered = sorted(cset.results, key=score)  # stable: ties keep prior order
    results = tuple(replace(r, rank=i + 1) for i, r in enumerate(reordered))
    return replace(cset, results=results)


# -- wire format ------------------------------------------------------------


def query_to_dict(schema: FeatureSchema, q: CounterfactualQuery) -> dict:
    ranges = {}
    for i, rng in q.ranges.items():
        feat = schema.features[i]
        ranges[feat.name] = list(rng)
    out: dict = {
        "instance": instance_to_dict(schema, q.x),
        "target_class": schema.classes[q.target_class],
        "epsilon": q.epsilon,
        "lock": sorted(schema.features[i].name for i in q.unchangeable),
        "force_change": sorted(schema.features[i].name for i in q.must_change),
        "ranges": ranges,
    }
    if q.max_results is not None:
        out["max_results"] = q.max_results
    if q.time_budget_ms is not None:
        out["time_budget_ms"] = q.time_budget_ms
    return out


def query_from_dict(schema: FeatureSchema, doc: dict) -> CounterfactualQuery:
    try:
        x = instance_from_payload(schema, doc["instance"])
        target = doc["target_class"]
    except KeyError as exc:
        raise QueryError(f"query is missing field {exc}") from exc
    if isinstance(target, str):
        target_idx = schema.class_index(target)
    else:
        target_idx = int(target)
    ranges: dict[int, tuple] = {}
    for name, rng in (doc.get("ranges") or {}).items():
        i = schema.feature_index(name)
        feat = schema.features[i]
        if feat.is_numeric:
            if len(rng) != 2:
                raise QueryError(f"numeric range for {name!r} must be [lo, hi]")
            ranges[i] = (float(rng[0]), float(rng[1]))
        else:
            ranges[i] = tuple(rng)
    try:
        q = CounterfactualQuery(
            x=x,
            target_class=target_idx,
            epsilon=float(doc.get("epsilon", 1.0)),
            unchangeable=frozenset(schema.feature_index(n)
                                   for n in doc.get("lock", [])),
            must_change=frozenset(schema.feature_index(n)
                                  for n in doc.get("force_change", [])),
            ranges=ranges,
            max_results=doc.get("max_results"),
            time_budget_ms=doc.get("time_budget_ms"),
        )
    except SchemaError as exc:
        raise QueryError(str(exc)) from exc
    q.validate(schema)
    return q
