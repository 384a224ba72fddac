"""Model-agnostic feature attribution.

Four explainers, all built on probability differences against a baseline or
background drawn from data: single-feature ablation, contiguous-group
occlusion, permutation-sampled Shapley values (with an exact enumeration
mode for small feature counts), and background-replacement permutation
importance localised to one instance.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .dataset import LabeledDataset
from .errors import XplainError
from .models import Model
from .schema import Instance, instance_to_dict

ABLATION = "feature-ablation"
OCCLUSION = "occlusion"
SHAPLEY = "shapley-sampling"
PERMUTATION = "feature-permutation"

KINDS = (ABLATION, OCCLUSION, SHAPLEY, PERMUTATION)

# Background subsampling must not depend on the per-explanation seed.
_BACKGROUND_SEED = 7919

_SHAPLEY_EXACT_LIMIT = 8


@dataclass(frozen=True)
class AttributionMap:
    explainer_id: str
    x: Instance
    target_class: int
    values: tuple[float, ...]
    seed: int

    def to_dict(self, schema) -> dict:
        return {
            "explainer": self.explainer_id,
            "instance": instance_to_dict(schema, self.x),
            "target": schema.classes[self.target_class],
            "values": [
                {"feature": schema.features[i].name, "score": v}
                for i, v in enumerate(self.values)
            ],
        }


@dataclass(frozen=True)
class Explainer:
    kind: str
    baseline: Optional[Instance] = None
    background: Optional[tuple[Instance, ...]] = None
    occlusion_group: int = 2
    shapley_samples: int = 64
    shapley_exact: bool = False
    permutation_repeats: int = 8
    background_size: int = 16

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise XplainError(f"unknown explainer {self.kind!r}")
        if self.occlusion_group < 1 or self.shapley_samples < 1 \
                or self.permutation_repeats < 1 or self.background_size < 1:
            raise XplainError("explainer sample counts must be >= 1")

    @property
    def id(self) -> str:
        return self.kind

    def explain(self, model: Model, x: Instance,
                target_class: Optional[int] = None, seed: int = 0) -> AttributionMap:
        return explain(self, model, x, target_class=target_class, seed=seed)


def bind_background(explainer: Explainer, data: LabeledDataset) -> Explainer:
    """Fill in the baseline (feature means / modes) and a seeded background
    sample from the dataset."""
    if len(data) == 0:
        raise XplainError("cannot bind an empty dataset")
    schema = data.schema
    values = []
    for i, feat in enumerate(schema.features):
        col = [x.values[i] for x in data.instances]
        if feat.is_numeric:
            values.append(float(np.mean([float(v) for v in col])))
        else:
            counts = {c: 0 for c in feat.domain}
            for v in col:
                counts[v] += 1
            values.append(max(feat.domain, key=lambda c: counts[c]))
    baseline = schema.instance(values)

    rng = np.random.default_rng(_BACKGROUND_SEED)
    if len(data) <= explainer.background_size:
        background = data.instances
    else:
        idx = rng.choice(len(data), size=explainer.background_size, replace=False)
        background = tuple(data.instances[int(i)] for i in sorted(idx))
    return replace(explainer, baseline=baseline, background=background)


def _proba(model: Model, x: Instance, target: int) -> float:
    return float(model.predict_proba(x)[target])


def _require_baseline(explainer: Explainer) -> Instance:
    if explainer.baseline is None:
        raise XplainError("baseline unavailable: bind a dataset or set a "
                          "fixed baseline instance")
    return explainer.baseline


def _ablation(explainer: Explainer, model: Model, x: Instance,
              target: int) -> list[float]:
    baseline = _require_baseline(explainer)
    p_x = _proba(model, x, target)
    return [p_x - _proba(model, x.replace(i, baseline.values[i]), target)
            for i in range(len(x))]


def _occlusion(explainer: Explainer, model: Model, x: Instance,
               target: int) -> list[float]:
    baseline = _require_baseline(explainer)
    n = len(x)
    g = min(explainer.occlusion_group, n)
    p_x = _proba(model, x, target)
    effects: list[list[float]] = [[] for _ in range(n)]
    for start in range(n - g + 1):
        group = range(start, start + g)
        occluded = x
        for i in group:
            occluded = occluded.replace(i, baseline.values[i])
        effect = p_x - _proba(model, occluded, target)
        for i in group:
            effects[i].append(effect)
    return [sum(e) / len(e) for e in effects]


def _shapley(explainer: Explainer, model: Model, x: Instance, target: int,
             seed: int) -> list[float]:
    baseline = _require_baseline(explainer)
    n = len(x)
    if explainer.shapley_exact:
        if n > _SHAPLEY_EXACT_LIMIT:
            raise XplainError(f"exact Shapley enumeration is limited to "
                              f"{_SHAPLEY_EXACT_LIMIT} features")
        perms = itertools.permutations(range(n))
        n_perms = math.factorial(n)
    else:
        rng = np.random.default_rng(seed)
        perms = ([int(i) for i in rng.permutation(n)]
                 for _ in range(explainer.shapley_samples))
        n_perms = explainer.shapley_samples

    totals = [0.0] * n
    for perm in perms:
        current = baseline
        v_prev = _proba(model, current, target)
        for i in perm:
            current = current.replace(i, x.values[i])
            v_new = _proba(model, current, target)
            totals[i] += v_new - v_prev
            v_prev = v_new
    return [t / n_perms for t in totals]


def _permutation(explainer: Explainer, model: Model, x: Instance, target: int,
                 seed: int) -> list[float]:
    if not explainer.background:
        raise XplainError("background unavailable: bind a dataset first")
    rng = np.random.default_rng(seed)
    background = explainer.background
    p_x = _proba(model, x, target)
    out = []
    for i in range(len(x)):
        drops = []
        for _ in range(explainer.permutation_repeats):
            b = background[int(rng.integers(len(background)))]
            drops.append(p_x - _proba(model, x.replace(i, b.values[i]), target))
        out.append(sum(drops) / len(drops))
    return out


def explain(explainer: Explainer, model: Model, x: Instance,
            target_class: Optional[int] = None, seed: int = 0) -> AttributionMap:
    """Attribute the model's target-class probability to features.

    The explained class defaults to the model's own prediction for x.
    Deterministic for a fixed seed.
    """
    model.schema.check_instance(x)
    target = model.predict(x) if target_class is None else int(target_class)
    if not 0 <= target < model.schema.n_classes:
        raise XplainError(f"target class index {target} out of range")

    if explainer.kind == ABLATION:
        values = _ablation(explainer, model, x, target)
    elif explainer.kind == OCCLUSION:
        values = _occlusion(explainer, model, x, target)
    elif explainer.kind == SHAPLEY:
        values = _shapley(explainer, model, x, target, seed)
    else:
        values = _permutation(explainer, model, x, target, seed)

    if not all(math.isfinite(v) for v in values):
        raise XplainError("attribution produced non-finite values")
    return AttributionMap(explainer_id=explainer.id, x=x, target_class=target,
                          values=tuple(float(v) for v in values), seed=seed)


def maps_to_csv(schema, maps: list[AttributionMap]) -> str:
    """Batch export: one row per explained instance."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    names = [f.name for f in schema.features]
    writer.writerow(["explainer", "target"] + names)
    for m in maps:
        writer.writerow([m.explainer_id, schema.classes[m.target_class]]
                        + [repr(v) for v in m.values])
    return buf.getvalue()


def map_to_json(schema, m: AttributionMap) -> str:
    return json.dumps(m.to_dict(schema), sort_keys=True)
