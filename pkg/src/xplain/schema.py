"""Feature schemas and typed instances for tabular data.

A schema is an ordered list of named features, each either numeric with a
closed domain ``[lo, hi]`` or categorical with a fixed category list, plus a
target with its class list. The position of a feature in the schema is its
stable identity everywhere else in the package.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Sequence

from .errors import SchemaError

NUMERIC = "numeric"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str
    domain: tuple  # (lo, hi) for numeric, (cat, ...) for categorical

    def __post_init__(self) -> None:
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise SchemaError(f"unknown feature kind {self.kind!r}")
        if self.kind == NUMERIC:
            if len(self.domain) != 2:
                raise SchemaError(f"numeric domain of {self.name!r} must be [lo, hi]")
            lo, hi = self.domain
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise SchemaError(f"numeric domain of {self.name!r} must be finite")
            if lo > hi:
                raise SchemaError(f"numeric domain of {self.name!r} has lo > hi")
        else:
            if len(self.domain) == 0:
                raise SchemaError(f"categorical domain of {self.name!r} is empty")
            if len(set(self.domain)) != len(self.domain):
                raise SchemaError(f"categorical domain of {self.name!r} has duplicates")

    @property
    def is_numeric(self) -> bool:
        return self.kind == NUMERIC

    @property
    def width(self) -> float:
        """Domain width for numeric features (0 for a point domain)."""
        if not self.is_numeric:
            raise SchemaError(f"{self.name!r} is categorical, has no width")
        return float(self.domain[1]) - float(self.domain[0])

    def contains(self, value: Any) -> bool:
        if self.is_numeric:
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                return False
            return math.isfinite(value) and self.domain[0] <= value <= self.domain[1]
        return value in self.domain

    def category_code(self, value: str) -> int:
        return self.domain.index(value)


@dataclass(frozen=True)
class Instance:
    """A single row, with values aligned to a schema's feature order."""

    values: tuple

    def __len__(self) -> int:
        return len(self.values)

    def replace(self, index: int, value: Any) -> "Instance":
        vals = list(self.values)
        vals[index] = value
        return Instance(tuple(vals))


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[Feature, ...]
    target_name: str
    classes: tuple[str, ...]

    def __post_init__(self) -> None:
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("feature names must be unique")
        if not self.classes:
            raise SchemaError("target class list is empty")
        if len(set(self.classes)) != len(self.classes):
            raise SchemaError("target class list has duplicates")
        if self.target_name in names:
            raise SchemaError("target name collides with a feature name")

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def feature_index(self, name: str) -> int:
        for i, f in enumerate(self.features):
            if f.name == name:
                return i
        raise SchemaError(f"unknown feature {name!r}")

    def class_index(self, name: str) -> int:
        try:
            return self.classes.index(name)
        except ValueError:
            raise SchemaError(f"unknown class {name!r}") from None

    def instance(self, values: Sequence[Any]) -> Instance:
        """Build a validated instance from raw values in schema order."""
        coerced = list(values)
        if len(coerced) == self.n_features:
            for i, feat in enumerate(self.features):
                v = coerced[i]
                if feat.is_numeric and isinstance(v, (int, float)) and not isinstance(v, bool):
                    coerced[i] = float(v)
        inst = Instance(tuple(coerced))
        self.check_instance(inst)
        return inst

    def check_instance(self, x: Instance) -> None:
        if len(x.values) != self.n_features:
            raise SchemaError(
                f"instance has {len(x.values)} values, schema has {self.n_features} features")
        for i, (feat, v) in enumerate(zip(self.features, x.values)):
            if not feat.contains(v):
                raise SchemaError(f"value {v!r} out of domain for feature {feat.name!r} (index {i})")

    def encode(self, x: Instance) -> list[float]:
        """Numeric vector with categorical values replaced by domain codes."""
        out = []
        for feat, v in zip(self.features, x.values):
            out.append(float(v) if feat.is_numeric else float(feat.category_code(v)))
        return out

    def decode_row(self, row: Sequence[float]) -> Instance:
        """Inverse of encode: turn a coded numeric row back into an instance."""
        values = []
        for feat, v in zip(self.features, row):
            values.append(float(v) if feat.is_numeric else feat.domain[int(round(v))])
        return Instance(tuple(values))

    # -- JSON wire format -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "features": [
                {"name": f.name, "kind": f.kind, "domain": list(f.domain)}
                for f in self.features
            ],
            "target": {"name": self.target_name, "classes": list(self.classes)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        try:
            feats = tuple(
                Feature(name=f["name"], kind=f["kind"], domain=tuple(f["domain"]))
                for f in d["features"]
            )
            target = d["target"]
            return cls(features=feats, target_name=target["name"],
                       classes=tuple(target["classes"]))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema document: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FeatureSchema":
        return cls.from_dict(json.loads(text))


def instance_to_dict(schema: FeatureSchema, x: Instance) -> dict:
    return {f.name: v for f, v in zip(schema.features, x.values)}


def instance_from_payload(schema: FeatureSchema, payload: Any) -> Instance:
    """Accept either a value list in schema order or a name-keyed mapping."""
    if isinstance(payload, dict) and "values" in payload:
        payload = payload["values"]
    if isinstance(payload, dict):
        missing = [f.name for f in schema.features if f.name not in payload]
        if missing:
            raise SchemaError(f"instance payload missing features: {missing}")
        extra = [k for k in payload if all(f.name != k for f in schema.features)]
        if extra:
            raise SchemaError(f"instance payload has unknown features: {extra}")
        values = [payload[f.name] for f in schema.features]
    elif isinstance(payload, (list, tuple)):
        values = list(payload)
    else:
        raise SchemaError("instance payload must be a list or a name-keyed object")
    return schema.instance(values)
