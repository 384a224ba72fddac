"""Mixed-type instance distances.

Every metric normalizes numeric differences by the feature's domain width, so
each feature contributes a dissimilarity in [0, 1] regardless of scale;
categorical features contribute 0/1. Gower is the weighted mean of the
per-feature dissimilarities and is therefore bounded in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import SchemaError
from .schema import FeatureSchema, Instance

GOWER = "gower"
NORM_L1 = "normalized-l1"
NORM_L2 = "normalized-l2"


@dataclass(frozen=True)
class DistanceMetric:
    kind: str = GOWER
    weights: Optional[tuple[float, ...]] = None  # default: 1 per feature

    def __post_init__(self) -> None:
        if self.kind not in (GOWER, NORM_L1, NORM_L2):
            raise SchemaError(f"unknown distance kind {self.kind!r}")
        if self.weights is not None and any(w < 0 for w in self.weights):
            raise SchemaError("feature weights must be non-negative")

    def _weights(self, n: int) -> np.ndarray:
        if self.weights is None:
            return np.ones(n)
        if len(self.weights) != n:
            raise SchemaError(f"expected {n} weights, got {len(self.weights)}")
        return np.asarray(self.weights, dtype=float)

    def distance(self, schema: FeatureSchema, x1: Instance, x2: Instance) -> float:
        schema.check_instance(x1)
        schema.check_instance(x2)
        d = per_feature_dissimilarity(schema, x1, x2)
        return self._combine(d, self._weights(schema.n_features))

    def _combine(self, d: np.ndarray, w: np.ndarray) -> float:
        if self.kind == GOWER:
            total = w.sum()
            return float((w * d).sum() / total) if total > 0 else 0.0
        if self.kind == NORM_L1:
            return float((w * d).sum())
        return float(np.sqrt((w * d * d).sum()))

    # -- vectorized forms over encoded matrices ---------------------------

    def matrix_distances(self, schema: FeatureSchema, row: np.ndarray,
                         matrix: np.ndarray) -> np.ndarray:
        """Distances from one encoded row to every row of an encoded matrix."""
        d = encoded_dissimilarity(schema, row[None, :], matrix)
        w = self._weights(schema.n_features)
        if self.kind == GOWER:
            total = w.sum()
            return (d * w).sum(axis=1) / total if total > 0 else np.zeros(len(matrix))
        if self.kind == NORM_L1:
            return (d * w).sum(axis=1)
        return np.sqrt((d * d * w).sum(axis=1))

    def pairwise(self, schema: FeatureSchema, matrix: np.ndarray) -> np.ndarray:
        """Full n-by-n distance matrix over encoded rows."""
        n = len(matrix)
        out = np.zeros((n, n))
        for i in range(n):
            out[i, i + 1:] = self.matrix_distances(schema, matrix[i], matrix[i + 1:])
        return out + out.T


def per_feature_dissimilarity(schema: FeatureSchema, x1: Instance,
                              x2: Instance) -> np.ndarray:
    d = np.zeros(schema.n_features)
    for i, feat in enumerate(schema.features):
        a, b = x1.values[i], x2.values[i]
        if feat.is_numeric:
            width = feat.width
            d[i] = 0.0 if width == 0 else abs(float(a) - float(b)) / width
        else:
            d[i] = 0.0 if a == b else 1.0
    return d


def encoded_dissimilarity(schema: FeatureSchema, rows_a: np.ndarray,
                          rows_b: np.ndarray) -> np.ndarray:
    """Per-feature dissimilarity between broadcastable encoded row blocks."""
    widths = np.array([f.width if f.is_numeric else 1.0 for f in schema.features])
    numeric = np.array([f.is_numeric for f in schema.features])
    diff = np.abs(rows_a - rows_b)
    out = np.where(numeric, np.divide(diff, widths, out=np.zeros_like(diff),
                                      where=widths != 0), (diff != 0).astype(float))
    return out


def distance(metric: DistanceMetric, schema: FeatureSchema, x1: Instance,
             x2: Instance) -> float:
    return metric.distance(schema, x1, x2)
