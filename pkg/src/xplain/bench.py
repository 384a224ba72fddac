"""Seeded synthetic tabular benchmarks with planted ground truth.

Labels follow a noisy threshold rule over the informative features only, so
the informative index set doubles as the per-instance relevance mask. A
configurable rare subpopulation carries a distinctive marker value and a
flipped label, giving the edge-case tooling something real to find, and
spurious features correlate with the observed labels at a configurable rate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import LabeledDataset, dataset_to_csv
from .edge_cases import CLASS_TABLE, FEATURE_RULE, FeaturePredicate, RiskFunction
from .errors import XplainError
from .schema import NUMERIC, Feature, FeatureSchema

RARE_MARKER = "rare_marker"
RARE_MARKER_THRESHOLD = 0.925


@dataclass(frozen=True)
class BenchmarkSpec:
    n_instances: int
    n_informative: int = 1
    n_noise: int = 0
    n_spurious: int = 0
    n_classes: int = 2
    rare_fraction: float = 0.0
    rare_risk: float = 10.0
    label_noise: float = 0.0
    spurious_strength: float = 0.8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_instances < 1:
            raise XplainError("n_instances must be >= 1")
        if self.n_informative < 1:
            raise XplainError("infeasible spec: at least one informative feature")
        if self.n_noise < 0 or self.n_spurious < 0:
            raise XplainError("feature counts must be >= 0")
        if self.n_classes < 2:
            raise XplainError("n_classes must be >= 2")
        for frac in (self.rare_fraction, self.label_noise, self.spurious_strength):
            if not 0 <= frac <= 1:
                raise XplainError("fractions must be in [0, 1]")
        if not math.isfinite(self.rare_risk) or self.rare_risk < 0:
            raise XplainError("rare_risk must be finite and >= 0")


def _irwin_hall_cdf(x: np.ndarray, n: int) -> np.ndarray:
    """Exact CDF of a sum of n iid U(0,1) variables."""
    x = np.clip(x, 0.0, float(n))
    out = np.zeros_like(x, dtype=float)
    for j in range(n + 1):
        term = ((-1) ** j) * math.comb(n, j) * np.clip(x - j, 0.0, None) ** n
        out += term
    return out / math.factorial(n)


def _schema(spec: BenchmarkSpec) -> FeatureSchema:
    features = [Feature(f"inf_{i}", NUMERIC, (0.0, 1.0))
                for i in range(spec.n_informative)]
    features += [Feature(f"noise_{i}", NUMERIC, (0.0, 1.0))
                 for i in range(spec.n_noise)]
    features += [Feature(f"spur_{i}", NUMERIC, (0.0, 1.0))
                 for i in range(spec.n_spurious)]
    if spec.rare_fraction > 0:
        features.append(Feature(RARE_MARKER, NUMERIC, (0.0, 1.0)))
    classes = tuple(f"c{i}" for i in range(spec.n_classes))
    return FeatureSchema(features=tuple(features), target_name="label",
                         classes=classes)


def generate(spec: BenchmarkSpec) -> tuple[LabeledDataset, RiskFunction]:
    """Deterministic generation: identical specs give identical datasets."""
    rng = np.random.default_rng(spec.seed)
    schema = _schema(spec)
    n, k = spec.n_instances, spec.n_classes

    informative = rng.random((n, spec.n_informative))
    # fixed rule: uniformize the informative sum with its exact CDF, then
    # cut into k equal-probability bands (no dependence on the sample drawn)
    u = _irwin_hall_cdf(informative.sum(axis=1), spec.n_informative)
    labels = np.minimum((u * k).astype(int), k - 1)

    rare = rng.random(n) < spec.rare_fraction
    if spec.rare_fraction > 0:
        marker = np.where(rare, rng.uniform(0.95, 1.0, size=n),
                          rng.uniform(0.0, 0.9, size=n))
        labels = np.where(rare, (labels + 1) % k, labels)
    else:
        marker = None

    flip = rng.random(n) < spec.label_noise
    offsets = rng.integers(1, k, size=n)
    labels = np.where(flip, (labels + offsets) % k, labels)

    noise = rng.random((n, spec.n_noise)) if spec.n_noise else None
    spurious_cols = []
    for _ in range(spec.n_spurious):
        follow = rng.random(n) < spec.spurious_strength
        banded = (labels + rng.random(n)) / k
        spurious_cols.append(np.where(follow, banded, rng.random(n)))

    columns = [informative]
    if noise is not None:
        columns.append(noise)
    if spurious_cols:
        columns.append(np.column_stack(spurious_cols))
    if marker is not None:
        columns.append(marker[:, None])
    X = np.hstack(columns)

    instances = tuple(schema.instance([float(v) for v in row]) for row in X)
    mask = frozenset(range(spec.n_informative))
    data = LabeledDataset(
        schema=schema,
        instances=instances,
        labels=tuple(int(y) for y in labels),
        masks=tuple(mask for _ in range(n)),
    )

    if spec.rare_fraction > 0:
        marker_idx = schema.feature_index(RARE_MARKER)
        risk = RiskFunction(kind=FEATURE_RULE, rules=(
            (FeaturePredicate(marker_idx, ">", RARE_MARKER_THRESHOLD),
             spec.rare_risk),
        ))
    else:
        risk = RiskFunction(kind=CLASS_TABLE,
                            class_risks={c: 1.0 for c in schema.classes})
    return data, risk


def write_benchmark(data: LabeledDataset, risk: RiskFunction, out_dir: str | Path,
                    mask_column: str = "mask") -> dict[str, Path]:
    """Write the CSV + schema JSON + risk JSON trio consumed by the CLI."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "data.csv"
    schema_path = out / "schema.json"
    risk_path = out / "risk.json"

    csv_path.write_text(dataset_to_csv(data, mask_column=mask_column),
                        encoding="utf-8")
    schema_doc = data.schema.to_dict()
    if data.masks is not None:
        schema_doc["mask_column"] = mask_column
    schema_path.write_text(json.dumps(schema_doc, indent=2, sort_keys=True) + "\n",
                           encoding="utf-8")
    risk_path.write_text(
        json.dumps(risk.to_dict(data.schema), indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    return {"csv": csv_path, "schema": schema_path, "risk": risk_path}
