"""Labeled datasets: CSV parsing, validation, and array views.

The on-disk format is a UTF-8 CSV with a header row naming every schema
feature plus the target column, in any column order. An optional mask column
holds semicolon-separated feature names marking the ground-truth relevant
features for that row.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import IO, Iterable, Optional

import numpy as np

from .errors import DataError, SchemaError
from .schema import FeatureSchema, Instance


@dataclass(frozen=True)
class LabeledDataset:
    schema: FeatureSchema
    instances: tuple[Instance, ...]
    labels: tuple[int, ...]
    masks: Optional[tuple[frozenset[int], ...]] = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.instances) != len(self.labels):
            raise DataError("instances and labels differ in length")
        if self.masks is not None and len(self.masks) != len(self.instances):
            raise DataError("masks and instances differ in length")
        n_classes = self.schema.n_classes
        for i, y in enumerate(self.labels):
            if not 0 <= y < n_classes:
                raise DataError(f"label {y} out of range at row {i + 1}")
        for x in self.instances:
            self.schema.check_instance(x)

    def __len__(self) -> int:
        return len(self.instances)

    @property
    def matrix(self) -> np.ndarray:
        """Float matrix view; categorical values appear as domain codes."""
        if "matrix" not in self._cache:
            self._cache["matrix"] = np.array(
                [self.schema.encode(x) for x in self.instances], dtype=float
            ).reshape(len(self.instances), self.schema.n_features)
        return self._cache["matrix"]

    @property
    def label_array(self) -> np.ndarray:
        if "labels" not in self._cache:
            self._cache["labels"] = np.array(self.labels, dtype=int)
        return self._cache["labels"]

    def present_classes(self) -> list[int]:
        return sorted(set(self.labels))

    def subset(self, indices: Iterable[int]) -> "LabeledDataset":
        idx = list(indices)
        return LabeledDataset(
            schema=self.schema,
            instances=tuple(self.instances[i] for i in idx),
            labels=tuple(self.labels[i] for i in idx),
            masks=None if self.masks is None else tuple(self.masks[i] for i in idx),
        )


def load_schema(source: IO[bytes] | bytes | str) -> tuple[FeatureSchema, Optional[str]]:
    """Parse a schema JSON document; returns (schema, mask_column or None)."""
    if hasattr(source, "read"):
        raw = source.read()
    else:
        raw = source
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise DataError(f"schema file is not valid JSON: {exc}") from exc
    schema = FeatureSchema.from_dict(doc)
    return schema, doc.get("mask_column")


def load_dataset(csv_source: IO[bytes] | bytes | str,
                 schema_source: IO[bytes] | bytes | str) -> LabeledDataset:
    """Parse a CSV byte stream against a schema JSON byte stream.

    Every error carries the 1-based data row number it occurred on.
    """
    schema, mask_column = load_schema(schema_source)
    if hasattr(csv_source, "read"):
        raw = csv_source.read()
    else:
        raw = csv_source
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")

    reader = csv.reader(io.StringIO(raw))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("CSV is empty") from None
    header = [h.strip() for h in header]

    feature_names = [f.name for f in schema.features]
    expected = set(feature_names) | {schema.target_name}
    if mask_column:
        expected.add(mask_column)
    unknown = [h for h in header if h not in expected]
    if unknown:
        raise DataError(f"unknown column(s) in CSV header: {unknown}")
    missing = [name for name in feature_names + [schema.target_name] if name not in header]
    if missing:
        raise DataError(f"CSV header is missing column(s): {missing}")

    col = {name: header.index(name) for name in header}
    instances: list[Instance] = []
    labels: list[int] = []
    masks: list[frozenset[int]] = []
    has_mask = mask_column is not None and mask_column in header

    for row_no, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"row-length mismatch at row {row_no}: "
                            f"expected {len(header)} cells, got {len(row)}")
        values = []
        for feat in schema.features:
            cell = row[col[feat.name]].strip()
            if feat.is_numeric:
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"non-numeric value {cell!r} for {feat.name!r} at row {row_no}") from None
            else:
                values.append(cell)
        try:
            instances.append(schema.instance(values))
        except SchemaError as exc:
            raise DataError(f"value out of domain at row {row_no}: {exc}") from exc

        label_cell = row[col[schema.target_name]].strip()
        try:
            labels.append(schema.class_index(label_cell))
        except SchemaError:
            raise DataError(f"unknown class {label_cell!r} at row {row_no}") from None

        if has_mask:
            cell = row[col[mask_column]].strip()
            names = [p.strip() for p in cell.split(";") if p.strip()]
            try:
                masks.append(frozenset(schema.feature_index(n) for n in names))
            except SchemaError as exc:
                raise DataError(f"unknown feature in mask at row {row_no}: {exc}") from exc

    return LabeledDataset(
        schema=schema,
        instances=tuple(instances),
        labels=tuple(labels),
        masks=tuple(masks) if has_mask else None,
    )


def dataset_to_csv(data: LabeledDataset, mask_column: str = "mask") -> str:
    """Serialize back to the CSV wire format (used by the benchmark writer)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = [f.name for f in data.schema.features] + [data.schema.target_name]
    if data.masks is not None:
        header.append(mask_column)
    writer.writerow(header)
    for i, (x, y) in enumerate(zip(data.instances, data.labels)):
        row = [repr(v) if isinstance(v, float) else str(v) for v in x.values]
        row.append(data.schema.classes[y])
        if data.masks is not None:
            names = sorted(data.schema.features[j].name for j in data.masks[i])
            row.append(";".join(names))
        writer.writerow(row)
    return buf.getvalue()
