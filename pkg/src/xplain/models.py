"""Classifier abstraction and the built-in learners.

Three kinds are supported: "cart-tree" (shared with the collapsible-tree
builder, probabilities are Laplace-smoothed leaf frequencies), "logistic"
(multinomial softmax trained by full-batch gradient descent), and
"external-table" (an exhaustive input-to-probability lookup, used as an
exact oracle in tests). All models serialize to versioned JSON.
"""

from __future__ import annotations

import json
from abc import ABC, abstractmethod
from typing import Optional

import numpy as np

from .dataset import LabeledDataset
from .errors import SchemaError, XplainError
from .schema import FeatureSchema, Instance
from .tree import DecisionTree, SemanticDistanceConfig, induce_tree

MODEL_FORMAT_VERSION = 1

CART = "cart-tree"
LOGISTIC = "logistic"
EXTERNAL_TABLE = "external-table"


class Model(ABC):
    kind: str
    schema: FeatureSchema
    training_accuracy: Optional[float] = None

    @abstractmethod
    def predict_proba(self, x: Instance) -> np.ndarray:
        """Probability vector over target classes, summing to 1."""

    def predict(self, x: Instance) -> int:
        return int(np.argmax(self.predict_proba(x)))

    def predict_encoded(self, X: np.ndarray) -> np.ndarray:
        """Batch predict over coded rows (see FeatureSchema.encode)."""
        return np.array([self.predict(self.schema.decode_row(row)) for row in X],
                        dtype=int)

    @abstractmethod
    def params_dict(self) -> dict:
        ...

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": self.kind,
            "schema": self.schema.to_dict(),
            "parameters": self.params_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


class CartTreeModel(Model):
    kind = CART

    def __init__(self, tree: DecisionTree, training_accuracy: Optional[float] = None,
                 hyperparams: Optional[dict] = None):
        self.tree = tree
        self.schema = tree.schema
        self.training_accuracy = training_accuracy
        self.hyperparams = dict(hyperparams or {})

    def predict_proba(self, x: Instance) -> np.ndarray:
        self.schema.check_instance(x)
        leaf = self.tree.route(x)
        counts = np.asarray(leaf.histogram, dtype=float)
        # Laplace smoothing keeps every class strictly positive.
        return (counts + 1.0) / (counts.sum() + len(counts))

    def predict(self, x: Instance) -> int:
        self.schema.check_instance(x)
        return self.tree.predict(x)

    def predict_encoded(self, X: np.ndarray) -> np.ndarray:
        out = np.zeros(len(X), dtype=int)
        stack = [(self.tree.root, np.arange(len(X)))]
        while stack:
            nid, idx = stack.pop()
            if len(idx) == 0:
                continue
            node = self.tree.nodes[nid]
            if node.is_leaf:
                out[idx] = int(np.argmax(node.histogram))
                continue
            split = node.split
            col = X[idx, split.feature]
            if split.threshold is not None:
                left = col <= split.threshold
            else:
                feat = self.schema.features[split.feature]
                codes = [feat.category_code(c) for c in split.categories]
                left = np.isin(col.astype(int), codes)
            stack.append((node.children[0], idx[left]))
            stack.append((node.children[1], idx[~left]))
        return out

    def params_dict(self) -> dict:
        out = {"tree": self.tree.to_dict(), "hyperparams": self.hyperparams}
        if self.training_accuracy is not None:
            out["training_accuracy"] = self.training_accuracy
        return out

    @classmethod
    def from_params(cls, schema: FeatureSchema, params: dict) -> "CartTreeModel":
        tree = DecisionTree.from_dict(schema, params["tree"])
        return cls(tree, training_accuracy=params.get("training_accuracy"),
                   hyperparams=params.get("hyperparams"))


def _encode_logistic(schema: FeatureSchema, x: Instance) -> np.ndarray:
    """Numeric features min-max scaled, categoricals one-hot."""
    parts: list[float] = [1.0]  # intercept
    for feat, v in zip(schema.features, x.values):
        if feat.is_numeric:
            width = feat.width
            parts.append((float(v) - feat.domain[0]) / width if width > 0 else 0.0)
        else:
            parts.extend(1.0 if v == c else 0.0 for c in feat.domain)
    return np.array(parts)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class LogisticModel(Model):
    kind = LOGISTIC

    def __init__(self, schema: FeatureSchema, weights: np.ndarray,
                 training_accuracy: Optional[float] = None,
                 hyperparams: Optional[dict] = None):
        self.schema = schema
        self.weights = np.asarray(weights, dtype=float)  # (n_classes, n_encoded)
        self.training_accuracy = training_accuracy
        self.hyperparams = dict(hyperparams or {})

    def predict_proba(self, x: Instance) -> np.ndarray:
        self.schema.check_instance(x)
        z = self.weights @ _encode_logistic(self.schema, x)
        return _softmax(z)

    def predict_encoded(self, X: np.ndarray) -> np.ndarray:
        cols = [np.ones(len(X))]
        for i, feat in enumerate(self.schema.features):
            if feat.is_numeric:
                width = feat.width
                cols.append((X[:, i] - feat.domain[0]) / width if width > 0
                            else np.zeros(len(X)))
            else:
                for code in range(len(feat.domain)):
                    cols.append((X[:, i].astype(int) == code).astype(float))
        Z = np.column_stack(cols)
        return np.argmax(Z @ self.weights.T, axis=1)

    def params_dict(self) -> dict:
        out = {"weights": self.weights.tolist(), "hyperparams": self.hyperparams}
        if self.training_accuracy is not None:
            out["training_accuracy"] = self.training_accuracy
        return out

    @classmethod
    def from_params(cls, schema: FeatureSchema, params: dict) -> "LogisticModel":
        return cls(schema, np.array(params["weights"], dtype=float),
                   training_accuracy=params.get("training_accuracy"),
                   hyperparams=params.get("hyperparams"))

    @classmethod
    def train(cls, data: LabeledDataset, learning_rate: float = 0.5,
              epochs: int = 300, seed: int = 0,
              init_scale: float = 0.0) -> "LogisticModel":
        """Full-batch gradient descent on the softmax cross-entropy.

        init_scale 0 starts from zeros (the convex default); a positive
        scale draws the starting weights from a seeded Gaussian, giving
        models that genuinely differ by their random state.
        """
        schema = data.schema
        Z = np.stack([_encode_logistic(schema, x) for x in data.instances])
        y = data.label_array
        k = schema.n_classes
        onehot = np.zeros((len(y), k))
        onehot[np.arange(len(y)), y] = 1.0
        if init_scale > 0:
            rng = np.random.default_rng(seed)
            W = rng.normal(0.0, init_scale, size=(k, Z.shape[1]))
        else:
            W = np.zeros((k, Z.shape[1]))
        n = len(y)
        for _ in range(epochs):
            p = _softmax(Z @ W.T)
            grad = (p - onehot).T @ Z / n
            W -= learning_rate * grad
            if not np.all(np.isfinite(W)):
                raise XplainError("non-finite loss during logistic training")
        model = cls(schema, W, hyperparams={
            "learning_rate": learning_rate, "epochs": epochs,
            "init_scale": init_scale})
        return model


class ExternalTableModel(Model):
    """Exhaustive lookup from instance values to a probability vector."""

    kind = EXTERNAL_TABLE

    def __init__(self, schema: FeatureSchema, entries: list[tuple[tuple, list[float]]]):
        self.schema = schema
        self._table: dict[tuple, np.ndarray] = {}
        for values, proba in entries:
            p = np.asarray(proba, dtype=float)
            if len(p) != schema.n_classes:
                raise SchemaError("probability vector length does not match class list")
            if abs(p.sum() - 1.0) > 1e-9:
                raise SchemaError("table probabilities must sum to 1")
            self._table[self._key(values)] = p

    def _key(self, values) -> tuple:
        return tuple(round(float(v), 9) if feat.is_numeric else v
                     for feat, v in zip(self.schema.features, values))

    def predict_proba(self, x: Instance) -> np.ndarray:
        self.schema.check_instance(x)
        key = self._key(x.values)
        if key not in self._table:
            raise XplainError(f"instance {key!r} not present in lookup table")
        return self._table[key]

    def params_dict(self) -> dict:
        entries = [{"values": list(k), "proba": p.tolist()}
                   for k, p in sorted(self._table.items(), key=lambda kv: repr(kv[0]))]
        return {"entries": entries}

    @classmethod
    def from_params(cls, schema: FeatureSchema, params: dict) -> "ExternalTableModel":
        return cls(schema, [(tuple(e["values"]), e["proba"]) for e in params["entries"]])


def train_model(data: LabeledDataset, kind: str,
                hyperparams: Optional[dict] = None, seed: int = 0) -> Model:
    """Fit a built-in learner; deterministic given (data, hyperparams, seed)."""
    hyperparams = dict(hyperparams or {})
    if len(data) == 0 or len(data.present_classes()) < 2:
        raise XplainError("single-class or empty data")
    if kind == CART:
        max_depth = int(hyperparams.get("max_depth", 5))
        min_leaf = int(hyperparams.get("min_leaf", 1))
        lam = float(hyperparams.get("lam", 0.0))
        if max_depth < 1 or min_leaf < 1:
            raise XplainError("tree hyperparams require max_depth >= 1 and min_leaf >= 1")
        cfg = SemanticDistanceConfig(lam=lam)
        tree = induce_tree(data, max_depth=max_depth, min_leaf=min_leaf,
                           cfg=cfg, seed=seed)
        model: Model = CartTreeModel(tree, hyperparams={
            "max_depth": max_depth, "min_leaf": min_leaf, "lam": lam, "seed": seed})
    elif kind == LOGISTIC:
        lr = float(hyperparams.get("learning_rate", 0.5))
        epochs = int(hyperparams.get("epochs", 300))
        init_scale = float(hyperparams.get("init_scale", 0.0))
        if lr <= 0 or epochs < 1:
            raise XplainError("logistic hyperparams require learning_rate > 0 and epochs >= 1")
        model = LogisticModel.train(data, learning_rate=lr, epochs=epochs,
                                    seed=seed, init_scale=init_scale)
        model.hyperparams["seed"] = seed
    else:
        raise XplainError(f"unknown trainable model kind {kind!r}")
    correct = sum(1 for x, y in zip(data.instances, data.labels) if model.predict(x) == y)
    model.training_accuracy = correct / len(data)
    return model


_REGISTRY = {
    CART: CartTreeModel,
    LOGISTIC: LogisticModel,
    EXTERNAL_TABLE: ExternalTableModel,
}


def model_from_dict(doc: dict) -> Model:
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise XplainError(f"unsupported model format_version {doc.get('format_version')!r}")
    kind = doc.get("kind")
    if kind not in _REGISTRY:
        raise XplainError(f"unknown model kind {kind!r}")
    schema = FeatureSchema.from_dict(doc["schema"])
    return _REGISTRY[kind].from_params(schema, doc["parameters"])


def model_from_json(text: str) -> Model:
    return model_from_dict(json.loads(text))
