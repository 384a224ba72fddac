"""Decision-tree induction and collapsible views.

Induction is greedy top-down CART with entropy gain. An optional regularizer
penalizes splits whose children are not semantically tighter than they are
separated: score = gain - lam * max(0, intra_child_dist - inter_child_dist).
With lam = 0 the builder is plain CART, bit for bit.

A collapsed view is an immutable set of expanded node ids; the deepest
visible nodes (the frontier) are rendered either as true leaves or as
superleafs summarizing their whole subtree as a prediction cluster.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .dataset import LabeledDataset
from .distance import GOWER, NORM_L1, DistanceMetric
from .errors import LeafToggleError, SchemaError, XplainError
from .schema import FeatureSchema, Instance

TREE_FORMAT_VERSION = 1

# Exact ties in the ordering check are not violations.
ORDERING_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: Optional[float] = None          # numeric: left iff value <= threshold
    categories: Optional[tuple[str, ...]] = None  # categorical: left iff value in set

    def goes_left(self, x: Instance) -> bool:
        v = x.values[self.feature]
        if self.threshold is not None:
            return float(v) <= self.threshold
        return v in self.categories


@dataclass(frozen=True)
class TreeNode:
    id: int
    depth: int
    split: Optional[Split]
    children: tuple[int, ...]
    support: tuple[int, ...]
    histogram: tuple[int, ...]
    n_support: int

    @property
    def is_leaf(self) -> bool:
        return self.split is None


@dataclass(frozen=True)
class DecisionTree:
    schema: FeatureSchema
    nodes: tuple[TreeNode, ...]
    root: int = 0

    def node(self, node_id: int) -> TreeNode:
        if not 0 <= node_id < len(self.nodes):
            raise XplainError(f"unknown node id {node_id}")
        return self.nodes[node_id]

    def route(self, x: Instance) -> TreeNode:
        node = self.nodes[self.root]
        while not node.is_leaf:
            node = self.nodes[node.children[0] if node.split.goes_left(x)
                              else node.children[1]]
        return node

    def predict(self, x: Instance) -> int:
        hist = self.route(x).histogram
        return int(np.argmax(hist))

    def subtree_ids(self, node_id: int) -> list[int]:
        out, stack = [], [node_id]
        while stack:
            nid = stack.pop()
            out.append(nid)
            stack.extend(reversed(self.nodes[nid].children))
        return out

    def leaf_count(self, node_id: int) -> int:
        return sum(1 for nid in self.subtree_ids(node_id) if self.nodes[nid].is_leaf)

    def max_depth(self) -> int:
        return max(n.depth for n in self.nodes)

    def parents(self) -> dict[int, int]:
        out = {}
        for n in self.nodes:
            for c in n.children:
                out[c] = n.id
        return out

    def to_dict(self) -> dict:
        nodes = []
        for n in self.nodes:
            doc: dict = {
                "id": n.id,
                "depth": n.depth,
                "children": list(n.children),
                "histogram": list(n.histogram),
                "n_support": n.n_support,
            }
            if n.split is not None:
                s: dict = {"feature": n.split.feature}
                if n.split.threshold is not None:
                    s["threshold"] = n.split.threshold
                else:
                    s["categories"] = list(n.split.categories)
                doc["split"] = s
            nodes.append(doc)
        return {"format_version": TREE_FORMAT_VERSION, "root": self.root, "nodes": nodes}

    @classmethod
    def from_dict(cls, schema: FeatureSchema, doc: dict) -> "DecisionTree":
        if doc.get("format_version") != TREE_FORMAT_VERSION:
            raise XplainError(f"unsupported tree format_version {doc.get('format_version')!r}")
        nodes = []
        for nd in sorted(doc["nodes"], key=lambda d: d["id"]):
            split = None
            if "split" in nd and nd["split"] is not None:
                s = nd["split"]
                if "threshold" in s:
                    split = Split(feature=s["feature"], threshold=float(s["threshold"]))
                else:
                    split = Split(feature=s["feature"], categories=tuple(s["categories"]))
            nodes.append(TreeNode(
                id=nd["id"], depth=nd["depth"], split=split,
                children=tuple(nd["children"]), support=(),
                histogram=tuple(nd["histogram"]), n_support=nd["n_support"],
            ))
        return cls(schema=schema, nodes=tuple(nodes), root=doc["root"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class SemanticDistanceConfig:
    metric: DistanceMetric = DistanceMetric(GOWER)
    space: str = "xy"        # "x", "y", or "xy"
    linkage: str = "average"  # "average", "min", or "max"
    lam: float = 0.0

    def __post_init__(self) -> None:
        if self.space not in ("x", "y", "xy"):
            raise SchemaError(f"unknown semantic space {self.space!r}")
        if self.linkage not in ("average", "min", "max"):
            raise SchemaError(f"unknown linkage {self.linkage!r}")
        if not np.isfinite(self.lam) or self.lam < 0:
            raise SchemaError("regularizer weight must be finite and >= 0")


def semantic_matrix(data: LabeledDataset, cfg: SemanticDistanceConfig) -> np.ndarray:
    """Pairwise instance distances in the configured semantic space.

    In the "xy" space the label joins the features as one extra categorical
    dimension weighted by the mean feature weight.
    """
    y = data.label_array
    dy = (y[:, None] != y[None, :]).astype(float)
    if cfg.space == "y":
        return dy
    base = cfg.metric.pairwise(data.schema, data.matrix)
    if cfg.space == "x":
        return base
    w = cfg.metric._weights(data.schema.n_features)
    w_label = float(w.mean()) if len(w) else 1.0
    if cfg.metric.kind == GOWER:
        total = w.sum()
        return (base * total + w_label * dy) / (total + w_label)
    if cfg.metric.kind == NORM_L1:
        return base + w_label * dy
    return np.sqrt(base * base + w_label * dy)


def _entropy_rows(counts: np.ndarray) -> np.ndarray:
    totals = counts.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(totals > 0, counts / np.maximum(totals, 1), 0.0)
        logp = np.where(p > 0, np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -(p * logp).sum(axis=-1)


def _set_linkage(D: np.ndarray, a: np.ndarray, b: np.ndarray, linkage: str) -> float:
    sub = D[np.ix_(a, b)]
    if linkage == "average":
        return float(sub.mean())
    return float(sub.min()) if linkage == "min" else float(sub.max())


def _intra_linkage(D: np.ndarray, a: np.ndarray, linkage: str) -> float:
    if len(a) < 2:
        return 0.0  # a singleton set is maximally tight
    sub = D[np.ix_(a, a)]
    iu = np.triu_indices(len(a), k=1)
    vals = sub[iu]
    if linkage == "average":
        return float(vals.mean())
    return float(vals.min()) if linkage == "min" else float(vals.max())


def _cohesion_penalty(D: np.ndarray, left: np.ndarray, right: np.ndarray,
                      linkage: str) -> float:
    intra = 0.5 * (_intra_linkage(D, left, linkage) + _intra_linkage(D, right, linkage))
    inter = _set_linkage(D, left, right, linkage)
    return max(0.0, intra - inter)


class _RawNode:
    __slots__ = ("split", "children", "support", "hist")

    def __init__(self, split, children, support, hist):
        self.split = split
        self.children = children
        self.support = support
        self.hist = hist


class _Builder:
    def __init__(self, data: LabeledDataset, max_depth: int, min_leaf: int,
                 cfg: SemanticDistanceConfig):
        self.schema = data.schema
        self.X = data.matrix
        self.y = data.label_array
        self.k = data.schema.n_classes
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.cfg = cfg
        self.D = semantic_matrix(data, cfg) if cfg.lam > 0 else None

    def build(self, support: np.ndarray, depth: int) -> _RawNode:
        hist = np.bincount(self.y[support], minlength=self.k)
        best = None
        if depth < self.max_depth and len(support) >= 2 * self.min_leaf \
                and np.count_nonzero(hist) > 1:
            best = self._best_split(support)
        if best is None:
            return _RawNode(None, [], support, hist)
        split, left, right = best
        return _RawNode(split, [self.build(left, depth + 1),
                                self.build(right, depth + 1)], support, hist)

    def prune(self, node: _RawNode) -> None:
        """Collapse subtrees whose leaves do not improve on the node itself.

        Zero-gain splits are allowed during growth (they may enable useful
        splits below, as in XOR-like data); this bottom-up pass removes the
        ones that never paid off, minimizing the leaf count."""
        if not node.children:
            return
        for child in node.children:
            self.prune(child)
        own = len(node.support) * _entropy_rows(node.hist.astype(float)[None, :])[0]
        leaves = self._leaf_entropy_sum(node)
        if own - leaves <= 1e-9:
            node.split = None
            node.children = []

    def _leaf_entropy_sum(self, node: _RawNode) -> float:
        if not node.children:
            return len(node.support) * _entropy_rows(node.hist.astype(float)[None, :])[0]
        return sum(self._leaf_entropy_sum(c) for c in node.children)

    def _best_split(self, support: np.ndarray):
        # Zero-gain candidates are admissible; meaningfully negative scores
        # (a regularizer penalty outweighing the gain) are not.
        best_score = -1e-12
        best = None
        for f, feat in enumerate(self.schema.features):
            if feat.is_numeric:
                cand = self._numeric_candidates(support, f)
            else:
                cand = self._categorical_candidates(support, f, feat)
            for score, split, left, right in cand:
                if score > best_score:
                    best_score = score
                    best = (split, left, right)
        return best

    def _numeric_candidates(self, support: np.ndarray, f: int):
        vals = self.X[support, f]
        order = np.argsort(vals, kind="stable")
        s_sorted = support[order]
        v_sorted = vals[order]
        m = len(support)

        positions = np.arange(self.min_leaf, m - self.min_leaf + 1)
        if len(positions) == 0:
            return []
        distinct = v_sorted[positions - 1] < v_sorted[positions]
        positions = positions[distinct]
        if len(positions) == 0:
            return []

        onehot = np.zeros((m, self.k))
        onehot[np.arange(m), self.y[s_sorted]] = 1.0
        prefix = np.vstack([np.zeros(self.k), np.cumsum(onehot, axis=0)])
        total = prefix[m]
        h_parent = _entropy_rows(total[None, :])[0]
        counts_l = prefix[positions]
        counts_r = total[None, :] - counts_l
        n_l = positions.astype(float)
        n_r = m - n_l
        gains = h_parent - (n_l * _entropy_rows(counts_l)
                            + n_r * _entropy_rows(counts_r)) / m

        if self.cfg.lam > 0:
            penalties = self._numeric_penalties(s_sorted, positions)
            scores = gains - self.cfg.lam * penalties
        else:
            scores = gains

        out = []
        for pos, score in zip(positions, scores):
            threshold = float((v_sorted[pos - 1] + v_sorted[pos]) / 2.0)
            left = s_sorted[:pos]
            right = s_sorted[pos:]
            out.append((float(score), Split(feature=f, threshold=threshold), left, right))
        return out

    def _numeric_penalties(self, s_sorted: np.ndarray, positions: np.ndarray) -> np.ndarray:
        if self.cfg.linkage != "average":
            return np.array([
                _cohesion_penalty(self.D, s_sorted[:pos], s_sorted[pos:], self.cfg.linkage)
                for pos in positions
            ])
        # Average linkage admits O(m^2) prefix sums over the sorted submatrix.
        sub = self.D[np.ix_(s_sorted, s_sorted)]
        m = len(s_sorted)
        row_lower = np.tril(sub, -1).sum(axis=1)
        row_upper = np.triu(sub, 1).sum(axis=1)
        sum_left = np.concatenate([[0.0], np.cumsum(row_lower)])   # pairs within first i
        sum_right = np.concatenate([np.cumsum(row_upper[::-1])[::-1], [0.0]])
        total = sum_left[m]
        n_l = positions.astype(float)
        n_r = m - n_l
        pairs_l = n_l * (n_l - 1) / 2.0
        pairs_r = n_r * (n_r - 1) / 2.0
        s_l = sum_left[positions]
        s_r = sum_right[positions]
        intra_l = np.divide(s_l, pairs_l, out=np.zeros_like(s_l), where=pairs_l > 0)
        intra_r = np.divide(s_r, pairs_r, out=np.zeros_like(s_r), where=pairs_r > 0)
        inter = (total - s_l - s_r) / (n_l * n_r)
        return np.maximum(0.0, 0.5 * (intra_l + intra_r) - inter)

    def _categorical_candidates(self, support: np.ndarray, f: int, feat):
        vals = self.X[support, f]
        hist_all = np.bincount(self.y[support], minlength=self.k).astype(float)
        h_parent = _entropy_rows(hist_all[None, :])[0]
        m = len(support)
        out = []
        for code, category in enumerate(feat.domain):
            mask = vals == code
            n_l = int(mask.sum())
            if n_l < self.min_leaf or m - n_l < self.min_leaf:
                continue
            left = support[mask]
            right = support[~mask]
            counts_l = np.bincount(self.y[left], minlength=self.k).astype(float)
            counts_r = hist_all - counts_l
            gain = h_parent - (n_l * _entropy_rows(counts_l[None, :])[0]
                               + (m - n_l) * _entropy_rows(counts_r[None, :])[0]) / m
            score = gain
            if self.cfg.lam > 0:
                score -= self.cfg.lam * _cohesion_penalty(self.D, left, right,
                                                          self.cfg.linkage)
            out.append((float(score), Split(feature=f, categories=(category,)), left, right))
        return out


def induce_tree(data: LabeledDataset, max_depth: int, min_leaf: int = 1,
                cfg: Optional[SemanticDistanceConfig] = None,
                seed: int = 0) -> DecisionTree:
    """Greedy top-down induction; deterministic for fixed inputs.

    Single-class data yields a root-leaf tree. The seed is accepted for
    interface parity; the builder itself is deterministic.
    """
    del seed
    if len(data) == 0:
        raise XplainError("cannot induce a tree from an empty dataset")
    if max_depth < 1:
        raise XplainError("max_depth must be >= 1")
    if min_leaf < 1:
        raise XplainError("min_leaf must be >= 1")
    cfg = cfg or SemanticDistanceConfig()
    builder = _Builder(data, max_depth, min_leaf, cfg)
    root = builder.build(np.arange(len(data)), 0)
    builder.prune(root)

    nodes: list[TreeNode] = []

    def flatten(raw: _RawNode, depth: int) -> int:
        nid = len(nodes)
        nodes.append(None)  # type: ignore[arg-type]
        child_ids = tuple(flatten(c, depth + 1) for c in raw.children)
        nodes[nid] = TreeNode(
            id=nid, depth=depth, split=raw.split, children=child_ids,
            support=tuple(int(i) for i in raw.support),
            histogram=tuple(int(c) for c in raw.hist),
            n_support=len(raw.support))
        return nid

    flatten(root, 0)
    return DecisionTree(schema=data.schema, nodes=tuple(nodes))


DEFAULT_LAMBDA_SWEEP = (0.0, 0.25, 0.5, 1.0)


def sweep_lambda(data: LabeledDataset, max_depth: int, min_leaf: int = 1,
                 candidates: tuple[float, ...] = DEFAULT_LAMBDA_SWEEP,
                 cfg: Optional[SemanticDistanceConfig] = None,
                 seed: int = 0,
                 accuracy_margin: float = 0.01) -> tuple[float, DecisionTree]:
    """Pick the regularizer weight with the cleanest ancestry ordering.

    Candidates that cost more than `accuracy_margin` of training accuracy
    against the unregularized tree are dropped, so the result never trades
    real fit for ordering compliance; 0.0 is always a candidate.
    """
    from dataclasses import replace as _replace

    base_cfg = cfg or SemanticDistanceConfig()
    cands = tuple(sorted(set(candidates) | {0.0}))
    scored = []
    for lam in cands:
        lam_cfg = _replace(base_cfg, lam=lam)
        tree = induce_tree(data, max_depth=max_depth, min_leaf=min_leaf,
                           cfg=lam_cfg, seed=seed)
        correct = sum(1 for x, y in zip(data.instances, data.labels)
                      if tree.predict(x) == y)
        acc = correct / len(data)
        frac = check_semantic_ordering(tree, data, base_cfg).fraction
        scored.append((lam, tree, acc, frac))
    base_acc = next(s[2] for s in scored if s[0] == 0.0)
    base_frac = next(s[3] for s in scored if s[0] == 0.0)
    eligible = [s for s in scored
                if s[2] >= base_acc - accuracy_margin and s[3] <= base_frac + 1e-12]
    lam, tree, _, _ = min(eligible, key=lambda s: (s[3], s[0]))
    return lam, tree


# -- semantic ordering check ----------------------------------------------


@dataclass(frozen=True)
class OrderingReport:
    total_triples: int
    violations: int
    fraction: float
    examples: tuple[tuple[int, int, int], ...]  # first few violating (i, j, k)


def check_semantic_ordering(tree: DecisionTree, data: LabeledDataset,
                            cfg: Optional[SemanticDistanceConfig] = None,
                            tolerance: float = ORDERING_TOLERANCE,
                            max_examples: int = 10) -> OrderingReport:
    """Brute-force audit of ancestry-vs-distance consistency over node triples.

    For every ordered triple (i, j, k) of distinct nodes where i and j meet
    at a nearer common ancestor than i and k do (fewer connecting branches),
    nodes i and j should also be semantically closer. Counts the triples
    where they are not.
    """
    cfg = cfg or SemanticDistanceConfig()
    n = len(tree.nodes)
    if n < 3:
        return OrderingReport(0, 0, 0.0, ())
    if any(len(nd.support) == 0 for nd in tree.nodes):
        raise XplainError("semantic ordering needs supporting instances "
                          "(deserialized trees do not carry them)")

    D = semantic_matrix(data, cfg)
    supports = [np.array(nd.support) for nd in tree.nodes]
    ND = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            ND[i, j] = ND[j, i] = _set_linkage(D, supports[i], supports[j], cfg.linkage)

    parents = tree.parents()
    depth = np.array([nd.depth for nd in tree.nodes])

    def ancestors(nid: int) -> list[int]:
        out = [nid]
        while nid in parents:
            nid = parents[nid]
            out.append(nid)
        return out

    anc = [ancestors(i) for i in range(n)]
    R = np.zeros((n, n), dtype=int)
    related = np.zeros((n, n), dtype=bool)  # one node is the other's ancestor
    for i in range(n):
        set_i = set(anc[i])
        for j in range(i + 1, n):
            lca = next(a for a in anc[j] if a in set_i)
            R[i, j] = R[j, i] = depth[i] + depth[j] - 2 * depth[lca]
            if lca == i or lca == j:
                related[i, j] = related[j, i] = True

    total = 0
    violations = 0
    examples: list[tuple[int, int, int]] = []
    others = np.arange(n)
    for i in range(n):
        # only compare partners that meet i at a proper common ancestor
        js = others[(others != i) & ~related[i]]
        if len(js) < 2:
            continue
        r_i = R[i, js]
        d_i = ND[i, js]
        closer = r_i[:, None] < r_i[None, :]
        total += int(closer.sum())
        bad = closer & (d_i[:, None] >= d_i[None, :] + tolerance)
        violations += int(bad.sum())
        if len(examples) < max_examples and bad.any():
            for a, b in zip(*np.nonzero(bad)):
                examples.append((i, int(js[a]), int(js[b])))
                if len(examples) >= max_examples:
                    break
    fraction = violations / total if total else 0.0
    return OrderingReport(total, violations, fraction, tuple(examples))


# -- collapsed views -------------------------------------------------------


@dataclass(frozen=True)
class SuperleafSummary:
    node_id: int
    cluster: tuple[tuple[str, int], ...]  # (class, count) by descending count
    label: str                            # e.g. "A|B"
    majority_class: str
    purity: float
    subtree_leaves: int
    subtree_depth: int

    def to_dict(self) -> dict:
        return {
            "node_id": self.node_id,
            "cluster": [{"class": c, "count": n} for c, n in self.cluster],
            "label": self.label,
            "majority_class": self.majority_class,
            "purity": self.purity,
            "subtree_leaves": self.subtree_leaves,
            "subtree_depth": self.subtree_depth,
        }


@dataclass(frozen=True)
class CollapsedView:
    tree_id: str
    expanded: frozenset[int]
    revision: int = 0

    def to_dict(self) -> dict:
        return {"tree_id": self.tree_id, "expanded": sorted(self.expanded),
                "revision": self.revision}

    @classmethod
    def from_dict(cls, doc: dict) -> "CollapsedView":
        return cls(tree_id=doc["tree_id"], expanded=frozenset(doc["expanded"]),
                   revision=int(doc.get("revision", 0)))


def superleaf_summary(tree: DecisionTree, node_id: int) -> SuperleafSummary:
    node = tree.node(node_id)
    hist = node.histogram
    present = [(tree.schema.classes[c], int(cnt)) for c, cnt in enumerate(hist) if cnt > 0]
    present.sort(key=lambda it: (-it[1], tree.schema.classes.index(it[0])))
    total = sum(cnt for _, cnt in present)
    majority = present[0][0] if present else tree.schema.classes[0]
    purity = present[0][1] / total if total else 0.0
    sub = tree.subtree_ids(node_id)
    return SuperleafSummary(
        node_id=node_id,
        cluster=tuple(present),
        label="|".join(c for c, _ in present),
        majority_class=majority,
        purity=purity,
        subtree_leaves=tree.leaf_count(node_id),
        subtree_depth=max(tree.nodes[i].depth for i in sub) - node.depth,
    )


def frontier(tree: DecisionTree, view: CollapsedView) -> tuple[int, ...]:
    out: list[int] = []
    stack = [tree.root]
    while stack:
        nid = stack.pop()
        if nid in view.expanded:
            stack.extend(reversed(tree.nodes[nid].children))
        else:
            out.append(nid)
    return tuple(out)


def validate_view(tree: DecisionTree, view: CollapsedView) -> None:
    parents = tree.parents()
    for nid in view.expanded:
        node = tree.node(nid)
        if node.is_leaf:
            raise XplainError(f"leaf node {nid} cannot be expanded")
        if nid != tree.root and parents[nid] not in view.expanded:
            raise XplainError(f"expanded set is not ancestor-closed at node {nid}")


def collapse_to_depth(tree: DecisionTree, depth: int,
                      tree_id: str = "tree") -> CollapsedView:
    """Default view: everything above `depth` expanded, frontier at `depth`."""
    if depth < 0:
        raise XplainError("depth must be >= 0")
    expanded = frozenset(n.id for n in tree.nodes if not n.is_leaf and n.depth < depth)
    return CollapsedView(tree_id=tree_id, expanded=expanded, revision=0)


def toggle_node(tree: DecisionTree, view: CollapsedView, node_id: int) -> CollapsedView:
    node = tree.node(node_id)
    if node.is_leaf:
        raise LeafToggleError("leaf has no subtree")
    if node_id in view.expanded:
        removed = set(tree.subtree_ids(node_id))
        expanded = frozenset(view.expanded - removed)
    else:
        if node_id not in frontier(tree, view):
            raise XplainError(f"node {node_id} is not on the visible frontier")
        expanded = frozenset(view.expanded | {node_id})
    return replace(view, expanded=expanded, revision=view.revision + 1)


def prediction_range(tree: DecisionTree, view: CollapsedView,
                     x: Instance) -> tuple[int, tuple[tuple[str, int], ...]]:
    """Route an instance to its visible frontier node and report the node's
    prediction cluster (class, count) pairs."""
    tree.schema.check_instance(x)
    node = tree.nodes[tree.root]
    while node.id in view.expanded:
        node = tree.nodes[node.children[0] if node.split.goes_left(x)
                          else node.children[1]]
    cluster = tuple((tree.schema.classes[c], int(cnt))
                    for c, cnt in enumerate(node.histogram) if cnt > 0)
    return node.id, cluster
