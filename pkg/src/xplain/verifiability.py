"""Scoring how well explanation reasonableness tracks decision correctness.

For each explained instance, plausibility p is the fraction of absolute
attribution mass falling inside the human-knowledge feature mask, and
quality q is the model's probability for the ground-truth class. An
explainer's verifiability is the Spearman rank correlation between the p and
q vectors over a test set; the study repeats this across model seeds and
reports mean and spread per explainer.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import stdtr

from .attribution import AttributionMap
from .dataset import LabeledDataset
from .errors import XplainError
from .models import Model


@dataclass(frozen=True)
class PlausibilityScore:
    value: float
    explainer_id: str
    instance_id: Optional[int] = None
    degenerate: bool = False  # attribution mass was zero


@dataclass(frozen=True)
class QualityScore:
    value: float
    instance_id: Optional[int] = None


def plausibility(e: AttributionMap, mask: frozenset[int] | set[int],
                 instance_id: Optional[int] = None) -> PlausibilityScore:
    """Fraction of absolute attribution mass inside the mask."""
    if not mask:
        raise XplainError("mask empty: plausibility is undefined")
    n = len(e.values)
    bad = [i for i in mask if not 0 <= i < n]
    if bad:
        raise XplainError(f"mask indices {bad} out of range")
    total = sum(abs(v) for v in e.values)
    if total == 0:
        return PlausibilityScore(0.0, e.explainer_id, instance_id, degenerate=True)
    inside = sum(abs(e.values[i]) for i in mask)
    return PlausibilityScore(inside / total, e.explainer_id, instance_id)


def _average_ranks(v: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average position."""
    order = np.argsort(v, kind="mergesort")
    ranks = np.empty(len(v), dtype=float)
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def spearman(p: Sequence[float], q: Sequence[float]) -> float:
    """Rank correlation with average ranks for ties."""
    a = np.asarray(p, dtype=float)
    b = np.asarray(q, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise XplainError("vectors must be one-dimensional and equally long")
    if len(a) < 3:
        raise XplainError("need at least 3 observations")
    ra = _average_ranks(a)
    rb = _average_ranks(b)
    da = ra - ra.mean()
    db = rb - rb.mean()
    var_a = float(da @ da)
    var_b = float(db @ db)
    if var_a == 0 or var_b == 0:
        raise XplainError("constant vector: rank correlation is undefined")
    return float((da @ db) / math.sqrt(var_a * var_b))


GroupInput = Union[Sequence[float], tuple[int, float, float]]


@dataclass(frozen=True)
class AgreementTestResult:
    n_a: int
    mean_a: float
    sd_a: float
    n_b: int
    mean_b: float
    sd_b: float
    t: float
    df: float
    p_value: float  # one-sided, upper tail

    def to_dict(self) -> dict:
        return {
            "group_a": {"n": self.n_a, "mean": self.mean_a, "sd": self.sd_a},
            "group_b": {"n": self.n_b, "mean": self.mean_b, "sd": self.sd_b},
            "t": self.t,
            "df": self.df,
            "p_value": self.p_value,
        }


def _group_stats(group: GroupInput) -> tuple[int, float, float]:
    if isinstance(group, tuple) and len(group) == 3 \
            and isinstance(group[0], (int, np.integer)):
        n, mean, sd = group
        return int(n), float(mean), float(sd)
    v = np.asarray(group, dtype=float)
    if v.ndim != 1:
        raise XplainError("group must be a vector or an (n, mean, sd) summary")
    return len(v), float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else 0.0


def welch_upper_t(group_a: GroupInput, group_b: GroupInput,
                  pooled: bool = False) -> AgreementTestResult:
    """One-sided two-sample t test of mean(a) > mean(b).

    Welch's unequal-variance form by default; set pooled=True for the
    classic equal-variance variant. Accepts raw vectors or (n, mean, sd)
    summaries interchangeably.
    """
    n_a, mean_a, sd_a = _group_stats(group_a)
    n_b, mean_b, sd_b = _group_stats(group_b)
    if n_a < 2 or n_b < 2:
        raise XplainError("each group needs n >= 2")
    if sd_a == 0 and sd_b == 0:
        raise XplainError("zero variance in both groups")

    if pooled:
        sp2 = ((n_a - 1) * sd_a ** 2 + (n_b - 1) * sd_b ** 2) / (n_a + n_b - 2)
        se = math.sqrt(sp2 * (1 / n_a + 1 / n_b))
        df = float(n_a + n_b - 2)
    else:
        va = sd_a ** 2 / n_a
        vb = sd_b ** 2 / n_b
        se = math.sqrt(va + vb)
        df = (va + vb) ** 2 / (va ** 2 / (n_a - 1) + vb ** 2 / (n_b - 1))
    t = (mean_a - mean_b) / se
    p = float(stdtr(df, -t))
    return AgreementTestResult(n_a, mean_a, sd_a, n_b, mean_b, sd_b,
                               t=float(t), df=float(df), p_value=p)


@dataclass(frozen=True)
class GroupHistogram:
    edges: tuple[float, ...]
    counts: tuple[int, ...]
    normalized: tuple[float, ...]


def agreement_analysis(decisions: Sequence[tuple[float, bool]], pooled: bool = False
                       ) -> tuple[AgreementTestResult, dict[str, GroupHistogram]]:
    """Split plausibility ratings by agreement and test agree > disagree.

    Also returns unit-width histograms per group, normalized within each
    group so the two imbalanced groups are visually comparable.
    """
    agree = [r for r, a in decisions if a]
    disagree = [r for r, a in decisions if not a]
    if not agree or not disagree:
        raise XplainError("a group empty: both agree and disagree decisions "
                          "are required")
    if len(agree) < 2 or len(disagree) < 2:
        raise XplainError("each group needs n >= 2")
    result = welch_upper_t(agree, disagree, pooled=pooled)

    all_ratings = agree + disagree
    lo = math.floor(min(all_ratings))
    hi = math.floor(max(all_ratings)) + 1
    edges = tuple(float(v) for v in range(lo, hi + 1))
    hists = {}
    for name, group in (("agree", agree), ("disagree", disagree)):
        counts, _ = np.histogram(group, bins=np.array(edges))
        hists[name] = GroupHistogram(
            edges=edges,
            counts=tuple(int(c) for c in counts),
            normalized=tuple(float(c) / len(group) for c in counts),
        )
    return result, hists


@dataclass(frozen=True)
class ExplainerVerifiability:
    explainer_id: str
    v_per_model: tuple[Optional[float], ...]  # None = undefined for that seed
    mean_v: Optional[float]
    sd_v: Optional[float]

    def to_dict(self) -> dict:
        return {
            "explainer": self.explainer_id,
            "v_per_model": list(self.v_per_model),
            "mean_v": self.mean_v,
            "sd_v": self.sd_v,
        }


@dataclass(frozen=True)
class VerifiabilityReport:
    entries: tuple[ExplainerVerifiability, ...]  # ranked by mean_v descending
    n_instances: int
    n_models: int

    def to_dict(self) -> dict:
        return {
            "entries": [e.to_dict() for e in self.entries],
            "n_instances": self.n_instances,
            "n_models": self.n_models,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["explainer", "mean_v", "sd_v"])
        for e in self.entries:
            writer.writerow([
                e.explainer_id,
                "" if e.mean_v is None else repr(e.mean_v),
                "" if e.sd_v is None else repr(e.sd_v),
            ])
        return buf.getvalue()


def verifiability_study(models: Sequence[Model], data: LabeledDataset,
                        explainers: Sequence, seed: int = 0) -> VerifiabilityReport:
    """Correlate plausibility with decision quality per (model, explainer).

    Instances without a ground-truth mask are skipped; a pair whose p or q
    vector is constant gets an undefined correlation and is excluded from
    the aggregate with a warning. Explainers are anything exposing
    `id` and `explain(model, x, target_class=None, seed=0)`.
    """
    if not models:
        raise XplainError("at least one model is required")
    if data.masks is None:
        raise XplainError("dataset carries no ground-truth masks")
    eval_idx = [i for i, m in enumerate(data.masks) if m]
    if len(eval_idx) < 3:
        raise XplainError("need at least 3 masked instances")

    entries = []
    for explainer in explainers:
        vs: list[Optional[float]] = []
        for model in models:
            p_vec, q_vec = [], []
            for i in eval_idx:
                x = data.instances[i]
                truth = data.labels[i]
                e = explainer.explain(model, x, seed=seed)
                p_vec.append(plausibility(e, data.masks[i], instance_id=i).value)
                q_vec.append(float(model.predict_proba(x)[truth]))
            try:
                vs.append(spearman(p_vec, q_vec))
            except XplainError:
                warnings.warn(
                    f"verifiability undefined for explainer {explainer.id!r} "
                    f"(constant p or q vector); excluded from the aggregate",
                    stacklevel=2)
                vs.append(None)
        defined = [v for v in vs if v is not None]
        mean_v = float(np.mean(defined)) if defined else None
        sd_v = float(np.std(defined, ddof=1)) if len(defined) >= 2 else None
        entries.append(ExplainerVerifiability(
            explainer_id=explainer.id, v_per_model=tuple(vs),
            mean_v=mean_v, sd_v=sd_v))

    entries.sort(key=lambda e: (-(e.mean_v if e.mean_v is not None else -math.inf),
                                e.explainer_id))
    return VerifiabilityReport(entries=tuple(entries),
                               n_instances=len(eval_idx), n_models=len(models))
