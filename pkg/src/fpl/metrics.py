"""
Top-N evaluation: precision, recall, F1, item coverage, Gini diversity and the
paired t-test used to compare per-user metric vectors.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import betainc

from fpl.errors import UndefinedMetricError


@dataclass(frozen=True)
class EvaluationReport:
    cutoff: int
    precision: float
    recall: float
    f1: float
    item_coverage: float
    gini: float
    per_user_precision: np.ndarray = field(repr=False)
    per_user_recall: np.ndarray = field(repr=False)
    users: np.ndarray = field(repr=False)

    @property
    def per_user_f1(self) -> np.ndarray:
        p, r = self.per_user_precision, self.per_user_recall
        denom = p + r
        return np.divide(2 * p * r, denom, out=np.zeros_like(p), where=denom > 0)

    def metrics(self) -> dict:
        return {
            "P": self.precision,
            "R": self.recall,
            "F1": self.f1,
            "IC": self.item_coverage,
            "G": self.gini,
        }

    def per_user(self, metric: str) -> np.ndarray:
        return {"P": self.per_user_precision, "R": self.per_user_recall, "F1": self.per_user_f1}[metric]


def precision_recall_at_n(
    recommendations: Sequence[Sequence[int]], test_positives: Sequence[frozenset], n: int
) -> tuple[float, float, np.ndarray, np.ndarray, np.ndarray]:
    """Mean P@n and R@n over users with a non-empty test set.

    Precision divides by ``n`` even when a list is shorter. Returns
    ``(P, R, per_user_precision, per_user_recall, included_users)``.
    """
    if len(recommendations) != len(test_positives):
        raise ValueError("recommendations and test_positives must cover the same users")
    users, prec, rec = [], [], []
    for u, (recs, truth) in enumerate(zip(recommendations, test_positives)):
        if not truth:
            continue
        hits = sum(1 for i in recs[:n] if i in truth)
        users.append(u)
        prec.append(hits / n)
        rec.append(hits / len(truth))
    prec = np.array(prec, dtype=np.float64)
    rec = np.array(rec, dtype=np.float64)
    if len(users) == 0:
        return 0.0, 0.0, prec, rec, np.array(users, dtype=np.int64)
    # fsum is correctly rounded, so the mean does not depend on user order
    k = len(users)
    return math.fsum(prec) / k, math.fsum(rec) / k, prec, rec, np.array(users, dtype=np.int64)


def f1_at_n(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def item_coverage_at_n(recommendations: Sequence[Sequence[int]], catalog_size: int) -> float:
    distinct = {i for recs in recommendations for i in recs}
    return len(distinct) / catalog_size


def exposure(recommendations: Sequence[Sequence[int]], catalog_size: int) -> np.ndarray:
    counts = np.zeros(catalog_size, dtype=np.float64)
    for recs in recommendations:
        np.add.at(counts, np.asarray(recs, dtype=np.int64), 1.0)
    return counts


def gini_index(values: np.ndarray) -> float:
    """Classical Gini inequality of a nonnegative distribution (0 = uniform)."""
    n = len(values)
    if n < 2:
        raise UndefinedMetricError("Gini needs at least 2 items")
    total = values.sum()
    if total <= 0:
        raise UndefinedMetricError("Gini of an all-zero exposure distribution is undefined")
    p = np.sort(values) / total
    k = np.arange(1, n + 1)
    return float(np.sum((2 * k - n - 1) * p) / (n - 1))


def gini_at_n(
    recommendations: Sequence[Sequence[int]], catalog_size: int, full_catalog: bool = True
) -> float:
    """``1 - Gini`` of item exposure across all lists: 1 for uniform exposure, 0 when
    a single item takes it all.

    With ``full_catalog=False`` only items recommended at least once form the
    population.
    """
    if catalog_size < 2:
        raise UndefinedMetricError(f"Gini undefined for catalog of size {catalog_size}")
    counts = exposure(recommendations, catalog_size)
    if counts.sum() == 0:
        return 0.0
    if not full_catalog:
        counts = counts[counts > 0]
        if len(counts) < 2:
            return 0.0
    return 1.0 - gini_index(counts)


def evaluate(
    recommendations: Sequence[Sequence[int]],
    test_positives: Sequence[frozenset],
    catalog_size: int,
    cutoff: int,
    full_catalog_gini: bool = True,
) -> EvaluationReport:
    recs = [list(r)[:cutoff] for r in recommendations]
    p, r, pu_p, pu_r, users = precision_recall_at_n(recs, test_positives, cutoff)
    return EvaluationReport(
        cutoff=cutoff,
        precision=p,
        recall=r,
        f1=f1_at_n(p, r),
        item_coverage=item_coverage_at_n(recs, catalog_size),
        gini=gini_at_n(recs, catalog_size, full_catalog_gini),
        per_user_precision=pu_p,
        per_user_recall=pu_r,
        users=users,
    )


class TTestResult(NamedTuple):
    t: float
    p: float
    degenerate: bool = False


def student_t_sf2(t: float, df: float) -> float:
    """Two-sided tail probability ``P(|T| >= |t|)`` for Student's t with ``df`` dof."""
    if math.isinf(t):
        return 0.0
    x = df / (df + t * t)
    return float(betainc(df / 2.0, 0.5, x))


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Two-sided paired Student t-test on ``a - b`` (sample std, ``n - 1`` dof)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be 1-D and of equal length")
    n = len(a)
    if n < 2:
        raise ValueError("paired t-test needs at least 2 pairs")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, 1.0, False)
        return TTestResult(math.copysign(math.inf, mean), 0.0, True)
    t = mean / (sd / math.sqrt(n))
    return TTestResult(t, student_t_sf2(t, n - 1), False)


REPORT_HEADER = ("model", "dataset", "cutoff", "metric", "value")
SIGNIFICANCE_HEADER = ("cutoff", "metric", "model_a", "model_b", "t", "p", "degenerate")


def write_report(path: str | os.PathLike, rows: Sequence[tuple]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for model, dataset, cutoff, metric, value in rows:
            w.writerow((model, dataset, cutoff, metric, repr(float(value))))


def write_significance(path: str | os.PathLike, rows: Sequence[tuple]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(SIGNIFICANCE_HEADER)
        for cutoff, metric, a, b, res in rows:
            w.writerow((cutoff, metric, a, b, repr(float(res.t)), repr(float(res.p)), int(res.degenerate)))
