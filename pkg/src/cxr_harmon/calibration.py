"""ROC/AUC, informedness operating points and piecewise-linear score calibration."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import DomainError, LengthMismatch, SingleClass
from .taxonomy import Pathology

log = logging.getLogger(__name__)

OPT_EPS = 1e-6


@dataclass(frozen=True, eq=False)
class ScoredSet:
    """Scores in [0, 1] with binary labels. Rows with unknown labels must be removed first."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        y = np.asarray(self.labels, dtype=np.float64).reshape(-1)
        if s.shape != y.shape:
            raise LengthMismatch(f"{s.size} scores but {y.size} labels")
        if np.isnan(s).any() or (s < 0).any() or (s > 1).any():
            raise DomainError("scores must lie in [0, 1]")
        if not np.isin(y, (0.0, 1.0)).all():
            raise DomainError("labels must be 0 or 1")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "labels", y.astype(np.int8))

    @classmethod
    def from_labels(cls, scores, labels) -> "ScoredSet":
        """Build a set after dropping rows whose label is NaN."""
        y = np.asarray(labels, dtype=np.float64)
        keep = ~np.isnan(y)
        return cls(np.asarray(scores, dtype=np.float64)[keep], y[keep])

    def _counts(self) -> tuple[int, int]:
        p = int(self.labels.sum())
        n = self.labels.size - p
        if p == 0 or n == 0:
            raise SingleClass(f"need both classes, got {p} positives and {n} negatives")
        return p, n


@dataclass(frozen=True, eq=False)
class RocCurve:
    thresholds: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray

    def area(self) -> float:
        """Trapezoidal area under the curve."""
        return float(np.sum(np.diff(self.fpr) * (self.tpr[1:] + self.tpr[:-1]) / 2.0))


def _counts_at(ss: ScoredSet):
    """Descending distinct thresholds with integer TP and FP counts of ``score >= t``."""
    thresholds = np.unique(ss.scores)[::-1]
    order = np.argsort(-ss.scores, kind="stable")
    s_sorted = ss.scores[order]
    y_sorted = ss.labels[order].astype(np.int64)
    tp_cum = np.cumsum(y_sorted)
    fp_cum = np.cumsum(1 - y_sorted)
    last = np.searchsorted(-s_sorted, -thresholds, side="right") - 1
    return thresholds, tp_cum[last], fp_cum[last]


def _rates(ss: ScoredSet):
    p, n = ss._counts()
    thresholds, tp, fp = _counts_at(ss)
    return thresholds, tp / p, fp / n


def roc(ss: ScoredSet) -> RocCurve:
    """ROC points at every distinct score, with (0, 0) and (1, 1) sentinels at +inf and -inf."""
    t, tpr, fpr = _rates(ss)
    return RocCurve(
        thresholds=np.concatenate([[np.inf], t, [-np.inf]]),
        tpr=np.concatenate([[0.0], tpr, [1.0]]),
        fpr=np.concatenate([[0.0], fpr, [1.0]]),
    )


def auc(ss: ScoredSet) -> float:
    """Rank-statistic AUC; tied positive/negative pairs count one half."""
    p, n = ss._counts()
    _, inverse, counts = np.unique(ss.scores, return_inverse=True, return_counts=True)
    # average 1-based rank of each tie group
    ends = np.cumsum(counts)
    avg_rank = ends - (counts - 1) / 2.0
    rank_sum = avg_rank[inverse][ss.labels == 1].sum()
    return float((rank_sum - p * (p + 1) / 2.0) / (p * n))


def op_point(ss: ScoredSet) -> float:
    """The score threshold maximizing TPR - FPR, largest threshold on ties.

    The result is clamped to ``[1e-6, 1 - 1e-6]`` so it can pivot :func:`apply_opt`.
    """
    p, n = ss._counts()
    t, tp, fp = _counts_at(ss)
    # TPR - FPR scaled by p * n, compared exactly in integers
    j = tp * n - fp * p
    best = int(np.flatnonzero(j == j.max())[0])  # thresholds are descending
    opt = float(t[best])
    clamped = min(max(opt, OPT_EPS), 1.0 - OPT_EPS)
    if clamped != opt:
        log.warning("operating point %r clamped to %r", opt, clamped)
    return clamped


def apply_opt(x, opt: float):
    """Piecewise-linear map sending ``opt`` to 0.5 and fixing 0 and 1.

    ``x / (2 opt)`` below the operating point, ``1 - (1 - x) / (2 (1 - opt))`` above.
    Accepts scalars or arrays.
    """
    if not 0.0 < opt < 1.0:
        raise DomainError(f"opt must lie strictly inside (0, 1), got {opt}")
    arr = np.asarray(x, dtype=np.float64)
    if np.isnan(arr).any() or (arr < 0).any() or (arr > 1).any():
        raise DomainError("x must lie in [0, 1]")
    out = np.where(arr <= opt, arr / (2.0 * opt), 1.0 - (1.0 - arr) / (2.0 * (1.0 - opt)))
    return float(out) if out.ndim == 0 else out


def calibrate(sets: Mapping[str, ScoredSet]) -> dict[str, float]:
    """Operating point per pathology."""
    return {str(Pathology(k)): op_point(v) for k, v in sets.items()}


def align_outputs(
    pathologies: Sequence[str],
    predictions: Sequence[float],
    target_taxonomy: Optional[Sequence[str]] = None,
) -> dict[str, float]:
    """Pair model output names with prediction values.

    With ``target_taxonomy`` the result is keyed by that list, and names the
    model does not predict map to NaN.
    """
    preds = np.asarray(predictions, dtype=np.float64).reshape(-1)
    if len(pathologies) != preds.size:
        raise LengthMismatch(f"{len(pathologies)} pathologies but {preds.size} predictions")
    zipped = {str(Pathology(p)): float(v) for p, v in zip(pathologies, preds)}
    if target_taxonomy is None:
        return zipped
    return {str(Pathology(t)): zipped.get(str(Pathology(t)), float("nan")) for t in target_taxonomy}
