"""Decoding metrics: confusion matrices, pooled accuracies, Wilcoxon test."""

from dataclasses import dataclass
import math

import numpy as np

from .errors import ShapeError
from .features import check_labels

__all__ = [
    "ConfusionMatrix",
    "AccuracySummary",
    "WilcoxonResult",
    "confusion",
    "mean_confusion",
    "overall_accuracy",
    "wilcoxon_signed_rank",
    "signed_rank_distribution",
    "EXACT_MAX_M",
]

EXACT_MAX_M = 20


@dataclass
class ConfusionMatrix:
    """Rows are true states, columns predicted states."""

    counts: np.ndarray      # (S, S) int64
    normalized: np.ndarray  # (S, S) row-normalized; unsupported rows are zero
    supported: np.ndarray   # (S,) bool, true state present at least once

    @property
    def recall(self):
        return np.diag(self.normalized)


def confusion(pred, truth, n_states):
    """Count ``(truth, pred)`` pairs and row-normalize them."""
    pred = check_labels(pred, n_states)
    truth = check_labels(truth, n_states)
    if pred.shape != truth.shape:
        raise ShapeError(f"prediction length {pred.size} != truth length {truth.size}")
    counts = np.zeros((n_states, n_states), dtype=np.int64)
    np.add.at(counts, (truth, pred), 1)
    support = counts.sum(axis=1)
    supported = support > 0
    normalized = np.zeros((n_states, n_states))
    normalized[supported] = counts[supported] / support[supported, None]
    return ConfusionMatrix(counts, normalized, supported)


def mean_confusion(preds, truths, n_states):
    """Average of per-subject normalized matrices, each row over the subjects supporting it."""
    total = np.zeros((n_states, n_states))
    n = np.zeros(n_states)
    for p, t in zip(preds, truths):
        cm = confusion(p, t, n_states)
        total += cm.normalized
        n += cm.supported
    out = np.zeros_like(total)
    out[n > 0] = total[n > 0] / n[n > 0, None]
    return out


@dataclass
class AccuracySummary:
    """Three ways of pooling accuracies across subjects.

    ``mean``/``std`` pool every (subject, supported state) recall and are the
    headline figures.  ``subject_*`` summarize each subject's plain
    per-timepoint accuracy and ``state_*`` the per-state recall averaged over
    subjects.  Standard deviations are population (``ddof=0``) values.
    """

    mean: float
    std: float
    subject_mean: float
    subject_std: float
    state_mean: float
    state_std: float
    recalls: np.ndarray            # pooled per-subject-per-state recalls
    subject_accuracies: np.ndarray


def overall_accuracy(preds, truths, n_states):
    preds = list(preds)
    truths = list(truths)
    if not preds:
        raise ShapeError("no subjects to score")
    if len(preds) != len(truths):
        raise ShapeError(f"{len(preds)} prediction tracks but {len(truths)} truth tracks")
    recalls, subj = [], []
    for p, t in zip(preds, truths):
        cm = confusion(p, t, n_states)
        recalls.extend(cm.recall[cm.supported])
        subj.append(np.trace(cm.counts) / cm.counts.sum())
    recalls = np.asarray(recalls)
    subj = np.asarray(subj)
    per_state = np.diag(mean_confusion(preds, truths, n_states))
    seen = np.zeros(n_states, dtype=bool)
    for t in truths:
        seen[np.unique(check_labels(t))] = True
    per_state = per_state[seen]
    return AccuracySummary(float(recalls.mean()), float(recalls.std()),
                           float(subj.mean()), float(subj.std()),
                           float(per_state.mean()), float(per_state.std()),
                           recalls, subj)


@dataclass
class WilcoxonResult:
    w: float          # rank sum of positive differences a - b
    p: float          # two-sided p value
    m: int            # number of nonzero differences
    exact: bool
    degenerate: bool  # every difference was zero


def _average_ranks(x):
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ranks = np.empty(len(x))
    i = 0
    while i < len(xs):
        j = i
        while j + 1 < len(xs) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def signed_rank_distribution(ranks):
    """Counts of every attainable positive-rank sum over all ``2**m`` sign patterns.

    Ranks may be half-integers (average ranks), so sums are tracked on the
    doubled scale: ``counts[s]`` is the number of sign patterns whose
    doubled positive-rank sum equals ``s``.
    """
    doubled = [int(round(2 * r)) for r in ranks]
    counts = np.zeros(sum(doubled) + 1, dtype=np.int64)
    counts[0] = 1
    top = 0
    for r in doubled:
        counts[r:top + r + 1] += counts[:top + 1].copy()
        top += r
    return counts


def wilcoxon_signed_rank(a, b, exact_max=EXACT_MAX_M):
    """Two-sided Wilcoxon signed-rank test of paired samples ``a`` and ``b``.

    Zero differences are discarded.  With at most ``exact_max`` remaining
    pairs the p value is exact; otherwise the normal approximation with a
    continuity correction and tie-corrected variance is used.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"paired samples must be equal-length vectors, got {a.shape} and {b.shape}")
    if a.size == 0:
        raise ShapeError("need at least one pair")
    d = a - b
    d = d[d != 0]
    m = d.size
    if m == 0:
        return WilcoxonResult(0.0, 1.0, 0, True, True)
    ranks = _average_ranks(np.abs(d))
    w = float(ranks[d > 0].sum())
    if m <= exact_max:
        counts = signed_rank_distribution(ranks)
        w2 = int(round(2 * w))
        lower = int(counts[:w2 + 1].sum())
        upper = int(counts[w2:].sum())
        p = min(1.0, 2 * min(lower, upper) / 2.0 ** m)
        return WilcoxonResult(w, p, m, True, False)
    mean = m * (m + 1) / 4.0
    _, tie_sizes = np.unique(np.abs(d), return_counts=True)
    var = m * (m + 1) * (2 * m + 1) / 24.0 - float(np.sum(tie_sizes ** 3 - tie_sizes)) / 48.0
    z = max(abs(w - mean) - 0.5, 0.0) / math.sqrt(var)
    p = min(1.0, math.erfc(z / math.sqrt(2.0)))
    return WilcoxonResult(w, p, m, False, False)
