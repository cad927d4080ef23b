"""Scalar evaluation metrics with pinned conventions.

Conventions that matter for exact reproducibility:
  * AUROC is the Mann-Whitney pair statistic: probability that a random
    positive outranks a random negative, ties credited 1/2.
  * AUPR is step-sum average precision over descending unique thresholds;
    tied scores cross a threshold together, no interpolation.
  * FPR at target TPR thresholds with "score >= t means predicted positive"
    and takes the minimum FPR among thresholds reaching the target TPR.
  * Calibration bins are equal-width on [0, 1]; a confidence of exactly 1.0
    lands in the top bin; empty bins contribute nothing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, UndefinedMetricError

ECE_BINS = 15
HISTOGRAM_BINS = 20
CURVE_STEP = 0.05


@dataclass(frozen=True)
class ScoredSample:
    """A confidence score with the protocol-dependent positive/negative label."""

    score: float
    positive: bool
    predicted_class: int | None = None
    true_class: int | None = None

    def __post_init__(self):
        if not np.isfinite(self.score) or not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be finite in [0, 1], got {self.score}")


def _scores_labels(samples) -> tuple[np.ndarray, np.ndarray]:
    samples = list(samples)
    if not samples:
        raise EmptyInputError("no scored samples")
    scores = np.array([s.score for s in samples], dtype=np.float64)
    labels = np.array([s.positive for s in samples], dtype=bool)
    return scores, labels


def auroc(samples) -> float:
    """Rank-based AUROC with half credit for ties."""
    scores, labels = _scores_labels(samples)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs at least one positive and one negative")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        # average 1-based rank over the tie group; always a multiple of 0.5
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    rank_sum = ranks[labels].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _threshold_counts(scores, labels):
    """Cumulative (tp, fp) after each descending unique-score threshold."""
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    boundaries = np.nonzero(np.diff(s))[0]
    last = np.concatenate([boundaries, [s.size - 1]])
    tp = np.cumsum(y)[last].astype(np.int64)
    fp = np.cumsum(~y)[last].astype(np.int64)
    return s[last], tp, fp


def aupr(samples) -> float:
    """Average precision: sum of precision * recall-increment per threshold."""
    scores, labels = _scores_labels(samples)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise UndefinedMetricError("AUPR needs at least one positive")
    _, tp, fp = _threshold_counts(scores, labels)
    ap = 0.0
    prev_tp = 0
    for k in range(tp.size):
        precision = tp[k] / (tp[k] + fp[k])
        ap += precision * ((tp[k] - prev_tp) / n_pos)
        prev_tp = tp[k]
    # the step sum can creep past 1 by accumulated rounding
    return float(min(ap, 1.0))


def fpr_at_tpr(samples, target_tpr: float = 0.95) -> float:
    """Minimum FPR over thresholds whose TPR reaches the target."""
    scores, labels = _scores_labels(samples)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("FPR@TPR needs at least one positive and one negative")
    _, tp, fp = _threshold_counts(scores, labels)
    best = 1.0
    for k in range(tp.size):
        if tp[k] / n_pos >= target_tpr:
            best = min(best, fp[k] / n_neg)
    return float(best)


def _bin_index(confidences: np.ndarray, bins: int) -> np.ndarray:
    idx = np.floor(confidences * bins).astype(np.int64)
    return np.minimum(idx, bins - 1)


def _check_conf_correct(confidences, correctness):
    conf = np.asarray(confidences, dtype=np.float64)
    corr = np.asarray(correctness, dtype=bool)
    if conf.ndim != 1 or corr.shape != conf.shape:
        raise ValueError("confidences and correctness must be equal-length vectors")
    if conf.size == 0:
        raise EmptyInputError("no samples to calibrate")
    if not np.isfinite(conf).all() or conf.min() < 0 or conf.max() > 1:
        raise ValueError("confidences must lie in [0, 1]")
    return conf, corr


def ece(confidences, correctness, bins: int = ECE_BINS) -> float:
    """Expected calibration error over equal-width confidence bins."""
    conf, corr = _check_conf_correct(confidences, correctness)
    idx = _bin_index(conf, bins)
    n = conf.size
    total = 0.0
    for m in range(bins):
        mask = idx == m
        count = int(mask.sum())
        if count == 0:
            continue
        gap = abs(corr[mask].mean() - conf[mask].mean())
        total += (count / n) * gap
    return float(total)


def reliability_bins(confidences, correctness, bins: int = ECE_BINS):
    """The (mean confidence, accuracy, count) rows behind the ECE."""
    conf, corr = _check_conf_correct(confidences, correctness)
    idx = _bin_index(conf, bins)
    rows = []
    for m in range(bins):
        mask = idx == m
        count = int(mask.sum())
        if count == 0:
            continue
        rows.append((float(conf[mask].mean()), float(corr[mask].mean()), count))
    return rows


def accuracy_confidence_curve(confidences, correctness, step: float = CURVE_STEP):
    """Accuracy over the samples at or above each confidence threshold.

    Thresholds run 0.0, step, ..., 1.0; thresholds that keep no samples are
    omitted.
    """
    conf, corr = _check_conf_correct(confidences, correctness)
    n_steps = round(1.0 / step)
    points = []
    for k in range(n_steps + 1):
        thr = k / n_steps
        mask = conf >= thr
        count = int(mask.sum())
        if count == 0:
            continue
        points.append((thr, float(corr[mask].mean()), count))
    return points


def histogram(scores, bins: int = HISTOGRAM_BINS) -> np.ndarray:
    """Equal-width counts over [0, 1]; 1.0 goes in the top bin."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size and (not np.isfinite(scores).all() or scores.min() < 0 or scores.max() > 1):
        raise ValueError("scores must lie in [0, 1]")
    counts = np.zeros(bins, dtype=np.int64)
    if scores.size:
        np.add.at(counts, _bin_index(scores, bins), 1)
    return counts


def corbiere_split(confidences, is_correct, is_ood):
    """Label a mixed pool of in-distribution and OOD predictions.

    Positive means "in distribution and correctly classified"; every OOD
    sample is negative no matter what it predicted. Scores are the method
    confidences. Feed the result to auroc/aupr for the success-side numbers
    and error_relabel() for the error side.
    """
    conf = np.asarray(confidences, dtype=np.float64)
    correct = np.asarray(is_correct, dtype=bool)
    ood = np.asarray(is_ood, dtype=bool)
    if not (conf.shape == correct.shape == ood.shape) or conf.ndim != 1:
        raise ValueError("need equal-length confidence, correctness and OOD vectors")
    if conf.size == 0:
        raise EmptyInputError("empty evaluation pool")
    return [
        ScoredSample(float(c), bool(k and not o))
        for c, k, o in zip(conf, correct, ood)
    ]


def error_relabel(samples):
    """Complement labeling with score 1 - confidence, so errors rank first."""
    return [ScoredSample(1.0 - s.score, not s.positive) for s in samples]


def hendrycks_split(id_confidences, ood_confidences):
    """In-distribution detection pool: ID samples positive, scored by confidence."""
    id_conf = np.asarray(id_confidences, dtype=np.float64)
    ood_conf = np.asarray(ood_confidences, dtype=np.float64)
    if id_conf.size == 0 or ood_conf.size == 0:
        raise EmptyInputError("both confidence lists must be non-empty")
    return [ScoredSample(float(c), True) for c in id_conf] + [
        ScoredSample(float(c), False) for c in ood_conf
    ]


def accuracy(predicted, true) -> float:
    predicted = np.asarray(predicted)
    true = np.asarray(true)
    if predicted.shape != true.shape or predicted.size == 0:
        raise ValueError("predictions and labels must be equal-length and non-empty")
    return float((predicted == true).mean())
