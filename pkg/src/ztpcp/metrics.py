"""Held-out prediction, ranking metrics and factor reports."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigError, UndefinedMetricError
from .model import ChainOutput, ParamSample, active_factors, bernoulli_prob, cp_rates


@dataclass
class PredictionSet:
    indices: np.ndarray
    labels: np.ndarray
    probs: np.ndarray


def _sample_list(chain) -> list:
    if isinstance(chain, ParamSample):
        return [chain]
    return list(chain.samples)


def predict_probs(chain, indices, mode: str = "average") -> np.ndarray:
    """Posterior predictive probability of a one at each row of ``indices``.

    ``mode="average"`` averages ``1 - exp(-rate)`` over the stored samples;
    ``mode="plugin"`` evaluates it once at the posterior-mean parameters.
    ``chain`` may also be a single :class:`ParamSample`.
    """
    indices = np.asarray(indices, dtype=np.int64)
    if mode == "plugin":
        params = chain if isinstance(chain, ParamSample) else chain.mean
        return bernoulli_prob(cp_rates(indices, params.factors, params.lam))
    if mode != "average":
        raise ConfigError(f"unknown prediction mode {mode!r}")
    samples = _sample_list(chain)
    if not samples:
        raise ConfigError("chain holds no samples")
    acc = np.zeros(indices.shape[0])
    for s in samples:
        acc += bernoulli_prob(cp_rates(indices, s.factors, s.lam))
    return acc / len(samples)


def predict_prob(chain, index, mode: str = "average") -> float:
    return float(predict_probs(chain, np.asarray(index)[None, :], mode)[0])


def _split(labels, scores):
    labels = np.asarray(labels).astype(int)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape:
        raise ConfigError("labels and scores differ in length")
    return labels, scores


def auc_roc(labels, scores) -> float:
    """Probability that a random positive outscores a random negative (ties count 1/2)."""
    labels, scores = _split(labels, scores)
    n_pos = int(np.count_nonzero(labels == 1))
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("auc_roc is undefined when the test set holds a single class")
    ranks = rankdata(scores)
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def _thresholds(labels, scores):
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    l = labels[order]
    tp = np.cumsum(l == 1)
    fp = np.cumsum(l == 0)
    # keep the last position of each run of tied scores
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    return tp[last], fp[last]


def pr_curve(labels, scores):
    """Recall and precision at each distinct score threshold, highest first."""
    labels, scores = _split(labels, scores)
    n_pos = int(np.count_nonzero(labels == 1))
    if n_pos == 0:
        raise UndefinedMetricError("auc_pr is undefined without positive examples")
    tp, fp = _thresholds(labels, scores)
    return tp / n_pos, tp / (tp + fp)


def auc_pr(labels, scores) -> float:
    """Area under the non-interpolated precision-recall step curve.

    Each recall increment is weighted by the precision at the threshold that
    produced it.
    """
    recall, precision = pr_curve(labels, scores)
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def roc_curve(labels, scores):
    """False- and true-positive rates at each distinct threshold, starting at (0, 0)."""
    labels, scores = _split(labels, scores)
    n_pos = int(np.count_nonzero(labels == 1))
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("auc_roc is undefined when the test set holds a single class")
    tp, fp = _thresholds(labels, scores)
    return np.r_[0.0, fp / n_neg], np.r_[0.0, tp / n_pos]


def log_loss(labels, probs, eps: float = 1e-15) -> float:
    labels, probs = _split(labels, probs)
    if labels.size == 0:
        raise UndefinedMetricError("log_loss is undefined on an empty test set")
    p = np.clip(probs, eps, 1 - eps)
    return float(-np.mean(labels * np.log(p) + (1 - labels) * np.log1p(-p)))


def evaluate(labels, probs) -> dict:
    return {
        "auc_roc": auc_roc(labels, probs),
        "auc_pr": auc_pr(labels, probs),
        "log_loss": log_loss(labels, probs),
    }


def rank_report(chain, tau: float = 1e-3) -> list[tuple[int, float, bool]]:
    """``(factor, mean lam, active)`` sorted by decreasing mean weight.

    A factor is active when its mean weight exceeds ``tau`` times the largest.
    """
    lam = chain.mean.lam if isinstance(chain, ChainOutput) else np.asarray(chain.lam)
    active = active_factors(lam, tau)
    order = np.lexsort((np.arange(lam.size), -lam))
    return [(int(r), float(lam[r]), bool(active[r])) for r in order]


def n_active(chain, tau: float = 1e-3) -> int:
    return sum(1 for _, _, a in rank_report(chain, tau) if a)


def top_entities(chain, mode: int, r: int, n: int = 10) -> list[tuple[int, float]]:
    """The ``n`` largest entries of the mean factor column, ties broken by entity id.

    ``mode`` is 1-based; ``r`` is the 0-based factor number.
    """
    params = chain.mean if isinstance(chain, ChainOutput) else chain
    if not 1 <= mode <= len(params.factors):
        raise ConfigError(f"mode {mode} not in 1..{len(params.factors)}")
    col = params.factors[mode - 1][:, r]
    order = np.lexsort((np.arange(col.size), -col))[:max(n, 0)]
    return [(int(i), float(col[i])) for i in order]


def format_metrics_table(metrics: dict) -> str:
    width = max(len(k) for k in metrics)
    lines = [f"{'metric':<{width}}  value", f"{'-' * width}  {'-' * 19}"]
    lines += [f"{k:<{width}}  {v:.17g}" for k, v in metrics.items()]
    return "\n".join(lines) + "\n"


def format_metric_records(metrics: dict) -> str:
    return "".join(f"{k} {v:.17g}\n" for k, v in metrics.items())
