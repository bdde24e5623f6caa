"""Loss terms for the known-class aware self-ensemble objective.

Value functions are pure; companions returning gradients w.r.t. the
probability outputs live alongside them so the trainer and the gradient
checker share one definition. All batch terms are means, so the trade-off
coefficients are batch-size independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numeric import LOG_CLAMP, entropy


@dataclass
class ClassWeights:
    """Inverse-frequency weights: w_c = 1 / r_c with r_c the class ratio.

    `known` is indexed by mapped known-class id; `unknown_bucket` weights
    the aggregated extra class of the (C+1)-way baseline.
    """

    known: np.ndarray
    unknown_bucket: float | None = None

    @classmethod
    def uniform(cls, num_classes: int) -> "ClassWeights":
        return cls(known=np.ones(num_classes), unknown_bucket=1.0)


@dataclass
class LossBreakdown:
    """Per-term values for one minibatch.

    total = ce_known - entropy_unknown
            + lambda1 * consistency + lambda2 * class_balance
    """

    ce_known: float
    entropy_unknown: float
    consistency: float
    class_balance: float
    lambda1: float
    lambda2: float

    @property
    def total(self) -> float:
        return (
            self.ce_known
            - self.entropy_unknown
            + self.lambda1 * self.consistency
            + self.lambda2 * self.class_balance
        )


def _sample_weights(labels: np.ndarray, weights: ClassWeights | None, num_classes: int) -> np.ndarray:
    if np.any((labels < 0) | (labels >= num_classes)):
        bad = labels[(labels < 0) | (labels >= num_classes)][0]
        raise ValueError(f"label {bad} outside known-class range [0, {num_classes})")
    if weights is None:
        return np.ones(len(labels))
    return weights.known[labels]


def ce_known_loss(probs: np.ndarray, labels: np.ndarray, weights: ClassWeights | None = None) -> float:
    """Weighted-mean cross entropy over known-class samples.

    Normalized by the total weight, so reweighting balances per-class
    contributions instead of rescaling the loss.
    """
    probs = np.atleast_2d(probs)
    labels = np.asarray(labels, dtype=np.int64)
    w = _sample_weights(labels, weights, probs.shape[1])
    picked = probs[np.arange(len(labels)), labels]
    nll = -np.log(np.clip(picked, LOG_CLAMP, None))
    return float((w * nll).sum() / w.sum())


def ce_known_grad(probs: np.ndarray, labels: np.ndarray, weights: ClassWeights | None = None) -> np.ndarray:
    """Gradient of ce_known_loss w.r.t. the logits (softmax folded in)."""
    probs = np.atleast_2d(probs)
    labels = np.asarray(labels, dtype=np.int64)
    w = _sample_weights(labels, weights, probs.shape[1])
    onehot = np.zeros_like(probs)
    onehot[np.arange(len(labels)), labels] = 1.0
    return (w / w.sum())[:, None] * (probs - onehot)


def entropy_max_loss(probs: np.ndarray) -> float:
    """Mean prediction entropy over a batch; 0 for an empty batch.

    The trainer subtracts this term, i.e. the entropy is maximized.
    """
    probs = np.atleast_2d(probs)
    if probs.shape[0] == 0:
        return 0.0
    return float(np.mean(entropy(probs)))


def entropy_mean_grad_probs(probs: np.ndarray) -> np.ndarray:
    """d(mean entropy)/d(probs); combine with the softmax pullback."""
    probs = np.atleast_2d(probs)
    n = probs.shape[0]
    return -(np.log(np.clip(probs, LOG_CLAMP, None)) + 1.0) / n


def consistency_weight(probs: np.ndarray, num_known: int, formula: str = "corrected") -> np.ndarray | float:
    """Per-sample consistency weight from prediction entropy.

    "corrected" returns exp(-H/C): confident (low entropy) predictions get
    weight near 1, near-uniform ones are damped. "literal" keeps the
    opposite sign, exp(+H/C), for the ablation record.
    """
    if num_known < 2:
        raise ValueError("need at least two known classes")
    h = entropy(probs)
    if formula == "corrected":
        return np.exp(-np.asarray(h) / num_known) if np.ndim(h) else float(np.exp(-h / num_known))
    if formula == "literal":
        return np.exp(np.asarray(h) / num_known) if np.ndim(h) else float(np.exp(h / num_known))
    raise ValueError(f"unknown weight formula: {formula!r}")


def consistency_loss(f_probs: np.ndarray, g_probs: np.ndarray, weights: np.ndarray | float) -> float:
    """Weighted square difference between student and teacher outputs.

    Per sample the square difference is averaged over classes; the batch
    is averaged plainly (weights scale, they do not renormalize).
    """
    f_probs = np.atleast_2d(f_probs)
    g_probs = np.atleast_2d(g_probs)
    if f_probs.shape != g_probs.shape:
        raise ValueError(
            f"student/teacher batch shapes differ: {f_probs.shape} vs {g_probs.shape}"
        )
    if f_probs.shape[0] == 0:
        return 0.0
    w = np.broadcast_to(np.asarray(weights, dtype=np.float64), (f_probs.shape[0],))
    per_sample = np.mean((f_probs - g_probs) ** 2, axis=1)
    return float(np.mean(w * per_sample))


def consistency_grad_probs(f_probs: np.ndarray, g_probs: np.ndarray, weights: np.ndarray | float) -> np.ndarray:
    """d(consistency_loss)/d(f_probs); weights and teacher are constants."""
    f_probs = np.atleast_2d(f_probs)
    g_probs = np.atleast_2d(g_probs)
    n, c = f_probs.shape
    w = np.broadcast_to(np.asarray(weights, dtype=np.float64), (n,))
    return (2.0 / (n * c)) * w[:, None] * (f_probs - g_probs)


def class_balance_loss(mean_probs: np.ndarray) -> float:
    """Cross entropy from the uniform reference to the batch-mean prediction.

    Minimum value log(C), attained exactly at the uniform mean.
    """
    m = np.asarray(mean_probs, dtype=np.float64)
    c = m.shape[-1]
    return float(-np.sum(np.log(np.clip(m, LOG_CLAMP, None))) / c)


def class_balance_grad_probs(probs: np.ndarray) -> np.ndarray:
    """Gradient of class_balance_loss(mean of probs) w.r.t. each row."""
    probs = np.atleast_2d(probs)
    n, c = probs.shape
    m = probs.mean(axis=0)
    dm = -1.0 / (c * np.clip(m, LOG_CLAMP, None))
    return np.broadcast_to(dm / n, (n, c)).copy()
