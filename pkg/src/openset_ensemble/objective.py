"""The full per-step training objective and its analytic student gradient.

One minibatch carries three streams: labeled known-class source samples,
source samples of classes absent from the target, and unlabeled target
samples in two independently augmented views (one for the student, one
for the teacher). The teacher and the consistency weights are constants
during backpropagation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .losses import (
    ClassWeights,
    LossBreakdown,
    ce_known_grad,
    ce_known_loss,
    class_balance_grad_probs,
    class_balance_loss,
    consistency_grad_probs,
    consistency_loss,
    consistency_weight,
    entropy_max_loss,
    entropy_mean_grad_probs,
)
from .nn import StudentTeacherModel
from .numeric import softmax, softmax_vjp


@dataclass
class StreamBatch:
    """Sub-batches for one optimization step (any stream may be empty)."""

    known_x: np.ndarray
    known_y: np.ndarray
    unknown_x: np.ndarray
    target_student_x: np.ndarray
    target_teacher_x: np.ndarray


@dataclass
class ObjectiveOptions:
    lambda1: float = 10.0
    lambda2: float = 0.1
    weight_formula: str = "corrected"
    entropy_max: bool = True
    # "entropy": per-sample weights from student entropy;
    # "confidence": binary gate on teacher max-probability (plain SE)
    gating: str = "entropy"
    tau_conf: float = 0.9
    class_weights: ClassWeights | None = None


@dataclass
class ObjectiveResult:
    breakdown: LossBreakdown
    grad: np.ndarray | None
    consistency_weights: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _empty(x: np.ndarray) -> bool:
    return x is None or np.size(x) == 0


def evaluate_objective(
    model: StudentTeacherModel,
    batch: StreamBatch,
    opts: ObjectiveOptions,
    want_grad: bool = True,
    frozen_weights: np.ndarray | None = None,
) -> ObjectiveResult:
    """Loss breakdown and (optionally) the flat student gradient.

    `frozen_weights` replays precomputed consistency weights; the gradient
    checker uses it to pin the stop-gradient weights at the base point.
    """
    student = model.student
    grad = np.zeros(student.num_params()) if want_grad else None
    pos_map = _flat_layout(student)

    ce = 0.0
    if not _empty(batch.known_x):
        logits, cache = student.forward_cache(batch.known_x)
        probs = softmax(logits)
        ce = ce_known_loss(probs, batch.known_y, opts.class_weights)
        if want_grad:
            dlogits = ce_known_grad(probs, batch.known_y, opts.class_weights)
            _accumulate(student, cache, dlogits, grad, pos_map)

    ent_u = 0.0
    if opts.entropy_max and not _empty(batch.unknown_x):
        logits, cache = student.forward_cache(batch.unknown_x)
        probs = softmax(logits)
        ent_u = entropy_max_loss(probs)
        if want_grad:
            # the total subtracts the entropy term, hence the minus
            dlogits = softmax_vjp(probs, -entropy_mean_grad_probs(probs))
            _accumulate(student, cache, dlogits, grad, pos_map)

    cons = 0.0
    bal = 0.0
    weights_used = np.zeros(0)
    if not _empty(batch.target_student_x):
        logits, cache = student.forward_cache(batch.target_student_x)
        f_probs = softmax(logits)
        g_probs = model.teacher.predict_proba(batch.target_teacher_x)
        if frozen_weights is not None:
            w = frozen_weights
        elif opts.gating == "confidence":
            w = (g_probs.max(axis=1) > opts.tau_conf).astype(np.float64)
        elif opts.gating == "entropy":
            w = np.asarray(consistency_weight(f_probs, f_probs.shape[1], opts.weight_formula))
        else:
            raise ValueError(f"unknown gating mode: {opts.gating!r}")
        weights_used = w
        cons = consistency_loss(f_probs, g_probs, w)
        bal = class_balance_loss(f_probs.mean(axis=0))
        if want_grad:
            dprobs = opts.lambda1 * consistency_grad_probs(f_probs, g_probs, w)
            dprobs += opts.lambda2 * class_balance_grad_probs(f_probs)
            _accumulate(student, cache, softmax_vjp(f_probs, dprobs), grad, pos_map)

    breakdown = LossBreakdown(
        ce_known=ce,
        entropy_unknown=ent_u,
        consistency=cons,
        class_balance=bal,
        lambda1=opts.lambda1,
        lambda2=opts.lambda2,
    )
    return ObjectiveResult(breakdown=breakdown, grad=grad, consistency_weights=weights_used)


def component_value(
    model: StudentTeacherModel,
    batch: StreamBatch,
    opts: ObjectiveOptions,
    component: str,
    frozen_weights: np.ndarray | None = None,
) -> float:
    """Scalar value of one objective component, for finite differencing.

    Components: "source" (CE minus unknown entropy), "consistency",
    "balance", "total".
    """
    res = evaluate_objective(model, batch, opts, want_grad=False, frozen_weights=frozen_weights)
    b = res.breakdown
    if component == "source":
        return b.ce_known - b.entropy_unknown
    if component == "consistency":
        return b.consistency
    if component == "balance":
        return b.class_balance
    if component == "total":
        return b.total
    raise ValueError(f"unknown objective component: {component!r}")


def component_grad(
    model: StudentTeacherModel,
    batch: StreamBatch,
    opts: ObjectiveOptions,
    component: str,
    frozen_weights: np.ndarray | None = None,
) -> np.ndarray:
    """Analytic flat student gradient of one component."""
    if component == "total":
        res = evaluate_objective(model, batch, opts, frozen_weights=frozen_weights)
        return res.grad
    if component == "source":
        sub = StreamBatch(
            known_x=batch.known_x,
            known_y=batch.known_y,
            unknown_x=batch.unknown_x,
            target_student_x=np.zeros((0, model.student.input_dim)),
            target_teacher_x=np.zeros((0, model.student.input_dim)),
        )
        return evaluate_objective(model, sub, opts, frozen_weights=None).grad
    if component in ("consistency", "balance"):
        from dataclasses import replace

        sub = StreamBatch(
            known_x=np.zeros((0, model.student.input_dim)),
            known_y=np.zeros(0, dtype=np.int64),
            unknown_x=np.zeros((0, model.student.input_dim)),
            target_student_x=batch.target_student_x,
            target_teacher_x=batch.target_teacher_x,
        )
        if component == "consistency":
            o = replace(opts, lambda1=1.0, lambda2=0.0)
        else:
            o = replace(opts, lambda1=0.0, lambda2=1.0)
        return evaluate_objective(model, sub, o, frozen_weights=frozen_weights).grad
    raise ValueError(f"unknown objective component: {component!r}")


def _flat_layout(student) -> list[tuple[int, int]]:
    spans = []
    pos = 0
    for w, b in zip(student.weights, student.biases):
        spans.append((pos, pos + w.size))
        pos += w.size
        spans.append((pos, pos + b.size))
        pos += b.size
    return spans


def _accumulate(student, cache, dlogits, grad, spans) -> None:
    dws, dbs = student.backward(cache, dlogits)
    i = 0
    for dw, db in zip(dws, dbs):
        lo, hi = spans[i]
        grad[lo:hi] += dw.ravel()
        i += 1
        lo, hi = spans[i]
        grad[lo:hi] += db.ravel()
        i += 1
