"""Central finite-difference verification of the analytic gradients."""

from __future__ import annotations

import numpy as np

from .nn import StudentTeacherModel
from .objective import ObjectiveOptions, StreamBatch, component_grad, component_value, evaluate_objective


def grad_check(
    model: StudentTeacherModel,
    batch: StreamBatch,
    opts: ObjectiveOptions,
    component: str = "total",
    step: float = 1e-5,
    max_params: int = 500,
) -> float:
    """Max relative error between analytic and numeric student gradients.

    relative error = |g_a - g_n| / max(1e-8, |g_a| + |g_n|), per parameter.
    The stop-gradient consistency weights are pinned at the base point so
    the differenced function is exactly the one the trainer optimizes.
    """
    student = model.student
    n = student.num_params()
    if n > max_params:
        raise ValueError(f"grad_check limited to {max_params} parameters, model has {n}")

    frozen = None
    if opts.gating == "entropy" and np.size(batch.target_student_x) > 0:
        res = evaluate_objective(model, batch, opts, want_grad=False)
        frozen = res.consistency_weights

    analytic = component_grad(model, batch, opts, component, frozen_weights=frozen)
    if not np.all(np.isfinite(analytic)):
        bad = int(np.flatnonzero(~np.isfinite(analytic))[0])
        raise FloatingPointError(f"non-finite analytic gradient at parameter {bad}")

    base = student.get_flat()
    numeric = np.zeros_like(analytic)
    for i in range(n):
        theta = base.copy()
        theta[i] = base[i] + step
        student.set_flat(theta)
        hi = component_value(model, batch, opts, component, frozen_weights=frozen)
        theta[i] = base[i] - step
        student.set_flat(theta)
        lo = component_value(model, batch, opts, component, frozen_weights=frozen)
        numeric[i] = (hi - lo) / (2.0 * step)
    student.set_flat(base)

    denom = np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom))
