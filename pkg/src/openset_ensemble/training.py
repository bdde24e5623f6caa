"""Minibatch training of the adaptation methods and their baselines.

One unified loop covers the three student-teacher variants so the
ablation switches compose exactly: the "no adaptation weighting" variant
is the full method with lambda1 forced to 0, and disabling the entropy
terms while switching to confidence gating reproduces the plain
self-ensemble. Sub-batch sampling and augmentation draws happen
unconditionally, so two configurations that compute the same terms
consume the identical random stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field

from . import evaluation
from .data import OpenSetDataset, augment, class_ratios
from .losses import ClassWeights, ce_known_grad, ce_known_loss
from .nn import Mlp, StudentTeacherModel, UnknownDetector
from .numeric import Rng, softmax
from .objective import ObjectiveOptions, StreamBatch, evaluate_objective

Method = Literal["kase", "kase_no_kaa", "kase_no_kar", "source_only", "closed_set_c_plus_1"]

STUDENT_TEACHER_METHODS = ("kase", "kase_no_kaa", "kase_no_kar")
BASELINE_METHODS = ("source_only", "closed_set_c_plus_1")


class TrainConfig(BaseModel):
    method: Method = "kase"
    epochs: int = Field(default=200, ge=1)
    batch_known: int = Field(default=32, ge=1)
    batch_unknown: int = Field(default=32, ge=1)
    batch_target: int = Field(default=64, ge=1)
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lambda1: float = Field(default=10.0, ge=0)
    lambda2: float = Field(default=0.1, ge=0)
    ema_decay: float = Field(default=0.99, ge=0, le=1)
    weight_formula: Literal["corrected", "literal"] = "corrected"
    tau_conf: float = 0.9
    reweight: bool = True
    augment_std: float = Field(default=0.3, ge=0)
    hidden: tuple[int, int] = (32, 32)
    detector_hidden: int = 16
    detector_threshold: float = 0.5
    detector_epochs: int = 300
    detector_lr: float = 1e-2
    seed: int = 0
    # overrides for ablation composition; None means "per method preset"
    entropy_max: bool | None = None
    gating: Literal["entropy", "confidence"] | None = None


@dataclass
class EpochStats:
    epoch: int
    loss_ce: float
    loss_entropy_unknown: float
    loss_consistency: float
    loss_balance: float
    loss_total: float
    target_entropy_known: float
    target_entropy_unknown: float

    FIELDS = (
        "epoch",
        "loss_ce",
        "loss_entropy_unknown",
        "loss_consistency",
        "loss_balance",
        "loss_total",
        "target_entropy_known",
        "target_entropy_unknown",
    )

    def row(self) -> str:
        return ",".join(
            [str(self.epoch)]
            + [repr(float(getattr(self, f))) for f in self.FIELDS[1:]]
        )


@dataclass
class TrainTrace:
    epochs: list[EpochStats] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = [",".join(EpochStats.FIELDS)]
        lines += [e.row() for e in self.epochs]
        return "\n".join(lines) + "\n"


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, step: int):
        super().__init__(f"loss became non-finite at epoch {epoch}, step {step}")
        self.epoch = epoch
        self.step = step


class Adam(object):
    """Adaptive-moment optimizer over a flat parameter vector."""

    def __init__(self, n: int, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        mhat = self.m / (1.0 - self.beta1**self.t)
        vhat = self.v / (1.0 - self.beta2**self.t)
        return theta - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def resolve_objective_options(config: TrainConfig, weights: ClassWeights | None) -> ObjectiveOptions:
    """Per-method presets, composable through the explicit overrides."""
    if config.method == "kase_no_kar":
        entropy_max, gating = False, "confidence"
    else:
        entropy_max, gating = True, "entropy"
    lambda1 = 0.0 if config.method == "kase_no_kaa" else config.lambda1
    if config.entropy_max is not None:
        entropy_max = config.entropy_max
    if config.gating is not None:
        gating = config.gating
    return ObjectiveOptions(
        lambda1=lambda1,
        lambda2=config.lambda2,
        weight_formula=config.weight_formula,
        entropy_max=entropy_max,
        gating=gating,
        tau_conf=config.tau_conf,
        class_weights=weights,
    )


def train(dataset: OpenSetDataset, config: TrainConfig) -> tuple[StudentTeacherModel, TrainTrace]:
    """Train one method on the dataset; deterministic in config.seed."""
    if config.method in STUDENT_TEACHER_METHODS:
        return _train_student_teacher(dataset, config)
    if config.method in BASELINE_METHODS:
        return _train_baseline(dataset, config)
    raise ValueError(f"unknown method {config.method!r}")


def _train_student_teacher(dataset: OpenSetDataset, config: TrainConfig):
    c = dataset.num_known
    rng = Rng(config.seed)
    model = StudentTeacherModel.create(
        [dataset.input_dim, *config.hidden, c], rng, ema_decay=config.ema_decay
    )
    weights = class_ratios(dataset) if config.reweight else None
    opts = resolve_objective_options(config, weights)
    adam = Adam(model.student.num_params(), config.learning_rate, config.beta1, config.beta2, config.eps)

    sk_idx = dataset.source_known_indices()
    sk_y = dataset.source_known_labels()
    su_idx = dataset.source_unknown_indices()
    n_t = len(dataset.target_x)
    steps = max(1, math.ceil(n_t / config.batch_target))

    trace = TrainTrace()
    for epoch in range(config.epochs):
        sums = np.zeros(5)
        for step in range(steps):
            # draws are unconditional so ablation variants share one stream
            kp = rng.indices(len(sk_idx), config.batch_known)
            ui = su_idx[rng.indices(len(su_idx), config.batch_unknown)]
            ti = rng.indices(n_t, config.batch_target)

            known_x = augment(dataset.source_x[sk_idx[kp]], rng, config.augment_std)
            unknown_x = augment(dataset.source_x[ui], rng, config.augment_std)
            tgt_student = augment(dataset.target_x[ti], rng, config.augment_std)
            tgt_teacher = augment(dataset.target_x[ti], rng, config.augment_std)

            batch = StreamBatch(
                known_x=known_x,
                known_y=sk_y[kp],
                unknown_x=unknown_x,
                target_student_x=tgt_student,
                target_teacher_x=tgt_teacher,
            )
            res = evaluate_objective(model, batch, opts)
            b = res.breakdown
            if not math.isfinite(b.total):
                raise TrainingDiverged(epoch, step)
            model.student.set_flat(adam.step(model.student.get_flat(), res.grad))
            model.ema_update()
            sums += (b.ce_known, b.entropy_unknown, b.consistency, b.class_balance, b.total)

        ent_known, ent_unknown = evaluation.target_entropy_split(model.teacher, dataset)
        avg = (sums / steps).tolist()
        trace.epochs.append(
            EpochStats(epoch, avg[0], avg[1], avg[2], avg[3], avg[4], ent_known, ent_unknown)
        )
    return model, trace


def _train_baseline(dataset: OpenSetDataset, config: TrainConfig):
    """Source-only C-way CE, or the (C+1)-way closed-set protocol."""
    c = dataset.num_known
    with_bucket = config.method == "closed_set_c_plus_1"
    out = c + 1 if with_bucket else c

    rng = Rng(config.seed)
    # decay 0 keeps the teacher an exact copy; eval always reads the teacher
    model = StudentTeacherModel.create([dataset.input_dim, *config.hidden, out], rng, ema_decay=0.0)
    adam = Adam(model.student.num_params(), config.learning_rate, config.beta1, config.beta2, config.eps)

    sk_idx = dataset.source_known_indices()
    sk_y = dataset.source_known_labels()
    if with_bucket:
        su_idx = dataset.source_unknown_indices()
        pool_idx = np.concatenate([sk_idx, su_idx])
        pool_y = np.concatenate([sk_y, np.full(len(su_idx), c, dtype=np.int64)])
    else:
        pool_idx, pool_y = sk_idx, sk_y

    weights = None
    if config.reweight:
        ratios = class_ratios(dataset)
        if with_bucket:
            weights = ClassWeights(known=np.append(ratios.known, ratios.unknown_bucket))
        else:
            weights = ratios

    batch_size = config.batch_known + (config.batch_unknown if with_bucket else 0)
    steps = max(1, math.ceil(len(pool_idx) / batch_size))

    trace = TrainTrace()
    for epoch in range(config.epochs):
        total = 0.0
        for step in range(steps):
            bi = rng.indices(len(pool_idx), batch_size)
            x = augment(dataset.source_x[pool_idx[bi]], rng, config.augment_std)
            y = pool_y[bi]
            logits, cache = model.student.forward_cache(x)
            probs = softmax(logits)
            loss = ce_known_loss(probs, y, weights)
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch, step)
            dws, dbs = model.student.backward(cache, ce_known_grad(probs, y, weights))
            grad = np.concatenate([g.ravel() for pair in zip(dws, dbs) for g in pair])
            model.student.set_flat(adam.step(model.student.get_flat(), grad))
            model.ema_update()
            total += loss

        ent_known, ent_unknown = evaluation.target_entropy_split(model.teacher, dataset)
        avg = total / steps
        trace.epochs.append(EpochStats(epoch, avg, 0.0, 0.0, 0.0, avg, ent_known, ent_unknown))
    return model, trace


def fit_unknown_detector(
    model: StudentTeacherModel, dataset: OpenSetDataset, config: TrainConfig
) -> UnknownDetector:
    """Post-hoc rejection head on the frozen model's probability outputs.

    Binary cross entropy, source samples only: known classes against the
    source-private bucket. The classifier itself is never touched.
    """
    sk = dataset.source_known_indices()
    su = dataset.source_unknown_indices()
    if len(sk) == 0 or len(su) == 0:
        raise ValueError("detector fitting needs both known and source-unknown samples")

    probs = model.teacher.predict_proba(dataset.source_x[np.concatenate([sk, su])])
    labels = np.concatenate([np.zeros(len(sk)), np.ones(len(su))])

    # inverse-frequency weights per known class and for the unknown bucket,
    # so the rejection boundary is not dictated by the largest class
    sample_w = np.ones(len(labels))
    if config.reweight:
        ratios = class_ratios(dataset)
        sample_w = np.concatenate(
            [ratios.known[dataset.source_known_labels()], np.full(len(su), ratios.unknown_bucket)]
        )
    sample_w = sample_w / sample_w.sum()

    rng = Rng(config.seed + 0x5EED)
    det = UnknownDetector(
        num_classes=probs.shape[1],
        hidden=config.detector_hidden,
        threshold=config.detector_threshold,
    )
    det.net.init_glorot(rng)
    adam = Adam(det.net.num_params(), config.detector_lr, config.beta1, config.beta2, config.eps)

    for _ in range(config.detector_epochs):
        z, cache = det.net.forward_cache(probs)
        z = z[:, 0]
        # d(BCE)/dz = sigmoid(z) - y, under the normalized sample weights
        dz = (sample_w * ((1.0 / (1.0 + np.exp(-z))) - labels))[:, None]
        dws, dbs = det.net.backward(cache, dz)
        grad = np.concatenate([g.ravel() for pair in zip(dws, dbs) for g in pair])
        det.net.set_flat(adam.step(det.net.get_flat(), grad))
    det.fitted = True
    return det
