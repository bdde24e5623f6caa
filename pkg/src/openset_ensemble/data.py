"""Datasets: synthetic open-set domain-shift benchmarks and CSV loading.

Source samples are labeled; target labels are hidden behind a
deliberately named accessor that only the evaluation code calls.
"""

from __future__ import annotations

import math
import warnings
from typing import Sequence

import numpy as np
from pydantic import BaseModel, Field, model_validator

from .losses import ClassWeights
from .numeric import Rng


class OpenSetProtocol(BaseModel):
    """Class-id partition: shared classes plus per-domain private ones."""

    known: list[int]
    source_unknown: list[int]
    target_unknown: list[int]

    @model_validator(mode="after")
    def _check_disjoint(self):
        k, su, tu = set(self.known), set(self.source_unknown), set(self.target_unknown)
        if not self.known:
            raise ValueError("protocol needs at least one known class")
        if k & su or k & tu or su & tu:
            raise ValueError("known/source-unknown/target-unknown classes must be disjoint")
        return self


class SyntheticSpec(BaseModel):
    """Gaussian clusters on a circle, with a rigid shift for the target domain.

    The defaults are calibrated so that the adaptation methods order the
    way the full-scale benchmarks do: the rotation is most of one slot
    spacing, so a plain source classifier degrades but stays recoverable,
    and target-unknown clusters land near the source-unknown ones.
    """

    c_known: int = Field(default=4, ge=1)
    n_unknown_source: int = Field(default=3, ge=1)
    n_unknown_target: int = Field(default=3, ge=1)
    samples_per_class: int = Field(default=100, ge=1)
    unknown_source_oversample: int = Field(default=1, ge=1)
    radius: float = Field(default=3.0, gt=0)
    cluster_std: float = Field(default=0.7, gt=0)
    shift_angle: float = -math.pi / 6.0
    shift_translation: tuple[float, float] = (0.5, -0.3)
    noise_std: float = Field(default=0.3, ge=0)
    seed: int = 0

    def protocol(self) -> OpenSetProtocol:
        c, s, t = self.c_known, self.n_unknown_source, self.n_unknown_target
        return OpenSetProtocol(
            known=list(range(c)),
            source_unknown=list(range(c, c + s)),
            target_unknown=list(range(c + s, c + s + t)),
        )


class OpenSetDataset:
    """Labeled source and unlabeled target samples under an open-set protocol."""

    def __init__(
        self,
        source_x: np.ndarray,
        source_y: np.ndarray,
        target_x: np.ndarray,
        target_y: np.ndarray,
        protocol: OpenSetProtocol,
    ):
        self.source_x = np.asarray(source_x, dtype=np.float64)
        self.source_y = np.asarray(source_y, dtype=np.int64)
        self.target_x = np.asarray(target_x, dtype=np.float64)
        self._target_y_hidden = np.asarray(target_y, dtype=np.int64)
        self.protocol = protocol

        allowed_src = set(protocol.known) | set(protocol.source_unknown)
        allowed_tgt = set(protocol.known) | set(protocol.target_unknown)
        for y in np.unique(self.source_y):
            if int(y) not in allowed_src:
                raise ValueError(f"source label {y} outside the protocol")
        for y in np.unique(self._target_y_hidden):
            if int(y) not in allowed_tgt:
                raise ValueError(f"target label {y} outside the protocol")

        self._known_sorted = sorted(protocol.known)
        self._known_index = {c: i for i, c in enumerate(self._known_sorted)}

    @property
    def input_dim(self) -> int:
        return self.source_x.shape[1]

    @property
    def num_known(self) -> int:
        return len(self._known_sorted)

    def known_class_of(self, raw_id: int) -> int:
        return self._known_index[raw_id]

    def source_known_indices(self) -> np.ndarray:
        mask = np.isin(self.source_y, self._known_sorted)
        return np.flatnonzero(mask)

    def source_unknown_indices(self) -> np.ndarray:
        mask = np.isin(self.source_y, list(self.protocol.source_unknown))
        return np.flatnonzero(mask)

    def source_known_labels(self) -> np.ndarray:
        """Mapped labels 0..C-1 for the known-class source samples."""
        idx = self.source_known_indices()
        return np.array([self._known_index[int(y)] for y in self.source_y[idx]], dtype=np.int64)

    def hidden_target_labels_for_eval(self) -> np.ndarray:
        """Ground-truth target labels; evaluation and trace reporting only."""
        return self._target_y_hidden.copy()

    def target_known_mask_for_eval(self) -> np.ndarray:
        return np.isin(self._target_y_hidden, self._known_sorted)


def _slot_order(protocol: OpenSetProtocol) -> list[int]:
    """Class ids in the order their circle slots are assigned.

    Classes from the three roles are interleaved round-robin
    (source-unknown, target-unknown, known, repeat). With the default
    rotation of most of one slot spacing this puts each shifted known
    cluster into the gap left by a target-unknown class, and drops each
    shifted target-unknown cluster near a source-unknown one, which is
    the regime the adaptation methods are designed for.
    """
    streams = [
        list(protocol.source_unknown),
        list(protocol.target_unknown),
        list(protocol.known),
    ]
    order: list[int] = []
    while any(streams):
        for s in streams:
            if s:
                order.append(s.pop(0))
    return order


def generate_synthetic(spec: SyntheticSpec) -> OpenSetDataset:
    """Deterministic benchmark: class means equally spaced on a circle.

    The target domain draws from the same generative classes and applies
    rotation by `shift_angle` plus `shift_translation` to every sample.
    Draw order is fixed (source classes in id order, then target), so one
    seed gives a bitwise-identical dataset.
    """
    protocol = spec.protocol()
    total = spec.c_known + spec.n_unknown_source + spec.n_unknown_target
    angles = 2.0 * math.pi * np.arange(total) / total
    circle = spec.radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    means = np.empty_like(circle)
    for slot, class_id in enumerate(_slot_order(protocol)):
        means[class_id] = circle[slot]

    rng = Rng(spec.seed)
    rot = np.array(
        [
            [math.cos(spec.shift_angle), -math.sin(spec.shift_angle)],
            [math.sin(spec.shift_angle), math.cos(spec.shift_angle)],
        ]
    )
    shift = np.asarray(spec.shift_translation)
    oversampled = set(protocol.source_unknown)

    def draw(class_ids: Sequence[int], oversample: int) -> tuple[np.ndarray, np.ndarray]:
        xs, ys = [], []
        for c in class_ids:
            n = spec.samples_per_class * (oversample if c in oversampled else 1)
            pts = means[c] + spec.cluster_std * rng.normals((n, 2))
            xs.append(pts)
            ys.append(np.full(n, c, dtype=np.int64))
        return np.concatenate(xs), np.concatenate(ys)

    src_x, src_y = draw(protocol.known + protocol.source_unknown, spec.unknown_source_oversample)
    tgt_x, tgt_y = draw(protocol.known + protocol.target_unknown, 1)
    tgt_x = tgt_x @ rot.T + shift
    return OpenSetDataset(src_x, src_y, tgt_x, tgt_y, protocol)


def augment(x: np.ndarray, rng: Rng, noise_std: float) -> np.ndarray:
    """Gaussian jitter per coordinate; each call draws fresh noise."""
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    x = np.asarray(x, dtype=np.float64)
    if noise_std == 0:
        return x.copy()
    return x + noise_std * rng.normals(x.shape)


def class_ratios(dataset: OpenSetDataset) -> ClassWeights:
    """Inverse-frequency weights 1/r_c from the source label counts."""
    n_s = len(dataset.source_y)
    known = np.zeros(dataset.num_known)
    for raw in dataset.protocol.known:
        count = int(np.sum(dataset.source_y == raw))
        if count == 0:
            warnings.warn(f"known class {raw} has no source samples; weight set to 0")
            continue
        known[dataset.known_class_of(raw)] = n_s / count
    n_unknown = len(dataset.source_unknown_indices())
    bucket = (n_s / n_unknown) if n_unknown > 0 else None
    return ClassWeights(known=known, unknown_bucket=bucket)


CSV_DOMAINS = ("source", "target")


def save_csv(dataset: OpenSetDataset, path: str) -> None:
    """Write the dataset in the interchange schema.

    Header: domain,label,feat_1,...,feat_d. Target rows carry the hidden
    ground-truth label so the file round-trips.
    """
    d = dataset.input_dim
    header = "domain,label," + ",".join(f"feat_{i + 1}" for i in range(d))
    lines = [header]
    for x, y in zip(dataset.source_x, dataset.source_y):
        lines.append("source,%d,%s" % (y, ",".join(repr(float(v)) for v in x)))
    tgt_y = dataset.hidden_target_labels_for_eval()
    for x, y in zip(dataset.target_x, tgt_y):
        lines.append("target,%d,%s" % (y, ",".join(repr(float(v)) for v in x)))
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def load_csv(path: str, protocol: OpenSetProtocol) -> OpenSetDataset:
    """Load the interchange CSV, validating labels against the protocol."""
    with open(path, encoding="utf-8") as f:
        lines = [ln.rstrip("\n") for ln in f]
    if not lines or not lines[0].startswith("domain,label,"):
        raise ValueError("missing or malformed header row")
    width = len(lines[0].split(","))
    d = width - 2

    src_x, src_y, tgt_x, tgt_y = [], [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if parts[0] == "domain":
            raise ValueError(f"duplicate header at line {lineno}")
        if len(parts) != width:
            raise ValueError(
                f"line {lineno}: expected {width} fields, got {len(parts)}"
            )
        domain = parts[0]
        if domain not in CSV_DOMAINS:
            raise ValueError(f"line {lineno}: unknown domain {domain!r}")
        try:
            label = int(parts[1])
            feats = [float(v) for v in parts[2:]]
        except ValueError as e:
            raise ValueError(f"line {lineno}: {e}") from None
        if domain == "source":
            if label not in protocol.known and label not in protocol.source_unknown:
                raise ValueError(f"line {lineno}: source label {label} outside the protocol")
            src_x.append(feats)
            src_y.append(label)
        else:
            if label not in protocol.known and label not in protocol.target_unknown:
                raise ValueError(f"line {lineno}: target label {label} outside the protocol")
            tgt_x.append(feats)
            tgt_y.append(label)
    return OpenSetDataset(
        np.asarray(src_x, dtype=np.float64).reshape(len(src_x), d),
        np.asarray(src_y, dtype=np.int64),
        np.asarray(tgt_x, dtype=np.float64).reshape(len(tgt_x), d),
        np.asarray(tgt_y, dtype=np.int64),
        protocol,
    )
