"""Open-set evaluation: per-class accuracy, mAcc, entropy statistics.

This is the only module that reads the hidden target labels. Inference
runs on the teacher network; baselines keep their teacher as an exact
copy of the trained network.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from pydantic import BaseModel

from .data import OpenSetDataset
from .nn import Mlp, UnknownDetector
from .numeric import entropy

UNKNOWN = -1


class EvalReport(BaseModel):
    """Serialized with fixed keys; `per_class_acc` is indexed by mapped
    known-class id, with null for a class absent from the target set."""

    per_class_acc: list[float | None]
    unknown_acc: float | None
    macc: float
    confusion: list[list[int]]
    entropy_known_mean: float
    entropy_unknown_mean: float
    n_evaluated: int


def predict(net: Mlp, det: UnknownDetector | None, x: np.ndarray, num_known: int) -> np.ndarray:
    """Class ids 0..C-1 or UNKNOWN (-1) per row.

    With a detector: the rejection decision takes precedence over the
    argmax. Without one, a (C+1)-way network maps its extra class to
    UNKNOWN; a C-way network can never predict UNKNOWN.
    """
    probs = net.predict_proba(x)
    preds = probs.argmax(axis=1).astype(np.int64)
    if det is not None:
        preds = np.where(det.is_unknown(probs), UNKNOWN, np.minimum(preds, num_known - 1))
    elif net.output_dim == num_known + 1:
        preds = np.where(preds == num_known, UNKNOWN, preds)
    elif net.output_dim != num_known:
        raise ValueError(
            f"network with {net.output_dim} outputs needs a detector for {num_known} known classes"
        )
    return preds


def target_entropy_split(net: Mlp, dataset: OpenSetDataset) -> tuple[float, float]:
    """Mean prediction entropy on target-known vs target-unknown samples."""
    probs = net.predict_proba(dataset.target_x)
    h = np.asarray(entropy(probs))
    known_mask = dataset.target_known_mask_for_eval()
    mean_known = float(h[known_mask].mean()) if known_mask.any() else math.nan
    mean_unknown = float(h[~known_mask].mean()) if (~known_mask).any() else math.nan
    return mean_known, mean_unknown


def _true_buckets(dataset: OpenSetDataset) -> np.ndarray:
    """Mapped target truth: 0..C-1 for known classes, C for unknown."""
    c = dataset.num_known
    raw = dataset.hidden_target_labels_for_eval()
    known_mask = dataset.target_known_mask_for_eval()
    truth = np.full(len(raw), c, dtype=np.int64)
    for i in np.flatnonzero(known_mask):
        truth[i] = dataset.known_class_of(int(raw[i]))
    return truth


def evaluate(net: Mlp, det: UnknownDetector | None, dataset: OpenSetDataset) -> EvalReport:
    """mAcc protocol: all target-unknown classes collapse into one bucket;
    mAcc is the unweighted mean over the C+1 per-bucket accuracies."""
    c = dataset.num_known
    truth = _true_buckets(dataset)
    preds = predict(net, det, dataset.target_x, c)
    preds_bucket = np.where(preds == UNKNOWN, c, preds)

    confusion = np.zeros((c + 1, c + 1), dtype=np.int64)
    for t, p in zip(truth, preds_bucket):
        confusion[t, p] += 1

    accs: list[float | None] = []
    for k in range(c + 1):
        total = int(confusion[k].sum())
        if total == 0:
            warnings.warn(f"class bucket {k} has no target samples; excluded from mAcc")
            accs.append(None)
        else:
            accs.append(float(confusion[k, k] / total))
    present = [a for a in accs if a is not None]
    macc = float(np.mean(present))

    ent_known, ent_unknown = target_entropy_split(net, dataset)
    return EvalReport(
        per_class_acc=accs[:c],
        unknown_acc=accs[c],
        macc=macc,
        confusion=confusion.tolist(),
        entropy_known_mean=ent_known,
        entropy_unknown_mean=ent_unknown,
        n_evaluated=len(truth),
    )


def export_features(net: Mlp, det: UnknownDetector | None, dataset: OpenSetDataset, path: str) -> None:
    """CSV of last-hidden-layer features for every sample, both domains.

    Columns: domain,true_label,pred_label,entropy,feat_1..feat_h,x_1..x_d
    (raw labels; -1 marks an unknown prediction; raw inputs trail so the
    2-D benchmark keeps its coordinates inspectable).
    """
    c = dataset.num_known
    rows = []
    h_width = net.layer_sizes[-2]
    header = (
        "domain,true_label,pred_label,entropy,"
        + ",".join(f"feat_{i + 1}" for i in range(h_width))
        + ","
        + ",".join(f"x_{i + 1}" for i in range(dataset.input_dim))
    )
    rows.append(header)

    def emit(domain: str, x: np.ndarray, labels: np.ndarray) -> None:
        feats = net.hidden_features(x)
        probs = net.predict_proba(x)
        h = np.asarray(entropy(probs))
        preds = predict(net, det, x, c)
        for i in range(len(x)):
            rows.append(
                ",".join(
                    [domain, str(int(labels[i])), str(int(preds[i])), repr(float(h[i]))]
                    + [repr(float(v)) for v in feats[i]]
                    + [repr(float(v)) for v in x[i]]
                )
            )

    emit("source", dataset.source_x, dataset.source_y)
    emit("target", dataset.target_x, dataset.hidden_target_labels_for_eval())
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(rows) + "\n")


def entropy_histogram(net: Mlp, dataset: OpenSetDataset, bins: int = 20) -> list[tuple[float, float, int, int]]:
    """Counts of target sample entropies in uniform bins over [0, ln C].

    Values at or above the top edge land in the last bin.
    """
    c = dataset.num_known
    probs = net.predict_proba(dataset.target_x)
    h = np.asarray(entropy(probs))
    known_mask = dataset.target_known_mask_for_eval()
    hi = math.log(c)
    edges = np.linspace(0.0, hi, bins + 1)
    idx = np.clip(np.digitize(h, edges) - 1, 0, bins - 1)
    out = []
    for b in range(bins):
        in_bin = idx == b
        out.append(
            (
                float(edges[b]),
                float(edges[b + 1]),
                int(np.sum(in_bin & known_mask)),
                int(np.sum(in_bin & ~known_mask)),
            )
        )
    return out


def write_entropy_histogram(net: Mlp, dataset: OpenSetDataset, path: str, bins: int = 20) -> None:
    rows = ["bin_lo,bin_hi,count_known,count_unknown"]
    for lo, hi, ck, cu in entropy_histogram(net, dataset, bins):
        rows.append(f"{lo!r},{hi!r},{ck},{cu}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(rows) + "\n")
