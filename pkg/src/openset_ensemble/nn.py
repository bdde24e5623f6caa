"""Small fully-connected networks with hand-written backprop.

The classifier is a plain affine/ReLU stack (no normalization layers).
The teacher copy is maintained as an exponential moving average of the
student and never receives gradients.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .numeric import Rng, softmax


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


class Mlp:
    """Affine layers with ReLU between them and identity at the output.

    Weights have shape (fan_in, fan_out); inputs are (batch, fan_in).
    """

    def __init__(self, layer_sizes: list[int]):
        if len(layer_sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.layer_sizes = list(layer_sizes)
        self.weights = [
            np.zeros((a, b)) for a, b in zip(layer_sizes[:-1], layer_sizes[1:])
        ]
        self.biases = [np.zeros(b) for b in layer_sizes[1:]]

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    def num_params(self) -> int:
        return sum((a + 1) * b for a, b in zip(self.layer_sizes[:-1], self.layer_sizes[1:]))

    def init_glorot(self, rng: Rng) -> "Mlp":
        """Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases."""
        for i, w in enumerate(self.weights):
            limit = np.sqrt(6.0 / (w.shape[0] + w.shape[1]))
            u = rng.uniforms(w.shape)
            self.weights[i] = (2.0 * u - 1.0) * limit
            self.biases[i] = np.zeros(w.shape[1])
        return self

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.input_dim:
            raise ValueError(
                f"input width mismatch: expected {self.input_dim}, got {x.shape[1]}"
            )
        a = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = z if i == last else _relu(z)
        return a

    def forward_cache(self, x: np.ndarray):
        """Forward pass keeping pre-activations for backprop."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.input_dim:
            raise ValueError(
                f"input width mismatch: expected {self.input_dim}, got {x.shape[1]}"
            )
        activations = [x]
        pre = []
        a = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            pre.append(z)
            a = z if i == last else _relu(z)
            activations.append(a)
        return a, (activations, pre)

    def backward(self, cache, dlogits: np.ndarray):
        """Gradients of a scalar loss given dL/dlogits.

        Returns (dweights, dbiases) matching the parameter lists.
        """
        activations, pre = cache
        dws = [None] * len(self.weights)
        dbs = [None] * len(self.biases)
        delta = np.asarray(dlogits, dtype=np.float64)
        for i in reversed(range(len(self.weights))):
            if i != len(self.weights) - 1:
                delta = delta * (pre[i] > 0)
            dws[i] = activations[i].T @ delta
            dbs[i] = delta.sum(axis=0)
            delta = delta @ self.weights[i].T
        return dws, dbs

    def hidden_features(self, x: np.ndarray) -> np.ndarray:
        """Activations of the last hidden layer."""
        _, (activations, _) = self.forward_cache(x)
        return activations[-2]

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.forward(x))

    # flat parameter views, used by the gradient checker and checkpoints
    def get_flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def set_flat(self, flat: np.ndarray) -> None:
        pos = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = flat[pos : pos + w.size].reshape(w.shape).copy()
            pos += w.size
            self.biases[i] = flat[pos : pos + b.size].copy()
            pos += b.size
        if pos != flat.size:
            raise ValueError("flat parameter vector has wrong length")

    def copy(self) -> "Mlp":
        m = Mlp(self.layer_sizes)
        m.weights = [w.copy() for w in self.weights]
        m.biases = [b.copy() for b in self.biases]
        return m


@dataclass
class StudentTeacherModel:
    """Student trained by gradient, teacher tracking it by EMA."""

    student: Mlp
    teacher: Mlp
    ema_decay: float = 0.99

    def __post_init__(self):
        if not (0.0 <= self.ema_decay <= 1.0):
            raise ValueError(f"ema_decay must lie in [0, 1], got {self.ema_decay}")
        if self.student.layer_sizes != self.teacher.layer_sizes:
            raise ValueError("student and teacher must share layer sizes")

    @classmethod
    def create(cls, layer_sizes: list[int], rng: Rng, ema_decay: float = 0.99):
        student = Mlp(layer_sizes).init_glorot(rng)
        return cls(student=student, teacher=student.copy(), ema_decay=ema_decay)

    def ema_update(self) -> None:
        """teacher <- decay * teacher + (1 - decay) * student, elementwise."""
        a = self.ema_decay
        for i in range(len(self.student.weights)):
            self.teacher.weights[i] = (
                a * self.teacher.weights[i] + (1.0 - a) * self.student.weights[i]
            )
            self.teacher.biases[i] = (
                a * self.teacher.biases[i] + (1.0 - a) * self.student.biases[i]
            )


class UnknownDetector:
    """Two affine layers over a probability vector, one rejection logit.

    decision(p) is "unknown" iff sigmoid(logit) > threshold. The detector
    must be fitted before use.
    """

    def __init__(self, num_classes: int, hidden: int = 16, threshold: float = 0.5):
        self.net = Mlp([num_classes, hidden, 1])
        self.threshold = threshold
        self.fitted = False

    def logit(self, probs: np.ndarray) -> np.ndarray:
        return self.net.forward(probs)[:, 0]

    def score(self, probs: np.ndarray) -> np.ndarray:
        """Sigmoid unknown-probability per row."""
        z = self.logit(np.atleast_2d(probs))
        return 1.0 / (1.0 + np.exp(-z))

    def is_unknown(self, probs: np.ndarray) -> np.ndarray:
        if not self.fitted:
            raise RuntimeError("detector not fitted")
        return self.score(probs) > self.threshold


def save_checkpoint(model: StudentTeacherModel, path: str) -> None:
    """JSON checkpoint: layer sizes, EMA decay, then parameters.

    Parameters are listed per network in layer order, each layer as the
    row-major flattened weight matrix followed by the bias vector.
    """
    doc = {
        "layer_sizes": model.student.layer_sizes,
        "ema_decay": model.ema_decay,
        "student": model.student.get_flat().tolist(),
        "teacher": model.teacher.get_flat().tolist(),
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f)


def load_checkpoint(path: str) -> StudentTeacherModel:
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    student = Mlp(doc["layer_sizes"])
    student.set_flat(np.asarray(doc["student"], dtype=np.float64))
    teacher = Mlp(doc["layer_sizes"])
    teacher.set_flat(np.asarray(doc["teacher"], dtype=np.float64))
    return StudentTeacherModel(student=student, teacher=teacher, ema_decay=doc["ema_decay"])
