"""Shared fixtures: small datasets and models sized for fast tests."""

import numpy as np
import pytest

from openset_ensemble.data import OpenSetDataset, OpenSetProtocol, SyntheticSpec, generate_synthetic
from openset_ensemble.nn import Mlp, StudentTeacherModel
from openset_ensemble.numeric import Rng
from openset_ensemble.objective import StreamBatch


# verdict lines recorded by the acceptance tests, echoed after the run
# (pytest captures stdout at the fd level, so tests cannot print directly)
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


SMALL_SPEC = SyntheticSpec(
    c_known=3,
    n_unknown_source=2,
    n_unknown_target=2,
    samples_per_class=20,
    seed=7,
)


@pytest.fixture(scope="session")
def small_dataset() -> OpenSetDataset:
    return generate_synthetic(SMALL_SPEC)


def make_model(layer_sizes, seed=0, ema_decay=0.99) -> StudentTeacherModel:
    model = StudentTeacherModel.create(list(layer_sizes), Rng(seed), ema_decay=ema_decay)
    # nonzero biases keep pre-activations off the exact ReLU kink, where
    # finite differences and the subgradient legitimately disagree
    bias_rng = Rng(seed + 2)
    for i, b in enumerate(model.student.biases):
        model.student.biases[i] = 0.1 * bias_rng.normals(b.shape)
    # decorrelate the teacher so consistency terms are nontrivial
    noise = Rng(seed + 1)
    for i, w in enumerate(model.teacher.weights):
        model.teacher.weights[i] = w + 0.05 * noise.normals(w.shape)
    return model


def make_batch(rng: Rng, input_dim: int, c: int, n_known=5, n_unknown=4, n_target=6) -> StreamBatch:
    return StreamBatch(
        known_x=rng.normals((n_known, input_dim)),
        known_y=rng.indices(c, n_known),
        unknown_x=rng.normals((n_unknown, input_dim)),
        target_student_x=rng.normals((n_target, input_dim)),
        target_teacher_x=rng.normals((n_target, input_dim)),
    )


def random_probs(rng: Rng, n: int, c: int) -> np.ndarray:
    """Valid probability rows from normalized positive draws."""
    raw = rng.uniforms((n, c)) + 1e-3
    return raw / raw.sum(axis=1, keepdims=True)


def manual_dataset(source_x, source_y, target_x, target_y, known, su, tu) -> OpenSetDataset:
    protocol = OpenSetProtocol(known=known, source_unknown=su, target_unknown=tu)
    return OpenSetDataset(
        np.asarray(source_x, dtype=float),
        np.asarray(source_y),
        np.asarray(target_x, dtype=float),
        np.asarray(target_y),
        protocol,
    )
