"""Desk-scale open-set domain adaptation lab.

Student-teacher self-ensembling with entropy-aware unknown-class
handling, trained and evaluated on synthetic 2-D domain-shift benchmarks.
"""

from .data import OpenSetDataset, OpenSetProtocol, SyntheticSpec, generate_synthetic, load_csv
from .evaluation import EvalReport, evaluate, predict
from .experiments import ExperimentSpec, run_experiment
from .losses import LossBreakdown
from .nn import Mlp, StudentTeacherModel, UnknownDetector
from .numeric import Rng, entropy, softmax
from .training import TrainConfig, fit_unknown_detector, train

__all__ = [
    "EvalReport",
    "ExperimentSpec",
    "LossBreakdown",
    "Mlp",
    "OpenSetDataset",
    "OpenSetProtocol",
    "Rng",
    "StudentTeacherModel",
    "SyntheticSpec",
    "TrainConfig",
    "UnknownDetector",
    "entropy",
    "evaluate",
    "fit_unknown_detector",
    "generate_synthetic",
    "load_csv",
    "predict",
    "run_experiment",
    "softmax",
    "train",
]
