"""Experiment sweeps: method x seed grids with deterministic file output.

Every run writes its own report/trace/feature/histogram files; the
summary is recomputed from the written reports, so re-running a spec
reproduces every byte.
"""

from __future__ import annotations

import json
import statistics
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any

from pydantic import BaseModel, Field, model_validator

from .data import OpenSetDataset, OpenSetProtocol, SyntheticSpec, generate_synthetic, load_csv
from .evaluation import evaluate, export_features, write_entropy_histogram
from .nn import save_checkpoint
from .training import STUDENT_TEACHER_METHODS, TrainConfig, fit_unknown_detector, train

ALL_METHODS = ("source_only", "kase_no_kar", "kase_no_kaa", "kase", "closed_set_c_plus_1")


class DatasetSource(BaseModel):
    """Either a synthetic benchmark spec or a CSV path plus protocol."""

    synthetic: SyntheticSpec | None = None
    csv_path: str | None = None
    protocol: OpenSetProtocol | None = None

    @model_validator(mode="after")
    def _exactly_one(self):
        if self.synthetic is not None and self.csv_path is not None:
            raise ValueError("give either a synthetic spec or a csv_path, not both")
        if self.synthetic is None and self.csv_path is None:
            raise ValueError("dataset source missing")
        if self.csv_path is not None and self.protocol is None:
            raise ValueError("csv datasets need an explicit protocol")
        return self

    def load(self) -> OpenSetDataset:
        if self.synthetic is not None:
            return generate_synthetic(self.synthetic)
        return load_csv(self.csv_path, self.protocol)


class ExperimentSpec(BaseModel):
    dataset: DatasetSource = Field(default_factory=lambda: DatasetSource(synthetic=SyntheticSpec()))
    methods: list[str] = Field(default_factory=lambda: ["kase"])
    seeds: list[int] = Field(default_factory=lambda: [0])
    train_overrides: dict[str, Any] = Field(default_factory=dict)
    out_dir: str = "runs"
    jobs: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _check(self):
        if not self.methods or not self.seeds:
            raise ValueError("need at least one method and one seed")
        for m in self.methods:
            if m not in ALL_METHODS:
                raise ValueError(f"unknown method {m!r}; choose from {ALL_METHODS}")
        return self


class RunResult(BaseModel):
    method: str
    seed: int
    status: str
    macc: float | None = None
    error: str | None = None
    report_path: str | None = None


class ExperimentResult(BaseModel):
    runs: list[RunResult]
    summary: dict[str, Any]
    n_failed: int


def _json_bytes(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ": "), indent=1) + "\n"


def run_single(dataset: OpenSetDataset, spec: ExperimentSpec, method: str, seed: int) -> RunResult:
    out = Path(spec.out_dir)
    stem = f"{method}_seed{seed}"
    try:
        config = TrainConfig(method=method, seed=seed, **spec.train_overrides)
        model, trace = train(dataset, config)
        detector = None
        if method in STUDENT_TEACHER_METHODS:
            detector = fit_unknown_detector(model, dataset, config)
        report = evaluate(model.teacher, detector, dataset)

        report_path = out / f"{stem}_report.json"
        doc = {"method": method, "seed": seed, "report": report.model_dump()}
        report_path.write_text(_json_bytes(doc), encoding="utf-8")
        (out / f"{stem}_trace.csv").write_text(trace.to_csv(), encoding="utf-8")
        export_features(model.teacher, detector, dataset, str(out / f"{stem}_features.csv"))
        write_entropy_histogram(model.teacher, dataset, str(out / f"{stem}_entropy_hist.csv"))
        save_checkpoint(model, str(out / f"{stem}_model.json"))
        return RunResult(
            method=method, seed=seed, status="ok", macc=report.macc, report_path=str(report_path)
        )
    except Exception as e:  # a failed run must not kill the sweep
        return RunResult(
            method=method,
            seed=seed,
            status="error",
            error=f"{type(e).__name__}: {e}",
        )


def summarize_from_files(out_dir: str, runs: list[RunResult]) -> dict[str, Any]:
    """Summary rebuilt from the emitted report files, not in-memory state."""
    by_method: dict[str, dict[str, Any]] = {}
    for r in runs:
        entry = by_method.setdefault(r.method, {"macc_by_seed": {}, "median_macc": None})
        if r.status != "ok":
            continue
        doc = json.loads(Path(r.report_path).read_text(encoding="utf-8"))
        entry["macc_by_seed"][str(r.seed)] = doc["report"]["macc"]
    for entry in by_method.values():
        vals = list(entry["macc_by_seed"].values())
        if vals:
            entry["median_macc"] = statistics.median(vals)
    return by_method


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset = spec.dataset.load()

    grid = [(m, s) for m in spec.methods for s in spec.seeds]
    if spec.jobs > 1:
        with ThreadPoolExecutor(max_workers=spec.jobs) as pool:
            runs = list(pool.map(lambda ms: run_single(dataset, spec, *ms), grid))
    else:
        runs = [run_single(dataset, spec, m, s) for m, s in grid]

    summary = summarize_from_files(spec.out_dir, runs)
    (out / "summary.json").write_text(_json_bytes(summary), encoding="utf-8")

    rows = ["method,seed,macc,status"]
    for r in runs:
        rows.append(f"{r.method},{r.seed},{'' if r.macc is None else repr(r.macc)},{r.status}")
    (out / "summary.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")

    n_failed = sum(1 for r in runs if r.status != "ok")
    return ExperimentResult(runs=runs, summary=summary, n_failed=n_failed)
