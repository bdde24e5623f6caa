"""CLI: flags, config files, exit codes, output files."""

import json

import numpy as np
from click.testing import CliRunner

from openset_ensemble.cli import main
from openset_ensemble.data import SyntheticSpec, generate_synthetic, save_csv

runner = CliRunner()

SMALL_DATASET = {
    "synthetic": {
        "c_known": 3,
        "n_unknown_source": 2,
        "n_unknown_target": 2,
        "samples_per_class": 15,
        "seed": 1,
    }
}


def write_config(tmp_path, **kw):
    doc = {"dataset": SMALL_DATASET, "train_overrides": {"epochs": 2, "detector_epochs": 5}}
    doc.update(kw)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return str(path)


class TestRunCommand:
    def test_single_run_exit_zero(self, tmp_path):
        cfg = write_config(tmp_path)
        result = runner.invoke(
            main, ["run", "--config", cfg, "--method", "source_only", "--seed", "0",
                   "--out", str(tmp_path / "runs")]
        )
        assert result.exit_code == 0, result.output
        assert "source_only" in result.output and "medians:" in result.output
        assert (tmp_path / "runs" / "source_only_seed0_report.json").exists()

    def test_flags_override_config(self, tmp_path):
        cfg = write_config(tmp_path, methods=["kase"], out_dir=str(tmp_path / "from_config"))
        result = runner.invoke(
            main, ["run", "--config", cfg, "--method", "source_only", "--seed", "0",
                   "--out", str(tmp_path / "from_flag"), "--epochs", "2"]
        )
        assert result.exit_code == 0, result.output
        assert (tmp_path / "from_flag" / "source_only_seed0_report.json").exists()
        assert not (tmp_path / "from_config").exists()

    def test_weight_formula_and_no_reweight_flags(self, tmp_path):
        cfg = write_config(tmp_path)
        result = runner.invoke(
            main, ["run", "--config", cfg, "--method", "kase", "--seed", "0",
                   "--out", str(tmp_path / "runs"), "--epochs", "2",
                   "--weight-formula", "literal", "--no-reweight"]
        )
        assert result.exit_code == 0, result.output

    def test_unknown_method_exit_two(self, tmp_path):
        result = runner.invoke(
            main, ["run", "--method", "bogus", "--seed", "0", "--out", str(tmp_path)]
        )
        assert result.exit_code == 2
        assert "configuration error" in result.output

    def test_malformed_config_exit_two(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        result = runner.invoke(main, ["run", "--config", str(bad)])
        assert result.exit_code == 2

    def test_missing_config_exit_two(self, tmp_path):
        result = runner.invoke(main, ["run", "--config", str(tmp_path / "absent.json")])
        assert result.exit_code == 2

    def test_failed_run_exit_one(self, tmp_path):
        # kase cannot train without source-unknown samples; the run is
        # recorded as failed and the command exits 1
        spec = SyntheticSpec(**SMALL_DATASET["synthetic"])
        ds = generate_synthetic(spec)
        keep = ~np.isin(ds.source_y, spec.protocol().source_unknown)
        from conftest import manual_dataset

        slim = manual_dataset(
            ds.source_x[keep], ds.source_y[keep], ds.target_x,
            ds.hidden_target_labels_for_eval(),
            known=spec.protocol().known, su=[], tu=spec.protocol().target_unknown,
        )
        csv_path = tmp_path / "slim.csv"
        save_csv(slim, str(csv_path))
        cfg = tmp_path / "config.json"
        cfg.write_text(json.dumps({
            "dataset": {"csv_path": str(csv_path), "protocol": slim.protocol.model_dump()},
            "train_overrides": {"epochs": 2},
        }))
        result = runner.invoke(
            main, ["run", "--config", str(cfg), "--method", "kase", "--seed", "0",
                   "--out", str(tmp_path / "runs")]
        )
        assert result.exit_code == 1
        assert "failed" in result.output


class TestGenerateData:
    def test_writes_csv(self, tmp_path):
        out = tmp_path / "bench.csv"
        result = runner.invoke(
            main, ["generate-data", "--out", str(out), "--c-known", "3",
                   "--unknown-source", "2", "--unknown-target", "2",
                   "--samples-per-class", "10", "--seed", "4"]
        )
        assert result.exit_code == 0, result.output
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "domain,label,feat_1,feat_2"
        assert len(lines) == 1 + 2 * 5 * 10

    def test_bad_path_exit_two(self):
        result = runner.invoke(
            main, ["generate-data", "--out", "/nonexistent-dir/bench.csv"]
        )
        assert result.exit_code == 2
