"""Open-set evaluation protocol: predict rule, mAcc, exports."""

import math

import numpy as np
import pytest

from conftest import manual_dataset
from openset_ensemble.evaluation import (
    UNKNOWN,
    entropy_histogram,
    evaluate,
    export_features,
    predict,
    write_entropy_histogram,
)
from openset_ensemble.nn import Mlp, UnknownDetector


def forced_detector(num_classes: int, unknown: bool) -> UnknownDetector:
    """Detector whose output bias pins the decision to one side."""
    det = UnknownDetector(num_classes=num_classes)
    det.net.biases[-1][:] = 50.0 if unknown else -50.0
    det.fitted = True
    return det


def onehot_rows(labels, width):
    return np.eye(width)[labels] * 10.0  # scaled so argmax is sharp


def identity_net(width: int) -> Mlp:
    net = Mlp([width, width])
    net.weights[0] = np.eye(width)
    return net


class TestPredict:
    def test_detector_forced_known_uses_argmax(self):
        net = identity_net(3)
        x = onehot_rows([2, 0, 1], 3)
        preds = predict(net, forced_detector(3, unknown=False), x, num_known=3)
        np.testing.assert_array_equal(preds, [2, 0, 1])

    def test_detector_forced_unknown_overrides_argmax(self):
        net = identity_net(3)
        x = onehot_rows([2, 0], 3)
        preds = predict(net, forced_detector(3, unknown=True), x, num_known=3)
        np.testing.assert_array_equal(preds, [UNKNOWN, UNKNOWN])

    def test_c_plus_one_argmax_maps_extra_class(self):
        net = identity_net(4)  # 3 known + 1 bucket
        x = onehot_rows([0, 3, 2], 4)
        preds = predict(net, None, x, num_known=3)
        np.testing.assert_array_equal(preds, [0, UNKNOWN, 2])

    def test_plain_c_way_never_unknown(self):
        net = identity_net(3)
        preds = predict(net, None, onehot_rows([0, 1, 2], 3), num_known=3)
        assert UNKNOWN not in preds

    def test_width_mismatch_without_detector(self):
        net = identity_net(5)
        with pytest.raises(ValueError, match="needs a detector"):
            predict(net, None, np.zeros((1, 5)), num_known=3)


def bucket_dataset():
    """Two known classes + one unknown class, one-hot features."""
    target_x = np.concatenate(
        [onehot_rows([0] * 4, 3), onehot_rows([1] * 4, 3), onehot_rows([2] * 4, 3)]
    )
    target_y = np.array([0] * 4 + [1] * 4 + [5] * 4)
    return manual_dataset(
        onehot_rows([0, 1, 2], 3),
        [0, 1, 4],
        target_x,
        target_y,
        known=[0, 1],
        su=[4],
        tu=[5],
    )


class TestEvaluate:
    def test_perfect_predictor(self):
        ds = bucket_dataset()
        report = evaluate(identity_net(3), None, ds)
        assert report.macc == 1.0
        assert report.per_class_acc == [1.0, 1.0]
        assert report.unknown_acc == 1.0
        conf = np.array(report.confusion)
        assert np.all(conf == np.diag(np.diag(conf)))

    def test_macc_is_unweighted_mean(self):
        # degrade class 1 to 0.5 and the unknown bucket to 0.0
        ds = bucket_dataset()
        net = identity_net(3)
        preds_x = ds.target_x.copy()
        preds_x[6:8] = onehot_rows([0, 0], 3)  # half of class 1 -> class 0
        preds_x[8:] = onehot_rows([0] * 4, 3)  # all unknowns -> class 0
        ds2 = manual_dataset(
            ds.source_x, ds.source_y, preds_x, ds.hidden_target_labels_for_eval(),
            known=[0, 1], su=[4], tu=[5],
        )
        report = evaluate(net, None, ds2)
        assert report.per_class_acc == [1.0, 0.5]
        assert report.unknown_acc == 0.0
        assert report.macc == pytest.approx(0.5)

    def test_all_unknown_predictor(self):
        ds = bucket_dataset()
        report = evaluate(identity_net(3), forced_detector(3, unknown=True), ds)
        assert report.unknown_acc == 1.0
        assert report.per_class_acc == [0.0, 0.0]
        assert report.macc == pytest.approx(1.0 / 3.0)

    def test_duplication_invariance(self):
        ds = bucket_dataset()
        base = evaluate(identity_net(3), None, ds).macc
        dup = manual_dataset(
            ds.source_x,
            ds.source_y,
            np.concatenate([ds.target_x, ds.target_x[:4]]),
            np.concatenate([ds.hidden_target_labels_for_eval(), [0] * 4]),
            known=[0, 1],
            su=[4],
            tu=[5],
        )
        assert evaluate(identity_net(3), None, dup).macc == pytest.approx(base)

    def test_empty_bucket_excluded_with_warning(self):
        ds = manual_dataset(
            onehot_rows([0, 1, 2], 3),
            [0, 1, 4],
            onehot_rows([0, 1], 3),
            [0, 1],  # no target-unknown samples at all
            known=[0, 1],
            su=[4],
            tu=[5],
        )
        with pytest.warns(UserWarning, match="no target samples"):
            report = evaluate(identity_net(3), None, ds)
        assert report.unknown_acc is None
        assert report.macc == pytest.approx(1.0)

    def test_confusion_rows_sum_to_counts(self):
        ds = bucket_dataset()
        report = evaluate(identity_net(3), None, ds)
        assert [sum(row) for row in report.confusion] == [4, 4, 4]
        assert report.n_evaluated == 12


class TestExports:
    def test_feature_export_schema(self, tmp_path):
        ds = bucket_dataset()
        path = str(tmp_path / "features.csv")
        export_features(identity_net(3), None, ds, path)
        lines = open(path).read().strip().split("\n")
        assert len(lines) == 1 + len(ds.source_x) + len(ds.target_x)
        header = lines[0].split(",")
        assert header[:4] == ["domain", "true_label", "pred_label", "entropy"]
        for ln in lines[1:]:
            parts = ln.split(",")
            assert parts[0] in ("source", "target")
            assert 0.0 <= float(parts[3]) <= math.log(3) + 1e-9

    def test_feature_export_round_trip(self, tmp_path):
        ds = bucket_dataset()
        net = identity_net(3)
        path = str(tmp_path / "features.csv")
        export_features(net, None, ds, path)
        lines = open(path).read().strip().split("\n")[1:]
        # the trailing columns are the raw inputs; compare the first row
        first = [float(v) for v in lines[0].split(",")[-ds.input_dim:]]
        np.testing.assert_allclose(first, ds.source_x[0], atol=1e-9)

    def test_histogram_counts_sum(self):
        ds = bucket_dataset()
        bins = entropy_histogram(identity_net(3), ds)
        assert len(bins) == 20
        assert sum(ck + cu for _, _, ck, cu in bins) == len(ds.target_x)

    def test_one_hot_predictions_fill_first_bin(self):
        ds = bucket_dataset()
        net = identity_net(3)
        net.weights[0] *= 100.0  # essentially one-hot outputs
        bins = entropy_histogram(net, ds)
        assert bins[0][2] + bins[0][3] == len(ds.target_x)

    def test_histogram_file_schema(self, tmp_path):
        ds = bucket_dataset()
        path = str(tmp_path / "hist.csv")
        write_entropy_histogram(identity_net(3), ds, path)
        lines = open(path).read().strip().split("\n")
        assert lines[0] == "bin_lo,bin_hi,count_known,count_unknown"
        assert len(lines) == 21
