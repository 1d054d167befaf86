"""Evaluation metric checks against hand values and brute-force oracles."""

import math

import numpy as np
import pytest

from mmnets import data as D
from mmnets import metrics as M


def brute_seg_metrics(pred, gt, k):
    """Per-pixel counting oracle, no vectorization."""
    iou = []
    correct = 0
    total = 0
    for cls in range(k):
        inter = union = 0
        for p, g in zip(pred.reshape(-1), gt.reshape(-1)):
            if p == cls and g == cls:
                inter += 1
            if p == cls or g == cls:
                union += 1
        iou.append(inter / union if union else None)
    for p, g in zip(pred.reshape(-1), gt.reshape(-1)):
        correct += int(p == g)
        total += 1
    defined = [v for v in iou if v is not None]
    return iou, sum(defined) / len(defined), correct / total


class TestSegmentationMetrics:
    def test_perfect_prediction(self):
        labels = np.array([[0, 1], [2, 2]])
        m = M.segmentation_metrics(labels, labels, 3)
        assert np.allclose(m.per_class_iou, 1.0)
        assert m.miou == 1.0 and m.global_acc == 1.0

    def test_hand_confusion_2x2(self):
        pred = np.array([[0, 0], [1, 1]])
        gt = np.array([[0, 1], [1, 1]])
        m = M.segmentation_metrics(pred, gt, 2)
        assert m.per_class_iou[0] == pytest.approx(0.5, abs=1e-6)
        assert m.per_class_iou[1] == pytest.approx(2 / 3, abs=1e-6)
        assert m.miou == pytest.approx((0.5 + 2 / 3) / 2, abs=1e-6)
        assert m.global_acc == pytest.approx(0.75, abs=1e-6)

    def test_absent_class_excluded(self):
        pred = np.array([[0, 0], [1, 1]])
        gt = np.array([[0, 1], [1, 1]])
        m = M.segmentation_metrics(pred, gt, 5)
        assert np.isnan(m.per_class_iou[2:]).all()
        assert list(m.defined_classes()) == [0, 1]
        assert m.miou == pytest.approx((0.5 + 2 / 3) / 2, abs=1e-6)

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        k = 5
        pred = rng.integers(0, k, (8, 8))
        gt = rng.integers(0, k - 1, (8, 8))       # leave a class possibly absent
        m = M.segmentation_metrics(pred, gt, k)
        iou, miou, acc = brute_seg_metrics(pred, gt, k)
        for got, want in zip(m.per_class_iou, iou):
            if want is None:
                assert np.isnan(got)
            else:
                assert got == pytest.approx(want, abs=1e-12)
        assert m.miou == pytest.approx(miou, abs=1e-12)
        assert m.global_acc == pytest.approx(acc, abs=1e-12)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="labels"):
            M.segmentation_metrics(np.array([0, 3]), np.array([0, 1]), 3)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shapes"):
            M.segmentation_metrics(np.zeros(4, int), np.zeros(5, int), 2)


class TestDepthMetrics:
    def test_perfect_prediction(self):
        gt = np.linspace(0.2, 0.9, 16).reshape(1, 4, 4)
        m = M.depth_metrics(gt, gt)
        assert m.delta1 == m.delta2 == m.delta3 == 1.0
        assert m.rmse_lin == 0.0 and m.rmse_log == 0.0

    def test_uniform_ratio_1p3(self):
        gt = np.full((2, 3), 0.5)
        m = M.depth_metrics(1.3 * gt, gt)
        assert m.delta1 == 0.0
        assert m.delta2 == 1.0 and m.delta3 == 1.0

    def test_rmse_log_single_pixel(self):
        m = M.depth_metrics(np.array([math.e ** 2]), np.array([math.e]))
        assert m.rmse_log == pytest.approx(1.0, abs=1e-9)

    def test_rmse_lin_hand_value(self):
        m = M.depth_metrics(np.array([1.0, 2.0]), np.array([2.0, 2.0]))
        assert m.rmse_lin == pytest.approx(math.sqrt(0.5), abs=1e-12)

    def test_delta_monotone(self):
        rng = np.random.default_rng(0)
        gt = rng.uniform(0.1, 1.0, 200)
        pred = gt * rng.uniform(0.5, 2.0, 200)
        m = M.depth_metrics(pred, gt)
        assert m.delta1 <= m.delta2 <= m.delta3

    def test_nonpositive_pred_clamped(self):
        m = M.depth_metrics(np.array([-1.0]), np.array([1.0]))
        assert m.delta3 == 0.0 and np.isfinite(m.rmse_log)

    def test_nonpositive_gt_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            M.depth_metrics(np.array([0.5]), np.array([0.0]))

    def test_symmetric_ratio(self):
        """delta(u, v) is symmetric, so swapping pred/gt keeps deltas."""
        rng = np.random.default_rng(1)
        gt = rng.uniform(0.2, 1.0, 50)
        pred = gt * rng.uniform(0.7, 1.4, 50)
        a = M.depth_metrics(pred, gt)
        b = M.depth_metrics(gt, pred)
        assert a.delta1 == b.delta1 and a.delta3 == b.delta3


@pytest.fixture(scope="module")
def fitted():
    cfg = D.OpponentConfig()
    train = [D.gen_opponent_sample(5, cfg, i, class_label=i % 10)
             for i in range(80)]
    test = [D.gen_opponent_sample(5, cfg, 1000 + i, class_label=i % 10)
            for i in range(40)]
    oracle = M.ColorShapeOracle().fit(
        [s.theta3 for s in train], [s.class_label for s in train])
    return oracle, test


class TestOpponentOracle:

    def test_self_consistency_high(self, fitted):
        oracle, test = fitted
        acc = M.opponent_accuracy([s.theta3 for s in test],
                                  [s.class_label for s in test], oracle)
        assert acc >= 0.9

    def test_gray_images_near_chance(self, fitted):
        oracle, test = fitted
        gray = [np.full_like(s.theta3, 0.3) for s in test]
        acc = M.opponent_accuracy(gray, [s.class_label for s in test], oracle)
        assert acc <= 0.3

    def test_unfitted_rejected(self):
        with pytest.raises(RuntimeError, match="not fitted"):
            M.ColorShapeOracle().predict([np.zeros((3, 4, 4))])

    def test_deterministic(self):
        cfg = D.OpponentConfig()
        imgs = [D.gen_opponent_sample(2, cfg, i, class_label=i % 10).theta3
                for i in range(20)]
        labels = [i % 10 for i in range(20)]
        a = M.ColorShapeOracle().fit(imgs, labels).predict(imgs)
        b = M.ColorShapeOracle().fit(imgs, labels).predict(imgs)
        np.testing.assert_array_equal(a, b)


class TestReportEmission:
    def _table(self):
        t = M.ReportTable(M.seg_metrics_columns(3))
        m = M.segmentation_metrics(np.array([[0, 0], [1, 1]]),
                                   np.array([[0, 1], [1, 1]]), 3)
        t.add_row("D->S", M.seg_metrics_values(m))
        return t, m

    def test_byte_identical(self, tmp_path):
        t, _ = self._table()
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        M.emit_report(t, p1, "csv")
        M.emit_report(t, p2, "csv")
        assert p1.read_bytes() == p2.read_bytes()

    def test_csv_roundtrip(self, tmp_path):
        t, m = self._table()
        path = tmp_path / "r.csv"
        M.emit_report(t, path, "csv")
        cols, rows = M.read_report_csv(path)
        assert cols == M.seg_metrics_columns(3)
        label, values = rows[0]
        assert label == "D->S"
        assert values[0] == pytest.approx(m.per_class_iou[0], abs=1e-4)
        assert np.isnan(values[2])                 # class 2 absent

    def test_column_count_matches_k(self):
        assert len(M.seg_metrics_columns(7)) == 7 + 2

    def test_text_table_layout(self, tmp_path):
        t, _ = self._table()
        path = tmp_path / "r.txt"
        M.emit_report(t, path, "text-table")
        lines = path.read_text().splitlines()
        assert lines[0].split()[0] == "row"
        assert "miou" in lines[0] and "global" in lines[0]
        assert set(lines[1]) <= {"-", " "}
        assert lines[2].startswith("D->S")

    def test_unknown_format_rejected(self, tmp_path):
        t, _ = self._table()
        with pytest.raises(ValueError, match="format"):
            M.emit_report(t, tmp_path / "x", "json")

    def test_row_width_validated(self):
        t = M.ReportTable(["a", "b"])
        with pytest.raises(ValueError, match="columns"):
            t.add_row("r", [1.0])
