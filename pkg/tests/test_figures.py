"""Figure rendering and the fixed segmentation palette."""

import numpy as np
import pytest

from mmnets import figures as F


def fake_history(n=12):
    rows = []
    for i in range(n):
        stage = 1 + i // 4
        rows.append({
            "iteration": i + 1, "stage": stage,
            "loss_total": 10.0 / (i + 1), "loss_rgb": 1.0 / (i + 1),
            "loss_seg": 2.0 / (i + 1), "loss_depth": 0.5 / (i + 1),
            "loss_lat": 0.1 * stage, "loss_pp": 0.0,
            "af_rs": float("nan") if i < 2 else 0.1 + 0.05 * i,
            "af_rd": 0.2 + 0.04 * i,
            "af_ds": float("nan") if i % 3 else 0.1 + 0.03 * i,
        })
    return rows


class TestPalette:
    def test_labels_map_to_palette_rows(self):
        labels = np.array([[0, 1], [15, 7]])
        rgb = F.labels_to_rgb(labels)
        assert rgb.shape == (3, 2, 2)
        assert rgb.dtype == np.float32
        np.testing.assert_allclose(rgb[:, 0, 0], F.SEG_PALETTE[0])
        np.testing.assert_allclose(rgb[:, 0, 1], F.SEG_PALETTE[1])
        np.testing.assert_allclose(rgb[:, 1, 0], F.SEG_PALETTE[15])
        np.testing.assert_allclose(rgb[:, 1, 1], F.SEG_PALETTE[7])

    def test_palette_has_sixteen_distinct_colors(self):
        assert len(F.SEG_PALETTE) == 16
        assert len(set(F.SEG_PALETTE)) == 16

    def test_non_plane_input_rejected(self):
        with pytest.raises(ValueError, match="2-D"):
            F.labels_to_rgb(np.zeros((1, 4, 4), dtype=int))

    def test_out_of_range_labels_rejected(self):
        with pytest.raises(ValueError, match="palette"):
            F.labels_to_rgb(np.full((2, 2), 16))
        with pytest.raises(ValueError, match="palette"):
            F.labels_to_rgb(np.full((2, 2), -1))


class TestFigures:
    def test_report_figures_written(self, tmp_path):
        paths = F.render_report_figures(fake_history(), tmp_path)
        assert [p.name for p in paths] == ["loss_curves.png",
                                           "alignment_curves.png"]
        for p in paths:
            data = p.read_bytes()
            assert data[:8] == b"\x89PNG\r\n\x1a\n"
            assert len(data) > 1000

    def test_rendering_is_byte_deterministic(self, tmp_path):
        history = fake_history()
        a = tmp_path / "a"
        b = tmp_path / "b"
        pa = F.render_report_figures(history, a)
        pb = F.render_report_figures(history, b)
        for x, y in zip(pa, pb):
            assert x.read_bytes() == y.read_bytes()

    def test_all_nan_alignment_still_renders(self, tmp_path):
        history = fake_history(4)
        for row in history:
            row["af_rs"] = row["af_rd"] = row["af_ds"] = float("nan")
        F.plot_alignment_curves(history, tmp_path / "af.png")
        assert (tmp_path / "af.png").stat().st_size > 0
