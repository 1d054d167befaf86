"""Dataset generator and image I/O checks."""

import numpy as np
import pytest

from mmnets import data as D


class TestSceneTriplets:
    def test_seed_determinism(self):
        cfg = D.SceneConfig()
        a = D.gen_scene_triplet(42, cfg, scene_id=3)
        b = D.gen_scene_triplet(42, cfg, scene_id=3)
        assert a.rgb.tobytes() == b.rgb.tobytes()
        assert a.depth.tobytes() == b.depth.tobytes()
        assert a.seg.tobytes() == b.seg.tobytes()

    def test_different_scene_ids_differ(self):
        cfg = D.SceneConfig()
        a = D.gen_scene_triplet(42, cfg, scene_id=3)
        b = D.gen_scene_triplet(42, cfg, scene_id=4)
        assert a.rgb.tobytes() != b.rgb.tobytes()

    def test_empty_scene_is_background(self):
        cfg = D.SceneConfig()
        t = D.render_scene(D.SceneDescriptor(scene_id=0, objects=[]), cfg)
        assert (t.seg == D.BACKGROUND_CLASS).all()
        assert (t.depth == D.BACKGROUND_DEPTH).all()

    def test_painter_algorithm_occlusion(self):
        cfg = D.SceneConfig()
        near = D.SceneObject("rectangle", 1, (1, 0, 0), 0.3, 0.5, 0.5, 0.5)
        far = D.SceneObject("rectangle", 2, (0, 1, 0), 0.6, 0.5, 0.5, 0.5)
        t = D.render_scene(D.SceneDescriptor(0, [far, near]), cfg)
        center = t.seg[16, 16]
        assert center == 1
        assert t.depth[0, 16, 16] == pytest.approx(0.3)

    def test_value_ranges(self):
        cfg = D.SceneConfig()
        for sid in range(5):
            t = D.gen_scene_triplet(7, cfg, scene_id=sid)
            assert 0.0 <= t.rgb.min() and t.rgb.max() <= 1.0
            assert 0.0 < t.depth.min() and t.depth.max() <= 1.0
            assert 0 <= t.seg.min() and t.seg.max() < cfg.k

    def test_rerender_consistency(self):
        """Depth and class at every pixel are produced by one object."""
        cfg = D.SceneConfig()
        desc = D.gen_scene_descriptor(11, cfg, scene_id=5)
        t = D.render_scene(desc, cfg)
        by_class = {o.class_id: o for o in desc.objects}
        for cls in np.unique(t.seg):
            if cls == D.BACKGROUND_CLASS:
                assert np.all(t.depth[0][t.seg == cls] == D.BACKGROUND_DEPTH)
            else:
                depths = {o.depth_plane for o in desc.objects if o.class_id == cls}
                seen = set(np.unique(t.depth[0][t.seg == cls]))
                assert seen <= {np.float32(d) for d in depths}

    def test_class_geometry_covers_all_classes(self):
        for cls in range(1, 8):
            shape, (lo, hi) = D.class_geometry(cls, 8)
            assert shape in ("rectangle", "ellipse", "triangle")
            assert 0.0 < lo < hi <= 0.9


class TestSplits:
    def test_disjoint_and_sized(self):
        split = D.make_splits(20, 6, seed=1, config=D.SceneConfig())
        assert len(split.d_rs) == len(split.d_rd) == 10
        assert len(split.d_ds_test) == 6
        split.validate_disjoint()
        assert not (set(split.rs_ids) & set(split.rd_ids))

    def test_seed_reproducibility(self):
        a = D.make_splits(12, 2, seed=9)
        b = D.make_splits(12, 2, seed=9)
        assert a.rs_ids == b.rs_ids and a.rd_ids == b.rd_ids
        assert a.d_rs[0][0].tobytes() == b.d_rs[0][0].tobytes()

    def test_modality_dropping(self):
        split = D.make_splits(4, 1, seed=2)
        rgb, seg = split.d_rs[0]
        assert rgb.shape[0] == 3 and seg.ndim == 2
        rgb, depth = split.d_rd[0]
        assert depth.shape[0] == 1

    def test_odd_train_rejected(self):
        with pytest.raises(ValueError, match="even"):
            D.make_splits(5, 1, seed=0)


class TestOpponent:
    def test_channel_identities_exact(self):
        cfg = D.OpponentConfig()
        for sid in range(5):
            s = D.gen_opponent_sample(3, cfg, sample_id=sid)
            np.testing.assert_array_equal(s.theta1, s.theta3[0:1] - s.theta3[1:2])
            np.testing.assert_array_equal(s.theta2, s.theta3[1:2] - s.theta3[2:3])

    def test_gray_image_zero_opponents(self):
        gray = np.full((3, 4, 4), 0.5, dtype=np.float32)
        t1 = gray[0:1] - gray[1:2]
        t2 = gray[1:2] - gray[2:3]
        assert not t1.any() and not t2.any()

    def test_pure_red_pixel(self):
        red = np.zeros((3, 1, 1), dtype=np.float32)
        red[0] = 1.0
        assert (red[0:1] - red[1:2]).item() == 1.0
        assert (red[1:2] - red[2:3]).item() == 0.0

    def test_value_ranges(self):
        s = D.gen_opponent_sample(4, D.OpponentConfig(), sample_id=1)
        assert -1.0 <= s.theta1.min() and s.theta1.max() <= 1.0
        assert -1.0 <= s.theta2.min() and s.theta2.max() <= 1.0
        assert 0.0 <= s.theta3.min() and s.theta3.max() <= 1.0

    def test_split_balance_and_disjoint(self):
        split = D.make_opponent_splits(40, 10, seed=5)
        split.validate_disjoint()
        labels = [s.class_label for s in split.test]
        assert len(set(labels)) == 10

    def test_determinism(self):
        a = D.gen_opponent_sample(6, D.OpponentConfig(), 2)
        b = D.gen_opponent_sample(6, D.OpponentConfig(), 2)
        assert a.theta3.tobytes() == b.theta3.tobytes()
        assert a.class_label == b.class_label


class TestImageIO:
    def test_raw_roundtrip_bitwise(self, tmp_path):
        rng = np.random.default_rng(0)
        img = rng.standard_normal((3, 5, 7)).astype(np.float32)
        path = tmp_path / "x.raw"
        D.write_raw(path, img)
        back = D.read_raw(path)
        assert back.tobytes() == img.tobytes()

    def test_raw_header_layout(self, tmp_path):
        path = tmp_path / "x.raw"
        D.write_raw(path, np.zeros((2, 3, 4), dtype=np.float32))
        blob = path.read_bytes()
        assert blob[:4] == b"MMT0"
        assert len(blob) == 16 + 4 * 2 * 3 * 4

    def test_ppm_header_bytes(self, tmp_path):
        path = tmp_path / "x.ppm"
        D.write_ppm(path, np.zeros((3, 32, 32), dtype=np.float32))
        blob = path.read_bytes()
        assert blob.startswith(b"P6\n32 32\n255\n")
        assert len(blob) == len(b"P6\n32 32\n255\n") + 3072

    def test_quantization_rule(self, tmp_path):
        path = tmp_path / "x.pgm"
        D.write_pgm(path, np.full((1, 1, 1), 0.5, dtype=np.float32))
        blob = path.read_bytes()
        assert blob[-1] == 128                       # round half up
        assert D.read_pgm(path)[0, 0, 0] == pytest.approx(128 / 255)

    def test_ppm_roundtrip_within_quantization(self, tmp_path):
        rng = np.random.default_rng(1)
        img = rng.random((3, 8, 8)).astype(np.float32)
        path = tmp_path / "x.ppm"
        D.write_ppm(path, img)
        back = D.read_ppm(path)
        assert np.abs(back - img).max() <= 0.5 / 255 + 1e-7

    def test_malformed_file_offset(self, tmp_path):
        path = tmp_path / "bad.ppm"
        path.write_bytes(b"P6\n32 32\n255\n\x00\x01")
        with pytest.raises(D.ImageFormatError, match="offset"):
            D.read_ppm(path)

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "bad.raw"
        path.write_bytes(b"NOPE" + b"\x00" * 20)
        with pytest.raises(D.ImageFormatError, match="magic"):
            D.read_raw(path)

    def test_load_image_dispatch(self, tmp_path):
        img = np.random.default_rng(2).random((1, 4, 4)).astype(np.float32)
        raw, pgm = tmp_path / "a.raw", tmp_path / "a.pgm"
        D.write_raw(raw, img)
        D.write_pgm(pgm, img)
        assert D.load_image(raw).shape == (1, 4, 4)
        assert D.load_image(pgm).shape == (1, 4, 4)
