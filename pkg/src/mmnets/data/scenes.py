"""Procedural multi-modal scene triplets (color, depth, class map).

Every scene is a stack of flat shapes at distinct depth planes over a
background plane; occlusion follows the painter's algorithm.  The class of
an object is tied to its geometry (shape kind and depth band), so the class
map is recoverable from depth alone, while colors are class-correlated with
per-scene jitter so the color route is informative but not a pure lookup.
Depth is inverse-distance in (0, 1]: closer objects have smaller values.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass, field

import numpy as np

SHAPES = ("rectangle", "ellipse", "triangle")
BACKGROUND_CLASS = 0
BACKGROUND_DEPTH = 1.0
_DEPTH_LO, _DEPTH_HI = 0.1, 0.9


@dataclass
class SceneConfig:
    h: int = 32
    w: int = 32
    k: int = 8                  # class count including background
    max_objects: int = 4
    min_objects: int = 2
    color_jitter: float = 0.08

    def __post_init__(self):
        if self.k < 2:
            raise ValueError(f"need at least 2 classes, got {self.k}")


@dataclass
class SceneObject:
    shape: str
    class_id: int
    base_color: tuple
    depth_plane: float
    cx: float                   # center, fraction of width
    cy: float
    size: float                 # fraction of min(h, w)
    aspect: float = 1.0


@dataclass
class SceneDescriptor:
    scene_id: int
    objects: list = field(default_factory=list)


@dataclass
class TripletSample:
    rgb: np.ndarray             # (3, h, w) float32 in [0, 1]
    depth: np.ndarray           # (1, h, w) float32 in (0, 1]
    seg: np.ndarray             # (h, w) int64 class ids


def class_geometry(class_id: int, k: int):
    """Deterministic (shape, depth band) for an object class.

    Classes cycle through the shape kinds and then through depth bands, so
    both the silhouette and the depth value carry class information.
    """
    n_obj_classes = k - 1
    idx = class_id - 1
    shape = SHAPES[idx % len(SHAPES)]
    n_bands = (n_obj_classes + len(SHAPES) - 1) // len(SHAPES)
    band = idx // len(SHAPES)
    span = (_DEPTH_HI - _DEPTH_LO) / n_bands
    lo = _DEPTH_LO + band * span
    return shape, (lo, lo + span)


def class_palette(k: int):
    """Base colors per object class; the mapping is many-to-one.

    Classes are grouped in pairs per hue, so color identifies only the
    coarse group: the shape and depth band assigned by `class_geometry`
    carry the remaining class information.  This keeps the class map from
    being a color lookup table.
    """
    colors = [(0.1, 0.1, 0.1)]  # background
    group = 2
    n_hues = max((k - 1 + group - 1) // group, 1)
    for c in range(1, k):
        hue = ((c - 1) // group) / n_hues
        colors.append(colorsys.hsv_to_rgb(hue, 0.85, 0.9))
    return colors


def gen_scene_descriptor(seed, config: SceneConfig, scene_id=0) -> SceneDescriptor:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(scene_id)]))
    palette = class_palette(config.k)
    n_objects = int(rng.integers(config.min_objects, config.max_objects + 1))
    objects = []
    depths_taken = []
    for _ in range(n_objects):
        class_id = int(rng.integers(1, config.k))
        shape, (lo, hi) = class_geometry(class_id, config.k)
        depth = float(rng.uniform(lo, hi))
        # depth planes define occlusion order and must be distinct
        while any(abs(depth - d) < 1e-6 for d in depths_taken):
            depth = float(rng.uniform(lo, hi))
        depths_taken.append(depth)
        jitter = rng.uniform(-config.color_jitter, config.color_jitter, 3)
        color = tuple(np.clip(np.asarray(palette[class_id]) + jitter, 0.0, 1.0))
        objects.append(SceneObject(
            shape=shape, class_id=class_id, base_color=color, depth_plane=depth,
            cx=float(rng.uniform(0.2, 0.8)), cy=float(rng.uniform(0.2, 0.8)),
            size=float(rng.uniform(0.3, 0.6)), aspect=float(rng.uniform(0.7, 1.4))))
    return SceneDescriptor(scene_id=scene_id, objects=objects)


def _object_mask(obj: SceneObject, h, w):
    yy, xx = np.mgrid[0:h, 0:w]
    cx, cy = obj.cx * w, obj.cy * h
    half = obj.size * min(h, w) / 2.0
    hx, hy = half * obj.aspect, half / obj.aspect
    if obj.shape == "rectangle":
        return (np.abs(xx - cx) <= hx) & (np.abs(yy - cy) <= hy)
    if obj.shape == "ellipse":
        return ((xx - cx) / hx) ** 2 + ((yy - cy) / hy) ** 2 <= 1.0
    if obj.shape == "triangle":
        # apex up: width grows linearly from the apex to the base
        t = (yy - (cy - hy)) / (2.0 * hy)
        return (t >= 0) & (t <= 1.0) & (np.abs(xx - cx) <= t * hx)
    raise ValueError(f"unknown shape {obj.shape!r}")


def render_scene(desc: SceneDescriptor, config: SceneConfig) -> TripletSample:
    """Rasterize a descriptor; far objects first, closer objects overpaint."""
    h, w = config.h, config.w
    rgb = np.empty((3, h, w), dtype=np.float32)
    rgb[:] = np.asarray((0.1, 0.1, 0.1), dtype=np.float32).reshape(3, 1, 1)
    depth = np.full((1, h, w), BACKGROUND_DEPTH, dtype=np.float32)
    seg = np.full((h, w), BACKGROUND_CLASS, dtype=np.int64)
    shade_rows = (0.9 + 0.2 * np.arange(h) / max(h - 1, 1)).astype(np.float32)
    for obj in sorted(desc.objects, key=lambda o: -o.depth_plane):
        mask = _object_mask(obj, h, w)
        if not mask.any():
            continue
        brightness = np.float32(np.clip(1.15 - 0.45 * obj.depth_plane, 0.0, 1.2))
        color = np.asarray(obj.base_color, dtype=np.float32).reshape(3, 1, 1)
        shaded = np.clip(color * brightness * shade_rows.reshape(1, h, 1), 0.0, 1.0)
        rgb[:, mask] = np.broadcast_to(shaded, (3, h, w))[:, mask]
        depth[0, mask] = obj.depth_plane
        seg[mask] = obj.class_id
    return TripletSample(rgb=rgb, depth=depth, seg=seg)


def gen_scene_triplet(seed, config: SceneConfig, scene_id=0) -> TripletSample:
    return render_scene(gen_scene_descriptor(seed, config, scene_id), config)


@dataclass
class DatasetSplit:
    """The two seen paired sets plus the held-out triplet set.

    Scene-id sets are pairwise disjoint by construction.
    """

    d_rs: list                  # (rgb, seg) pairs
    d_rd: list                  # (rgb, depth) pairs
    d_ds_test: list             # full TripletSample
    rs_ids: list = field(default_factory=list)
    rd_ids: list = field(default_factory=list)
    test_ids: list = field(default_factory=list)

    def validate_disjoint(self):
        rs, rd, te = set(self.rs_ids), set(self.rd_ids), set(self.test_ids)
        if rs & rd or rs & te or rd & te:
            raise ValueError("dataset splits share scene ids")


def make_splits(n_train, n_test, seed, config: SceneConfig | None = None) -> DatasetSplit:
    """Disjoint training splits: half the scenes keep (rgb, seg), the other
    half keep (rgb, depth); test scenes keep the full triplet."""
    if n_train % 2:
        raise ValueError(f"n_train must be even, got {n_train}")
    config = config or SceneConfig()
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EED]))
    order = rng.permutation(n_train)
    rs_ids = [int(i) for i in order[: n_train // 2]]
    rd_ids = [int(i) for i in order[n_train // 2:]]
    test_ids = [int(n_train + i) for i in range(n_test)]
    d_rs, d_rd, d_test = [], [], []
    for sid in rs_ids:
        t = gen_scene_triplet(seed, config, scene_id=sid)
        d_rs.append((t.rgb, t.seg))
    for sid in rd_ids:
        t = gen_scene_triplet(seed, config, scene_id=sid)
        d_rd.append((t.rgb, t.depth))
    for sid in test_ids:
        d_test.append(gen_scene_triplet(seed, config, scene_id=sid))
    split = DatasetSplit(d_rs=d_rs, d_rd=d_rd, d_ds_test=d_test,
                         rs_ids=rs_ids, rd_ids=rd_ids, test_ids=test_ids)
    split.validate_disjoint()
    return split
