"""Color-opponent channel task: classed color images and their opponent
decompositions.

Each sample is a colored figure whose class fixes a two-color palette and a
shape family; the scalar channels are the exact opponent combinations of
the emitted color image (no quantization inside the generator):

    channel_rg = R - G
    channel_gb = G - B
    full_color = (R, G, B)
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass, field

import numpy as np

N_CLASSES = 10


@dataclass
class OpponentConfig:
    h: int = 32
    w: int = 32
    n_classes: int = N_CLASSES
    color_jitter: float = 0.05


@dataclass
class OpponentSample:
    theta1: np.ndarray          # (1, h, w) = R - G, in [-1, 1]
    theta2: np.ndarray          # (1, h, w) = G - B, in [-1, 1]
    theta3: np.ndarray          # (3, h, w) = RGB, in [0, 1]
    class_label: int


def class_template(class_id: int, n_classes: int = N_CLASSES):
    """(primary color, secondary color, shape family) for a class.

    Hues are spread around the wheel so classes separate along both the
    red-green and the green-blue axes.
    """
    hue = class_id / n_classes
    primary = colorsys.hsv_to_rgb(hue, 0.95, 0.95)
    secondary = colorsys.hsv_to_rgb((hue + 0.37) % 1.0, 0.85, 0.8)
    family = ("disk", "square", "diamond")[class_id % 3]
    return primary, secondary, family


def _family_mask(family, cx, cy, r, h, w):
    yy, xx = np.mgrid[0:h, 0:w]
    dx, dy = xx - cx, yy - cy
    if family == "disk":
        return dx * dx + dy * dy <= r * r
    if family == "square":
        return (np.abs(dx) <= r) & (np.abs(dy) <= r)
    if family == "diamond":
        return np.abs(dx) + np.abs(dy) <= r
    raise ValueError(f"unknown shape family {family!r}")


def gen_opponent_sample(seed, config: OpponentConfig, sample_id=0,
                        class_label=None) -> OpponentSample:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(sample_id)]))
    if class_label is None:
        class_label = int(rng.integers(0, config.n_classes))
    primary, secondary, family = class_template(class_label, config.n_classes)
    h, w = config.h, config.w
    rgb = np.full((3, h, w), 0.08, dtype=np.float64)

    def paint(color, cx, cy, r):
        mask = _family_mask(family, cx, cy, r, h, w)
        jitter = rng.uniform(-config.color_jitter, config.color_jitter, 3)
        shade = np.clip(np.asarray(color) + jitter, 0.0, 1.0)
        rgb[:, mask] = shade.reshape(3, 1)

    # one large primary figure plus satellites in the secondary color
    paint(primary, rng.uniform(0.35, 0.65) * w, rng.uniform(0.35, 0.65) * h,
          rng.uniform(0.28, 0.4) * min(h, w))
    for _ in range(int(rng.integers(1, 3))):
        paint(secondary, rng.uniform(0.1, 0.9) * w, rng.uniform(0.1, 0.9) * h,
              rng.uniform(0.08, 0.16) * min(h, w))

    theta3 = rgb.astype(np.float32)
    theta1 = (theta3[0:1] - theta3[1:2])
    theta2 = (theta3[1:2] - theta3[2:3])
    return OpponentSample(theta1=theta1, theta2=theta2, theta3=theta3,
                          class_label=class_label)


@dataclass
class OpponentSplit:
    """Disjoint paired sets through the anchor channel plus a labeled test set."""

    d_12: list                  # (theta1, theta2) pairs
    d_13: list                  # (theta1, theta3) pairs
    test: list                  # full OpponentSample
    ids_12: list = field(default_factory=list)
    ids_13: list = field(default_factory=list)
    test_ids: list = field(default_factory=list)

    def validate_disjoint(self):
        a, b, c = set(self.ids_12), set(self.ids_13), set(self.test_ids)
        if a & b or a & c or b & c:
            raise ValueError("opponent splits share sample ids")


def make_opponent_splits(n_train, n_test, seed,
                         config: OpponentConfig | None = None) -> OpponentSplit:
    if n_train % 2:
        raise ValueError(f"n_train must be even, got {n_train}")
    config = config or OpponentConfig()
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x0FF0]))
    order = rng.permutation(n_train)
    ids_12 = [int(i) for i in order[: n_train // 2]]
    ids_13 = [int(i) for i in order[n_train // 2:]]
    test_ids = [int(n_train + i) for i in range(n_test)]
    d_12, d_13, test = [], [], []
    for sid in ids_12:
        # class balanced by id so every class appears in both training sets
        s = gen_opponent_sample(seed, config, sid, class_label=sid % config.n_classes)
        d_12.append((s.theta1, s.theta2))
    for sid in ids_13:
        s = gen_opponent_sample(seed, config, sid, class_label=sid % config.n_classes)
        d_13.append((s.theta1, s.theta3))
    for sid in test_ids:
        test.append(gen_opponent_sample(seed, config, sid,
                                        class_label=sid % config.n_classes))
    split = OpponentSplit(d_12=d_12, d_13=d_13, test=test,
                          ids_12=ids_12, ids_13=ids_13, test_ids=test_ids)
    split.validate_disjoint()
    return split
