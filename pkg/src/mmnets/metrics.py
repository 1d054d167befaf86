"""Evaluation metrics: segmentation IoU, depth error statistics, the
color/shape classification oracle for the opponent task, and report files.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DELTA_BASE = 1.25


@dataclass
class SegMetrics:
    per_class_iou: np.ndarray    # nan marks classes absent from pred and gt
    miou: float
    global_acc: float

    def defined_classes(self):
        return np.flatnonzero(~np.isnan(self.per_class_iou))


@dataclass
class DepthMetrics:
    delta1: float
    delta2: float
    delta3: float
    rmse_lin: float
    rmse_log: float


def segmentation_metrics(pred_labels, gt_labels, k) -> SegMetrics:
    """IoU per class, mean IoU over classes present in pred or gt, and
    global pixel accuracy."""
    pred = np.asarray(pred_labels).reshape(-1)
    gt = np.asarray(gt_labels).reshape(-1)
    if pred.shape != gt.shape:
        raise ValueError(f"label shapes differ: {pred.shape} vs {gt.shape}")
    if pred.min() < 0 or pred.max() >= k or gt.min() < 0 or gt.max() >= k:
        raise ValueError(f"labels must lie in [0, {k})")
    confusion = np.bincount(gt * k + pred, minlength=k * k).reshape(k, k)
    tp = np.diag(confusion).astype(np.float64)
    fp = confusion.sum(axis=0) - tp
    fn = confusion.sum(axis=1) - tp
    union = tp + fp + fn
    iou = np.full(k, np.nan)
    present = union > 0
    iou[present] = tp[present] / union[present]
    miou = float(np.nanmean(iou)) if present.any() else float("nan")
    return SegMetrics(per_class_iou=iou, miou=miou,
                      global_acc=float(tp.sum() / confusion.sum()))


def depth_metrics(pred, gt, eps=1e-6) -> DepthMetrics:
    """Threshold accuracies and RMSEs over the pooled pixel set.

    delta(u, v) = max(u/v, v/u); the accuracy at level i counts pixels with
    delta below 1.25^i.  Predictions are clamped to at least `eps`.
    """
    pred = np.maximum(np.asarray(pred, dtype=np.float64).reshape(-1), eps)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1)
    if pred.shape != gt.shape:
        raise ValueError(f"depth shapes differ: {pred.shape} vs {gt.shape}")
    if (gt <= 0).any():
        raise ValueError("ground-truth depth must be positive")
    ratio = np.maximum(pred / gt, gt / pred)
    deltas = [float((ratio < DELTA_BASE ** i).mean()) for i in (1, 2, 3)]
    rmse_lin = float(np.sqrt(np.mean((pred - gt) ** 2)))
    rmse_log = float(np.sqrt(np.mean((np.log(pred) - np.log(gt)) ** 2)))
    return DepthMetrics(deltas[0], deltas[1], deltas[2], rmse_lin, rmse_log)


# ---------------------------------------------------------------------------
# opponent-task classification oracle
# ---------------------------------------------------------------------------

N_HIST_BINS = 8
_FG_THRESHOLD = 0.2


def _color_shape_features(image):
    """24 color-histogram dims + 4 shape-moment dims for one (3, h, w) image."""
    img = np.asarray(image, dtype=np.float64)
    feats = [np.histogram(img[c], bins=N_HIST_BINS, range=(0.0, 1.0))[0] / img[c].size
             for c in range(3)]
    gray = img.mean(axis=0)
    mask = gray > _FG_THRESHOLD
    if mask.any():
        h, w = gray.shape
        yy, xx = np.mgrid[0:h, 0:w]
        area = mask.sum()
        cy, cx = yy[mask].mean(), xx[mask].mean()
        scale = max(h, w)
        dy, dx = (yy[mask] - cy) / scale, (xx[mask] - cx) / scale
        shape = np.array([area / gray.size, (dx * dx).mean(), (dy * dy).mean(),
                          (dx * dy).mean()])
    else:
        shape = np.zeros(4)
    return np.concatenate(feats + [shape])


class ColorShapeOracle:
    """Nearest-centroid classifier over color histograms + shape moments.

    Deterministic and training-free beyond computing class centroids; meant
    to be fitted on ground-truth color images only and then applied to
    translated outputs.
    """

    def __init__(self):
        self.centroids = None
        self.classes = None
        self._mu = None
        self._sigma = None

    def fit(self, images, labels):
        feats = np.stack([_color_shape_features(im) for im in images])
        labels = np.asarray(labels)
        self._mu = feats.mean(axis=0)
        self._sigma = feats.std(axis=0) + 1e-8
        feats = (feats - self._mu) / self._sigma
        self.classes = np.unique(labels)
        self.centroids = np.stack([feats[labels == c].mean(axis=0)
                                   for c in self.classes])
        return self

    def predict(self, images):
        if self.centroids is None:
            raise RuntimeError("oracle not fitted; call fit() on ground-truth images")
        feats = np.stack([_color_shape_features(im) for im in images])
        feats = (feats - self._mu) / self._sigma
        dists = ((feats[:, None, :] - self.centroids[None]) ** 2).sum(axis=2)
        return self.classes[np.argmin(dists, axis=1)]


def opponent_accuracy(translated_images, labels, oracle: ColorShapeOracle) -> float:
    """Fraction of translated color images the oracle assigns to their true class."""
    pred = oracle.predict(translated_images)
    return float((pred == np.asarray(labels)).mean())


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------

@dataclass
class ReportTable:
    """Rows of named numeric values with a fixed column order."""

    columns: list
    rows: list = field(default_factory=list)     # (label, [values]) pairs

    def add_row(self, label, values):
        if len(values) != len(self.columns):
            raise ValueError(
                f"row {label!r} has {len(values)} values for {len(self.columns)} columns")
        self.rows.append((label, list(values)))


def seg_metrics_columns(k):
    return [f"iou_class_{c}" for c in range(k)] + ["miou", "global"]


def seg_metrics_values(m: SegMetrics):
    return list(m.per_class_iou) + [m.miou, m.global_acc]


def _fmt(v):
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return "-"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def emit_report(table: ReportTable, path, fmt="csv"):
    """Write a table as CSV or an aligned text table; byte-deterministic."""
    if fmt == "csv":
        lines = [",".join(["row"] + table.columns)]
        for label, values in table.rows:
            lines.append(",".join([label] + [_fmt(v) for v in values]))
    elif fmt == "text-table":
        headers = ["row"] + table.columns
        cells = [[label] + [_fmt(v) for v in values] for label, values in table.rows]
        widths = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h)
                  for i, h in enumerate(headers)]
        def line(parts):
            return "  ".join(p.ljust(w) for p, w in zip(parts, widths)).rstrip()
        lines = [line(headers), line(["-" * w for w in widths])]
        lines.extend(line(row) for row in cells)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    with open(path, "w", encoding="ascii") as f:
        f.write("\n".join(lines) + "\n")


def read_report_csv(path):
    with open(path, encoding="ascii") as f:
        lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    columns = lines[0].split(",")[1:]
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        values = [float("nan") if p == "-" else float(p) for p in parts[1:]]
        rows.append((parts[0], values))
    return columns, rows
