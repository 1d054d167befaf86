"""Training losses: reconstruction, reversed-Huber, cross-entropy,
least-squares adversarial, latent consistency, and pseudo-pair terms.

All losses return scalar tensors wired into the autodiff graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import engine as E
from .engine import Tensor, as_tensor


@dataclass
class LossWeights:
    """Stage-dependent balance weights for the combined objective."""

    r: float = 1.0       # RGB reconstruction block (L2 + adversarial)
    s: float = 100.0     # segmentation cross-entropy
    d: float = 10.0      # depth reversed-Huber
    a: float = 1.0       # latent consistency
    l2: float = 1.0      # pixel L2 inside the RGB block
    pp: float = 0.0      # pseudo-pair term

    def __post_init__(self):
        for name, value in vars(self).items():
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"loss weight {name} must be finite and >= 0, got {value}")


@dataclass
class LossReport:
    """Per-term raw values, their effective weights, and the weighted total."""

    terms: dict = field(default_factory=dict)            # name -> raw scalar
    effective_weights: dict = field(default_factory=dict)
    total: Tensor | None = None

    def value(self, name, default=0.0):
        return self.terms.get(name, default)

    @property
    def total_value(self):
        return self.total.item() if self.total is not None else 0.0


def _flatten_per_image(t: Tensor) -> Tensor:
    n = t.shape[0]
    return E.reshape(t, (n, -1))


def _check_same_shape(pred, target, ctx):
    if pred.shape != target.shape:
        raise E.ShapeError(f"{ctx}: shape mismatch {pred.shape} vs {target.shape}")


def l2_loss(pred, target):
    """Mean over the batch of the per-image L2 norm of the residual."""
    pred, target = as_tensor(pred), as_tensor(target)
    _check_same_shape(pred, target, "l2_loss")
    r = _flatten_per_image(E.sub(pred, target))
    per_image = E.sqrt(E.sum_(E.mul(r, r), axis=1))
    return E.mean(per_image)


def berhu_loss(pred, target):
    """Reversed-Huber loss with per-image threshold c = max|r| / 5.

    Linear below c, quadratic (r^2 + c^2) / 2c above; pixel mean then batch
    mean.  All-zero residuals give exactly 0 (the linear branch).
    """
    pred, target = as_tensor(pred), as_tensor(target)
    _check_same_shape(pred, target, "berhu_loss")
    r = _flatten_per_image(E.sub(pred, target))
    a = E.absolute(r)
    c = E.mul(E.max_(a, axis=1, keepdims=True), 0.2)
    # denominator floored so the unused quadratic branch stays finite at c=0
    c_safe = E.where(c.data > 1e-12, c, as_tensor(np.full_like(c.data, 1e-12)))
    quad = E.div(E.add(E.mul(r, r), E.mul(c, c)), E.mul(c_safe, 2.0))
    per_pixel = E.where(a.data <= c.data, a, quad)
    return E.mean(E.mean(per_pixel, axis=1))


def cross_entropy_loss(probs, labels, from_logits=False, eps=1e-12):
    """Mean over pixels of -log p(target class).

    `probs` is (n, K, h, w) channel probabilities (or logits with
    ``from_logits``); `labels` is an integer (n, h, w) class map.
    """
    probs = as_tensor(probs)
    labels = np.asarray(labels)
    n, k = probs.shape[0], probs.shape[1]
    if labels.shape != (n,) + probs.shape[2:]:
        raise E.ShapeError(
            f"cross_entropy_loss: labels shape {labels.shape} does not match "
            f"prediction {probs.shape}")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(
            f"cross_entropy_loss: labels must lie in [0, {k}), "
            f"got range [{labels.min()}, {labels.max()}]")
    if from_logits:
        probs = E.softmax(probs, axis=1)
    onehot = np.zeros(probs.shape, dtype=probs.dtype)
    np.put_along_axis(onehot, labels[:, None], 1.0, axis=1)
    p_t = E.sum_(E.mul(probs, onehot), axis=1)
    return E.mean(E.mul(E.log(E.add(p_t, eps)), -1.0))


def lsgan_losses(disc_real_scores, disc_fake_scores):
    """Least-squares GAN objectives.

    Discriminator pushes real score maps to 1 and fake to 0; the generator
    pushes fake scores to 1.
    """
    real = as_tensor(disc_real_scores)
    fake = as_tensor(disc_fake_scores)
    d_loss = E.add(E.mean(E.power(E.sub(real, 1.0), 2.0)),
                   E.mean(E.power(fake, 2.0)))
    g_loss = E.mean(E.power(E.sub(fake, 1.0), 2.0))
    return d_loss, g_loss


def latent_consistency_loss(code_a, code_b):
    """Mean per-sample L2 distance between two latent feature tensors.

    Accepts raw tensors or any object carrying a ``features`` attribute.
    """
    fa = getattr(code_a, "features", code_a)
    fb = getattr(code_b, "features", code_b)
    return l2_loss(fa, fb)


def pseudo_pair_loss(t_rd_x, t_sd_y, t_rs_x, t_ds_z, hard_targets=True):
    """Pseudo-pair objective for the unseen translator pair.

    The translations through the anchor modality (``t_rd_x``, ``t_rs_x``)
    act as pseudo ground truth and are detached, so no gradient reaches the
    anchor-involving translators.  The depth-side prediction ``t_sd_y`` is
    pulled toward ``t_rd_x`` with the reversed-Huber loss; the
    segmentation-side prediction ``t_ds_z`` is trained with cross-entropy
    against the (argmax-hardened by default) ``t_rs_x`` output.
    """
    t_rd_x, t_sd_y = as_tensor(t_rd_x), as_tensor(t_sd_y)
    t_rs_x, t_ds_z = as_tensor(t_rs_x), as_tensor(t_ds_z)
    depth_term = berhu_loss(t_sd_y, t_rd_x.detach())
    if hard_targets:
        labels = np.argmax(t_rs_x.data, axis=1)
        seg_term = cross_entropy_loss(t_ds_z, labels)
    else:
        q = t_rs_x.detach()
        seg_term = E.mean(E.sum_(E.mul(E.mul(q, E.log(E.add(t_ds_z, 1e-12))), -1.0), axis=1))
    return E.add(depth_term, seg_term)


def total_loss(terms, weights: LossWeights) -> LossReport:
    """Weighted combination of the per-term losses.

    `terms` maps a subset of {rgb_l2, rgb_gan, seg, depth, lat, pp} to
    scalar tensors; missing terms contribute zero.  The RGB block nests as
    w.r * (w.l2 * rgb_l2 + rgb_gan).
    """
    eff = {
        "rgb_l2": weights.r * weights.l2,
        "rgb_gan": weights.r,
        "seg": weights.s,
        "depth": weights.d,
        "lat": weights.a,
        "pp": weights.pp,
    }
    unknown = set(terms) - set(eff)
    if unknown:
        raise ValueError(f"total_loss: unknown terms {sorted(unknown)}")
    report = LossReport()
    total = None
    for name, term in terms.items():
        term = as_tensor(term)
        report.terms[name] = term.item()
        report.effective_weights[name] = eff[name]
        piece = E.mul(term, eff[name])
        total = piece if total is None else E.add(total, piece)
    if total is None:
        total = as_tensor(0.0)
    report.total = total
    return report
