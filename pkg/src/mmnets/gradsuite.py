"""Full gradient verification suite over every differentiable op and loss.

Each case builds a scalar objective through one operation (or one loss) and
compares analytic gradients against central finite differences in float64.
Inputs are constructed so that no element sits near a non-differentiable
point: values feeding kinked functions (relu, absolute, the reversed-Huber
threshold) are pushed away from the kink, and inputs to argmax-based ops
(max, maxpool) are drawn from a shuffled grid of distinct values so no
window contains a tie within finite-difference reach.
"""

from __future__ import annotations

import numpy as np

from . import engine as E
from . import losses as L

TOLERANCE = 1e-5


def _distinct(rng, shape, lo=-1.0, hi=1.0):
    """A tensor of pairwise-distinct values with gaps far above fd-eps."""
    n = int(np.prod(shape))
    vals = np.linspace(lo, hi, n)
    return E.Tensor(rng.permutation(vals).reshape(shape), dtype=np.float64)


def _away_from_zero(rng, shape, margin=0.25):
    data = rng.standard_normal(shape)
    data += margin * np.where(data >= 0, 1.0, -1.0)
    return E.Tensor(data, dtype=np.float64)


def _positive(rng, shape, lo=0.3, hi=2.0):
    return E.Tensor(rng.uniform(lo, hi, shape), dtype=np.float64)


def _mask(rng, shape):
    """A fixed non-uniform weighting so reductions exercise every element."""
    return E.Tensor(rng.uniform(0.5, 1.5, shape), dtype=np.float64)


def _weighted_mean(t, m):
    return E.mean(E.mul(t, m))


def _berhu_pair(rng, shape):
    """Prediction/target whose residuals avoid the reversed-Huber threshold.

    The threshold is a fifth of the max |residual|; residual magnitudes are
    drawn from two bands that exclude a wide margin around it, with the max
    unique by construction.
    """
    n = int(np.prod(shape))
    c = 0.4                                  # = 2.0 (max residual) / 5
    half = n // 2
    mags = np.concatenate([
        np.linspace(0.10, c - 0.08, half),
        np.linspace(c + 0.08, 2.0, n - half),
    ])
    signs = rng.choice([-1.0, 1.0], size=n)
    resid = rng.permutation(mags * signs).reshape(shape)
    target = rng.standard_normal(shape)
    pred = E.Tensor(target + resid, dtype=np.float64)
    return pred, E.Tensor(target, dtype=np.float64)


def _build_cases(rng):
    """Return [(name, objective, inputs)]; every input is grad-checked."""
    cases = []

    def case(name, fn, *inputs):
        cases.append((name, fn, list(inputs)))

    a = E.make_inputs(rng, (2, 3, 4, 4))[0]
    b = E.make_inputs(rng, (2, 3, 4, 4))[0]
    row = E.make_inputs(rng, (1, 3, 1, 1))[0]          # broadcast operand
    m = _mask(rng, (2, 3, 4, 4))

    case("add", lambda x, y: _weighted_mean(E.add(x, y), m), a, b)
    case("add_broadcast", lambda x, y: _weighted_mean(E.add(x, y), m), a, row)
    case("sub", lambda x, y: _weighted_mean(E.sub(x, y), m), a, b)
    case("mul", lambda x, y: _weighted_mean(E.mul(x, y), m), a, b)
    case("div", lambda x, y: _weighted_mean(E.div(x, y), m),
         a, _away_from_zero(rng, (2, 3, 4, 4)))
    case("power", lambda x: _weighted_mean(E.power(x, 3.0), m),
         _away_from_zero(rng, (2, 3, 4, 4)))
    case("power_sqrt_branch",
         lambda x: _weighted_mean(E.power(x, 0.5), m), _positive(rng, (2, 3, 4, 4)))
    case("exp", lambda x: _weighted_mean(E.exp(x), m), a)
    case("log", lambda x: _weighted_mean(E.log(x), m), _positive(rng, (2, 3, 4, 4)))
    case("sqrt", lambda x: _weighted_mean(E.sqrt(x), m), _positive(rng, (2, 3, 4, 4)))
    case("absolute", lambda x: _weighted_mean(E.absolute(x), m),
         _away_from_zero(rng, (2, 3, 4, 4)))
    case("relu", lambda x: _weighted_mean(E.relu(x), m),
         _away_from_zero(rng, (2, 3, 4, 4)))
    case("leaky_relu", lambda x: _weighted_mean(E.leaky_relu(x, 0.2), m),
         _away_from_zero(rng, (2, 3, 4, 4)))
    case("sigmoid", lambda x: _weighted_mean(E.sigmoid(x), m), a)

    cond = E.Tensor((rng.uniform(size=(2, 3, 4, 4)) > 0.5).astype(np.float64))
    case("where", lambda x, y: _weighted_mean(E.where(cond, x, y), m), a, b)

    m_chan = _mask(rng, (2, 1, 4, 4))
    m_spatial = _mask(rng, (2, 3, 1, 1))
    m_flat = _mask(rng, (2, 48))
    m_wide = _mask(rng, (2, 6, 4, 4))
    m_one = _mask(rng, (1, 3, 4, 4))
    case("sum_all", lambda x: E.sum_(x), a)
    case("sum_axis", lambda x: _weighted_mean(E.sum_(x, axis=1, keepdims=True),
                                              m_chan), a)
    case("mean_axis", lambda x: _weighted_mean(E.mean(x, axis=(2, 3), keepdims=True),
                                               m_spatial), a)
    case("max_axis", lambda x: _weighted_mean(E.max_(x, axis=1, keepdims=True),
                                              m_chan),
         _distinct(rng, (2, 3, 4, 4)))
    case("reshape", lambda x: _weighted_mean(E.reshape(x, (2, 48)), m_flat), a)
    case("concat", lambda x, y: _weighted_mean(E.concat([x, y], axis=1), m_wide),
         a, b)
    case("slice_batch", lambda x: _weighted_mean(E.slice_batch(x, 0, 1), m_one), a)
    case("softmax", lambda x: _weighted_mean(E.softmax(x, axis=1), m), a)

    x6 = E.make_inputs(rng, (2, 3, 6, 6))[0]
    w1, b1 = E.make_inputs(rng, (4, 3, 3, 3), (4,))
    mconv = _mask(rng, (2, 4, 6, 6))
    case("conv2d_s1p1",
         lambda x, w, bb: _weighted_mean(E.conv2d(x, w, bb, 1, 1), mconv),
         x6, w1, b1)
    x7 = E.make_inputs(rng, (2, 3, 7, 7))[0]
    mconv2 = _mask(rng, (2, 4, 4, 4))
    case("conv2d_s2p1",
         lambda x, w, bb: _weighted_mean(E.conv2d(x, w, bb, 2, 1), mconv2),
         x7, w1, b1)

    mpool = _mask(rng, (2, 3, 3, 3))
    case("maxpool", lambda x: _weighted_mean(E.maxpool2d_with_indices(x, 2, 2)[0],
                                             mpool),
         _distinct(rng, (2, 3, 6, 6)))

    pool_src = _distinct(rng, (1, 2, 4, 4))
    _, idx = E.maxpool2d_with_indices(pool_src, 2, 2)
    munp = _mask(rng, (1, 2, 4, 4))
    case("unpool", lambda x: _weighted_mean(E.unpool(x, idx, (4, 4)), munp),
         E.make_inputs(rng, (1, 2, 2, 2))[0])

    mup = _mask(rng, (2, 3, 8, 8))
    case("upsample_nearest",
         lambda x: _weighted_mean(E.upsample_nearest(x, 2), mup),
         E.make_inputs(rng, (2, 3, 4, 4))[0])

    gam, bet = E.make_inputs(rng, (3,), (3,), scale=0.5)
    gam.data += 1.0
    case("batch_norm_train",
         lambda x, g, bb: _weighted_mean(E.batch_norm(x, g, bb, True), m),
         a, gam, bet)
    stats = E.RunningStats.create(3)
    stats.mean = rng.standard_normal(3).astype(np.float32) * 0.2
    stats.var = rng.uniform(0.5, 1.5, 3).astype(np.float32)
    case("batch_norm_eval",
         lambda x, g, bb: _weighted_mean(
             E.batch_norm(x, g, bb, False, running_stats=stats), m),
         a, gam, bet)

    # losses -------------------------------------------------------------
    target = rng.standard_normal((2, 1, 4, 4))
    case("l2_loss", lambda p: L.l2_loss(p, E.Tensor(target)),
         E.make_inputs(rng, (2, 1, 4, 4))[0])

    bp, bt = _berhu_pair(rng, (2, 1, 4, 4))
    case("berhu_loss", lambda p: L.berhu_loss(p, bt), bp)

    labels = rng.integers(0, 4, (2, 3, 3))
    case("cross_entropy_from_logits",
         lambda z: L.cross_entropy_loss(z, labels, from_logits=True),
         E.make_inputs(rng, (2, 4, 3, 3))[0])
    case("cross_entropy_probs",
         lambda z: L.cross_entropy_loss(E.softmax(z, axis=1), labels),
         E.make_inputs(rng, (2, 4, 3, 3))[0])

    real, fake = E.make_inputs(rng, (2, 1, 2, 2), (2, 1, 2, 2))
    case("lsgan_disc", lambda r, f: L.lsgan_losses(r, f)[0], real, fake)
    case("lsgan_gen", lambda r, f: L.lsgan_losses(r, f)[1], real, fake)

    ca, cb = E.make_inputs(rng, (2, 4, 2, 2), (2, 4, 2, 2))
    case("latent_consistency", lambda u, v: L.latent_consistency_loss(u, v), ca, cb)

    t_rd = rng.standard_normal((2, 1, 3, 3))
    t_rs_logits = rng.standard_normal((2, 4, 3, 3)) * 3.0    # decisive argmax
    pp_pred, pp_tgt = _berhu_pair(rng, (2, 1, 3, 3))
    case("pseudo_pair_loss",
         lambda y, z: L.pseudo_pair_loss(E.Tensor(pp_tgt.data + 0 * t_rd), y,
                                         E.Tensor(t_rs_logits),
                                         E.softmax(z, axis=1)),
         pp_pred, E.make_inputs(rng, (2, 4, 3, 3))[0])

    return cases


def run_gradient_suite(seeds=range(10), tol=TOLERANCE):
    """Grad-check every case under each seed; returns (results, worst).

    `results` is a list of (case name, seed, max relative error); `worst`
    is the largest error across the whole sweep.
    """
    results = []
    worst = 0.0
    for seed in seeds:
        rng = np.random.default_rng(900 + seed)
        for name, fn, inputs in _build_cases(rng):
            err = E.grad_check(fn, inputs)
            results.append((name, seed, err))
            worst = max(worst, err)
    return results, worst
