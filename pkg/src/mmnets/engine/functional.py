"""Differentiable operations for the tensor engine.

Everything here is a pure function from tensors to a new tensor; the
backward pass is recorded as vector-Jacobian callbacks.  Conv and pooling
are vectorized through im2col / window reshapes so the heavy lifting stays
inside BLAS.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, as_tensor, make_node


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible with an operation."""


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return make_node(a.data + b.data, [
        (a, lambda g: _unbroadcast(g, a.shape)),
        (b, lambda g: _unbroadcast(g, b.shape)),
    ])


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return make_node(a.data - b.data, [
        (a, lambda g: _unbroadcast(g, a.shape)),
        (b, lambda g: _unbroadcast(-g, b.shape)),
    ])


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return make_node(a.data * b.data, [
        (a, lambda g: _unbroadcast(g * b.data, a.shape)),
        (b, lambda g: _unbroadcast(g * a.data, b.shape)),
    ])


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return make_node(a.data / b.data, [
        (a, lambda g: _unbroadcast(g / b.data, a.shape)),
        (b, lambda g: _unbroadcast(-g * a.data / (b.data * b.data), b.shape)),
    ])


def power(a, p: float):
    a = as_tensor(a)
    out = a.data ** p
    return make_node(out, [(a, lambda g: g * p * a.data ** (p - 1.0))])


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return make_node(out, [(a, lambda g: g * out)])


def log(a):
    a = as_tensor(a)
    return make_node(np.log(a.data), [(a, lambda g: g / a.data)])


def sqrt(a, grad_floor=1e-12):
    """Square root; the backward denominator is floored so sqrt(0) inputs
    (e.g. a perfect reconstruction) do not emit inf gradients."""
    a = as_tensor(a)
    out = np.sqrt(a.data)
    safe = np.maximum(out, grad_floor)
    return make_node(out, [(a, lambda g: g * 0.5 / safe)])


def absolute(a):
    a = as_tensor(a)
    return make_node(np.abs(a.data), [(a, lambda g: g * np.sign(a.data))])


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    return make_node(np.maximum(a.data, 0), [(a, lambda g: g * mask)])


def leaky_relu(a, slope=0.2):
    a = as_tensor(a)
    factor = np.where(a.data > 0, a.dtype.type(1.0), a.dtype.type(slope))
    return make_node(a.data * factor, [(a, lambda g: g * factor)])


def sigmoid(a):
    a = as_tensor(a)
    out = 1.0 / (1.0 + np.exp(-a.data))
    return make_node(out.astype(a.dtype), [(a, lambda g: g * out * (1.0 - out))])


def where(cond, a, b):
    """Select by a boolean numpy mask; gradient routes to the taken branch."""
    a, b = as_tensor(a), as_tensor(b)
    cond = np.asarray(cond, dtype=bool)
    return make_node(np.where(cond, a.data, b.data), [
        (a, lambda g: _unbroadcast(np.where(cond, g, 0.0), a.shape)),
        (b, lambda g: _unbroadcast(np.where(cond, 0.0, g), b.shape)),
    ])


# ---------------------------------------------------------------------------
# reductions and shape ops
# ---------------------------------------------------------------------------

def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, a.shape).astype(a.dtype, copy=False)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(g2, a.shape).astype(a.dtype, copy=False)

    return make_node(out, [(a, vjp)])


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([a.shape[i] for i in axes]))
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / count)


def max_(a, axis: int, keepdims=False):
    """Max along a single axis; gradient routes to the first argmax."""
    a = as_tensor(a)
    arg = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(arg, axis), axis=axis)

    def vjp(g):
        g2 = g if keepdims else np.expand_dims(g, axis)
        gx = np.zeros_like(a.data)
        np.put_along_axis(gx, np.expand_dims(arg, axis), g2, axis=axis)
        return gx

    data = out if keepdims else np.squeeze(out, axis=axis)
    return make_node(data, [(a, vjp)])


def reshape(a, shape):
    a = as_tensor(a)
    return make_node(a.data.reshape(shape), [(a, lambda g: g.reshape(a.shape))])


def concat(tensors, axis=1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def make_vjp(i):
        sl = [slice(None)] * tensors[0].ndim
        sl[axis] = slice(offsets[i], offsets[i + 1])
        sl = tuple(sl)
        return lambda g: g[sl]

    data = np.concatenate([t.data for t in tensors], axis=axis)
    return make_node(data, [(t, make_vjp(i)) for i, t in enumerate(tensors)])


def slice_batch(a, start, stop):
    """Contiguous slice along the leading (batch) axis."""
    a = as_tensor(a)
    n = a.shape[0]
    if not 0 <= start < stop <= n:
        raise ShapeError(f"slice_batch [{start}:{stop}] out of range for batch {n}")

    def vjp(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        return full

    return make_node(a.data[start:stop].copy(), [(a, vjp)])


def softmax(a, axis=1):
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * p).sum(axis=axis, keepdims=True)
        return p * (g - dot)

    return make_node(p.astype(a.dtype, copy=False), [(a, vjp)])


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def _check_rank4(t, name):
    if t.ndim != 4:
        raise ShapeError(f"{name} must be rank 4 (n,c,h,w), got shape {t.shape}")


def _im2col(data, kh, kw, stride, pad):
    """Window-unfold to (n, cin*kh*kw, oh*ow) for GEMM-based convolution.

    The (..., oh, ow) layout keeps the innermost source axis contiguous, so
    the unavoidable materialization runs at memcpy speed.
    """
    n, cin, h, w = data.shape
    if pad:
        xp = np.zeros((n, cin, h + 2 * pad, w + 2 * pad), dtype=data.dtype)
        xp[:, :, pad:pad + h, pad:pad + w] = data
    else:
        xp = data
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]                    # (n,cin,oh,ow,kh,kw)
    oh, ow = win.shape[2], win.shape[3]
    cols = np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3)).reshape(
        n, cin * kh * kw, oh * ow)
    return cols, oh, ow


def conv2d(x, weight, bias, stride=1, pad=0):
    """2D convolution (cross-correlation) with square stride/padding.

    x: (n, c_in, h, w); weight: (c_out, c_in, kh, kw); bias: (c_out,).
    """
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    _check_rank4(x, "conv2d input")
    _check_rank4(weight, "conv2d weight")
    n, cin, h, w = x.shape
    cout, cin_w, kh, kw = weight.shape
    if cin != cin_w:
        raise ShapeError(
            f"conv2d channel mismatch: input has {cin} channels, weight expects {cin_w}")
    if bias.shape != (cout,):
        raise ShapeError(f"conv2d bias shape {bias.shape} != ({cout},)")
    if (h + 2 * pad - kh) % stride or (w + 2 * pad - kw) % stride:
        raise ShapeError(
            f"conv2d non-integer output dims for input {h}x{w}, kernel {kh}x{kw}, "
            f"stride {stride}, pad {pad}")
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    if oh <= 0 or ow <= 0:
        raise ShapeError(f"conv2d output dims {oh}x{ow} not positive")

    cols, _, _ = _im2col(x.data, kh, kw, stride, pad)
    w2 = weight.data.reshape(cout, -1)
    out = np.matmul(w2, cols).reshape(n, cout, oh, ow)
    out += bias.data.reshape(1, cout, 1, 1)

    def vjp_x(g):
        if stride == 1:
            # full correlation with the flipped, channel-swapped kernel is a
            # single GEMM, much faster than scattering window gradients
            wf = np.ascontiguousarray(
                weight.data.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1]).reshape(cin, -1)
            gcols, _, _ = _im2col(g, kh, kw, 1, kh - 1 - pad)
            if cin >= 32:
                # wider layers run faster with the large GEMM dimension first
                gx = np.matmul(gcols.transpose(0, 2, 1), wf.T).transpose(0, 2, 1)
                return np.ascontiguousarray(gx).reshape(n, cin, h, w)
            return np.matmul(wf, gcols).reshape(n, cin, h, w)
        dcols = np.matmul(w2.T, g.reshape(n, cout, oh * ow))
        dcols = dcols.reshape(n, cin, kh, kw, oh, ow)
        gx = np.zeros((n, cin, h + 2 * pad, w + 2 * pad), dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                gx[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += dcols[:, :, i, j]
        return gx[:, :, pad:pad + h, pad:pad + w] if pad else gx

    def vjp_w(g):
        # batched GEMM against the F-contiguous transpose view avoids the
        # materialized reorder tensordot would perform here; when c_out is
        # not tiny the swapped orientation keeps the larger GEMM dimension
        # first and runs measurably faster
        g2 = g.reshape(n, cout, oh * ow)
        if cout >= 8:
            gw = np.matmul(cols, g2.transpose(0, 2, 1)).sum(axis=0).T
        else:
            gw = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0)
        return gw.reshape(weight.shape)

    def vjp_b(g):
        return g.sum(axis=(0, 2, 3))

    return make_node(out, [(x, vjp_x), (weight, vjp_w), (bias, vjp_b)])


# ---------------------------------------------------------------------------
# pooling / unpooling / upsampling
# ---------------------------------------------------------------------------

@dataclass
class PoolIndices:
    """Per-window argmax positions captured by max pooling.

    `flat` indexes into the flattened h_in*w_in plane of the source feature
    map, one entry per pooled output element.
    """

    flat: np.ndarray                 # int64 (n, c, h_out, w_out)
    input_hw: tuple = field(default=(0, 0))
    window: int = 2

    @property
    def shape(self):
        return self.flat.shape

    def __post_init__(self):
        h, w = self.input_hw
        if h and w and self.flat.size and int(self.flat.max()) >= h * w:
            raise ShapeError(
                f"pool index {int(self.flat.max())} out of range for {h}x{w} plane")


def maxpool2d_with_indices(x, k=2, s=2):
    """Max pooling with recorded argmax indices (first occurrence on ties).

    Only the k == s non-overlapping configuration is supported; h and w
    must be divisible by s.
    """
    x = as_tensor(x)
    _check_rank4(x, "maxpool input")
    if k != s:
        raise ShapeError(f"maxpool supports k == s only, got k={k}, s={s}")
    n, c, h, w = x.shape
    if h % s or w % s:
        raise ShapeError(f"maxpool input dims {h}x{w} not divisible by stride {s}")
    oh, ow = h // s, w // s
    win = x.data.reshape(n, c, oh, s, ow, s).transpose(0, 1, 2, 4, 3, 5).reshape(
        n, c, oh, ow, s * s)
    arg = win.argmax(axis=-1)                       # first occurrence on ties
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    ii = np.arange(oh).reshape(1, 1, oh, 1)
    jj = np.arange(ow).reshape(1, 1, 1, ow)
    flat = (ii * s + arg // s) * w + (jj * s + arg % s)
    indices = PoolIndices(flat=flat.astype(np.int64), input_hw=(h, w), window=s)

    def vjp(g):
        gx = np.zeros((n, c, h * w), dtype=g.dtype)
        np.put_along_axis(gx, flat.reshape(n, c, oh * ow),
                          g.reshape(n, c, oh * ow), axis=2)
        return gx.reshape(n, c, h, w)

    return make_node(out, [(x, vjp)]), indices


def unpool(x, indices: PoolIndices, out_hw):
    """Scatter pooled values back to their argmax positions, zeros elsewhere."""
    x = as_tensor(x)
    _check_rank4(x, "unpool input")
    if x.shape != indices.shape:
        raise ShapeError(f"unpool value shape {x.shape} != index shape {indices.shape}")
    H, W = out_hw
    n, c, oh, ow = x.shape
    flat = indices.flat.reshape(n, c, oh * ow)
    if flat.size and int(flat.max()) >= H * W:
        raise ShapeError(
            f"unpool index {int(flat.max())} out of range for output plane {H}x{W}")
    out = np.zeros((n, c, H * W), dtype=x.dtype)
    np.put_along_axis(out, flat, x.data.reshape(n, c, oh * ow), axis=2)

    def vjp(g):
        return np.take_along_axis(g.reshape(n, c, H * W), flat, axis=2).reshape(x.shape)

    return make_node(out.reshape(n, c, H, W), [(x, vjp)])


def upsample_nearest(x, factor: int):
    """Replicate each pixel factor x factor; gradient sums the replicas."""
    x = as_tensor(x)
    _check_rank4(x, "upsample input")
    if factor < 1:
        raise ShapeError(f"upsample factor must be >= 1, got {factor}")
    if factor == 1:
        return make_node(x.data.copy(), [(x, lambda g: g)])
    n, c, h, w = x.shape
    out = np.broadcast_to(
        x.data[:, :, :, None, :, None], (n, c, h, factor, w, factor)
    ).reshape(n, c, h * factor, w * factor)

    def vjp(g):
        return g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5))

    return make_node(out, [(x, vjp)])


# ---------------------------------------------------------------------------
# batch normalization
# ---------------------------------------------------------------------------

@dataclass
class RunningStats:
    mean: np.ndarray
    var: np.ndarray
    momentum: float = 0.9

    @classmethod
    def create(cls, channels, momentum=0.9):
        return cls(mean=np.zeros(channels, dtype=np.float32),
                   var=np.ones(channels, dtype=np.float32),
                   momentum=momentum)


def batch_norm(x, gamma, beta, training, running_stats: RunningStats | None = None,
               eps=1e-5):
    """Per-channel normalization over (n, h, w) with affine transform.

    Training mode uses batch statistics and updates `running_stats` in place;
    eval mode normalizes with the stored running statistics.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    _check_rank4(x, "batch_norm input")
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(
            f"batch_norm affine shapes {gamma.shape}/{beta.shape} != ({c},)")
    gam = gamma.data.reshape(1, c, 1, 1)
    bet = beta.data.reshape(1, c, 1, 1)
    if training:
        mu = x.data.mean(axis=(0, 2, 3), keepdims=True)
        var = np.mean(np.square(x.data), axis=(0, 2, 3), keepdims=True) - mu * mu
        np.maximum(var, 0.0, out=var)
        if running_stats is not None:
            m = running_stats.momentum
            running_stats.mean = m * running_stats.mean + (1 - m) * mu.reshape(c)
            running_stats.var = m * running_stats.var + (1 - m) * var.reshape(c)
        ivar = 1.0 / np.sqrt(var + eps)
        xhat = x.data - mu
        xhat *= ivar
        out = gam * xhat
        out += bet
        count = n * h * w

        def vjp_x(g):
            dxhat = g * gam
            sum_dxhat = dxhat.sum(axis=(0, 2, 3), keepdims=True)
            sum_dxhat_xhat = np.einsum("nchw,nchw->c", dxhat, xhat).reshape(1, c, 1, 1)
            dxhat -= sum_dxhat * (1.0 / count)
            dxhat -= xhat * (sum_dxhat_xhat * (1.0 / count))
            dxhat *= ivar
            return dxhat

        def vjp_gamma(g):
            return np.einsum("nchw,nchw->c", g, xhat)
    else:
        if running_stats is None:
            raise ShapeError("batch_norm eval mode requires running stats")
        mu = running_stats.mean.reshape(1, c, 1, 1)
        ivar = 1.0 / np.sqrt(running_stats.var.reshape(1, c, 1, 1) + eps)
        scale = (gam * ivar).astype(x.dtype)
        out = x.data * scale
        out += (bet - mu * scale).astype(x.dtype)

        def vjp_x(g):
            return g * scale

        def vjp_gamma(g):
            xhat = (x.data - mu) * ivar
            return np.einsum("nchw,nchw->c", g, xhat.astype(g.dtype))

    def vjp_beta(g):
        return g.sum(axis=(0, 2, 3))

    return make_node(out.astype(x.dtype, copy=False),
                     [(x, vjp_x), (gamma, vjp_gamma), (beta, vjp_beta)])
