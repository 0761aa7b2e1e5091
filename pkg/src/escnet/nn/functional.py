"""Forward/backward kernels on NHWC numpy arrays.

Every ``*_forward`` returns ``(out, cache)`` and the matching ``*_backward``
consumes that cache. Convolutions use Same padding and unit stride; max
pooling uses ceil mode with ``ksize == stride``.
"""
from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeMismatch

BN_EPS = 1e-5
_IM2COL_BUDGET = 1 << 26  # bytes per im2col chunk


def _same_pad(k: int) -> tuple[int, int]:
    total = k - 1
    return total // 2, total - total // 2


def _batch4(x):
    x = np.asarray(x)
    if x.ndim == 3:
        return x[None], True
    if x.ndim != 4:
        raise ShapeMismatch(f"expected (B, H, W, C) or (H, W, C), got {x.shape}")
    return x, False


def _im2col(xp: np.ndarray, kh: int, kw: int, h: int, w: int) -> np.ndarray:
    b, _, _, c = xp.shape
    if kh == 1 and kw == 1:
        return xp.reshape(b * h * w, c)
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))  # b, h, w, c, kh, kw
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(b * h * w, kh * kw * c)


def _chunks(batch: int, per_sample_bytes: int):
    step = max(1, _IM2COL_BUDGET // max(per_sample_bytes, 1))
    for start in range(0, batch, step):
        yield slice(start, min(start + step, batch))


def conv2d_forward(x, w, b):
    """Same-padded, unit-stride 2-D cross-correlation plus bias.

    x: (B, H, W, Cin) or (H, W, Cin); w: (kh, kw, Cin, Cout); b: (Cout,).
    """
    x, squeeze = _batch4(x)
    kh, kw, cin, cout = w.shape
    bsz, h, wd, c = x.shape
    if c != cin or b.shape != (cout,):
        raise ShapeMismatch(f"input channels {c} / bias {b.shape} vs kernel {w.shape}")
    (pt, pb), (pl, pr) = _same_pad(kh), _same_pad(kw)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    wmat = w.reshape(-1, cout)
    out = np.empty((bsz, h, wd, cout), dtype=np.result_type(x, w))
    per_sample = h * wd * kh * kw * cin * x.itemsize
    for sl in _chunks(bsz, per_sample):
        cols = _im2col(xp[sl], kh, kw, h, wd)
        out[sl] = (cols @ wmat + b).reshape(-1, h, wd, cout)
    cache = (xp, w, x.shape, squeeze)
    return (out[0] if squeeze else out), cache


def conv2d_backward(grad_out, cache, need_input_grad: bool = True):
    """Return ``(grad_x, grad_w, grad_b)``; grad_x is None when not requested."""
    xp, w, xshape, squeeze = cache
    g, _ = _batch4(grad_out)
    kh, kw, cin, cout = w.shape
    bsz, h, wd, _ = xshape
    if g.shape != (bsz, h, wd, cout):
        raise ShapeMismatch(f"grad shape {g.shape} does not match output {(bsz, h, wd, cout)}")
    (pt, _), (pl, _) = _same_pad(kh), _same_pad(kw)
    wmat = w.reshape(-1, cout)
    gw = np.zeros_like(wmat)
    gb = g.reshape(-1, cout).sum(axis=0)
    dxp = np.zeros_like(xp) if need_input_grad else None
    per_sample = h * wd * kh * kw * cin * xp.itemsize
    for sl in _chunks(bsz, per_sample):
        gs = g[sl].reshape(-1, cout)
        cols = _im2col(xp[sl], kh, kw, h, wd)
        gw += cols.T @ gs
        if need_input_grad:
            dcols = (gs @ wmat.T).reshape(-1, h, wd, kh, kw, cin)
            for i in range(kh):
                for j in range(kw):
                    dxp[sl, i:i + h, j:j + wd, :] += dcols[:, :, :, i, j, :]
    gx = None
    if need_input_grad:
        gx = dxp[:, pt:pt + h, pl:pl + wd, :]
        if squeeze:
            gx = gx[0]
    return gx, gw.reshape(w.shape), gb


def batchnorm_forward(x, gamma, beta, train: bool = True, running_mean=None, running_var=None,
                      eps: float = BN_EPS):
    """Per-channel normalization over every axis but the last.

    Returns ``(y, cache)``; in train mode ``cache`` carries the batch mean and
    (biased) variance under keys ``mean`` / ``var`` for running-stat updates.
    """
    axes = tuple(range(x.ndim - 1))
    if train:
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
    else:
        mean, var = running_mean, running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv.astype(x.dtype)
    y = gamma * xhat + beta
    cache = {"xhat": xhat, "inv": inv, "gamma": gamma, "mean": mean, "var": var}
    return y.astype(x.dtype, copy=False), cache


def batchnorm_backward(grad_out, cache):
    """Exact gradient of the train-mode forward."""
    xhat, inv, gamma = cache["xhat"], cache["inv"], cache["gamma"]
    axes = tuple(range(grad_out.ndim - 1))
    n = grad_out.size // grad_out.shape[-1]
    gbeta = grad_out.sum(axis=axes)
    ggamma = (grad_out * xhat).sum(axis=axes)
    dxhat = grad_out * gamma
    gx = (inv / n) * (n * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))
    return gx.astype(grad_out.dtype, copy=False), ggamma, gbeta


def pool_output_shape(h: int, w: int, ksize) -> tuple[int, int]:
    return math.ceil(h / ksize[0]), math.ceil(w / ksize[1])


def maxpool_forward(x, ksize, stride=None):
    """Ceil-mode max pooling; edge windows may be partial.

    Ties resolve to the first element of the window in row-major order.
    """
    stride = tuple(stride or ksize)
    ksize = tuple(ksize)
    if stride != ksize:
        raise ValueError("only ksize == stride pooling is supported")
    x, squeeze = _batch4(x)
    b, h, w, c = x.shape
    kh, kw = ksize
    ho, wo = pool_output_shape(h, w, ksize)
    if (ho * kh, wo * kw) != (h, w):
        xp = np.full((b, ho * kh, wo * kw, c), -np.inf, dtype=x.dtype)
        xp[:, :h, :w] = x
    else:
        xp = x
    win = xp.reshape(b, ho, kh, wo, kw, c).transpose(0, 1, 3, 2, 4, 5).reshape(b, ho, wo, kh * kw, c)
    idx = win.argmax(axis=3)
    out = np.take_along_axis(win, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    cache = (idx, x.shape, ksize, squeeze)
    return (out[0] if squeeze else out), cache


def maxpool_backward(grad_out, cache):
    idx, xshape, (kh, kw), squeeze = cache
    g, _ = _batch4(grad_out)
    b, h, w, c = xshape
    _, ho, wo, _ = g.shape
    dwin = np.zeros((b, ho, wo, kh * kw, c), dtype=g.dtype)
    np.put_along_axis(dwin, idx[:, :, :, None, :], g[:, :, :, None, :], axis=3)
    dx = dwin.reshape(b, ho, wo, kh, kw, c).transpose(0, 1, 3, 2, 4, 5).reshape(b, ho * kh, wo * kw, c)
    dx = dx[:, :h, :w]
    return dx[0] if squeeze else dx


def dense_forward(x, w, b):
    if x.shape[-1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ShapeMismatch(f"dense input {x.shape} vs weights {w.shape}, bias {b.shape}")
    return x @ w + b, (x, w)


def dense_backward(grad_out, cache):
    x, w = cache
    return grad_out @ w.T, x.T @ grad_out, grad_out.sum(axis=0)


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(grad_out, mask):
    return grad_out * mask


def dropout_mask(shape, rate: float, rng: np.random.Generator, dtype=np.float32):
    keep = rng.random(shape) >= rate
    return (keep / (1.0 - rate)).astype(dtype)


def dropout_forward(x, rate: float, train: bool, rng: np.random.Generator | None = None, mask=None):
    """Inverted dropout; identity outside training or when ``rate`` is 0."""
    if not train or rate == 0:
        return x, None
    if mask is None:
        mask = dropout_mask(x.shape, rate, rng, x.dtype)
    return x * mask, mask


def dropout_backward(grad_out, mask):
    return grad_out if mask is None else grad_out * mask


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy against (possibly soft) labels and its logit gradient."""
    logits = np.asarray(logits)
    labels = np.asarray(labels, dtype=logits.dtype)
    if logits.shape != labels.shape:
        raise ShapeMismatch(f"logits {logits.shape} vs labels {labels.shape}")
    n = logits.shape[0]
    logp = log_softmax(logits)
    loss = -float(np.sum(labels * logp, dtype=np.float64)) / n
    grad = (np.exp(logp) - labels) / n
    return loss, grad
