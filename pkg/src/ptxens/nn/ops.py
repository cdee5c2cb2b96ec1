"""Tensor kernels with exact analytic backward passes.

All arrays are float64.  Batched variants (leading N axis) carry the
suffix ``_forward``/``_backward`` and return/accept whatever cache the
backward pass needs; the bare-named functions are thin single-purpose
wrappers that return only the output.  Convolution is cross-correlation
(no kernel flip), evaluated as a strided window view contracted with the
kernel tensor; its input gradient is the matching transpose convolution.
"""

from __future__ import annotations

import numpy as np

CE_CLIP = 1e-12


def _pad_hw(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    n, c, h, w = x.shape
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
    out[:, :, pad : pad + h, pad : pad + w] = x
    return out


def _window_view(x: np.ndarray, k: int, stride: int) -> np.ndarray:
    """Read-only sliding-window view (N, C, k, k, Ho, Wo) over the last two axes."""
    n, c, h, w = x.shape
    ho = (h - k) // stride + 1
    wo = (w - k) // stride + 1
    sn, sc, sh, sw = x.strides
    return np.lib.stride_tricks.as_strided(
        x,
        shape=(n, c, k, k, ho, wo),
        strides=(sn, sc, sh, sw, sh * stride, sw * stride),
        writeable=False,
    )


# --------------------------------------------------------------------------
# Convolution


def conv2d_forward(x, weights, bias, stride: int = 1, pad: int = 0):
    """x: (N, C, H, W); weights: (O, C, k, k); bias: (O,).  Returns (out, cache)."""
    n, c, h, w = x.shape
    o, cw, kh, kw = weights.shape
    if cw != c:
        raise ValueError(f"kernel expects {cw} input channels, input has {c}")
    if kh != kw:
        raise ValueError("only square kernels are supported")
    k = kh
    if h + 2 * pad < k or w + 2 * pad < k:
        raise ValueError(f"input {h}x{w} too small for kernel {k} with pad {pad}")
    xp = np.ascontiguousarray(_pad_hw(x, pad))
    cols = _window_view(xp, k, stride)
    out = np.tensordot(weights, cols, axes=([1, 2, 3], [1, 2, 3]))
    out = np.ascontiguousarray(out.transpose(1, 0, 2, 3))
    out += bias[None, :, None, None]
    cache = (xp, weights, stride, pad, (h, w))
    return out, cache


def conv2d_backward(dout, cache):
    """Returns (dx, dweights, dbias)."""
    xp, weights, stride, pad, (h, w) = cache
    n = xp.shape[0]
    o, c, k, _ = weights.shape
    cols = _window_view(xp, k, stride)
    dw = np.tensordot(dout, cols, axes=([0, 2, 3], [0, 4, 5]))
    db = dout.sum(axis=(0, 2, 3))

    # Input gradient as a transpose convolution: dilate dout by the stride,
    # zero-pad by k-1, then correlate with the spatially flipped,
    # channel-transposed kernels.
    ho, wo = dout.shape[2], dout.shape[3]
    hd = (ho - 1) * stride + 1
    wd = (wo - 1) * stride + 1
    dil = np.zeros((n, o, hd + 2 * (k - 1), wd + 2 * (k - 1)), dtype=dout.dtype)
    dil[:, :, k - 1 : k - 1 + hd : stride, k - 1 : k - 1 + wd : stride] = dout
    wf = np.ascontiguousarray(weights[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    dxp_core = np.tensordot(wf, _window_view(dil, k, 1), axes=([1, 2, 3], [1, 2, 3]))
    dxp_core = dxp_core.transpose(1, 0, 2, 3)

    # Rows/cols of the padded input beyond the last window were never read in
    # the forward pass, so their gradient stays zero.
    hp, wp = xp.shape[2], xp.shape[3]
    dxp = np.zeros((n, c, hp, wp), dtype=dout.dtype)
    dxp[:, :, : dxp_core.shape[2], : dxp_core.shape[3]] = dxp_core
    dx = np.ascontiguousarray(dxp[:, :, pad : pad + h, pad : pad + w])
    return dx, dw, db


def conv2d(x, weights, bias, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Single-image convolution: x (C, H, W) -> (O, H', W')."""
    out, _ = conv2d_forward(
        np.asarray(x, dtype=np.float64)[None],
        np.asarray(weights, dtype=np.float64),
        np.asarray(bias, dtype=np.float64),
        stride,
        pad,
    )
    return out[0]


# --------------------------------------------------------------------------
# Max pooling (2x2, stride 2)


def maxpool2d_forward(x):
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"max pooling needs even spatial extents, got {h}x{w}")
    win = (
        x.reshape(n, c, h // 2, 2, w // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h // 2, w // 2, 4)
    )
    # argmax returns the first maximum, i.e. row-major order within the window
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, (idx, (n, c, h, w))


def maxpool2d_backward(dout, cache):
    idx, (n, c, h, w) = cache
    scatter = np.zeros((n, c, h // 2, w // 2, 4), dtype=dout.dtype)
    np.put_along_axis(scatter, idx[..., None], dout[..., None], axis=-1)
    return (
        scatter.reshape(n, c, h // 2, w // 2, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h, w)
    )


def maxpool2d(x) -> np.ndarray:
    out, _ = maxpool2d_forward(np.asarray(x, dtype=np.float64)[None])
    return out[0]


# --------------------------------------------------------------------------
# Pointwise and reductions


def relu_forward(x):
    return np.maximum(x, 0.0), x > 0


def relu_backward(dout, mask):
    return dout * mask


def relu(x) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def global_avg_pool_forward(x):
    n, c, h, w = x.shape
    return x.mean(axis=(2, 3)), (n, c, h, w)


def global_avg_pool_backward(dout, cache):
    n, c, h, w = cache
    return np.broadcast_to(dout[:, :, None, None], (n, c, h, w)) / (h * w)


def global_avg_pool(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64).mean(axis=(1, 2))


def dense_forward(x, weights, bias):
    """x: (N, in); weights: (in, out); bias: (out,)."""
    if x.shape[1] != weights.shape[0]:
        raise ValueError(f"dense expects {weights.shape[0]} inputs, got {x.shape[1]}")
    return x @ weights + bias, x


def dense_backward(dout, x, weights):
    return dout @ weights.T, x.T @ dout, dout.sum(axis=0)


def dropout_forward(x, rate: float, rng, training: bool):
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    keep = rng.random(x.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    return x * keep * scale, (keep, scale)


def dropout_backward(dout, cache):
    if cache is None:
        return dout
    keep, scale = cache
    return dout * keep * scale


def dropout(x, rate: float, rng=None, training: bool = False) -> np.ndarray:
    out, _ = dropout_forward(np.asarray(x, dtype=np.float64), rate, rng, training)
    return out


def softmax(v) -> np.ndarray:
    """Stable softmax over the last axis (max subtraction, no overflow)."""
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("softmax requires finite inputs")
    e = np.exp(v - v.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


# --------------------------------------------------------------------------
# Loss


def cross_entropy(probs, label: int) -> float:
    """-ln of the labelled class probability, clamped to [1e-12, 1]."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.min() < -1e-9 or abs(probs.sum() - 1.0) > 1e-6:
        raise ValueError("cross_entropy expects a probability vector")
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label}")
    return float(-np.log(np.clip(probs[label], CE_CLIP, 1.0)))


def cross_entropy_batch(probs, labels):
    """Mean clamped cross-entropy and its gradient with respect to the logits.

    The gradient is the fused softmax+cross-entropy form (probs - onehot)/N;
    rows whose labelled probability sits at the clamp floor contribute a
    constant loss, hence zero gradient.
    """
    n = probs.shape[0]
    p_label = probs[np.arange(n), labels]
    loss = float(-np.log(np.clip(p_label, CE_CLIP, 1.0)).mean())
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    dlogits[p_label <= CE_CLIP] = 0.0
    return loss, dlogits
