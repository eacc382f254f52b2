"""Dense float64 tensor primitives with hand-written backward passes.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. Every
differentiable primitive comes as a ``forward``/``*_backward`` pair; backward
functions take the upstream gradient plus whatever the forward consumed and
return gradients for each differentiable input.

Spatial ops take channel-last tensors ``[..., H, W, C]`` so a whole batch of
patches can go through one call.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Raised when operand shapes violate an operation's contract."""


def as_tensor(x) -> np.ndarray:
    """float64 view of ``x``; extended-precision input is passed through.

    The pass-through lets a finite-difference oracle evaluate the very same
    code path in ``np.longdouble`` (where the platform has one).
    """
    a = np.asarray(x)
    if a.dtype == np.longdouble:
        return a
    return np.asarray(a, dtype=np.float64)


# ---------------------------------------------------------------- matmul

def matmul(a, b) -> np.ndarray:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


def matmul_backward(dout, a, b):
    return dout @ b.T, a.T @ dout


# ---------------------------------------------------------------- conv2d

def _pad_amount(kh: int, kw: int, padding: str) -> tuple[int, int]:
    if padding == "same":
        return kh // 2, kw // 2
    if padding == "valid":
        return 0, 0
    raise ValueError(f"unknown padding {padding!r}; expected 'same' or 'valid'")


def _check_conv(x, kernels, bias, padding):
    if x.ndim < 3:
        raise ShapeError(f"conv2d input must be [..., H, W, C], got {x.shape}")
    if kernels.ndim != 4:
        raise ShapeError(f"conv2d kernels must be [Kh, Kw, Cin, Cout], got {kernels.shape}")
    kh, kw, cin, cout = kernels.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d kernel dims must be odd, got {kh}x{kw}")
    if x.shape[-1] != cin:
        raise ShapeError(f"conv2d channel mismatch: input has {x.shape[-1]}, kernels expect {cin}")
    if bias.shape != (cout,):
        raise ShapeError(f"conv2d bias must be [{cout}], got {bias.shape}")
    h, w = x.shape[-3], x.shape[-2]
    if padding == "valid" and (kh > h or kw > w):
        raise ShapeError(f"kernel {kh}x{kw} larger than input {h}x{w} in valid mode")


def _im2col(x, kh, kw, ph, pw):
    if ph or pw:
        x = np.pad(x, [(0, 0)] * (x.ndim - 3) + [(ph, ph), (pw, pw), (0, 0)])
    # [..., Ho, Wo, C, kh, kw]; flattened as (C, kh, kw) to avoid an extra transpose
    return sliding_window_view(x, (kh, kw), axis=(-3, -2))


def _correlate(x, kernels, ph, pw):
    kh, kw, cin, cout = kernels.shape
    cols = _im2col(x, kh, kw, ph, pw)
    out_shape = cols.shape[:-3]
    kmat = kernels.transpose(2, 0, 1, 3).reshape(cin * kh * kw, cout)
    return (cols.reshape(-1, cin * kh * kw) @ kmat).reshape(*out_shape, cout)


def conv2d(x, kernels, bias, padding: str = "same") -> np.ndarray:
    """Cross-correlation of ``x`` [..., H, W, Cin] with ``kernels`` plus bias."""
    x, kernels, bias = as_tensor(x), as_tensor(kernels), as_tensor(bias)
    _check_conv(x, kernels, bias, padding)
    kh, kw = kernels.shape[:2]
    return _correlate(x, kernels, *_pad_amount(kh, kw, padding)) + bias


def conv2d_backward(dout, x, kernels, padding: str = "same", need_dx: bool = True):
    """Return ``(dx, dkernels, dbias)``; ``dx`` is None when ``need_dx`` is false."""
    kh, kw, cin, cout = kernels.shape
    ph, pw = _pad_amount(kh, kw, padding)
    cols = _im2col(x, kh, kw, ph, pw).reshape(-1, cin * kh * kw)
    d2 = dout.reshape(-1, cout)
    dk = (cols.T @ d2).reshape(cin, kh, kw, cout).transpose(1, 2, 0, 3)
    db = d2.sum(axis=0)
    if not need_dx:
        return None, dk, db
    # input gradient: correlate dout with the spatially flipped, channel-swapped kernel
    flipped = kernels[::-1, ::-1].transpose(0, 1, 3, 2)
    dx = _correlate(dout, flipped, kh - 1 - ph, kw - 1 - pw)
    return dx, dk, db


# ---------------------------------------------------------------- pooling

def _pool_windows(x):
    h, w = x.shape[-3], x.shape[-2]
    hp, wp = h + h % 2, w + w % 2
    if (hp, wp) != (h, w):
        pad = [(0, 0)] * (x.ndim - 3) + [(0, hp - h), (0, wp - w), (0, 0)]
        x = np.pad(x, pad, constant_values=-np.inf)
    lead = x.shape[:-3]
    c = x.shape[-1]
    win = x.reshape(*lead, hp // 2, 2, wp // 2, 2, c)
    win = np.moveaxis(win, -4, -3).reshape(*lead, hp // 2, wp // 2, 4, c)
    return win


def maxpool2x2(x) -> np.ndarray:
    """2x2 max pooling with stride 2; odd trailing rows/columns pool a partial window."""
    x = as_tensor(x)
    if x.ndim < 3 or x.size == 0:
        raise ShapeError(f"maxpool2x2 needs a non-empty [..., H, W, C] tensor, got {x.shape}")
    return _pool_windows(x).max(axis=-2)


def maxpool2x2_backward(dout, x):
    win = _pool_windows(x)
    idx = win.argmax(axis=-2)
    onehot = np.arange(4)[:, None] == idx[..., None, :]
    dwin = onehot * dout[..., None, :]
    lead = x.shape[:-3]
    ho, wo, c = dout.shape[-3], dout.shape[-2], dout.shape[-1]
    dwin = dwin.reshape(*lead, ho, wo, 2, 2, c)
    dwin = np.moveaxis(dwin, -3, -4).reshape(*lead, 2 * ho, 2 * wo, c)
    return dwin[..., :x.shape[-3], :x.shape[-2], :]


def global_avg_pool(x) -> np.ndarray:
    x = as_tensor(x)
    if x.ndim < 3 or x.size == 0:
        raise ShapeError(f"global_avg_pool needs a non-empty [..., H, W, C] tensor, got {x.shape}")
    return x.mean(axis=(-3, -2))


def global_avg_pool_backward(dout, x_shape):
    h, w = x_shape[-3], x_shape[-2]
    return np.broadcast_to(dout[..., None, None, :] / (h * w), x_shape).copy()


# ---------------------------------------------------------------- elementwise

def activation(x, kind: str) -> np.ndarray:
    x = as_tensor(x)
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "tanh":
        return np.tanh(x)
    raise ValueError(f"unknown activation {kind!r}")


def activation_backward(dout, x, kind: str):
    if kind == "relu":
        return dout * (x > 0)
    if kind == "tanh":
        t = np.tanh(x)
        return dout * (1.0 - t * t)
    raise ValueError(f"unknown activation {kind!r}")


def softmax(scores, axis: int = -1) -> np.ndarray:
    s = as_tensor(scores)
    if s.shape[axis] < 1:
        raise ShapeError("softmax over an empty axis")
    z = np.exp(s - s.max(axis=axis, keepdims=True))
    return z / z.sum(axis=axis, keepdims=True)


def softmax_backward(dout, y, axis: int = -1):
    """Gradient w.r.t. the scores, given the softmax output ``y``."""
    return y * (dout - (dout * y).sum(axis=axis, keepdims=True))


def concat(tensors: Sequence[np.ndarray], axis: int = -1) -> np.ndarray:
    return np.concatenate([as_tensor(t) for t in tensors], axis=axis)


def concat_backward(dout, sizes: Sequence[int], axis: int = -1):
    return np.split(dout, np.cumsum(sizes)[:-1], axis=axis)


# ---------------------------------------------------------------- dropout

def dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout mask: Bernoulli(1 - rate) scaled by 1 / (1 - rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if rate == 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


# ---------------------------------------------------------------- grad check

@dataclass(frozen=True)
class GradCheckResult:
    max_relative_error: float
    worst_index: int
    analytic: float
    numeric: float


def numeric_grad(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function.

    Works in the dtype of ``x``: pass a ``np.longdouble`` array (and let ``f``
    return a ``np.longdouble``) to cut the roundoff in ``f(x+h) - f(x-h)``.
    """
    x = as_tensor(x).copy()
    flat = x.reshape(-1)
    grad = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"non-finite function value at flat index {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad.reshape(x.shape)


def relative_error(analytic, numeric) -> np.ndarray:
    a, n = as_tensor(analytic), as_tensor(numeric)
    return np.abs(a - n) / np.maximum(1e-8, np.abs(a) + np.abs(n))


def finite_diff_grad_check(f, x, analytic_grad, h: float = 1e-5) -> GradCheckResult:
    if h <= 0:
        raise ValueError("step h must be positive")
    x = as_tensor(x)
    analytic = as_tensor(analytic_grad)
    if analytic.shape != x.shape:
        raise ShapeError(f"analytic gradient shape {analytic.shape} != input shape {x.shape}")
    numeric = numeric_grad(f, x, h)
    err = relative_error(analytic, numeric).reshape(-1)
    i = int(err.argmax())
    return GradCheckResult(float(err[i]), i, float(analytic.reshape(-1)[i]),
                           float(numeric.reshape(-1)[i]))
