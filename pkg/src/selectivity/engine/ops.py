"""Forward and input-gradient rules for each supported layer kind.

All math runs in float64. Convolution and pooling use an im2col layout with a
fixed per-output-element summation order, so repeated runs are bit-identical.
Gradient scatter uses ``np.add.at``, which accumulates sequentially.
"""

from __future__ import annotations

import numpy as np

from ..layers import LayerKind, LayerSpec


class GateMode:
    """ReLU backward behavior. Standard passes any upstream gradient through
    active units; the guided variant additionally zeroes negative upstream
    gradients, so only positive evidence propagates down."""

    STANDARD = "standard"
    GUIDED_RELU = "guided-relu"

    ALL = (STANDARD, GUIDED_RELU)


def _window_view(xp: np.ndarray, kh: int, kw: int, sh: int, sw: int, ho: int, wo: int) -> np.ndarray:
    """Strided (C, kh, kw, Ho, Wo) view over a padded CxHxW array."""
    c = xp.shape[0]
    s0, s1, s2 = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp, shape=(c, kh, kw, ho, wo), strides=(s0, s1, s2, s1 * sh, s2 * sw), writeable=False
    )


def _im2col(x: np.ndarray, kh: int, kw: int, sh: int, sw: int, ph: int, pw: int) -> tuple[np.ndarray, int, int]:
    c, h, w = x.shape
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w + 2 * pw - kw) // sw + 1
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    cols = _window_view(xp, kh, kw, sh, sw, ho, wo).reshape(c * kh * kw, ho * wo)
    return np.ascontiguousarray(cols), ho, wo


def _col_flat_indices(
    c: int, hp: int, wp: int, kh: int, kw: int, sh: int, sw: int, ho: int, wo: int
) -> np.ndarray:
    """Flat positions into the padded array for every (patch-row, patch-col) pair."""
    ch = np.repeat(np.arange(c), kh * kw)
    ki = np.tile(np.repeat(np.arange(kh), kw), c)
    kj = np.tile(np.arange(kw), c * kh)
    oy = np.repeat(np.arange(ho), wo)
    ox = np.tile(np.arange(wo), ho)
    rows = ki[:, None] + oy[None, :] * sh
    colx = kj[:, None] + ox[None, :] * sw
    return ch[:, None] * (hp * wp) + rows * wp + colx


def _col2im(
    gcols: np.ndarray, shape: tuple[int, int, int], kh: int, kw: int,
    sh: int, sw: int, ph: int, pw: int, ho: int, wo: int,
) -> np.ndarray:
    c, h, w = shape
    hp, wp = h + 2 * ph, w + 2 * pw
    flat = np.zeros(c * hp * wp)
    idx = _col_flat_indices(c, hp, wp, kh, kw, sh, sw, ho, wo)
    np.add.at(flat, idx.ravel(), gcols.ravel())
    padded = flat.reshape(c, hp, wp)
    return padded[:, ph : ph + h, pw : pw + w]


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray | None, spec: LayerSpec):
    co, ci, kh, kw = w.shape
    sh, sw = spec.stride
    ph, pw = spec.padding
    cols, ho, wo = _im2col(x, kh, kw, sh, sw, ph, pw)
    y2 = w.reshape(co, ci * kh * kw) @ cols
    if b is not None:
        y2 = y2 + b[:, None]
    ctx = (x.shape, w, ho, wo)
    return y2.reshape(co, ho, wo), ctx


def conv2d_vjp(gy: np.ndarray, ctx, spec: LayerSpec) -> np.ndarray:
    x_shape, w, ho, wo = ctx
    co, ci, kh, kw = w.shape
    sh, sw = spec.stride
    ph, pw = spec.padding
    gcols = w.reshape(co, ci * kh * kw).T @ gy.reshape(co, ho * wo)
    return _col2im(gcols, x_shape, kh, kw, sh, sw, ph, pw, ho, wo)


def maxpool_forward(x: np.ndarray, spec: LayerSpec):
    kh, kw = spec.kernel  # type: ignore[misc]
    sh, sw = spec.stride
    ph, pw = spec.padding
    c, h, w = x.shape
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w + 2 * pw - kw) // sw + 1
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)), constant_values=-np.inf)
    win = _window_view(xp, kh, kw, sh, sw, ho, wo).reshape(c, kh * kw, ho * wo)
    # argmax returns the first maximum: ties route to the earliest window
    # position in row-major scan order
    sel = np.argmax(win, axis=1)
    y = np.take_along_axis(win, sel[:, None, :], axis=1)[:, 0, :]
    ctx = (x.shape, sel, ho, wo)
    return y.reshape(c, ho, wo), ctx


def maxpool_vjp(gy: np.ndarray, ctx, spec: LayerSpec) -> np.ndarray:
    x_shape, sel, ho, wo = ctx
    kh, kw = spec.kernel  # type: ignore[misc]
    sh, sw = spec.stride
    ph, pw = spec.padding
    c, h, w = x_shape
    hp, wp = h + 2 * ph, w + 2 * pw
    ki, kj = sel // kw, sel % kw
    oy = np.repeat(np.arange(ho), wo)[None, :]
    ox = np.tile(np.arange(wo), ho)[None, :]
    rows = ki + oy * sh
    colx = kj + ox * sw
    flat_idx = (np.arange(c)[:, None] * (hp * wp) + rows * wp + colx).ravel()
    flat = np.zeros(c * hp * wp)
    np.add.at(flat, flat_idx, gy.reshape(c, ho * wo).ravel())
    return flat.reshape(c, hp, wp)[:, ph : ph + h, pw : pw + w]


def relu_forward(x: np.ndarray):
    mask = x > 0
    return np.where(mask, x, 0.0), mask


def relu_vjp(gy: np.ndarray, mask: np.ndarray, gate: str) -> np.ndarray:
    gx = np.where(mask, gy, 0.0)
    if gate == GateMode.GUIDED_RELU:
        gx = np.where(gx > 0, gx, 0.0)
    return gx


def batchnorm_forward(x: np.ndarray, gamma, beta, mean, var, eps: float):
    scale = gamma / np.sqrt(var + eps)
    y = (x - mean[:, None, None]) * scale[:, None, None] + beta[:, None, None]
    return y, scale


def batchnorm_vjp(gy: np.ndarray, scale: np.ndarray) -> np.ndarray:
    return gy * scale[:, None, None]


def gap_forward(x: np.ndarray):
    c, h, w = x.shape
    return x.reshape(c, h * w).mean(axis=1), (x.shape,)


def gap_vjp(gy: np.ndarray, ctx) -> np.ndarray:
    (x_shape,) = ctx
    c, h, w = x_shape
    return np.broadcast_to(gy[:, None, None] / (h * w), x_shape).copy()


def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray | None):
    y = w @ x
    if b is not None:
        y = y + b
    return y, w


def linear_vjp(gy: np.ndarray, w: np.ndarray) -> np.ndarray:
    return w.T @ gy


def softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max())
    return e / e.sum()


def softmax_vjp(gy: np.ndarray, s: np.ndarray) -> np.ndarray:
    return s * (gy - float(gy @ s))


def layer_forward(spec: LayerSpec, params: dict[str, np.ndarray], inputs: tuple[np.ndarray, ...]):
    """Dispatch one layer; returns (output, vjp) where vjp(grad, gate) yields
    one gradient per input, in input order."""
    kind = spec.kind
    if kind is LayerKind.CONV2D:
        y, ctx = conv2d_forward(inputs[0], params["weight"], params.get("bias"), spec)
        return y, lambda g, gate: (conv2d_vjp(g, ctx, spec),)
    if kind is LayerKind.RELU:
        y, mask = relu_forward(inputs[0])
        return y, lambda g, gate: (relu_vjp(g, mask, gate),)
    if kind is LayerKind.MAXPOOL2D:
        y, ctx = maxpool_forward(inputs[0], spec)
        return y, lambda g, gate: (maxpool_vjp(g, ctx, spec),)
    if kind is LayerKind.BATCHNORM:
        y, scale = batchnorm_forward(
            inputs[0], params["gamma"], params["beta"], params["mean"], params["var"], spec.eps
        )
        return y, lambda g, gate: (batchnorm_vjp(g, scale),)
    if kind is LayerKind.ADD:
        y = inputs[0] + inputs[1]
        return y, lambda g, gate: (g, g)
    if kind is LayerKind.GLOBAL_AVG_POOL:
        y, ctx = gap_forward(inputs[0])
        return y, lambda g, gate: (gap_vjp(g, ctx),)
    if kind is LayerKind.FLATTEN:
        shape = inputs[0].shape
        return inputs[0].reshape(-1), lambda g, gate: (g.reshape(shape),)
    if kind is LayerKind.LINEAR:
        y, w = linear_forward(inputs[0], params["weight"], params.get("bias"))
        return y, lambda g, gate: (linear_vjp(g, w),)
    if kind is LayerKind.SOFTMAX:
        s = softmax(inputs[0])
        return s, lambda g, gate: (softmax_vjp(g, s),)
    raise ValueError(f"unhandled layer kind {kind}")  # pragma: no cover
