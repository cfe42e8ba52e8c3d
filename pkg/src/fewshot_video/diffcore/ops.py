"""Differentiable operations: linear algebra, convolution, pooling, losses.

Convolutions use the cross-correlation convention (no kernel flip) and are
implemented via im2col so the heavy lifting lands in BLAS. Every op checks
its output for NaN/Inf and registers itself on the active tape.
"""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor, make_result, _register_sugar


# ---------------------------------------------------------------------------
# broadcasting helpers

def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, inverting numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _binary(kind, a, b, fwd, bwd_a, bwd_b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            data = fwd(a.data, b.data)
    except ValueError as e:
        raise ShapeError(f"{kind}: {e}") from e
    return make_result(
        data, kind, (a, b),
        lambda g: (_unbroadcast(bwd_a(g, a.data, b.data), a.data.shape),
                   _unbroadcast(bwd_b(g, a.data, b.data), b.data.shape)),
    )


def add(a, b):
    return _binary("add", a, b, np.add, lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b):
    return _binary("sub", a, b, np.subtract, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b):
    return _binary("mul", a, b, np.multiply,
                   lambda g, x, y: g * y, lambda g, x, y: g * x)


# ---------------------------------------------------------------------------
# shape manipulation

def reshape(t: Tensor, shape) -> Tensor:
    t = as_tensor(t)
    old_shape = t.data.shape
    data = t.data.reshape(shape)
    return make_result(data, "reshape", (t,), lambda g: (g.reshape(old_shape),))


def transpose(t: Tensor, axes) -> Tensor:
    t = as_tensor(t)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return make_result(t.data.transpose(axes), "transpose", (t,),
                       lambda g: (g.transpose(inverse),))


def broadcast_to(t: Tensor, shape) -> Tensor:
    t = as_tensor(t)
    old_shape = t.data.shape
    data = np.broadcast_to(t.data, shape).copy()
    return make_result(data, "broadcast_to", (t,),
                       lambda g: (_unbroadcast(g, old_shape),))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat of zero tensors")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward_fn(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis)
                     for i in range(len(sizes)))

    return make_result(data, "concat", tensors, backward_fn)


def narrow(t: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice `[start, start+length)` along `axis`."""
    t = as_tensor(t)
    if start < 0 or start + length > t.data.shape[axis]:
        raise ShapeError(
            f"narrow [{start}:{start + length}) out of range for axis {axis} "
            f"of shape {t.shape}")
    index = [slice(None)] * t.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    full_shape = t.data.shape

    def backward_fn(g):
        out = np.zeros(full_shape, dtype=g.dtype)
        out[index] = g
        return (out,)

    return make_result(t.data[index].copy(), "narrow", (t,), backward_fn)


def stack_rows(tensors) -> Tensor:
    """Stack same-shape tensors along a new leading axis."""
    return concat([reshape(t, (1,) + tuple(as_tensor(t).shape)) for t in tensors], axis=0)


# ---------------------------------------------------------------------------
# reductions

def sum_(t: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    t = as_tensor(t)
    in_shape = t.data.shape
    data = t.data.sum(axis=axis, keepdims=keepdims)

    def backward_fn(g):
        if axis is None:
            return (np.broadcast_to(g.reshape((1,) * len(in_shape)), in_shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, in_shape).copy(),)

    return make_result(data, "sum", (t,), backward_fn)


def mean(t: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    t = as_tensor(t)
    count = t.data.size if axis is None else t.data.shape[axis]
    return mul(sum_(t, axis=axis, keepdims=keepdims), 1.0 / count)


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul inner dims disagree: {a.shape} x {b.shape}")
    data = a.data @ b.data
    return make_result(data, "matmul", (a, b),
                       lambda g: (g @ b.data.T, a.data.T @ g))


# ---------------------------------------------------------------------------
# activations

def relu(t) -> Tensor:
    t = as_tensor(t)
    mask = t.data > 0
    return make_result(np.where(mask, t.data, 0), "relu", (t,),
                       lambda g: (g * mask,))


def sigmoid(t) -> Tensor:
    t = as_tensor(t)
    # Stable in both tails: exp of a non-positive argument only.
    x = t.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return make_result(out, "sigmoid", (t,),
                       lambda g: (g * out * (1.0 - out),))


def tanh(t) -> Tensor:
    t = as_tensor(t)
    out = np.tanh(t.data)
    return make_result(out, "tanh", (t,),
                       lambda g: (g * (1.0 - out * out),))


# ---------------------------------------------------------------------------
# convolution

def _pair(v):
    return (v, v) if np.isscalar(v) else tuple(v)


def _im2col(x: np.ndarray, kh: int, kw: int, sh: int, sw: int):
    """Windows of a padded (B, C, H, W) input as (B*Ho*Wo, C*kh*kw)."""
    B, C, H, W = x.shape
    Ho = (H - kh) // sh + 1
    Wo = (W - kw) // sw + 1
    s = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x, shape=(B, C, kh, kw, Ho, Wo),
        strides=(s[0], s[1], s[2], s[3], s[2] * sh, s[3] * sw),
        writeable=False)
    cols = windows.transpose(0, 4, 5, 1, 2, 3).reshape(B * Ho * Wo, C * kh * kw)
    return np.ascontiguousarray(cols), Ho, Wo


def _col2im(dcols: np.ndarray, padded_shape, kh, kw, sh, sw, Ho, Wo):
    B, C, Hp, Wp = padded_shape
    dx = np.zeros(padded_shape, dtype=dcols.dtype)
    dwin = dcols.reshape(B, Ho, Wo, C, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    for p in range(kh):
        for q in range(kw):
            dx[:, :, p:p + sh * Ho:sh, q:q + sw * Wo:sw] += dwin[:, :, p, q]
    return dx


def conv2d(x, kernel, stride=(1, 1), padding=(0, 0)) -> Tensor:
    """Cross-correlate (C_in,H,W) or (B,C_in,H,W) with (C_out,C_in,kh,kw)."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    squeeze = x.data.ndim == 3
    xb = x.data[None] if squeeze else x.data
    if xb.ndim != 4 or kernel.data.ndim != 4:
        raise ShapeError(f"conv2d: input {x.shape}, kernel {kernel.shape}")
    B, C, H, W = xb.shape
    Co, Ck, kh, kw = kernel.data.shape
    if Ck != C:
        raise ShapeError(f"conv2d: kernel expects {Ck} channels, input has {C}")
    if kh > H + 2 * ph or kw > W + 2 * pw:
        raise ShapeError("conv2d: kernel larger than padded input")

    xp = np.pad(xb, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else xb
    cols, Ho, Wo = _im2col(xp, kh, kw, sh, sw)
    wmat = kernel.data.reshape(Co, C * kh * kw)
    out = (cols @ wmat.T).reshape(B, Ho, Wo, Co).transpose(0, 3, 1, 2)
    if squeeze:
        out = out[0]

    def backward_fn(g):
        gb = g[None] if squeeze else g
        gmat = gb.transpose(0, 2, 3, 1).reshape(B * Ho * Wo, Co)
        dw = (gmat.T @ cols).reshape(kernel.data.shape)
        dcols = gmat @ wmat
        dxp = _col2im(dcols, xp.shape, kh, kw, sh, sw, Ho, Wo)
        dx = dxp[:, :, ph:ph + H, pw:pw + W] if (ph or pw) else dxp
        return (dx[0] if squeeze else dx, dw)

    return make_result(np.ascontiguousarray(out), "conv2d", (x, kernel), backward_fn)


def conv3d(x, kernel) -> Tensor:
    """3x3x3 same-padded, stride-1 cross-correlation over (C_in,T,H,W).

    The temporal extent is preserved, which keeps short clips usable.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.data.ndim != 4:
        raise ShapeError(f"conv3d expects (C,T,H,W), got {x.shape}")
    Co, Ck, kt, kh, kw = kernel.data.shape
    if (kt, kh, kw) != (3, 3, 3):
        raise ShapeError(f"conv3d kernel must be 3x3x3, got {(kt, kh, kw)}")
    C, T, H, W = x.data.shape
    if Ck != C:
        raise ShapeError(f"conv3d: kernel expects {Ck} channels, input has {C}")

    xp = np.pad(x.data, ((0, 0), (1, 1), (1, 1), (1, 1)))
    s = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp, shape=(C, 3, 3, 3, T, H, W),
        strides=(s[0], s[1], s[2], s[3], s[1], s[2], s[3]),
        writeable=False)
    cols = np.ascontiguousarray(
        windows.transpose(4, 5, 6, 0, 1, 2, 3).reshape(T * H * W, C * 27))
    wmat = kernel.data.reshape(Co, C * 27)
    out = (cols @ wmat.T).reshape(T, H, W, Co).transpose(3, 0, 1, 2)

    def backward_fn(g):
        gmat = g.transpose(1, 2, 3, 0).reshape(T * H * W, Co)
        dw = (gmat.T @ cols).reshape(kernel.data.shape)
        dcols = gmat @ wmat
        dwin = dcols.reshape(T, H, W, C, 3, 3, 3).transpose(3, 4, 5, 6, 0, 1, 2)
        dxp = np.zeros_like(xp)
        for p in range(3):
            for q in range(3):
                for r in range(3):
                    dxp[:, p:p + T, q:q + H, r:r + W] += dwin[:, p, q, r]
        return (dxp[:, 1:1 + T, 1:1 + H, 1:1 + W], dw)

    return make_result(np.ascontiguousarray(out), "conv3d", (x, kernel), backward_fn)


# ---------------------------------------------------------------------------
# pooling

def avg_pool2d(x, window, stride=None) -> Tensor:
    """Mean over sliding windows of a (C,H,W) or (B,C,H,W) input."""
    x = as_tensor(x)
    kh, kw = _pair(window)
    sh, sw = _pair(stride if stride is not None else window)
    squeeze = x.data.ndim == 3
    xb = x.data[None] if squeeze else x.data
    B, C, H, W = xb.shape
    if kh > H or kw > W:
        raise ShapeError(f"avg_pool2d window {(kh, kw)} exceeds input {(H, W)}")
    cols, Ho, Wo = _im2col(
        xb.reshape(B * C, 1, H, W), kh, kw, sh, sw)
    out = cols.mean(axis=1).reshape(B, C, Ho, Wo)
    if squeeze:
        out = out[0]

    def backward_fn(g):
        gb = g[None] if squeeze else g
        dcols = np.repeat(
            gb.reshape(B * C * Ho * Wo, 1) / (kh * kw), kh * kw, axis=1)
        dx = _col2im(dcols, (B * C, 1, H, W), kh, kw, sh, sw, Ho, Wo)
        dx = dx.reshape(B, C, H, W)
        return (dx[0] if squeeze else dx,)

    return make_result(out, "avg_pool2d", (x,), backward_fn)


def _adaptive_bins(n: int, target: int):
    """Partition [0, n) into `target` near-equal contiguous bins."""
    edges = [(i * n) // target for i in range(target + 1)]
    return [(edges[i], edges[i + 1]) for i in range(target)]


def adaptive_avg_pool2d(x, target) -> Tensor:
    """Mean over a near-equal contiguous partition of each spatial axis."""
    x = as_tensor(x)
    th, tw = _pair(target)
    squeeze = x.data.ndim == 3
    xb = x.data[None] if squeeze else x.data
    B, C, H, W = xb.shape
    if th > H or tw > W:
        raise ShapeError(f"adaptive pool target {(th, tw)} exceeds input {(H, W)}")
    hbins = _adaptive_bins(H, th)
    wbins = _adaptive_bins(W, tw)
    out = np.empty((B, C, th, tw), dtype=xb.dtype)
    for i, (h0, h1) in enumerate(hbins):
        for j, (w0, w1) in enumerate(wbins):
            out[:, :, i, j] = xb[:, :, h0:h1, w0:w1].mean(axis=(2, 3))
    if squeeze:
        out = out[0]

    def backward_fn(g):
        gb = g[None] if squeeze else g
        dx = np.zeros((B, C, H, W), dtype=gb.dtype)
        for i, (h0, h1) in enumerate(hbins):
            for j, (w0, w1) in enumerate(wbins):
                area = (h1 - h0) * (w1 - w0)
                dx[:, :, h0:h1, w0:w1] += gb[:, :, i:i + 1, j:j + 1] / area
        return (dx[0] if squeeze else dx,)

    return make_result(out, "adaptive_avg_pool2d", (x,), backward_fn)


# ---------------------------------------------------------------------------
# loss

def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def softmax_cross_entropy(logits, labels) -> Tensor:
    """-log softmax(logits)[label], max-subtracted for stability.

    1-d logits with an int label give a scalar; 2-d (B,n) logits with a
    label vector give per-example losses of shape (B,).
    """
    logits = as_tensor(logits)
    if logits.data.ndim == 1:
        label = int(labels)
        n = logits.data.shape[0]
        if not 0 <= label < n:
            raise ShapeError(f"label {label} out of range for {n} classes")
        logp = log_softmax(logits.data)
        loss = np.asarray(-logp[label], dtype=logits.data.dtype)

        def backward_fn(g):
            grad = np.exp(logp)
            grad[label] -= 1.0
            return (grad * g,)

        return make_result(loss, "softmax_cross_entropy", (logits,), backward_fn)

    if logits.data.ndim == 2:
        labels = np.asarray(labels, dtype=np.int64)
        B, n = logits.data.shape
        if labels.shape != (B,):
            raise ShapeError(f"labels shape {labels.shape} does not match batch {B}")
        if labels.min() < 0 or labels.max() >= n:
            raise ShapeError(f"label out of range for {n} classes")
        logp = log_softmax(logits.data)
        rows = np.arange(B)
        loss = -logp[rows, labels]

        def backward_fn(g):
            grad = np.exp(logp)
            grad[rows, labels] -= 1.0
            return (grad * g[:, None],)

        return make_result(loss, "softmax_cross_entropy", (logits,), backward_fn)

    raise ShapeError(f"softmax_cross_entropy expects 1-d or 2-d logits, got {logits.shape}")


_register_sugar("add", add)
_register_sugar("sub", sub)
_register_sugar("mul", mul)
_register_sugar("matmul", matmul)
_register_sugar("reshape", reshape)
_register_sugar("sum", sum_)
_register_sugar("mean", mean)
