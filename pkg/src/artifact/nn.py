"""Minimal NCHW neural-network engine on numpy arrays.

Every operation is a pure function ``op(x, ...) -> (out, cache)`` with a
matching ``op_backward(grad, cache)`` returning exact gradients. Arrays may
be float32 or float64; reductions (convolution sums, batch statistics, loss
means) always accumulate in float64 and results are cast back to the input
dtype, so float32 runs keep float64 accumulation and float64 runs are fully
deterministic. Set ``CHECK_FINITE = True`` to validate op outputs while
debugging.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CHECK_FINITE = False


def _checked(out: np.ndarray) -> np.ndarray:
    if CHECK_FINITE and not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite values produced by an engine op")
    return out


@dataclass
class ConvParams:
    weights: np.ndarray      # (k1, k2, n_in, n_out)
    bias: np.ndarray         # (n_out,)


@dataclass
class BNParams:
    gamma: np.ndarray        # (C,)
    beta: np.ndarray         # (C,)
    running_mean: np.ndarray = field(default=None)
    running_var: np.ndarray = field(default=None)
    epsilon: float = 1e-5
    momentum: float = 0.1

    def __post_init__(self):
        if self.running_mean is None:
            self.running_mean = np.zeros_like(self.gamma, dtype=np.float64)
        if self.running_var is None:
            self.running_var = np.ones_like(self.gamma, dtype=np.float64)


# ---------------------------------------------------------------------------
# convolution

def _im2col(x: np.ndarray, k1: int, k2: int) -> np.ndarray:
    """Unfold 3x3 (zero padding 1) or 1x1 (no padding) patches into a
    float64 (N, C*k1*k2, H*W) matrix via one slab copy per kernel offset."""
    N, C, H, W = x.shape
    p1, p2 = (k1 - 1) // 2, (k2 - 1) // 2
    if p1 or p2:
        x = np.pad(x, ((0, 0), (0, 0), (p1, p1), (p2, p2)))
    cols = np.empty((N, C, k1, k2, H, W), dtype=np.float64)
    for a in range(k1):
        for b in range(k2):
            cols[:, :, a, b] = x[:, :, a:a + H, b:b + W]
    return cols.reshape(N, C * k1 * k2, H * W)


def _conv_core(x: np.ndarray, weights: np.ndarray):
    """Shared forward machinery: im2col + GEMM, float64 accumulation,
    everything kept in NCHW order."""
    k1, k2, n_in, n_out = weights.shape
    N, C, H, W = x.shape
    cols = _im2col(x, k1, k2)
    wmat = weights.transpose(2, 0, 1, 3).reshape(n_in * k1 * k2, n_out)
    out = np.matmul(wmat.astype(np.float64).T[None], cols)   # (N, n_out, H*W)
    return out.reshape(N, n_out, H, W), cols


def conv2d(x: np.ndarray, p: ConvParams):
    """2D cross-correlation plus bias. 3x3 kernels use zero padding 1 so
    spatial dims are preserved; 1x1 kernels use none."""
    k1, k2, n_in, n_out = p.weights.shape
    if k1 not in (1, 3) or k2 not in (1, 3):
        raise ValueError(f"kernel dims must be 1 or 3, got {k1}x{k2}")
    N, C, H, W = x.shape
    if C != n_in:
        raise ValueError(f"expected {n_in} input channels, got {C}")
    out, cols = _conv_core(x, p.weights)
    out += p.bias.astype(np.float64)[:, None, None]
    cache = (cols, x.dtype, p)
    return _checked(out.astype(x.dtype)), cache


def conv2d_backward(grad: np.ndarray, cache):
    """Gradients of conv2d w.r.t. input, weights and bias.

    The input gradient of a same-padded cross-correlation is itself a
    same-padded cross-correlation with the kernel flipped in both spatial
    dims and its channel axes swapped, so it reuses the forward GEMM.
    """
    cols, x_dtype, p = cache
    k1, k2, n_in, n_out = p.weights.shape
    N, _, H, W = grad.shape
    g64 = np.asarray(grad, dtype=np.float64)
    gmat = g64.reshape(N, n_out, H * W)

    dw = np.matmul(cols, gmat.transpose(0, 2, 1)).sum(axis=0)
    dw = dw.reshape(n_in, k1, k2, n_out).transpose(1, 2, 0, 3)
    db = gmat.sum(axis=(0, 2))

    w_flip = np.ascontiguousarray(
        p.weights[::-1, ::-1].transpose(0, 1, 3, 2))
    dx, _ = _conv_core(g64, w_flip)
    return (dx.astype(x_dtype),
            np.ascontiguousarray(dw).astype(p.weights.dtype),
            db.astype(p.bias.dtype))


# ---------------------------------------------------------------------------
# batch normalization

def batch_norm(x: np.ndarray, p: BNParams, mode: str = "train"):
    """Per-channel normalization over the (N, H, W) axes.

    Train mode normalizes by batch statistics and updates the running
    stats in place with the configured momentum; infer mode uses the
    running stats.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    N, C, H, W = x.shape
    if C != p.gamma.shape[0]:
        raise ValueError(f"expected {p.gamma.shape[0]} channels, got {C}")
    xhat = x.astype(np.float64)
    if mode == "train":
        m = N * H * W
        if m < 2:
            raise ValueError("train-mode batch norm needs N*H*W >= 2")
        mean = xhat.mean(axis=(0, 2, 3))
        xhat -= mean[:, None, None]
        var = np.mean(xhat * xhat, axis=(0, 2, 3))
        p.running_mean += p.momentum * (mean - p.running_mean)
        p.running_var += p.momentum * (var - p.running_var)
    else:
        mean = p.running_mean
        var = p.running_var
        xhat -= mean[:, None, None]
    inv_std = 1.0 / np.sqrt(var + p.epsilon)
    xhat *= inv_std[:, None, None]
    out = p.gamma.astype(np.float64)[:, None, None] * xhat + \
        p.beta.astype(np.float64)[:, None, None]
    cache = (xhat, inv_std, x.dtype, p, mode)
    return _checked(out.astype(x.dtype)), cache


def batch_norm_backward(grad: np.ndarray, cache):
    """Gradients of batch_norm w.r.t. input, gamma and beta."""
    xhat, inv_std, x_dtype, p, mode = cache
    g = grad.astype(np.float64)
    dgamma = (g * xhat).sum(axis=(0, 2, 3))
    dbeta = g.sum(axis=(0, 2, 3))
    gscaled = g * p.gamma.astype(np.float64)[:, None, None]
    if mode == "infer":
        dx = gscaled * inv_std[:, None, None]
    else:
        m = xhat.shape[0] * xhat.shape[2] * xhat.shape[3]
        sum_g = gscaled.sum(axis=(0, 2, 3))[:, None, None]
        sum_gx = (gscaled * xhat).sum(axis=(0, 2, 3))[:, None, None]
        dx = (inv_std[:, None, None] / m) * (m * gscaled - sum_g - xhat * sum_gx)
    return (dx.astype(x_dtype),
            dgamma.astype(p.gamma.dtype),
            dbeta.astype(p.beta.dtype))


# ---------------------------------------------------------------------------
# pointwise and structural ops

def relu(x: np.ndarray):
    """Elementwise max(x, 0); the subgradient at 0 is taken as 0."""
    out = np.maximum(x, 0)
    return _checked(out), (x > 0)


def relu_backward(grad: np.ndarray, cache):
    return np.where(cache, grad, 0)


def _as_patches(x: np.ndarray) -> np.ndarray:
    """View (N, C, H, W) as (N, C, H/2, W/2, 4) 2x2 patches, cells in
    row-major order within each patch."""
    N, C, H, W = x.shape
    return (x.reshape(N, C, H // 2, 2, W // 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(N, C, H // 2, W // 2, 4))


def _from_patches(flat: np.ndarray) -> np.ndarray:
    N, C, h, w, _ = flat.shape
    return (flat.reshape(N, C, h, w, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(N, C, 2 * h, 2 * w))


def max_pool_2x2(x: np.ndarray):
    """2x2/stride-2 max pool. Returns the pooled tensor and the argmax
    switches (ties break to the lowest patch-cell index)."""
    N, C, H, W = x.shape
    if H % 2 or W % 2:
        raise ValueError(f"spatial dims must be even, got {H}x{W}")
    patches = _as_patches(x)
    switches = patches.argmax(axis=-1).astype(np.int8)
    out = np.take_along_axis(patches, switches[..., None].astype(np.intp),
                             axis=-1)[..., 0]
    return _checked(out), switches


def max_pool_2x2_backward(grad: np.ndarray, switches: np.ndarray):
    """Route the gradient to each patch's argmax cell."""
    return unpool_2x2(grad, switches)


def unpool_2x2(x: np.ndarray, switches: np.ndarray):
    """Place each value at its recorded cell of a 2x2 block, zeros
    elsewhere; the transpose of max_pool_2x2."""
    if switches.shape != x.shape:
        raise ValueError(
            f"switches shape {switches.shape} does not match input {x.shape}")
    if switches.min() < 0 or switches.max() > 3:
        raise ValueError("switch indices must lie in [0, 4)")
    N, C, h, w = x.shape
    flat = np.zeros((N, C, h, w, 4), dtype=x.dtype)
    np.put_along_axis(flat, switches[..., None].astype(np.intp), x[..., None],
                      axis=-1)
    return _checked(_from_patches(flat))


def unpool_2x2_backward(grad: np.ndarray, switches: np.ndarray):
    """Gather the gradient from each value's recorded cell."""
    patches = _as_patches(grad)
    return np.take_along_axis(patches, switches[..., None].astype(np.intp),
                              axis=-1)[..., 0]


def concat_channels(a: np.ndarray, b: np.ndarray):
    """Concatenate along the channel axis, ``a`` first."""
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ValueError(
            f"batch/spatial mismatch: {a.shape} vs {b.shape}")
    return _checked(np.concatenate([a, b], axis=1)), a.shape[1]


def concat_channels_backward(grad: np.ndarray, split: int):
    return grad[:, :split], grad[:, split:]


# ---------------------------------------------------------------------------
# initialization, optimizer, loss

def xavier_init(shape, seed=0, dtype=np.float32) -> ConvParams:
    """Gaussian Xavier initialization for a (k1, k2, n_in, n_out) kernel:
    std = sqrt(2 / (fan_in + fan_out)), zero bias."""
    k1, k2, n_in, n_out = shape
    fan_in = k1 * k2 * n_in
    fan_out = k1 * k2 * n_out
    std = np.sqrt(2.0 / (fan_in + fan_out))
    rng = np.random.default_rng(seed)
    weights = rng.normal(0.0, std, size=shape).astype(dtype)
    return ConvParams(weights, np.zeros(n_out, dtype=dtype))


def sgd_momentum_step(params: dict, grads: dict, velocity: dict,
                      lr: float, momentum: float = 0.9) -> None:
    """In-place SGD with momentum: v <- momentum*v - lr*g; p <- p + v.

    Velocities accumulate in float64 and are created on first use.
    """
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match parameter "
                f"{name!r} shape {p.shape}")
        v = velocity.get(name)
        if v is None:
            v = np.zeros(p.shape, dtype=np.float64)
        v = momentum * v - lr * g.astype(np.float64)
        velocity[name] = v
        p += v.astype(p.dtype)


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error over all elements and its gradient w.r.t. pred."""
    if pred.shape != target.shape:
        raise ValueError(
            f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    diff = pred.astype(np.float64) - target.astype(np.float64)
    loss = float(np.mean(diff ** 2))
    grad = (2.0 / diff.size) * diff
    return loss, grad.astype(pred.dtype)


# ---------------------------------------------------------------------------
# gradient verification

def numerical_gradient(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of the scalar function ``f``
    with respect to ``x``, evaluated elementwise in float64."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        fp = f(x)
        x[idx] = orig - h
        fm = f(x)
        x[idx] = orig
        grad[idx] = (fp - fm) / (2.0 * h)
        it.iternext()
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray,
                       floor: float = 1e-8) -> float:
    """Worst-case elementwise |a - n| / max(|a| + |n|, floor)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.abs(a) + np.abs(n), floor)
    return float(np.max(np.abs(a - n) / denom))
