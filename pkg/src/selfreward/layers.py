"""Layers and activations shared by every hand-designed controller.

All of these are deliberately tiny: a dilated 1-D convolution, a dense
layer, a shape-preserving 3x3 transposed convolution, and the two
activations the controllers are built from.  The selective activation is a
match detector (1 exactly on a zero residual); the threshold activation is
a monotone saturating gate.
"""

from __future__ import annotations

import numpy as np

from .autodiff import DiffTensor, ShapeError, as_tensor, record

DEFAULT_EPSILON = 0.01
LEAK_SLOPE = 0.01


def conv1d(x, kernel, bias=None, dilation: int = 1) -> DiffTensor:
    """Valid 1-D convolution: out[i] = sum_j kernel[j] * x[i + j*dilation] + bias."""
    x = as_tensor(x)
    kernel = as_tensor(kernel)
    if x.values.ndim != 1 or kernel.values.ndim != 1:
        raise ShapeError(f"conv1d: expected vectors, got {x.shape} and {kernel.shape}")
    length, ksize = x.values.size, kernel.values.size
    n_out = length - (ksize - 1) * dilation
    if n_out < 1:
        raise ShapeError(
            f"conv1d: input {x.shape} too short for kernel {kernel.shape} "
            f"with dilation {dilation}")

    windows = np.stack([x.values[j * dilation: j * dilation + n_out]
                        for j in range(ksize)])
    out = kernel.values @ windows
    inputs = [x, kernel]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.values
        inputs.append(bias)
    xv, kv = x.values, kernel.values

    def vjp(g):
        gx = np.zeros_like(xv)
        for j in range(ksize):
            gx[j * dilation: j * dilation + n_out] += kv[j] * g
        gk = windows @ g
        if bias is None:
            return gx, gk
        gb = np.asarray(g.sum()).reshape(bias.shape) if bias.shape else np.asarray(g.sum())
        return gx, gk, gb

    return record(out, tuple(inputs), vjp)


def fully_connected(x, weight, bias) -> DiffTensor:
    """Dense layer W @ x + b."""
    x = as_tensor(x)
    weight = as_tensor(weight)
    bias = as_tensor(bias)
    n, m = weight.values.shape
    if x.values.shape != (m,) or bias.values.shape != (n,):
        raise ShapeError(
            f"fully_connected: W {weight.shape} needs x ({m},) and b ({n},), "
            f"got x {x.shape}, b {bias.shape}")
    out = weight.values @ x.values + bias.values
    xv, wv = x.values, weight.values

    def vjp(g):
        return wv.T @ g, np.outer(g, xv), g

    return record(out, (x, weight, bias), vjp)


def deconv3x3(grid, kernel) -> DiffTensor:
    """Shape-preserving 3x3 transposed convolution, unit stride.

    Every input cell deposits the kernel centered on itself; deposits that
    fall outside the grid are dropped, so output shape equals input shape.
    """
    grid = as_tensor(grid)
    kernel = as_tensor(kernel)
    if grid.values.ndim != 2:
        raise ShapeError(f"deconv3x3: expected a 2-D grid, got {grid.shape}")
    if kernel.values.shape != (3, 3):
        raise ShapeError(f"deconv3x3: kernel must be (3, 3), got {kernel.shape}")
    h, w = grid.values.shape
    gv, kv = grid.values, kernel.values

    def _shift_slices(dy, dx):
        # destination and source index ranges for an offset (dy, dx)
        dst = (slice(max(dy, 0), h + min(dy, 0)), slice(max(dx, 0), w + min(dx, 0)))
        src = (slice(max(-dy, 0), h + min(-dy, 0)), slice(max(-dx, 0), w + min(-dx, 0)))
        return dst, src

    out = np.zeros_like(gv)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            dst, src = _shift_slices(dy, dx)
            out[dst] += kv[1 + dy, 1 + dx] * gv[src]

    def vjp(g):
        ggrid = np.zeros_like(gv)
        gkernel = np.zeros((3, 3))
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                dst, src = _shift_slices(dy, dx)
                ggrid[src] += kv[1 + dy, 1 + dx] * g[dst]
                gkernel[1 + dy, 1 + dx] = (gv[src] * g[dst]).sum()
        return ggrid, gkernel

    return record(out, (grid, kernel), vjp)


def selective_core(sq_residual: np.ndarray, epsilon: float) -> np.ndarray:
    """eps / (r + eps) on a plain array of squared residuals."""
    return epsilon / (sq_residual + epsilon)


def selective_activation(x, epsilon: float = DEFAULT_EPSILON) -> DiffTensor:
    """Match detector eps / (||x||^2 + eps): 1 exactly at x = 0."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    x = as_tensor(x)
    sq = float(np.sum(x.values * x.values))
    out = np.asarray(epsilon / (sq + epsilon))
    xv = x.values
    denom = (sq + epsilon) ** 2

    def vjp(g):
        return (float(g) * (-2.0 * epsilon / denom) * xv,)

    return record(out, (x,), vjp)


def threshold_activation(x, slope: float = LEAK_SLOPE) -> DiffTensor:
    """tanh after a leaky rectifier: tanh(x) for x >= 0, tanh(slope*x) below."""
    x = as_tensor(x)
    leaked = np.where(x.values >= 0, x.values, slope * x.values)
    out = np.tanh(leaked)
    local = (1.0 - out * out) * np.where(x.values >= 0, 1.0, slope)

    def vjp(g):
        return (g * local,)

    return record(out, (x,), vjp)


def softmax(v) -> DiffTensor:
    """Probability vector, computed with max-subtraction for stability."""
    v = as_tensor(v)
    shifted = v.values - v.values.max()
    e = np.exp(shifted)
    out = e / e.sum()

    def vjp(g):
        return (out * (g - float(g @ out)),)

    return record(out, (v,), vjp)


def cross_entropy_self(z) -> DiffTensor:
    """-log softmax(z)[argmax(z)]; the label index carries no gradient.

    Ties resolve to the lowest index, matching every other argmax here.
    """
    z = as_tensor(z)
    label = int(np.argmax(z.values))
    m = z.values.max()
    lse = m + np.log(np.exp(z.values - m).sum())
    out = np.asarray(lse - z.values[label])
    p = np.exp(z.values - lse)

    def vjp(g):
        gz = p.copy()
        gz[label] -= 1.0
        return (float(g) * gz,)

    return record(out, (z,), vjp)


def stable_pose_activation(x, pose, epsilon: float = DEFAULT_EPSILON) -> DiffTensor:
    """Pose detector eps / ((x - p)^4 + eps): 1 exactly at x = pose.

    The squared distance (x - p)^2 is what enters the match detector, hence
    the fourth power in the denominator.  The inverse neuron is one minus
    this value.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    x = as_tensor(x)
    pose = as_tensor(pose)
    d = x.values - pose.values
    denom = d ** 4 + epsilon
    out = epsilon / denom
    common = -4.0 * epsilon * d ** 3 / (denom * denom)

    def vjp(g):
        gx = g * common
        return gx, -gx

    return record(out, (x, pose), vjp)
