"""Pure numpy versions of the hot kernels (same signatures as ``_kernels``)."""

import numpy as np


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def lstm_forward_pointwise(a, c_prev):
    """Activate gate pre-activations ``a`` (B, 4M) in place, order i, f, g, o.

    Returns ``(c, h, tanh_c)``.
    """
    M = c_prev.shape[1]
    np.multiply(a[:, :2 * M], 0.5, out=a[:, :2 * M])
    np.tanh(a[:, :2 * M], out=a[:, :2 * M])
    a[:, :2 * M] += 1.0
    a[:, :2 * M] *= 0.5
    np.tanh(a[:, 2 * M:3 * M], out=a[:, 2 * M:3 * M])
    a[:, 3 * M:] = sigmoid(a[:, 3 * M:])
    i, f, g, o = a[:, :M], a[:, M:2 * M], a[:, 2 * M:3 * M], a[:, 3 * M:]
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    return c, o * tanh_c, tanh_c


def lstm_backward_pointwise(dh, dc, gates, c_prev, tanh_c):
    """Gradient w.r.t. the pre-activations and the previous cell state."""
    M = c_prev.shape[1]
    i, f, g, o = gates[:, :M], gates[:, M:2 * M], gates[:, 2 * M:3 * M], gates[:, 3 * M:]
    dc = dc + dh * o * (1.0 - tanh_c * tanh_c)
    da = np.empty_like(gates)
    da[:, :M] = dc * g * i * (1.0 - i)
    da[:, M:2 * M] = dc * c_prev * f * (1.0 - f)
    da[:, 2 * M:3 * M] = dc * i * (1.0 - g * g)
    da[:, 3 * M:] = dh * tanh_c * o * (1.0 - o)
    return da, dc * f


def dilated_causal_conv(x, taps, dilation):
    x = np.asarray(x, dtype=np.float64)
    taps = np.asarray(taps, dtype=np.float64)
    out = np.zeros_like(x)
    n = len(x)
    for i, f in enumerate(taps):
        shift = i * dilation
        if shift >= n:
            break
        out[shift:] += f * x[: n - shift]
    return out
