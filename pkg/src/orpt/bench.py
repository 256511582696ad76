"""Throughput of the transforms and of both kernel backends."""

from __future__ import annotations

import timeit

import numpy as np

from . import kernels
from .neural import init_params, loss_and_grad
from .matrix import build_matrix, forward_1d
from .subband import analysis_operator, transform_2d, transform_batch


def _rate(fn, min_time=0.2):
    timer = timeit.Timer(fn)
    number = 1
    while timer.timeit(number) < min_time / 3 and number < 1 << 20:
        number *= 2
    best = min(timer.repeat(repeat=3, number=number))
    return number / best


def run(seed: int = 0, batch: int = 128, hidden: int = 128, min_time: float = 0.2) -> list[tuple[str, str, float]]:
    """Rows of ``(operation, backend, ops per second)``."""
    rng = np.random.default_rng(seed)
    rows = []
    R = build_matrix(28)
    x = rng.standard_normal(28)
    rows.append(("forward_1d N=28", "numpy", _rate(lambda: forward_1d(R, x), min_time)))
    X = rng.random((28, 28))
    B = analysis_operator(4, 28)
    rows.append(("transform_2d 28x28 d=4", "numpy", _rate(lambda: transform_2d(B, X), min_time)))
    imgs = rng.random((256, 1, 28, 28))
    rows.append((
        "transform_batch 256x28x28 d=4 (images)", "numpy",
        256 * _rate(lambda: transform_batch(imgs, 4), min_time),
    ))
    M = hidden
    a = rng.standard_normal((batch, 4 * M)).astype(np.float32)
    c = rng.standard_normal((batch, M)).astype(np.float32)
    W = rng.standard_normal((4 * M, M)).astype(np.float32)
    for name in sorted(kernels.BACKENDS):
        impl = kernels.get_backend(name)
        fwd, bwd = impl.lstm_forward_pointwise, impl.lstm_backward_pointwise

        def step():
            g = a + c @ W.T
            fwd(g, c)

        gates = a.copy()
        _, _, tc = fwd(gates, c)
        rows.append((f"lstm_step B={batch} M={M}", name, _rate(step, min_time)))
        rows.append((f"lstm pointwise fwd B={batch} M={M}", name,
                     _rate(lambda: fwd(a.copy(), c), min_time)))
        rows.append((f"lstm pointwise bwd B={batch} M={M}", name,
                     _rate(lambda: bwd(c, c, gates, c, tc), min_time)))
        xs = rng.standard_normal(784)
        taps = rng.standard_normal(3)
        rows.append(("dilated_causal_conv n=784 L=3 d=4", name,
                     _rate(lambda: impl.dilated_causal_conv(xs, taps, 4), min_time)))
    X = rng.random((batch, 196, 4)).astype(np.float32)
    y = rng.integers(0, 10, batch)
    p = init_params("lstm", 4, M, 10, seed=seed)
    for name in sorted(kernels.BACKENDS):
        with kernels.use_backend(name):
            rows.append((f"lstm loss_and_grad B={batch} T=196 M={M}", name,
                         _rate(lambda: loss_and_grad(p, X, y), min_time)))
    return rows
