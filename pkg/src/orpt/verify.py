"""Invariant suites run by ``orpt verify``."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .matrix import build_matrix, forward_1d, inverse_1d
from .neural import ConvSpec, dilated_causal_conv, init_params, loss_and_grad
from .numtheory import divisors, totient
from .subband import inverse_batch, transform_batch


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def check_orthogonality(max_n: int = 128, rng=None) -> str:
    for N in range(2, max_n + 1):
        R = build_matrix(N)
        if sum(totient(d) for d in divisors(N)) != N:
            raise AssertionError(f"N={N}: divisor totients do not sum to N")
        gram = R.entries.T @ R.entries  # exact int64
        if not np.array_equal(gram, np.diag(R.column_norms)):
            raise AssertionError(f"N={N}: Gram matrix is not diagonal")
    return f"N=2..{max_n} exact"


def check_roundtrip_1d(max_n: int = 64, trials: int = 100, rng=None) -> str:
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for N in range(2, max_n + 1):
        R = build_matrix(N)
        for _ in range(trials):
            x = rng.standard_normal(N)
            beta = forward_1d(R, x)
            worst = max(worst, float(np.max(np.abs(inverse_1d(R, beta) - x))))
            energy = float(beta.values @ (beta.values / R.column_norms))
            if abs(energy - x @ x) > 1e-8 * (x @ x):
                raise AssertionError(f"N={N}: weighted Parseval off by {energy - x @ x:.3e}")
    if worst >= 1e-9:
        raise AssertionError(f"1-D round-trip error {worst:.3e}")
    return f"max err {worst:.1e}"


def check_roundtrip_2d(trials: int = 100, rng=None) -> str:
    rng = rng or np.random.default_rng(1)
    worst = 0.0
    for N, planes in ((28, 1), (32, 3)):
        X = rng.random((trials, planes, N, N))
        for d in divisors(N):
            Y = transform_batch(X, d)
            worst = max(worst, float(np.max(np.abs(inverse_batch(Y, d) - X))))
    if worst >= 1e-9:
        raise AssertionError(f"2-D round-trip error {worst:.3e}")
    return f"max err {worst:.1e}"


def finite_difference_check(p, X, y, eps: float = 1e-5) -> float:
    """Largest relative error between BPTT and central differences."""
    _, grad = loss_and_grad(p, X, y)
    worst = 0.0
    for name, w in p.tensors.items():
        for idx in np.ndindex(w.shape):
            old = w[idx]
            w[idx] = old + eps
            lp, _ = loss_and_grad(p, X, y)
            w[idx] = old - eps
            lm, _ = loss_and_grad(p, X, y)
            w[idx] = old
            fd = (lp - lm) / (2 * eps)
            an = grad[name][idx]
            worst = max(worst, relative_error(an, fd))
    return worst


def relative_error(a: float, b: float, floor: float = 1e-6) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def check_gradients(rng=None) -> str:
    rng = rng or np.random.default_rng(2)
    parts = []
    for kind, bi in (("rnn", False), ("indrnn", False), ("lstm", False), ("lstm", True)):
        p = init_params(kind, 2, 3, 3, bi, seed=rng, dtype=np.float64)
        X = rng.standard_normal((5, 4, 2))
        y = rng.integers(0, 3, 5)
        err = finite_difference_check(p, X, y)
        if err >= 1e-5:
            raise AssertionError(f"{kind} (bidirectional={bi}): relative error {err:.2e}")
        parts.append(f"{'bi' if bi else ''}{kind} {err:.0e}")
    return ", ".join(parts)


def check_causality(cases: int = 1000, rng=None) -> str:
    rng = rng or np.random.default_rng(3)
    for _ in range(cases):
        n = int(rng.integers(2, 40))
        spec = ConvSpec(tuple(rng.standard_normal(int(rng.integers(1, 5)))), int(rng.integers(1, 6)))
        x = rng.standard_normal(n)
        k = int(rng.integers(0, n - 1))
        x2 = x.copy()
        x2[k + 1 :] += rng.standard_normal(n - k - 1)
        if not np.array_equal(dilated_causal_conv(spec, x)[: k + 1], dilated_causal_conv(spec, x2)[: k + 1]):
            raise AssertionError("future input changed a causal output")
    return f"{cases} cases"


SUITES = {
    "orthogonality": check_orthogonality,
    "roundtrip-1d": check_roundtrip_1d,
    "roundtrip-2d": check_roundtrip_2d,
    "gradients": check_gradients,
    "causality": check_causality,
}


def run_suites(names=None, seed: int = 0, max_n: int = 128) -> list[SuiteResult]:
    results = []
    for name in names or SUITES:
        fn = SUITES[name]
        rng = np.random.default_rng(seed)
        kwargs = {"rng": rng}
        if name == "orthogonality":
            kwargs["max_n"] = max_n
        t0 = time.perf_counter()
        try:
            detail, ok = fn(**kwargs), True
        except AssertionError as exc:
            detail, ok = str(exc), False
        results.append(SuiteResult(name, ok, detail, time.perf_counter() - t0))
    return results
