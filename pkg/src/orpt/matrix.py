"""Integer ORPT matrix construction and exact 1-D transforms.

The ``N x N`` matrix has one block of columns per divisor ``d`` of ``N``.
For ``d = prod(p_t ** r_t)`` every column is a pointwise product of
factors, one per prime power, where factor ``t`` is the sparse Ramanujan
sequence ``c^{k_t}_{p_t}`` upsampled by ``p_t ** (r_t - 1)`` and delayed by
``j_t``. Columns are mutually orthogonal but not normalized; the squared
column norms are kept alongside so the inverse stays exact up to one
division.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .numtheory import DomainError, divisors, factorize, sparse_ramanujan, totient

MAX_SIZE = 4096


class ConstructionError(RuntimeError):
    """The generated columns are not a complete orthogonal basis."""


@dataclass(frozen=True)
class ColumnLabel:
    divisor: int
    shifts: tuple[int, ...]
    indices: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class OrptMatrix:
    size: int
    entries: np.ndarray
    column_norms: np.ndarray
    labels: tuple[ColumnLabel, ...] = field(repr=False)

    @property
    def column_divisors(self) -> np.ndarray:
        return np.array([lab.divisor for lab in self.labels], dtype=np.int64)

    def columns_for(self, d: int) -> np.ndarray:
        """Indices of the columns generated by divisor ``d``."""
        return np.flatnonzero(self.column_divisors == d)

    def __eq__(self, other):
        if not isinstance(other, OrptMatrix):
            return NotImplemented
        return self.size == other.size and np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash((self.size, self.entries.tobytes()))


@dataclass(frozen=True, eq=False)
class CoefficientVector:
    values: np.ndarray
    divisors: np.ndarray

    def __len__(self):
        return len(self.values)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def _validate_column_args(N, d, shifts, indices):
    if not isinstance(N, int) or N < 1:
        raise DomainError(f"N must be a positive int, got {N!r}")
    if not isinstance(d, int) or d < 1 or N % d:
        raise DomainError(f"{d!r} is not a divisor of {N}")
    fac = factorize(d).factors
    shifts = tuple(shifts)
    indices = tuple(indices)
    if len(shifts) != len(fac) or len(indices) != len(fac):
        raise DomainError(
            f"divisor {d} has {len(fac)} prime factors; got {len(shifts)} shifts "
            f"and {len(indices)} indices"
        )
    for (p, r), j, k in zip(fac, shifts, indices):
        if not 0 <= j < p ** (r - 1):
            raise DomainError(f"shift {j} out of range for prime power {p}^{r}")
        if not 0 <= k < p - 1:
            raise DomainError(f"index {k} out of range for prime {p}")
    return fac, shifts, indices


def basis_column(N: int, d: int, shifts=(), indices=()) -> np.ndarray:
    """Evaluate one basis column of length ``N`` as an int64 vector."""
    fac, shifts, indices = _validate_column_args(N, d, shifts, indices)
    n = np.arange(N)
    col = np.ones(N, dtype=np.int64)
    for (p, r), j, k in zip(fac, shifts, indices):
        atom = np.array(sparse_ramanujan(p, k).values, dtype=np.int64)
        step = p ** (r - 1)
        offset = n - j
        on_grid = offset % step == 0
        # off-grid positions of the upsampled atom are zero
        col *= np.where(on_grid, atom[(offset // step) % p], 0)
    return col


def _enumerate_labels(N: int):
    for d in divisors(N):
        fac = factorize(d).factors
        shift_ranges = [range(p ** (r - 1)) for p, r in fac]
        index_ranges = [range(p - 1) for p, _ in fac]
        m = len(fac)
        for combo in itertools.product(*shift_ranges, *index_ranges):
            yield ColumnLabel(d, tuple(combo[:m]), tuple(combo[m:]))


def check_orthogonal(R: np.ndarray) -> np.ndarray:
    """Return the squared column norms, raising if any off-diagonal is nonzero.

    The Gram matrix is formed in float64; for the sizes allowed here every
    partial sum stays below 2**53, so the products are exact integers.
    """
    Rf = R.astype(np.float64)
    gram = Rf.T @ Rf
    norms = np.diag(gram).copy()
    np.fill_diagonal(gram, 0.0)
    if np.any(gram != 0.0):
        i, j = np.unravel_index(np.argmax(np.abs(gram)), gram.shape)
        raise ConstructionError(
            f"columns {i} and {j} are not orthogonal (dot = {gram[i, j]:.0f})"
        )
    if np.any(norms <= 0):
        raise ConstructionError("zero column in ORPT matrix")
    return norms.astype(np.int64)


@lru_cache(maxsize=64)
def build_matrix(N: int) -> OrptMatrix:
    """Construct the ``N x N`` ORPT matrix, columns ordered by divisor.

    Within one divisor columns run lexicographically over
    ``(shifts..., indices...)``, shifts varying slowest.
    """
    if not isinstance(N, int) or isinstance(N, bool) or not 1 <= N <= MAX_SIZE:
        raise DomainError(f"N must be an int in [1, {MAX_SIZE}], got {N!r}")
    labels = tuple(_enumerate_labels(N))
    expected = sum(totient(d) for d in divisors(N))
    if len(labels) != N or expected != N:
        raise ConstructionError(f"generated {len(labels)} columns for N={N}")
    R = np.empty((N, N), dtype=np.int64)
    for i, lab in enumerate(labels):
        R[:, i] = basis_column(N, lab.divisor, lab.shifts, lab.indices)
    norms = check_orthogonal(R)
    R.setflags(write=False)
    norms.setflags(write=False)
    return OrptMatrix(N, R, norms, labels)


def _as_vector(x, N, what):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (N,):
        raise DomainError(f"{what} must have shape ({N},), got {x.shape}")
    return x


def forward_1d(R: OrptMatrix, x) -> CoefficientVector:
    """Analysis: inner products of ``x`` with every basis column."""
    x = _as_vector(x, R.size, "x")
    return CoefficientVector(R.entries.T @ x, R.column_divisors)


def inverse_1d(R: OrptMatrix, beta) -> np.ndarray:
    """Synthesis ``x = R D^-1 beta`` with ``D`` the squared column norms."""
    beta = _as_vector(getattr(beta, "values", beta), R.size, "beta")
    return R.entries @ (beta / R.column_norms)


def write_matrix_text(R: OrptMatrix, path) -> None:
    Path(path).write_text(format_matrix_text(R))


def format_matrix_text(R: OrptMatrix) -> str:
    lines = [f"ORPT {R.size}"]
    lines += [" ".join(str(int(v)) for v in row) for row in R.entries]
    return "\n".join(lines) + "\n"


def read_matrix_text(path) -> np.ndarray:
    """Parse the plain-text export back to an int64 array."""
    lines = Path(path).read_text().split("\n")
    head = lines[0].split()
    if len(head) != 2 or head[0] != "ORPT":
        raise ValueError(f"{path}: bad header {lines[0]!r}")
    N = int(head[1])
    rows = [ln.split() for ln in lines[1 : N + 1]]
    out = np.array(rows, dtype=np.int64)
    if out.shape != (N, N):
        raise ValueError(f"{path}: expected {N}x{N} entries, got {out.shape}")
    return out
