"""Blockwise ORPT filter bank for images and sequence packing.

An ``N x N`` image is cut into ``d``-sample blocks along each axis, every
block is analysed with ``R_d`` and the ``k``-th coefficient of every block
is gathered into channel ``k``. Applied to rows and columns this gives a
``d x d`` grid of ``(N/d) x (N/d)`` channels; channel ``(0, 0)`` is the
block average (scaled by ``d**2``), the rest are detail channels.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .matrix import OrptMatrix, build_matrix
from .numtheory import DomainError


@dataclass(frozen=True, eq=False)
class AnalysisOperator:
    """Dense ``B = P (I kron R_d^T)`` and its inverse for one ``(d, N)`` pair."""

    divisor: int
    size: int
    matrix: np.ndarray
    inverse: np.ndarray
    basis: OrptMatrix


@dataclass(frozen=True, eq=False)
class SubbandGrid:
    """``channels[i, j]`` is the ``(N/d) x (N/d)`` plane of channel ``(i, j)``."""

    divisor: int
    channels: np.ndarray

    def __post_init__(self):
        d = self.divisor
        c = self.channels
        if c.ndim != 4 or c.shape[:2] != (d, d) or c.shape[2] != c.shape[3]:
            raise DomainError(f"channel stack shape {c.shape} does not fit divisor {d}")

    @property
    def size(self) -> int:
        return self.divisor * self.channels.shape[2]

    @property
    def average(self) -> np.ndarray:
        return self.channels[0, 0]

    def details(self) -> list[np.ndarray]:
        d = self.divisor
        return [self.channels[i, j] for i in range(d) for j in range(d) if i or j]


@dataclass(frozen=True, eq=False)
class SequenceSample:
    values: np.ndarray  # (T, F)
    label: int

    @property
    def timesteps(self) -> int:
        return self.values.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.values.shape[1]


def _check_divides(d, N):
    if not isinstance(d, int) or d < 1 or not isinstance(N, int) or N < 1 or N % d:
        raise DomainError(f"divisor {d!r} does not divide image side {N!r}")


@lru_cache(maxsize=64)
def analysis_operator(d: int, N: int) -> AnalysisOperator:
    _check_divides(d, N)
    Rd = build_matrix(d)
    R = Rd.entries.astype(np.float64)
    nb = N // d
    B = np.zeros((N, N))
    Binv = np.zeros((N, N))
    synth = R / Rd.column_norms
    for b in range(nb):
        rows = np.arange(d) * nb + b  # channel-major output positions
        cols = slice(b * d, (b + 1) * d)
        B[rows, cols] = R.T
        Binv[cols, rows] = synth
    B.setflags(write=False)
    Binv.setflags(write=False)
    return AnalysisOperator(d, N, B, Binv, Rd)


def _as_plane(X, N=None):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise DomainError(f"image must be square, got shape {X.shape}")
    if N is not None and X.shape[0] != N:
        raise DomainError(f"image side {X.shape[0]} does not match operator size {N}")
    return X


def transform_2d(B: AnalysisOperator, X) -> SubbandGrid:
    """``Y = B X B^T`` split into the ``d x d`` channel grid."""
    X = _as_plane(X, B.size)
    Y = B.matrix @ X @ B.matrix.T
    d, nb = B.divisor, B.size // B.divisor
    return SubbandGrid(d, Y.reshape(d, nb, d, nb).transpose(0, 2, 1, 3))


def inverse_2d(B: AnalysisOperator, grid: SubbandGrid) -> np.ndarray:
    d, nb = B.divisor, B.size // B.divisor
    if grid.divisor != d or grid.channels.shape != (d, d, nb, nb):
        raise DomainError(
            f"grid (d={grid.divisor}, shape {grid.channels.shape}) does not match "
            f"operator (d={d}, N={B.size})"
        )
    Y = grid.channels.transpose(0, 2, 1, 3).reshape(B.size, B.size)
    return B.inverse @ Y @ B.inverse.T


def transform_batch(images, d: int) -> np.ndarray:
    """Channel grids for a stack of images.

    ``images`` has shape ``(..., N, N)``; the result has shape
    ``(..., d, d, N/d, N/d)``. Works blockwise with ``R_d`` rather than the
    dense ``N x N`` operator.
    """
    images = np.asarray(images)
    N = images.shape[-1]
    if images.shape[-2] != N:
        raise DomainError(f"images must be square, got shape {images.shape}")
    _check_divides(d, N)
    nb = N // d
    R = build_matrix(d).entries.astype(images.dtype if images.dtype.kind == "f" else np.float64)
    lead = images.shape[:-2]
    blocks = images.reshape(*lead, nb, d, nb, d)
    out = np.einsum("...aibj,ik,jl->...klab", blocks, R, R, optimize=True)
    return np.ascontiguousarray(out)


def inverse_batch(grids, d: int) -> np.ndarray:
    grids = np.asarray(grids)
    if grids.shape[-4:-2] != (d, d):
        raise DomainError(f"grid stack shape {grids.shape} does not fit divisor {d}")
    Rd = build_matrix(d)
    S = Rd.entries / Rd.column_norms
    nb = grids.shape[-1]
    lead = grids.shape[:-4]
    blocks = np.einsum("...klab,ik,jl->...aibj", grids, S, S, optimize=True)
    return blocks.reshape(*lead, nb * d, nb * d)


def haar_split(X):
    """One level of unnormalized 2-D Haar: ``(LL, LH, HL, HH)``.

    The first letter is the filter applied down the rows, the second across
    the columns; low is ``a + b``, high is ``a - b``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] % 2 or X.shape[1] % 2:
        raise DomainError(f"Haar split needs even sides, got shape {X.shape}")
    lo = X[0::2] + X[1::2]
    hi = X[0::2] - X[1::2]
    return (
        lo[:, 0::2] + lo[:, 1::2],
        lo[:, 0::2] - lo[:, 1::2],
        hi[:, 0::2] + hi[:, 1::2],
        hi[:, 0::2] - hi[:, 1::2],
    )


def haar_merge(LL, LH, HL, HH):
    h, w = LL.shape
    lo = np.empty((h, 2 * w))
    hi = np.empty((h, 2 * w))
    lo[:, 0::2], lo[:, 1::2] = (LL + LH) / 2, (LL - LH) / 2
    hi[:, 0::2], hi[:, 1::2] = (HL + HH) / 2, (HL - HH) / 2
    X = np.empty((2 * h, 2 * w))
    X[0::2], X[1::2] = (lo + hi) / 2, (lo - hi) / 2
    return X


def haar_subbands(X, levels: int = 1) -> list[np.ndarray]:
    """Haar feature planes.

    ``levels=1`` gives ``[LL, LH, HL, HH]``. ``levels=2`` splits LL again and
    returns ``[LH, HL, HH, LL2, LH2, HL2, HH2]``: three planes of side
    ``N/2`` followed by four of side ``N/4``.
    """
    if levels not in (1, 2):
        raise DomainError(f"levels must be 1 or 2, got {levels}")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] % 2**levels or X.shape[1] % 2**levels:
        raise DomainError(f"image shape {X.shape} not divisible by {2**levels}")
    LL, LH, HL, HH = haar_split(X)
    if levels == 1:
        return [LL, LH, HL, HH]
    return [LH, HL, HH, *haar_split(LL)]


def pack_sequence(grids, label: int) -> SequenceSample:
    """Interleave channels into a ``(T, F)`` sequence.

    Timestep ``t`` holds the ``t``-th raster coefficient of every channel;
    features are ordered plane first, then channel row, then channel column.
    """
    if isinstance(grids, SubbandGrid):
        grids = [grids]
    grids = list(grids)
    if len(grids) not in (1, 3):
        raise DomainError(f"expected 1 or 3 planes, got {len(grids)}")
    d = grids[0].divisor
    shape = grids[0].channels.shape
    for g in grids[1:]:
        if g.divisor != d or g.channels.shape != shape:
            raise DomainError("all planes must share divisor and size")
    stack = np.stack([g.channels for g in grids])
    return SequenceSample(pack_batch(stack[None])[0], int(label))


def pack_batch(grids: np.ndarray) -> np.ndarray:
    """``(count, planes, d, d, n, n)`` grids to ``(count, n*n, planes*d*d)``."""
    count, planes, d, _, n, _ = grids.shape
    return grids.transpose(0, 4, 5, 1, 2, 3).reshape(count, n * n, planes * d * d)


def unpack_batch(values: np.ndarray, d: int, N: int, planes: int) -> np.ndarray:
    count, T, F = values.shape
    _check_divides(d, N)
    n = N // d
    if T != n * n or F != planes * d * d:
        raise DomainError(
            f"sequence shape ({T}, {F}) inconsistent with d={d}, N={N}, planes={planes}"
        )
    return values.reshape(count, n, n, planes, d, d).transpose(0, 3, 4, 5, 1, 2)


def unpack_sequence(sample: SequenceSample, d: int, N: int, planes: int = 1):
    """Inverse of :func:`pack_sequence`; returns a list of grids."""
    stack = unpack_batch(np.asarray(sample.values)[None], d, N, planes)[0]
    return [SubbandGrid(d, np.ascontiguousarray(stack[p])) for p in range(planes)]


def image_features(images: np.ndarray, d: int) -> np.ndarray:
    """Images ``(count, planes, N, N)`` straight to sequences ``(count, T, F)``."""
    images = np.asarray(images)
    if images.ndim != 4:
        raise DomainError(f"expected (count, planes, N, N), got {images.shape}")
    return pack_batch(transform_batch(images, d))
