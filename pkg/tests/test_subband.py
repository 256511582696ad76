import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from orpt.matrix import build_matrix
from orpt.numtheory import DomainError, divisors
from orpt.subband import (
    SequenceSample,
    SubbandGrid,
    analysis_operator,
    haar_merge,
    haar_split,
    haar_subbands,
    image_features,
    inverse_2d,
    inverse_batch,
    pack_batch,
    pack_sequence,
    transform_2d,
    transform_batch,
    unpack_sequence,
)


def kron_operator(d, N):
    """P (I kron R_d^T) assembled with np.kron and an explicit permutation."""
    R = build_matrix(d).entries.astype(float)
    nb = N // d
    blockwise = np.kron(np.eye(nb), R.T)
    P = np.zeros((N, N))
    for b in range(nb):
        for k in range(d):
            P[k * nb + b, b * d + k] = 1
    return P @ blockwise


@pytest.mark.parametrize("N", [4, 6, 12, 28, 32])
def test_operator_matches_kron_oracle(N):
    for d in divisors(N):
        B = analysis_operator(d, N)
        assert np.array_equal(B.matrix, kron_operator(d, N))
        assert np.allclose(B.inverse @ B.matrix, np.eye(N), atol=1e-12)


def test_operator_examples():
    assert np.array_equal(analysis_operator(1, 5).matrix, np.eye(5))
    assert np.array_equal(analysis_operator(6, 6).matrix, build_matrix(6).entries.T)
    a, b, c, d = 1.0, 2.0, 4.0, 7.0
    Bx = analysis_operator(2, 4).matrix @ np.array([a, b, c, d])
    assert Bx.tolist() == [a + b, c + d, a - b, c - d]


def test_operator_domain():
    with pytest.raises(DomainError):
        analysis_operator(5, 28)


def test_transform_constant_image():
    g = transform_2d(analysis_operator(3, 6), np.ones((6, 6)))
    assert g.channels.shape == (3, 3, 2, 2)
    assert np.all(g.average == g.average[0, 0]) and g.average[0, 0] == 9
    assert all(np.all(p == 0) for p in g.details())
    assert len(g.details()) == 8


def test_transform_constant_image_brute_force():
    X = np.ones((6, 6))
    B = kron_operator(3, 6)
    Y = B @ X @ B.T
    assert np.count_nonzero(Y) == 4  # only the 2x2 average channel


@pytest.mark.parametrize("N", [6, 12, 28, 32])
def test_constant_images_have_zero_details(N):
    for d in divisors(N):
        g = transform_batch(np.full((N, N), 0.37), d)
        mask = np.ones((d, d), bool)
        mask[0, 0] = False
        assert np.all(np.abs(g[mask]) < 1e-12)


def test_mnist_shape_and_zero_image():
    B = analysis_operator(2, 28)
    g = transform_2d(B, np.random.default_rng(0).random((28, 28)))
    assert g.channels.shape == (2, 2, 14, 14)
    z = transform_2d(B, np.zeros((28, 28)))
    assert not z.channels.any()


def test_transform_shape_mismatch():
    with pytest.raises(DomainError):
        transform_2d(analysis_operator(2, 28), np.zeros((32, 32)))
    with pytest.raises(DomainError):
        transform_2d(analysis_operator(2, 4), np.zeros((4, 6)))
    with pytest.raises(DomainError):
        inverse_2d(analysis_operator(2, 4), SubbandGrid(4, np.zeros((4, 4, 1, 1))))


def test_batch_route_matches_dense_route():
    rng = np.random.default_rng(1)
    X = rng.random((5, 28, 28))
    for d in divisors(28):
        B = analysis_operator(d, 28)
        dense = np.stack([transform_2d(B, x).channels for x in X])
        assert np.allclose(transform_batch(X, d), dense, atol=1e-12, rtol=0)


@pytest.mark.parametrize("N", [28, 32])
def test_roundtrip_all_divisors(N):
    rng = np.random.default_rng(N)
    X = rng.random((50, N, N))
    for d in divisors(N):
        B = analysis_operator(d, N)
        for x in X[:5]:
            assert np.max(np.abs(inverse_2d(B, transform_2d(B, x)) - x)) < 1e-9
        assert np.max(np.abs(inverse_batch(transform_batch(X, d), d) - X)) < 1e-9


def test_d1_identity_and_constant_inverse():
    X = np.random.default_rng(2).random((7, 7))
    B = analysis_operator(1, 7)
    assert np.array_equal(transform_2d(B, X).channels[0, 0], X)
    B3 = analysis_operator(3, 9)
    g = transform_2d(B3, np.full((9, 9), 2.5))
    assert np.allclose(inverse_2d(B3, g), 2.5, atol=1e-14)


@pytest.mark.parametrize("N", [12, 28, 32])
def test_weighted_parseval_2d(N):
    rng = np.random.default_rng(3)
    X = rng.standard_normal((10, N, N))
    for d in divisors(N):
        Y = transform_batch(X, d)
        D = build_matrix(d).column_norms.astype(float)
        weights = 1.0 / np.outer(D, D)
        energy = np.einsum("zklab,kl->z", Y**2, weights)
        assert np.allclose(energy, (X**2).sum(axis=(1, 2)), rtol=1e-8, atol=0)


def test_haar_shapes():
    X = np.random.default_rng(4).random((28, 28))
    one = haar_subbands(X, 1)
    assert [p.shape for p in one] == [(14, 14)] * 4
    two = haar_subbands(X, 2)
    assert [p.shape for p in two] == [(14, 14)] * 3 + [(7, 7)] * 4


def test_haar_constant_and_reconstruction():
    LL, LH, HL, HH = haar_subbands(np.full((8, 8), 3.0), 1)
    assert np.all(LL == 12) and not LH.any() and not HL.any() and not HH.any()
    X = np.random.default_rng(5).random((28, 28))
    assert np.allclose(haar_merge(*haar_split(X)), X, atol=1e-14)


def test_haar_level1_equals_orpt_d2():
    X = np.random.default_rng(6).random((28, 28))
    g = transform_batch(X, 2)
    LL, LH, HL, HH = haar_subbands(X, 1)
    assert np.allclose(g[0, 0], LL) and np.allclose(g[0, 1], LH)
    assert np.allclose(g[1, 0], HL) and np.allclose(g[1, 1], HH)


@pytest.mark.parametrize("shape, levels", [((30, 30), 2), ((7, 8), 1), ((8, 8), 3)])
def test_haar_domain(shape, levels):
    with pytest.raises(DomainError):
        haar_subbands(np.zeros(shape), levels)


@pytest.mark.parametrize(
    "N, d, planes, T, F",
    [(28, 2, 1, 196, 4), (28, 1, 1, 784, 1), (32, 4, 3, 64, 48), (32, 2, 3, 256, 12)],
)
def test_pack_shapes(N, d, planes, T, F):
    rng = np.random.default_rng(7)
    B = analysis_operator(d, N)
    grids = [transform_2d(B, rng.random((N, N))) for _ in range(planes)]
    s = pack_sequence(grids, 3)
    assert (s.timesteps, s.feature_dim, s.label) == (T, F, 3)


def test_pack_layout():
    # timestep t holds coefficient t of every channel; plane-major, then channel row-major
    rng = np.random.default_rng(8)
    grids = [SubbandGrid(2, rng.random((2, 2, 3, 3))) for _ in range(3)]
    s = pack_sequence(grids, 0)
    for t in range(9):
        r, c = divmod(t, 3)
        for p in range(3):
            for i in range(2):
                for j in range(2):
                    assert s.values[t, p * 4 + i * 2 + j] == grids[p].channels[i, j, r, c]


def test_d1_sequence_is_raster_scan():
    X = np.random.default_rng(9).random((28, 28))
    s = pack_sequence(transform_2d(analysis_operator(1, 28), X), 1)
    assert np.array_equal(s.values[:, 0], X.ravel())
    assert np.array_equal(image_features(X[None, None], 1)[0, :, 0], X.ravel())


@settings(max_examples=40, deadline=None)
@given(
    st.sampled_from([(1, 6), (2, 6), (3, 6), (6, 6), (4, 8)]),
    st.sampled_from([1, 3]),
    st.data(),
)
def test_pack_unpack_bijection(dn, planes, data):
    d, N = dn
    n = N // d
    chans = data.draw(arrays(np.float64, (planes, d, d, n, n),
                             elements=st.floats(-1e6, 1e6, allow_nan=False)))
    grids = [SubbandGrid(d, chans[p]) for p in range(planes)]
    back = unpack_sequence(pack_sequence(grids, 2), d, N, planes)
    assert all(np.array_equal(a.channels, b.channels) for a, b in zip(grids, back))


def test_unpack_zero_and_single_pixel():
    z = unpack_sequence(SequenceSample(np.zeros((49, 4)), 0), 2, 14, 1)
    assert not z[0].channels.any()
    g = SubbandGrid(4, np.arange(16.0).reshape(4, 4, 1, 1))
    s = pack_sequence(g, 0)
    assert (s.timesteps, s.feature_dim) == (1, 16)
    assert np.array_equal(unpack_sequence(s, 4, 4)[0].channels, g.channels)


def test_pack_errors():
    g2 = SubbandGrid(2, np.zeros((2, 2, 3, 3)))
    g3 = SubbandGrid(3, np.zeros((3, 3, 2, 2)))
    with pytest.raises(DomainError):
        pack_sequence([g2, g3, g2], 0)
    with pytest.raises(DomainError):
        pack_sequence([g2, g2], 0)
    with pytest.raises(DomainError):
        unpack_sequence(SequenceSample(np.zeros((10, 4)), 0), 2, 6, 1)


def test_pack_batch_matches_single():
    rng = np.random.default_rng(10)
    stack = rng.random((4, 3, 2, 2, 5, 5))
    batch = pack_batch(stack)
    for i in range(4):
        single = pack_sequence([SubbandGrid(2, stack[i, p]) for p in range(3)], 0)
        assert np.array_equal(batch[i], single.values)
