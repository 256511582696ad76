import math

import numpy as np
import pytest

from orpt.neural import (
    AdamState,
    CheckpointError,
    ConvSpec,
    HiddenState,
    NumericError,
    adam_update,
    clip_by_global_norm,
    dilated_causal_conv,
    forward,
    global_norm,
    indrnn_step,
    init_params,
    load_checkpoint,
    loss_and_grad,
    lstm_step,
    parameter_count,
    predict,
    residual_block,
    rnn_step,
    run_sequence,
    save_checkpoint,
)
from orpt.numtheory import DomainError
from orpt.subband import SequenceSample
from orpt.verify import finite_difference_check


def _sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def _rnn_oracle(Wx, Wh, b, h, x, act):
    M = len(b)
    out = []
    for m in range(M):
        s = b[m]
        for j in range(len(x)):
            s += Wx[m][j] * x[j]
        for j in range(len(h)):
            s += Wh[m][j] * h[j]
        out.append(act(s))
    return out


def _lstm_oracle(Wx, Wh, b, h, c, x):
    M = len(h)
    a = _rnn_oracle(Wx, Wh, b, h, x, lambda s: s)
    c_new, h_new = [], []
    for m in range(M):
        i, f = _sig(a[m]), _sig(a[M + m])
        g, o = math.tanh(a[2 * M + m]), _sig(a[3 * M + m])
        c_new.append(f * c[m] + i * g)
        h_new.append(o * math.tanh(c_new[-1]))
    return h_new, c_new


@pytest.fixture
def rng():
    return np.random.default_rng(11)


def test_rnn_zero_weights(rng):
    p = init_params("rnn", 3, 4, 2, dtype=np.float64).zeros_like()
    assert np.array_equal(rnn_step(p, rng.standard_normal(4), rng.standard_normal(3)).h, np.zeros(4))


def test_rnn_feedforward_degeneracy():
    p = init_params("rnn", 3, 3, 2, dtype=np.float64).zeros_like()
    p.tensors["fwd.W_x"][:] = np.eye(3)
    x = np.array([1e-3, -2e-3, 5e-4])
    assert np.allclose(rnn_step(p, np.zeros(3), x).h, np.tanh(x), atol=0)


def test_rnn_matches_scalar_oracle(rng):
    for _ in range(20):
        p = init_params("rnn", 4, 5, 3, seed=rng, dtype=np.float64)
        p.tensors["fwd.b"][:] = rng.standard_normal(5)
        h, x = rng.standard_normal(5), rng.standard_normal(4)
        got = rnn_step(p, h, x).h
        want = _rnn_oracle(p["fwd.W_x"].tolist(), p["fwd.W_h"].tolist(), p["fwd.b"].tolist(), h, x, math.tanh)
        assert np.max(np.abs(got - want)) < 1e-12


def test_indrnn_examples(rng):
    p = init_params("indrnn", 3, 4, 2, seed=rng, dtype=np.float64)
    x, h = rng.standard_normal(3), rng.standard_normal(4)
    p.tensors["fwd.W_h"][:] = 0
    assert np.array_equal(indrnn_step(p, h, x).h, np.maximum(p["fwd.W_x"] @ x + p["fwd.b"], 0))
    z = p.zeros_like()
    assert np.array_equal(indrnn_step(z, np.zeros(4), np.zeros(3)).h, np.zeros(4))


def test_indrnn_equals_diagonal_rnn(rng):
    for _ in range(20):
        p = init_params("indrnn", 3, 6, 2, seed=rng, dtype=np.float64)
        p.tensors["fwd.b"][:] = rng.standard_normal(6)
        h, x = rng.standard_normal(6), rng.standard_normal(3)
        relu = lambda s: max(s, 0.0)  # noqa: E731
        want = _rnn_oracle(
            p["fwd.W_x"].tolist(), np.diag(p["fwd.W_h"]).tolist(), p["fwd.b"].tolist(), h, x, relu
        )
        assert np.max(np.abs(indrnn_step(p, h, x).h - want)) <= 1e-12


def test_lstm_zero(rng):
    p = init_params("lstm", 3, 4, 2, dtype=np.float64).zeros_like()
    s = lstm_step(p, HiddenState(np.zeros(4), np.zeros(4)), rng.standard_normal(3))
    assert np.array_equal(s.h, np.zeros(4)) and np.array_equal(s.c, np.zeros(4))


def test_lstm_memory_retention(rng):
    M = 4
    p = init_params("lstm", 2, M, 2, dtype=np.float64).zeros_like()
    b = p.tensors["fwd.b"]
    b[:M], b[M : 2 * M] = -10.0, 10.0
    c0 = rng.standard_normal(M)
    s = lstm_step(p, HiddenState(np.zeros(M), c0), rng.standard_normal(2))
    assert np.allclose(s.c, c0, atol=1e-4)


def test_lstm_matches_scalar_oracle(rng):
    for _ in range(20):
        p = init_params("lstm", 3, 4, 2, seed=rng, dtype=np.float64)
        p.tensors["fwd.b"][:] = rng.standard_normal(16)
        h, c, x = rng.standard_normal(4), rng.standard_normal(4), rng.standard_normal(3)
        s = lstm_step(p, HiddenState(h, c), x)
        wh, wc = _lstm_oracle(p["fwd.W_x"].tolist(), p["fwd.W_h"].tolist(), p["fwd.b"].tolist(), h, c, x)
        assert np.max(np.abs(s.h - wh)) < 1e-12 and np.max(np.abs(s.c - wc)) < 1e-12


def test_step_dimension_errors():
    p = init_params("lstm", 3, 4, 2)
    with pytest.raises(DomainError):
        lstm_step(p, HiddenState(np.zeros(4), np.zeros(4)), np.zeros(5))
    with pytest.raises(DomainError):
        rnn_step(init_params("rnn", 3, 4, 2), np.zeros(2), np.zeros(3))


def test_sequence_forward_matches_steps(rng):
    p = init_params("lstm", 3, 5, 4, seed=rng, dtype=np.float64)
    X = rng.standard_normal((2, 6, 3))
    s = HiddenState(np.zeros((2, 5)), np.zeros((2, 5)))
    for t in range(6):
        s = lstm_step(p, s, X[:, t])
    logits, _ = forward(p, X)
    assert np.allclose(logits, s.h @ p["out.W"].T + p["out.b"], atol=1e-13)


def test_bilstm_single_step(rng):
    p = init_params("lstm", 2, 3, 4, bidirectional=True, seed=rng, dtype=np.float64)
    for k in ("W_x", "W_h", "b"):
        p.tensors[f"bwd.{k}"] = p.tensors[f"fwd.{k}"].copy()
    x = rng.standard_normal((1, 2))
    _, (_, feats) = forward(p, x[None])
    assert np.array_equal(feats[0, :3], feats[0, 3:])
    logits = run_sequence(p, SequenceSample(x, 0), "bidirectional")
    assert logits.shape == (4,)
    with pytest.raises(DomainError):
        run_sequence(p, SequenceSample(x, 0), "forward")


def test_bidirectional_reads_reversed_input(rng):
    p = init_params("rnn", 2, 3, 2, bidirectional=True, seed=rng, dtype=np.float64)
    X = rng.standard_normal((1, 5, 2))
    _, (caches, _) = forward(p, X)
    assert np.array_equal(caches[1].X[0], X[0, ::-1])


@pytest.mark.parametrize("T, F", [(784, 1), (196, 4), (49, 16), (16, 49)])
def test_logits_finite_for_divisor_shapes(rng, T, F):
    p = init_params("lstm", F, 8, 10, seed=1)
    X = rng.random((2, T, F)).astype(np.float32)
    logits, _ = forward(p, X)
    assert logits.shape == (2, 10) and np.all(np.isfinite(logits))


def test_run_sequence_deterministic(rng):
    p = init_params("lstm", 4, 6, 10, seed=3)
    x = rng.random((30, 4)).astype(np.float32)
    assert run_sequence(p, x).tobytes() == run_sequence(p, x).tobytes()


def test_parameter_count_reference_network():
    assert parameter_count("lstm", 4, 128, 10) == 4 * (128 * 132 + 128) + 1290 == 69386
    assert init_params("lstm", 4, 128, 10).size() == 69386


@pytest.mark.parametrize("kind", ["rnn", "indrnn", "lstm"])
@pytest.mark.parametrize("bi", [False, True])
@pytest.mark.parametrize("F, M, C", [(1, 1, 2), (2, 3, 3), (4, 7, 10), (49, 16, 10)])
def test_parameter_count_matches_allocation(kind, bi, F, M, C):
    p = init_params(kind, F, M, C, bidirectional=bi)
    p.validate()
    assert p.size() == parameter_count(kind, F, M, C, bi)


def test_init_details():
    p = init_params("lstm", 4, 8, 10, seed=0, dtype=np.float64)
    assert np.array_equal(p["fwd.b"][8:16], np.ones(8))
    assert np.count_nonzero(p["fwd.b"]) == 8
    W = p["fwd.W_h"]  # (32, 8): orthonormal columns
    assert np.allclose(W.T @ W, np.eye(8), atol=1e-12)
    lim = np.sqrt(6 / (4 + 32))
    assert np.abs(p["fwd.W_x"]).max() <= lim
    q = init_params("indrnn", 4, 50, 10, seed=0)
    assert q["fwd.W_h"].shape == (50,) and 0 <= q["fwd.W_h"].min() and q["fwd.W_h"].max() <= 1
    with pytest.raises(DomainError):
        init_params("gru", 1, 1, 1)


def test_uniform_logits_loss():
    p = init_params("lstm", 2, 3, 10, dtype=np.float64)
    p.tensors["out.W"][:] = 0
    loss, _ = loss_and_grad(p, np.ones((3, 4, 2)), [0, 5, 9])
    assert abs(loss - math.log(10)) < 1e-12


def test_duplicate_sample_same_loss(rng):
    p = init_params("lstm", 2, 3, 4, seed=rng, dtype=np.float64)
    x = rng.standard_normal((4, 2))
    one, _ = loss_and_grad(p, [SequenceSample(x, 2)])
    two, _ = loss_and_grad(p, [SequenceSample(x, 2), SequenceSample(x, 2)])
    assert abs(one - two) < 1e-14


def test_loss_errors():
    p = init_params("rnn", 2, 3, 4, dtype=np.float64)
    with pytest.raises(DomainError):
        loss_and_grad(p, np.zeros((0, 4, 2)), [])
    p.tensors["out.b"][2] = np.inf
    with pytest.raises(NumericError, match="batch index 0"):
        loss_and_grad(p, np.zeros((2, 4, 2)), [1, 0])


@pytest.mark.parametrize("kind, bi", [("rnn", False), ("indrnn", False), ("lstm", False), ("lstm", True), ("rnn", True)])
def test_gradients_match_finite_differences(kind, bi):
    rng = np.random.default_rng(5)
    p = init_params(kind, 2, 3, 3, bi, seed=rng, dtype=np.float64)
    if kind == "indrnn":
        p.tensors["fwd.b"][:] = 0.5  # keep pre-activations away from the ReLU kink
    assert p.size() <= 200
    X = rng.standard_normal((5, 4, 2))
    y = rng.integers(0, 3, 5)
    assert finite_difference_check(p, X, y, eps=1e-5) < 1e-5


def test_float32_gradient_close_to_float64(rng):
    p = init_params("lstm", 3, 8, 4, seed=rng, dtype=np.float64)
    X = rng.standard_normal((6, 20, 3))
    y = rng.integers(0, 4, 6)
    l64, g64 = loss_and_grad(p, X, y)
    l32, g32 = loss_and_grad(p.astype(np.float32), X, y)
    assert abs(l64 - l32) < 1e-5
    for k in g64.tensors:
        assert np.allclose(g32[k], g64[k], atol=1e-4)


def test_predict_matches_argmax(rng):
    p = init_params("lstm", 2, 4, 5, seed=rng)
    X = rng.standard_normal((7, 3, 2)).astype(np.float32)
    assert predict(p, X, batch_size=3).tolist() == np.argmax(forward(p, X)[0], axis=1).tolist()


def test_adam_zero_grad():
    p = init_params("rnn", 2, 3, 2, seed=0, dtype=np.float64)
    q = adam_update(p, p.zeros_like(), AdamState())
    for k in p.tensors:
        assert np.array_equal(p[k], q[k])


def test_adam_constant_grad_moves_lr_per_step():
    p = init_params("rnn", 2, 3, 2, seed=0, dtype=np.float64)
    g = p.like({k: np.where(np.arange(v.size).reshape(v.shape) % 2, 0.3, -0.2) for k, v in p.tensors.items()})
    st, q, k, lr = AdamState(), p, 50, 1e-3
    for _ in range(k):
        q = adam_update(q, g, st, lr=lr, clip=None)
    for name in p.tensors:
        assert np.allclose(q[name] - p[name], -lr * np.sign(g[name]) * k, rtol=1e-4)


def test_clip_global_norm():
    p = init_params("rnn", 2, 3, 2, seed=0, dtype=np.float64)
    g = p.like({k: np.ones_like(v) for k, v in p.tensors.items()})
    g = g.like({k: v * 10 / global_norm(g) for k, v in g.tensors.items()})
    assert abs(global_norm(g) - 10) < 1e-12
    assert abs(global_norm(clip_by_global_norm(g, 1.0)) - 1.0) < 1e-12
    assert clip_by_global_norm(g, 20.0) is g
    g.tensors["out.b"][0] = np.nan
    with pytest.raises(NumericError):
        adam_update(p, g, AdamState())


def _naive_conv(taps, d, x):
    out = []
    for k in range(len(x)):
        s = 0.0
        for i, f in enumerate(taps):
            if k - d * i >= 0:
                s += f * x[k - d * i]
        out.append(s)
    return out


def test_conv_impulse_offsets():
    x = np.zeros(8)
    x[0] = 1
    out = dilated_causal_conv(ConvSpec((1.0, 2.0, 3.0), 2), x)
    assert out.tolist() == [1, 0, 2, 0, 3, 0, 0, 0]
    assert ConvSpec((1.0, 2.0, 3.0), 2).receptive_field == 5


def test_conv_identity_and_ordinary(rng):
    x = rng.standard_normal(20)
    for d in (1, 3, 7):
        assert np.array_equal(dilated_causal_conv(ConvSpec((1.0,), d), x), x)
    taps = rng.standard_normal(4)
    ref = np.convolve(x, taps)[:20]
    assert np.max(np.abs(dilated_causal_conv(ConvSpec(tuple(taps), 1), x) - ref)) <= 1e-12


def test_conv_matches_naive(rng):
    for _ in range(200):
        n, L, d = int(rng.integers(1, 30)), int(rng.integers(1, 6)), int(rng.integers(1, 6))
        taps, x = rng.standard_normal(L), rng.standard_normal(n)
        got = dilated_causal_conv(ConvSpec(tuple(taps), d), x)
        assert np.max(np.abs(got - _naive_conv(taps, d, x))) <= 1e-12


def test_conv_causality(rng):
    for _ in range(1000):
        n = int(rng.integers(2, 40))
        spec = ConvSpec(tuple(rng.standard_normal(int(rng.integers(1, 5)))), int(rng.integers(1, 6)))
        x = rng.standard_normal(n)
        k = int(rng.integers(0, n - 1))
        y = x.copy()
        y[k + 1 :] = rng.standard_normal(n - k - 1)
        assert np.array_equal(dilated_causal_conv(spec, x)[: k + 1], dilated_causal_conv(spec, y)[: k + 1])


def test_conv_errors():
    with pytest.raises(DomainError):
        ConvSpec((), 1)
    with pytest.raises(DomainError):
        ConvSpec((1.0,), 0)
    with pytest.raises(DomainError):
        dilated_causal_conv(ConvSpec((1.0,)), [])


def test_residual_block(rng):
    x = np.abs(rng.standard_normal(10))
    assert np.array_equal(residual_block(x, np.zeros_like), x)
    assert np.array_equal(residual_block(x, lambda v: -v), np.zeros(10))
    spec = ConvSpec(tuple(rng.standard_normal(3)), 2)
    z = rng.standard_normal(10)
    want = [max(a + b, 0.0) for a, b in zip(z, _naive_conv(spec.taps, 2, z))]
    assert np.max(np.abs(residual_block(z, lambda v: dilated_causal_conv(spec, v)) - want)) <= 1e-12


def test_residual_projection(rng):
    x = rng.standard_normal((6, 3))
    P = rng.standard_normal((5, 3))
    out = residual_block(x, lambda v: np.zeros((6, 5)), projection=P)
    assert np.allclose(out, np.maximum(x @ P.T, 0))
    with pytest.raises(DomainError):
        residual_block(x, lambda v: np.zeros((6, 5)))


def test_checkpoint_roundtrip(tmp_path, rng):
    p = init_params("lstm", 4, 6, 10, bidirectional=True, seed=rng)
    save_checkpoint(p, tmp_path / "c.bin")
    q = load_checkpoint(tmp_path / "c.bin")
    assert (q.cell_kind, q.input_dim, q.hidden_dim, q.classes, q.bidirectional) == ("lstm", 4, 6, 10, True)
    for k in p.tensors:
        assert q[k].tobytes() == p[k].tobytes()
    assert (tmp_path / "c.bin").read_bytes()[:8] == b"ORPTCKPT"


def test_checkpoint_corruption(tmp_path):
    path = tmp_path / "c.bin"
    save_checkpoint(init_params("indrnn", 2, 3, 4), path)
    raw = bytearray(path.read_bytes())
    raw[20] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="checksum"):
        load_checkpoint(path)
    path.write_bytes(b"NOTACKPT" + bytes(20))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
    path.write_bytes(b"ORP")
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)
