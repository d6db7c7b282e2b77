import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from drofit.errors import ConfigError, NumericError, ShapeError
from drofit.numerics import (
    Tensor,
    conv1d,
    conv1d_out_len,
    conv1d_transposed,
    conv1d_transposed_out_len,
    conv2d,
    count_macs,
    dropout,
    fft,
    grad_check,
    ifft,
    irfft,
    layer_norm,
    linear,
    make_op,
    masked_multihead_attention,
    prelu,
    rfft,
    scope,
    sigmoid,
)
from drofit.numerics import ops


def t(a):
    return Tensor(np.array(a, dtype=np.float64))


# -- brute-force oracles ---------------------------------------------------------

def conv1d_loops(x, w, b, stride, pad, dilation):
    c_in, length = x.shape
    c_out, _, k = w.shape
    xp = np.pad(x, ((0, 0), pad))
    l_out = (length + sum(pad) - dilation * (k - 1) - 1) // stride + 1
    out = np.zeros((c_out, l_out))
    for o in range(c_out):
        for i in range(l_out):
            acc = b[o]
            for c in range(c_in):
                for j in range(k):
                    acc += w[o, c, j] * xp[c, i * stride + j * dilation]
            out[o, i] = acc
    return out


def conv2d_loops(x, w, b):
    c_in, h, wd = x.shape
    c_out, _, kh, kw = w.shape
    out = np.zeros((c_out, h - kh + 1, wd - kw + 1))
    for o in range(c_out):
        for i in range(out.shape[1]):
            for j in range(out.shape[2]):
                out[o, i, j] = b[o] + np.sum(w[o] * x[:, i: i + kh, j: j + kw])
    return out


def attention_dense(q, k, v, heads, mask):
    length, d = q.shape
    dk = d // heads
    out = np.zeros_like(q)
    for h in range(heads):
        sl = slice(h * dk, (h + 1) * dk)
        scores = q[:, sl] @ k[:, sl].T / np.sqrt(dk)
        scores = np.where(mask, scores, -np.inf)
        scores -= scores.max(axis=1, keepdims=True)
        weights = np.exp(scores)
        weights /= weights.sum(axis=1, keepdims=True)
        out[:, sl] = weights @ v[:, sl]
    return out


def band_mask(n, half):
    idx = np.arange(n)
    return np.abs(idx[:, None] - idx[None, :]) <= half


# -- conv1d ----------------------------------------------------------------------

def test_conv1d_identity_kernel():
    x = t([[1, 2, 3, 4, 5]])
    out = conv1d(x, t([[[1.0]]]))
    np.testing.assert_array_equal(out.data, x.data)


def test_conv1d_length_and_macs():
    # Two padding samples in total, one per side.
    assert conv1d_out_len(64, 6, 2, (1, 1)) == 31
    x = Tensor(np.zeros((2, 64)))
    with count_macs() as counter:
        out = conv1d(x, Tensor(np.zeros((4, 2, 6))), stride=2, padding=(1, 1))
    assert out.shape == (4, 31)
    assert counter.total() == 1488


@pytest.mark.parametrize("stride,pad,dilation", [(1, (0, 0), 1), (2, (2, 2), 1), (1, (4, 0), 2), (3, (1, 2), 1)])
def test_conv1d_matches_loops(rng, stride, pad, dilation):
    x = rng.standard_normal((3, 17))
    w = rng.standard_normal((2, 3, 3))
    b = rng.standard_normal(2)
    out = conv1d(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=pad, dilation=dilation)
    np.testing.assert_allclose(out.data, conv1d_loops(x, w, b, stride, pad, dilation), rtol=1e-12, atol=1e-12)


def test_conv1d_batched_equals_unbatched(rng):
    x = rng.standard_normal((4, 2, 12))
    w = Tensor(rng.standard_normal((3, 2, 5)))
    batched = conv1d(Tensor(x), w, padding=2).data
    for i in range(4):
        np.testing.assert_array_equal(batched[i], conv1d(Tensor(x[i]), w, padding=2).data)


def test_conv1d_grad(rng):
    x = Tensor(rng.standard_normal((2, 3, 11)))
    w = Tensor(rng.standard_normal((4, 3, 3)))
    b = Tensor(rng.standard_normal(4))
    err = grad_check(lambda: conv1d(x, w, b, stride=2, padding=(2, 1), dilation=2), [x, w, b])
    assert err < 1e-6


def test_conv1d_shape_errors():
    with pytest.raises(ShapeError, match="axis"):
        conv1d(Tensor(np.zeros((2, 8))), Tensor(np.zeros((1, 3, 2))))
    with pytest.raises(ShapeError, match="kernel extent"):
        conv1d(Tensor(np.zeros((1, 2))), Tensor(np.zeros((1, 1, 5))))


# -- conv1d_transposed -------------------------------------------------------------

def test_conv1d_transposed_length():
    assert conv1d_transposed_out_len(31, 6, 2, (1, 1)) == 64
    out = conv1d_transposed(Tensor(np.zeros((1, 31))), Tensor(np.zeros((1, 1, 6))), stride=2, padding=(1, 1))
    assert out.shape == (1, 64)


def test_conv1d_transposed_identity():
    x = t([[1, -2, 3]])
    np.testing.assert_array_equal(conv1d_transposed(x, t([[[1.0]]])).data, x.data)


@given(seed=st.integers(0, 2 ** 31 - 1), stride=st.integers(1, 3), k=st.integers(1, 6),
       left=st.integers(0, 3), right=st.integers(0, 3), y_len=st.integers(1, 10))
def test_conv1d_transposed_is_adjoint(seed, stride, k, left, right, y_len):
    # Exact adjointness needs the strided windows to consume the padded input.
    length = (y_len - 1) * stride + k - left - right
    assume(length >= 1)
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((3, 2, k))
    x = rng.standard_normal((2, length))
    y = rng.standard_normal((3, y_len))
    forward = conv1d(Tensor(x), Tensor(w), stride=stride, padding=(left, right)).data
    back = conv1d_transposed(Tensor(y), Tensor(w), stride=stride, padding=(left, right)).data
    assert back.shape == x.shape
    np.testing.assert_allclose(np.sum(forward * y), np.sum(x * back), rtol=1e-10, atol=1e-10)


def test_conv1d_transposed_grad(rng):
    x = Tensor(rng.standard_normal((2, 4, 7)))
    w = Tensor(rng.standard_normal((4, 3, 6)))
    b = Tensor(rng.standard_normal(3))
    assert grad_check(lambda: conv1d_transposed(x, w, b, stride=2, padding=2), [x, w, b]) < 1e-6


# -- conv2d --------------------------------------------------------------------------

def test_conv2d_identity_and_constant_field():
    x = Tensor(np.arange(12.0).reshape(1, 3, 4))
    np.testing.assert_array_equal(conv2d(x, t([[[[1.0]]]])).data, x.data)
    out = conv2d(Tensor(np.ones((1, 5, 5))), Tensor(np.ones((1, 1, 3, 3))))
    np.testing.assert_array_equal(out.data, np.full((1, 3, 3), 9.0))


def test_conv2d_matches_loops(rng):
    x = rng.standard_normal((3, 6, 5))
    w = rng.standard_normal((2, 3, 3, 2))
    b = rng.standard_normal(2)
    np.testing.assert_allclose(conv2d(Tensor(x), Tensor(w), Tensor(b)).data, conv2d_loops(x, w, b), atol=1e-12)


def test_conv2d_grad(rng):
    x = Tensor(rng.standard_normal((4, 5, 6)))
    w = Tensor(rng.standard_normal((2, 4, 3, 3)))
    b = Tensor(rng.standard_normal(2))
    assert grad_check(lambda: conv2d(x, w, b, padding=((1, 1), (1, 1))), [x, w, b]) < 1e-6


# -- linear --------------------------------------------------------------------------

def test_linear_identity_and_hand_sum():
    x = t([[1, 2], [3, 4]])
    np.testing.assert_array_equal(linear(x, Tensor(np.eye(2)), t([0, 0])).data, x.data)
    assert linear(t([3, 4]), t([[1, 1]]), t([0])).data.tolist() == [7.0]


def test_linear_grad(rng):
    x = Tensor(rng.standard_normal((3, 4, 5)))
    w = Tensor(rng.standard_normal((2, 5)))
    b = Tensor(rng.standard_normal(2))
    assert grad_check(lambda: linear(x, w, b), [x, w, b]) < 1e-6


def test_linear_shape_error():
    with pytest.raises(ShapeError, match="D_in"):
        linear(Tensor(np.zeros(3)), Tensor(np.zeros((2, 4))))


# -- elementwise kernels -----------------------------------------------------------------

def test_layer_norm_constant_vector_is_zero():
    out = layer_norm(Tensor(np.full(6, 3.5)), None, None)
    np.testing.assert_array_equal(out.data, np.zeros(6))


@given(seed=st.integers(0, 2 ** 31 - 1), n=st.integers(2, 20))
def test_layer_norm_standardizes(seed, n):
    x = np.random.default_rng(seed).standard_normal((3, n)) * 5 + 2
    out = layer_norm(Tensor(x), None, None, axis=-1, eps=0.0).data
    np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=-1), 1.0, rtol=1e-10)


def test_sigmoid_and_prelu_closed_form():
    assert sigmoid(t(0.0)).item() == 0.5
    assert prelu(t([-1.0]), t(0.2), axis=0).data[0] == pytest.approx(-0.2)
    assert prelu(t([2.0]), t(0.2), axis=0).data[0] == 2.0


def test_elementwise_grads(rng):
    x = Tensor(rng.standard_normal((3, 4, 5)))
    gain = Tensor(rng.standard_normal(4))
    shift = Tensor(rng.standard_normal(4))
    assert grad_check(lambda: layer_norm(x, gain, shift, axis=1), [x, gain, shift]) < 1e-6
    slope = Tensor(rng.uniform(0.1, 0.3, 4))
    assert grad_check(lambda: prelu(x, slope, axis=1), [x, slope]) < 1e-6
    assert grad_check(lambda: sigmoid(x), [x]) < 1e-6


def test_dropout_identity_in_eval_and_scaled_in_train(rng):
    x = Tensor(rng.standard_normal((50, 40)))
    assert dropout(x, 0.3, train=False) is x
    out = dropout(x, 0.5, train=True, rng=np.random.default_rng(0)).data
    kept = out != 0
    np.testing.assert_allclose(out[kept], 2.0 * x.data[kept])
    assert 0.4 < kept.mean() < 0.6
    with pytest.raises(ConfigError):
        dropout(x, 1.0, train=True, rng=rng)


def test_dropout_grad(rng):
    x = Tensor(rng.standard_normal((4, 6)))
    # Same generator state each call keeps the mask fixed during the check.
    assert grad_check(lambda: dropout(x, 0.3, True, np.random.default_rng(5)), [x]) < 1e-6


# -- attention ------------------------------------------------------------------------------

def test_attention_identity_mask_returns_values(rng):
    q, k, v = (rng.standard_normal((5, 4)) for _ in range(3))
    out = masked_multihead_attention(Tensor(q), Tensor(k), Tensor(v), 2, np.eye(5, dtype=bool))
    np.testing.assert_allclose(out.data, v, atol=1e-15)


def test_attention_two_position_hand_case():
    q = np.array([[1.0, 0.0], [0.0, 1.0]])
    k = np.array([[1.0, 1.0], [0.0, 2.0]])
    v = np.array([[1.0, 2.0], [3.0, 4.0]])
    out = masked_multihead_attention(Tensor(q), Tensor(k), Tensor(v), 1, np.ones((2, 2), dtype=bool)).data
    # Row 0 scores (1, 0)/sqrt 2, row 1 scores (1, 2)/sqrt 2.
    for row, scores in ((0, (1.0, 0.0)), (1, (1.0, 2.0))):
        e = np.exp(np.array(scores) / np.sqrt(2.0))
        p = e / e.sum()
        np.testing.assert_allclose(out[row], p @ v, rtol=1e-14)


@given(seed=st.integers(0, 2 ** 31 - 1), length=st.integers(1, 12), half=st.integers(0, 4),
       heads=st.sampled_from([1, 2, 4]))
def test_attention_matches_dense_and_masks_exactly(seed, length, half, heads):
    rng = np.random.default_rng(seed)
    q, k, v = (rng.standard_normal((3, length, 8)) for _ in range(3))
    mask = band_mask(length, half)
    out, weights = masked_multihead_attention(Tensor(q), Tensor(k), Tensor(v), heads, mask, return_weights=True)
    for f in range(3):
        np.testing.assert_allclose(out.data[f], attention_dense(q[f], k[f], v[f], heads, mask), atol=1e-12)
    assert np.all(weights[..., ~mask] == 0.0)
    np.testing.assert_allclose(weights.sum(axis=-1), 1.0, atol=1e-12)


def test_attention_grad(rng):
    q, k, v = (Tensor(rng.standard_normal((2, 6, 4))) for _ in range(3))
    mask = band_mask(6, 1)
    mask[0, 5] = True
    assert grad_check(lambda: masked_multihead_attention(q, k, v, 2, mask), [q, k, v]) < 1e-6


def test_attention_fully_masked_row_is_an_error(rng):
    mask = np.eye(3, dtype=bool)
    mask[1, 1] = False
    x = Tensor(rng.standard_normal((3, 4)))
    with pytest.raises(ConfigError, match="attend nothing"):
        masked_multihead_attention(x, x, x, 1, mask)


def test_attention_macs_count_attended_pairs_only(rng):
    x = Tensor(rng.standard_normal((7, 5, 4)))
    mask = band_mask(5, 1)
    with count_macs() as counter:
        masked_multihead_attention(x, x, x, 2, mask)
    pairs = int(mask.sum())
    assert counter.kind_total("attn_qk") == 7 * pairs * 4
    assert counter.kind_total("attn_av") == 7 * pairs * 4


# -- FFT ---------------------------------------------------------------------------------------

def test_rfft_of_constant_is_dc_only():
    spec = rfft(np.full(1024, 0.75))
    assert spec[0] == pytest.approx(1024 * 0.75)
    np.testing.assert_allclose(spec[1:], 0.0, atol=1e-10)


def test_rfft_single_tone():
    n, k = 256, 17
    spec = np.abs(rfft(np.cos(2 * np.pi * k * np.arange(n) / n)))
    assert np.argmax(spec) == k
    np.testing.assert_allclose(np.delete(spec, k), 0.0, atol=1e-10)


@given(seed=st.integers(0, 2 ** 31 - 1), log_n=st.integers(0, 11))
def test_fft_matches_numpy_and_round_trips(seed, log_n):
    n = 2 ** log_n
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, n))
    np.testing.assert_allclose(rfft(x), np.fft.rfft(x), atol=1e-9 * max(1, n))
    np.testing.assert_allclose(irfft(rfft(x), n), x, atol=1e-10)
    z = x + 1j * rng.standard_normal((2, n))
    np.testing.assert_allclose(ifft(fft(z)), z, atol=1e-10)


@given(seed=st.integers(0, 2 ** 31 - 1), log_n=st.integers(1, 11))
def test_parseval(seed, log_n):
    n = 2 ** log_n
    x = np.random.default_rng(seed).standard_normal(n)
    energy = np.sum(np.abs(fft(x.astype(complex))) ** 2) / n
    assert energy == pytest.approx(np.sum(x * x), rel=1e-10)


def test_fft_rejects_non_power_of_two():
    with pytest.raises(ConfigError):
        rfft(np.zeros(100))


# -- grad_check harness and tape --------------------------------------------------------------

def test_grad_check_detects_corrupted_backward(rng):
    x = Tensor(rng.standard_normal((3, 4)))
    w = Tensor(rng.standard_normal((2, 4)))

    def corrupted():
        good = linear(x, w)
        return make_op(good.data, (x, w), lambda g: (g @ w.data, 1.01 * (g.T @ x.data)))

    assert grad_check(lambda: linear(x, w), [x, w]) < 1e-6
    assert grad_check(corrupted, [x, w]) > 1e-3


def test_grad_check_requires_float64():
    x = Tensor(np.zeros(3, dtype=np.float32))
    with pytest.raises(ConfigError):
        grad_check(lambda: x, [x])


def test_ops_grads(rng):
    a = Tensor(rng.uniform(0.5, 2.0, (3, 4)))
    b = Tensor(rng.standard_normal((1, 4)))

    def graph():
        y = ops.mul(ops.add(a, b), ops.sub(a, b))
        y = ops.concat([ops.sqrt(a), ops.log10(ops.clamp_min(a, 0.7)), y], axis=0)
        return ops.mean(ops.square(ops.transpose(ops.reshape(y, (9, 4)))), axis=1)

    assert grad_check(graph, [a, b]) < 1e-6


def test_non_finite_kernel_output_raises():
    with pytest.raises(NumericError):
        ops.log10(Tensor(np.array([0.0])))


def test_mac_scopes_nest():
    x = Tensor(np.ones((1, 4)))
    w = Tensor(np.ones((2, 1, 1)))
    with count_macs() as counter:
        with scope("outer"):
            conv1d(x, w)
            with scope("inner"):
                linear(Tensor(np.ones(3)), Tensor(np.ones((2, 3))))
    assert counter.as_dict() == {"outer": {"conv1d": 8}, "outer.inner": {"linear": 6}}


def test_backward_accumulates_through_shared_parents(rng):
    x = Tensor(rng.standard_normal(5), requires_grad=True)
    y = ops.tsum(ops.mul(x, x)) if hasattr(ops, "tsum") else ops.sum(ops.mul(x, x))
    y.backward()
    np.testing.assert_allclose(x.grad, 2 * x.data)
