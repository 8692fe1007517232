import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pmcw_isac.errors import ConfigError, NondeterminismError, ShapeError
from pmcw_isac.nn import (OptimizerState, Tensor, adam_step, bce_with_logits, cosine_lr,
                          encoder_layer, grad_check, init_encoder_layer, layer_norm, linear, mhsa,
                          load_tensors, save_tensors, softmax_rows)

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


# --- linear --------------------------------------------------------------------

def test_linear_identity():
    out = linear(np.array([1.0, 2.0]), np.eye(2), np.zeros(2))
    np.testing.assert_array_equal(out.data, [1.0, 2.0])


def test_linear_hand_arithmetic():
    out = linear(np.array([1.0, 1.0]), np.array([[2.0], [3.0]]), np.array([1.0]))
    np.testing.assert_allclose(out.data, [6.0])


def test_linear_zero_weight_gives_bias(rng):
    b = rng.standard_normal(3)
    out = linear(rng.standard_normal((4, 5)), np.zeros((5, 3)), b)
    np.testing.assert_array_equal(out.data, np.broadcast_to(b, (4, 3)))


def test_linear_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
        linear(np.zeros((2, 3)), np.zeros((4, 5)))


# --- layer_norm -----------------------------------------------------------------

def test_layer_norm_constant_vector():
    out = layer_norm(np.full(4, 5.0), np.ones(4), np.zeros(4))
    np.testing.assert_allclose(out.data, np.zeros(4), atol=1e-12)


def test_layer_norm_already_standard():
    out = layer_norm(np.array([1.0, -1.0]), np.ones(2), np.zeros(2))
    np.testing.assert_allclose(out.data, [1.0, -1.0], atol=1e-5)


def test_layer_norm_zero_gain(rng):
    shift = rng.standard_normal(6)
    out = layer_norm(rng.standard_normal((3, 6)), np.zeros(6), shift)
    np.testing.assert_allclose(out.data, np.broadcast_to(shift, (3, 6)))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (3, 8), elements=finite))
def test_layer_norm_statistics(x):
    if np.any(x.var(axis=-1) <= 10 * 1e-5):
        return
    out = layer_norm(x, np.ones(8), np.zeros(8)).data
    assert np.all(np.abs(out.mean(axis=-1)) < 1e-6)
    assert np.all(np.abs(out.var(axis=-1) - 1.0) < 1e-4)


# --- softmax ------------------------------------------------------------------------

def test_softmax_symmetric():
    np.testing.assert_allclose(softmax_rows(np.zeros(2)).data, [0.5, 0.5])


def test_softmax_large_input_stable():
    out = softmax_rows(np.array([1000.0, 0.0])).data
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, [1.0, 0.0], atol=1e-12)


def test_softmax_closed_form():
    np.testing.assert_allclose(softmax_rows(np.array([math.log(2.0), 0.0])).data, [2 / 3, 1 / 3])


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (4, 7), elements=st.floats(-1e6, 1e6, allow_nan=False)))
def test_softmax_rows_sum_to_one(x):
    out = softmax_rows(x).data
    np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-6)


# --- attention -------------------------------------------------------------------------

def _attn_params(rng, d, d_k, h):
    return {k: rng.standard_normal(s) * 0.4 for k, s in
            (("w_q", (d, h * d_k)), ("w_k", (d, h * d_k)), ("w_v", (d, h * d_k)), ("w_o", (h * d_k, d)))}


def test_mhsa_single_token_is_value_projection(rng):
    p = _attn_params(rng, 6, 3, 2)
    a = rng.standard_normal((1, 6))
    np.testing.assert_allclose(mhsa(a, p, 2).data, a @ p["w_v"] @ p["w_o"], rtol=1e-12)


def test_mhsa_identical_tokens_uniform_attention(rng):
    p = _attn_params(rng, 6, 3, 2)
    a = np.tile(rng.standard_normal(6), (5, 1))
    out = mhsa(a, p, 2).data
    np.testing.assert_allclose(out, np.tile(a[0] @ p["w_v"] @ p["w_o"], (5, 1)), rtol=1e-12)


def test_mhsa_matches_straight_line_formula(rng):
    p = _attn_params(rng, 4, 4, 1)
    a = rng.standard_normal((3, 4))
    q, k, v = a @ p["w_q"], a @ p["w_k"], a @ p["w_v"]
    expected = np.zeros((3, 4))
    for i in range(3):
        s = [sum(q[i, c] * k[j, c] for c in range(4)) / 2.0 for j in range(3)]
        w = [math.exp(x - max(s)) for x in s]
        w = [x / sum(w) for x in w]
        ctx = sum(w[j] * v[j] for j in range(3))
        expected[i] = ctx @ p["w_o"]
    np.testing.assert_allclose(mhsa(a, p, 1).data, expected, rtol=1e-12)


def test_mhsa_rejects_indivisible_heads(rng):
    p = _attn_params(rng, 6, 3, 2)
    with pytest.raises(ConfigError):
        mhsa(rng.standard_normal((2, 6)), p, 4)


def test_mhsa_rejects_wrong_width(rng):
    p = _attn_params(rng, 6, 3, 2)
    with pytest.raises(ConfigError):
        mhsa(rng.standard_normal((2, 5)), p, 2)


# --- encoder layer ------------------------------------------------------------------------

def test_encoder_layer_zero_weights_is_double_layer_norm(rng):
    params = init_encoder_layer(rng, 16, 8, 2, dtype=np.float64)
    for k in ("w_q", "w_k", "w_v", "w_o", "ff_w1", "ff_w2"):
        params[k].data[...] = 0.0
    x = rng.standard_normal((8, 16))
    ones, zeros = np.ones(16), np.zeros(16)
    expected = layer_norm(layer_norm(x, ones, zeros), ones, zeros).data
    np.testing.assert_allclose(encoder_layer(x, params, 2).data, expected, rtol=1e-12)


def test_encoder_layer_shape(rng):
    params = init_encoder_layer(rng, 16, 8, 2)
    assert encoder_layer(rng.standard_normal((8, 16)), params, 2).shape == (8, 16)


def test_encoder_layer_gradcheck(rng):
    params = init_encoder_layer(rng, 16, 8, 2, dtype=np.float64)
    x = Tensor(rng.standard_normal((2, 6, 16)), requires_grad=True)
    readout = rng.standard_normal((2, 6, 16))
    report = grad_check(lambda: (encoder_layer(x, params, 2) * readout).sum(), {**params, "x": x})
    assert report.passed, list(report.lines())


# --- BCE ----------------------------------------------------------------------------------

def test_bce_zero_logits_is_ln2(rng):
    bits = rng.integers(0, 2, 10)
    assert bce_with_logits(np.zeros(10), bits).item() == pytest.approx(math.log(2.0), abs=1e-15)


def test_bce_saturated_correct():
    assert bce_with_logits(np.array([20.0]), np.array([1])).item() == pytest.approx(2.0611536e-9, rel=1e-6)


def test_bce_saturated_wrong():
    assert bce_with_logits(np.array([-20.0]), np.array([1])).item() == pytest.approx(20.0, rel=1e-8)


def test_bce_extreme_logits_finite():
    z = Tensor(np.array([1e4, -1e4]), requires_grad=True)
    out = bce_with_logits(z, np.array([0, 1]))
    out.backward()
    assert np.isfinite(out.item()) and np.all(np.isfinite(z.grad))


# --- Adam and schedule ---------------------------------------------------------------------

def test_adam_first_step_hand_computed():
    w = np.array([1.0])
    state = OptimizerState.for_params([w], 0.1, 10)
    adam_step([w], [np.array([2.0])], state, lr=0.1)
    assert w[0] == pytest.approx(0.9, abs=1e-7)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (5,), elements=finite))
def test_adam_zero_gradient_is_identity(w0):
    w = w0.copy()
    state = OptimizerState.for_params([w], 0.1, 10)
    adam_step([w], [np.zeros(5)], state)
    np.testing.assert_array_equal(w, w0)


def test_adam_decreases_quadratic():
    w = np.array([3.0])
    state = OptimizerState.for_params([w], 0.1, 100)
    values = [float(w[0] ** 2)]
    for _ in range(2):
        adam_step([w], [2.0 * w.copy()], state, lr=0.1)
        values.append(float(w[0] ** 2))
    assert values[0] > values[1] > values[2]


def test_adam_step_counter_increases():
    w = np.zeros(2)
    state = OptimizerState.for_params([w], 0.1, 10)
    for expected in (1, 2, 3):
        adam_step([w], [np.ones(2)], state)
        assert state.step == expected


def test_cosine_schedule_points():
    assert cosine_lr(0, 100, 1e-4) == 1e-4
    assert cosine_lr(100, 100, 1e-4) == 0.0
    assert cosine_lr(50, 100, 1e-4) == pytest.approx(5e-5, rel=1e-12)
    assert cosine_lr(150, 100, 1e-4) == 0.0


@given(st.integers(0, 999))
def test_cosine_schedule_monotone(step):
    assert cosine_lr(step + 1, 1000, 1.0) <= cosine_lr(step, 1000, 1.0)


# --- gradient checking -------------------------------------------------------------------------

def test_grad_check_quadratic_exact(rng):
    w = Tensor(rng.standard_normal(10), requires_grad=True)
    report = grad_check(lambda: (w * w).sum(), {"w": w})
    assert report.max_error < 1e-8


def test_grad_check_detects_wrong_gradient(rng):
    w = Tensor(rng.standard_normal(4), requires_grad=True)

    def closure():
        y = (w * w).sum()
        # same value, corrupted backward
        return Tensor._make(y.data, (w,), lambda g: (3.0 * g * w.data,))
    assert not grad_check(closure, {"w": w}).passed


def test_grad_check_nondeterministic_closure(rng):
    w = Tensor(rng.standard_normal(4), requires_grad=True)
    noise = np.random.default_rng(0)
    with pytest.raises(NondeterminismError):
        grad_check(lambda: (w * float(noise.standard_normal())).sum(), {"w": w})


def test_grad_check_samples_at_least_64(rng):
    w = Tensor(rng.standard_normal((20, 20)), requires_grad=True)
    report = grad_check(lambda: (w * w).sum(), {"w": w})
    assert report.coords_checked["w"] >= 64


# --- autodiff plumbing -------------------------------------------------------------------------

def test_broadcast_add_gradient(rng):
    a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    b = Tensor(rng.standard_normal(4), requires_grad=True)
    (a + b).sum().backward()
    np.testing.assert_array_equal(b.grad, np.full(4, 3.0))
    np.testing.assert_array_equal(a.grad, np.ones((3, 4)))


def test_shared_subexpression_accumulates(rng):
    x = Tensor(rng.standard_normal(3), requires_grad=True)
    y = x * 2.0
    (y * y).sum().backward()
    np.testing.assert_allclose(x.grad, 8.0 * x.data)


# --- checkpoints ---------------------------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path, rng):
    t = {"a": rng.standard_normal((2, 3)).astype(np.float32), "b": rng.standard_normal(4)}
    save_tensors(tmp_path / "ck", t, {"note": "x"})
    loaded, meta = load_tensors(tmp_path / "ck", {"a": (2, 3), "b": (4,)})
    assert meta == {"note": "x"}
    for k in t:
        np.testing.assert_array_equal(loaded[k], t[k])
        assert loaded[k].dtype == t[k].dtype


def test_checkpoint_shape_mismatch(tmp_path, rng):
    save_tensors(tmp_path / "ck", {"a": np.zeros((2, 3))})
    with pytest.raises(ShapeError):
        load_tensors(tmp_path / "ck", {"a": (3, 2)})


def test_checkpoint_bytes_deterministic(tmp_path, rng):
    t = {"a": rng.standard_normal(5)}
    save_tensors(tmp_path / "x", t, {"k": 1})
    save_tensors(tmp_path / "y", t, {"k": 1})
    for name in ("manifest.json", "tensors.bin"):
        assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes()
