import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmcw_isac.comm import DecodedCube
from pmcw_isac.errors import ConfigError, ShapeError
from pmcw_isac.nn import Tensor, encoder_layer, grad_check, linear
from pmcw_isac.t3former import (ModelConfig, T3former, code_from_outer, forward, init_params, loss,
                                predict_bits, preprocess, sinusoidal_positions)
from pmcw_isac.waveform import gen_hadamard, gen_mseq, outer_code


def _outer(L, n_t):
    return outer_code(gen_mseq(L), gen_hadamard(n_t))


def _z1(mcfg, batch, seed=0, dtype=np.float32):
    return np.random.default_rng(seed).standard_normal(
        (batch, mcfg.seq_len_1, mcfg.in_features)).astype(dtype)


# --- configuration ----------------------------------------------------------------------

def test_model_config_from_table1(table1):
    m = ModelConfig.from_scenario(table1)
    assert (m.seq_len_1, m.seq_len_2, m.in_features, m.out_features) == (1008, 8, 32, 32)
    assert (m.d_model, m.d_key, m.n_heads, m.n_layers_1, m.n_layers_2) == (256, 64, 4, 3, 6)


def test_model_config_rejects_width_mismatch():
    with pytest.raises(ConfigError):
        ModelConfig(L=7, n_t=2, M=4, d_model=16, d_key=5, n_heads=2, n_layers_1=1, n_layers_2=1)


# --- preprocessing ---------------------------------------------------------------------------

def test_preprocess_table1_shape(table1):
    cube = np.zeros((63, 16, 8), complex)
    assert preprocess(cube, _outer(63, 16)).shape == (1008, 32)


def test_preprocess_real_cube_zero_q(rng):
    z = preprocess(rng.standard_normal((7, 2, 4)) + 0j, _outer(7, 2))
    assert not np.any(z[:, 1:8:2])


def test_preprocess_layout_sentinels():
    L, n_t, M = 7, 2, 4
    cube = np.zeros((L, n_t, M), complex)
    for l in range(L):
        for n in range(n_t):
            for m in range(M):
                cube[l, n, m] = (100 * l + 10 * n + m) + 1j * -(100 * l + 10 * n + m)
    z = preprocess(cube, _outer(L, n_t), dtype=np.float64)
    chips = gen_mseq(L).chips
    for l in range(L):
        for n in range(n_t):
            row = z[l * n_t + n]
            for m in range(M):
                assert row[2 * m] == 100 * l + 10 * n + m
                assert row[2 * m + 1] == -(100 * l + 10 * n + m)
            np.testing.assert_array_equal(row[2 * M::2], chips[l])
            np.testing.assert_array_equal(row[2 * M + 1::2], 0)


def test_preprocess_scale_and_decoded_cube(rng):
    data = rng.standard_normal((7, 2, 4)) + 1j * rng.standard_normal((7, 2, 4))
    a = preprocess(DecodedCube(data, 0), _outer(7, 2), scale=2.0, dtype=np.float64)
    b = preprocess(data / 2.0, _outer(7, 2), dtype=np.float64)
    np.testing.assert_allclose(a, b)


def test_preprocess_shape_error():
    with pytest.raises(ShapeError):
        preprocess(np.zeros((7, 4, 4)), _outer(7, 2))


def test_code_from_outer():
    np.testing.assert_array_equal(code_from_outer(_outer(15, 4)), gen_mseq(15).chips)


def test_sinusoidal_positions_interleaved():
    pe = sinusoidal_positions(5, 8)
    assert pe.shape == (5, 8)
    np.testing.assert_allclose(pe[0, 0::2], 0.0)
    np.testing.assert_allclose(pe[0, 1::2], 1.0)
    np.testing.assert_allclose(pe[3, 2], math.sin(3 / 10000 ** (2 / 8)))


# --- forward shapes -----------------------------------------------------------------------------

def test_toy_trace_shapes(toy_model):
    trace = forward(init_params(toy_model), _z1(toy_model, 3), toy_model)
    assert trace.shapes() == {
        "z0": (3, 7, 2, 16), "z1": (3, 14, 16), "x1": (3, 14, 16), "h1": (3, 14, 16),
        "h1p": (3, 14, 4), "x2": (3, 4, 14), "h2": (3, 4, 14), "logits": (3, 4, 2, 2)}


def test_table1_trace_shapes(table1):
    m = ModelConfig.from_scenario(table1)
    trace = forward(init_params(m), _z1(m, 1), m)
    s = trace.shapes()
    assert s["z1"] == (1, 1008, 32)
    assert s["x1"] == s["h1"] == (1, 1008, 256)
    assert s["h1p"] == (1, 1008, 8)
    assert s["x2"] == s["h2"] == (1, 8, 1008)
    assert s["logits"] == (1, 8, 16, 2)


@settings(max_examples=15, deadline=None)
@given(L=st.sampled_from([7, 15]), n_t=st.sampled_from([2, 4]), M=st.sampled_from([2, 4, 8]),
       heads=st.sampled_from([1, 2]), d_key=st.sampled_from([2, 4]), n1=st.integers(1, 2),
       n2=st.integers(1, 2), batch=st.integers(1, 3))
def test_trace_shapes_random_configs(L, n_t, M, heads, d_key, n1, n2, batch):
    m = ModelConfig(L=L, n_t=n_t, M=M, d_model=heads * d_key, d_key=d_key, n_heads=heads,
                    n_layers_1=n1, n_layers_2=n2)
    s = forward(init_params(m), _z1(m, batch), m).shapes()
    L1, D = L * n_t, heads * d_key
    assert s == {"z0": (batch, L, n_t, 4 * M), "z1": (batch, L1, 4 * M), "x1": (batch, L1, D),
                 "h1": (batch, L1, D), "h1p": (batch, L1, M), "x2": (batch, M, L1),
                 "h2": (batch, M, L1), "logits": (batch, M, n_t, 2)}


def test_forward_rejects_wrong_input(toy_model):
    with pytest.raises(ShapeError):
        forward(init_params(toy_model), np.zeros((1, 13, 16)), toy_model)


def test_param_shapes_match_init(toy_model):
    params = init_params(toy_model)
    assert {k: v.shape for k, v in params.items()} == toy_model.param_shapes()


def test_init_statistics(toy_model):
    p = init_params(toy_model)
    bound = math.sqrt(6 / (16 + 16))
    assert np.abs(p["stage1.0.w_q"].data).max() <= bound
    assert not np.any(p["emb.b"].data)
    np.testing.assert_array_equal(p["stage2.0.ln1_gain"].data, 1.0)
    np.testing.assert_array_equal(p["stage2.0.ln1_shift"].data, 0.0)


# --- head, loss and decisions ----------------------------------------------------------------------

def test_zeroed_head_gives_ln2(toy_model, rng):
    params = init_params(toy_model, dtype=np.float64)
    params["fc2.w"].data[...] = 0.0
    params["fc2.b"].data[...] = 0.0
    logits = forward(params, _z1(toy_model, 4, dtype=np.float64), toy_model).logits
    assert not np.any(logits.data)
    bits = rng.integers(0, 2, logits.shape)
    assert loss(logits, bits).item() == pytest.approx(math.log(2), abs=1e-12)


def test_loss_saturated_correct():
    bits = np.array([[0, 1], [1, 0]])
    logits = Tensor(np.where(bits == 1, 30.0, -30.0))
    assert loss(logits, bits).item() < 1e-9


def test_loss_shape_mismatch():
    with pytest.raises(ShapeError):
        loss(Tensor(np.zeros((2, 2))), np.zeros((2, 3)))


def test_predict_bits_rule():
    np.testing.assert_array_equal(predict_bits(np.array([-1.0, 1.0, 0.0])), [0, 1, 0])


@given(st.floats(1e-6, 1e6))
def test_predict_bits_scale_invariant(scale):
    z = np.random.default_rng(0).standard_normal(64)
    np.testing.assert_array_equal(predict_bits(z * scale), predict_bits(z))


def test_toy_gradients_all_tensors(toy_model):
    params = init_params(toy_model, seed=0, dtype=np.float64)
    rng = np.random.default_rng(0)
    z1 = rng.standard_normal((2, toy_model.seq_len_1, toy_model.in_features))
    bits = rng.integers(0, 2, (2, 4, 2, 2))

    def closure():
        return loss(forward(params, z1, toy_model).logits, bits)

    # these biases only shift every feature of a stage-2 token by the same amount,
    # which the stage-2 layer norm removes: their true gradient is zero
    closure().backward()
    flat_bias = {"fc1.b", f"stage1.{toy_model.n_layers_1 - 1}.ff_b2"}
    for k in flat_bias:
        assert np.abs(params[k].grad).max() < 1e-12
    checked = {k: v for k, v in params.items() if k not in flat_bias}
    report = grad_check(closure, checked, tolerance=1e-4, n_coords=64)
    assert report.passed, list(report.lines())
    assert min(report.coords_checked.values()) >= min(64, min(v.data.size for v in checked.values()))


def test_stage1_permutation_equivariance(toy_model, rng):
    params = init_params(toy_model, dtype=np.float64)
    z = rng.standard_normal((toy_model.seq_len_1, toy_model.in_features))
    perm = rng.permutation(toy_model.seq_len_1)

    def stage1(tokens):
        h = linear(tokens, params["emb.w"], params["emb.b"])   # no positional table
        for i in range(toy_model.n_layers_1):
            layer = {k.split(".", 2)[2]: v for k, v in params.items() if k.startswith(f"stage1.{i}.")}
            h = encoder_layer(h, layer, toy_model.n_heads)
        return h.data

    np.testing.assert_allclose(stage1(z[perm]), stage1(z)[perm], atol=1e-12)


def test_forward_deterministic(toy_model):
    params = init_params(toy_model, seed=3)
    z = _z1(toy_model, 2)
    a = forward(params, z, toy_model).logits.data
    b = forward(params, z, toy_model).logits.data
    assert a.tobytes() == b.tobytes()
    c = forward(init_params(toy_model, seed=3), z, toy_model).logits.data
    assert a.tobytes() == c.tobytes()


# --- model wrapper and checkpoints --------------------------------------------------------------------

def test_model_roundtrip(tmp_path, toy_model, rng):
    model = T3former(toy_model, norm_scale=0.37, seed=5)
    model.save(tmp_path / "ck", {"epochs": 3})
    back = T3former.load(tmp_path / "ck")
    assert back.mcfg == toy_model and back.norm_scale == 0.37 and back.meta["epochs"] == 3
    cubes = rng.standard_normal((3, 7, 2, 4)) + 1j * rng.standard_normal((3, 7, 2, 4))
    P = _outer(7, 2)
    assert model.logits(cubes, P).tobytes() == back.logits(cubes, P).tobytes()


def test_model_load_config_mismatch(tmp_path, toy_model):
    T3former(toy_model).save(tmp_path / "ck")
    other = ModelConfig(L=7, n_t=2, M=2, d_model=16, d_key=8, n_heads=2, n_layers_1=1, n_layers_2=1)
    with pytest.raises(ConfigError):
        T3former.load(tmp_path / "ck", other)


def test_model_batched_logits_match(toy_model, rng):
    model = T3former(toy_model, seed=1, dtype=np.float64)
    cubes = rng.standard_normal((5, 7, 2, 4)) + 1j * rng.standard_normal((5, 7, 2, 4))
    P = _outer(7, 2)
    np.testing.assert_allclose(model.logits(cubes, P, batch=2), model.logits(cubes, P, batch=5),
                               atol=1e-12)
    assert model.predict(cubes, P).dtype == np.uint8
