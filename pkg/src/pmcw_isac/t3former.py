"""Two-timescale Transformer receiver.

Stage 1 attends over the ``L*N_t`` fast-time tokens (one per inner chip and
stream), stage 2 over the ``M`` blocks after the token/feature permute. The
output head emits ``b`` bit logits per (block, stream).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .comm import DecodedCube
from .config import ScenarioConfig
from .errors import ConfigError, ShapeError
from .nn import (ENCODER_PARAM_NAMES, Tensor, bce_with_logits, encoder_layer, init_encoder_layer,
                 linear, load_tensors, save_tensors, xavier_uniform)


@dataclass(frozen=True)
class ModelConfig:
    L: int
    n_t: int
    M: int
    d_model: int
    d_key: int
    n_heads: int
    n_layers_1: int
    n_layers_2: int
    bits_per_symbol: int = 2

    def __post_init__(self):
        if self.d_model != self.n_heads * self.d_key:
            raise ConfigError(
                f"d_model ({self.d_model}) must equal n_heads*d_key ({self.n_heads}*{self.d_key})")
        if min(self.L, self.n_t, self.M, self.d_key, self.n_heads, self.bits_per_symbol) < 1:
            raise ConfigError("model dimensions must be positive")
        if self.d_model % 2:
            raise ConfigError("d_model must be even")

    @classmethod
    def from_scenario(cls, config: ScenarioConfig) -> "ModelConfig":
        return cls(L=config.code_length, n_t=config.n_tx, M=config.n_blocks, d_model=config.d_model,
                   d_key=config.d_key, n_heads=config.n_heads, n_layers_1=config.n_layers_1,
                   n_layers_2=config.n_layers_2, bits_per_symbol=config.bits_per_symbol)

    @property
    def seq_len_1(self) -> int:
        return self.L * self.n_t

    @property
    def seq_len_2(self) -> int:
        return self.M

    @property
    def in_features(self) -> int:
        return 4 * self.M

    @property
    def out_features(self) -> int:
        return self.n_t * self.bits_per_symbol

    def param_shapes(self) -> dict:
        shapes = {"emb.w": (self.in_features, self.d_model), "emb.b": (self.d_model,)}
        shapes.update(_layer_shapes("stage1", self.n_layers_1, self.d_model, self.d_key * self.n_heads))
        shapes["fc1.w"] = (self.d_model, self.M)
        shapes["fc1.b"] = (self.M,)
        shapes.update(_layer_shapes("stage2", self.n_layers_2, self.seq_len_1, self.d_key * self.n_heads))
        shapes["fc2.w"] = (self.seq_len_1, self.out_features)
        shapes["fc2.b"] = (self.out_features,)
        return shapes


def _layer_shapes(prefix, n_layers, width, inner):
    d_ff = 4 * width
    per = {"ln1_gain": (width,), "ln1_shift": (width,), "w_q": (width, inner), "w_k": (width, inner),
           "w_v": (width, inner), "w_o": (inner, width), "ln2_gain": (width,), "ln2_shift": (width,),
           "ff_w1": (width, d_ff), "ff_b1": (d_ff,), "ff_w2": (d_ff, width), "ff_b2": (width,)}
    return {f"{prefix}.{i}.{k}": per[k] for i in range(n_layers) for k in ENCODER_PARAM_NAMES}


@dataclass
class ForwardTrace:
    z0: np.ndarray
    z1: np.ndarray
    x1: Tensor
    h1: Tensor
    h1p: Tensor
    x2: Tensor
    h2: Tensor
    logits: Tensor

    def shapes(self) -> dict:
        return {k: tuple(getattr(self, k).shape) for k in
                ("z0", "z1", "x1", "h1", "h1p", "x2", "h2", "logits")}


def sinusoidal_positions(n_pos: int, width: int, dtype=np.float64) -> np.ndarray:
    """Interleaved sin/cos table: column 2i is sin(pos / 10000^(2i/width)), 2i+1 the cosine."""
    pos = np.arange(n_pos, dtype=np.float64)[:, None]
    freq = np.exp(-math.log(10000.0) * np.arange(0, width, 2, dtype=np.float64) / width)
    table = np.zeros((n_pos, width))
    table[:, 0::2] = np.sin(pos * freq)
    table[:, 1::2] = np.cos(pos * freq)
    return table.astype(dtype)


def init_params(mcfg: ModelConfig, seed: int = 0, dtype=np.float32) -> dict:
    rng = np.random.default_rng(seed)
    params = {
        "emb.w": Tensor(xavier_uniform(rng, mcfg.in_features, mcfg.d_model, dtype), requires_grad=True),
        "emb.b": Tensor(np.zeros(mcfg.d_model, dtype), requires_grad=True),
    }
    for i in range(mcfg.n_layers_1):
        for k, v in init_encoder_layer(rng, mcfg.d_model, mcfg.d_key, mcfg.n_heads, dtype=dtype).items():
            params[f"stage1.{i}.{k}"] = v
    params["fc1.w"] = Tensor(xavier_uniform(rng, mcfg.d_model, mcfg.M, dtype), requires_grad=True)
    params["fc1.b"] = Tensor(np.zeros(mcfg.M, dtype), requires_grad=True)
    for i in range(mcfg.n_layers_2):
        for k, v in init_encoder_layer(rng, mcfg.seq_len_1, mcfg.d_key, mcfg.n_heads, dtype=dtype).items():
            params[f"stage2.{i}.{k}"] = v
    params["fc2.w"] = Tensor(xavier_uniform(rng, mcfg.seq_len_1, mcfg.out_features, dtype),
                             requires_grad=True)
    params["fc2.b"] = Tensor(np.zeros(mcfg.out_features, dtype), requires_grad=True)
    return params


def code_from_outer(P: np.ndarray) -> np.ndarray:
    """Recover the inner code from ``P = c kron W`` (first Hadamard column is all ones)."""
    n_t = P.shape[1]
    return np.asarray(P[::n_t, 0], dtype=np.float64)


def preprocess(cube, P: np.ndarray, scale: float = 1.0, dtype=np.float32) -> np.ndarray:
    """Decoded cube(s) (..., L, N_t, M) -> token matrix Z_1 (..., L*N_t, 4M).

    Features [0, 2M) interleave Re/Im of the cube per block (divided by
    ``scale``); features [2M, 4M) carry the inner code c[l] in the in-phase
    slots and 0 in the quadrature slots.
    """
    data = cube.data if isinstance(cube, DecodedCube) else np.asarray(cube)
    L_n = P.shape[0]
    n_t = P.shape[1]
    if data.ndim < 3 or data.shape[-3] * data.shape[-2] != L_n or data.shape[-2] != n_t:
        raise ShapeError(f"cube shape {data.shape} does not match outer code {P.shape}")
    L, M = data.shape[-3], data.shape[-1]
    lead = data.shape[:-3]
    y = np.empty(lead + (L, n_t, 2 * M), dtype=dtype)
    y[..., 0::2] = data.real / scale
    y[..., 1::2] = data.imag / scale
    p = np.zeros((L, n_t, 2 * M), dtype=dtype)
    p[..., 0::2] = code_from_outer(P)[:, None, None]
    p = np.broadcast_to(p, lead + p.shape)
    z0 = np.concatenate([y, p], axis=-1)
    return z0.reshape(lead + (L * n_t, 4 * M))


def forward(params: dict, z1, mcfg: ModelConfig) -> ForwardTrace:
    """Full forward pass; ``z1`` is (B, L_1, 4M) or (L_1, 4M)."""
    z1 = np.asarray(z1)
    expected = (mcfg.seq_len_1, mcfg.in_features)
    if z1.shape[-2:] != expected:
        raise ShapeError(f"Z_1 shape {z1.shape} does not end in {expected}")
    dtype = params["emb.w"].dtype
    z1 = z1.astype(dtype, copy=False)
    lead = z1.shape[:-2]
    pe = sinusoidal_positions(mcfg.seq_len_1, mcfg.d_model, dtype)
    x1 = linear(Tensor(z1), params["emb.w"], params["emb.b"]) + Tensor(pe)
    h = x1
    for i in range(mcfg.n_layers_1):
        h = encoder_layer(h, _layer(params, "stage1", i), mcfg.n_heads)
    h1 = h
    h1p = linear(h1, params["fc1.w"], params["fc1.b"])
    x2 = h1p.swapaxes(-1, -2)
    h = x2
    for i in range(mcfg.n_layers_2):
        h = encoder_layer(h, _layer(params, "stage2", i), mcfg.n_heads)
    h2 = h
    logits = linear(h2, params["fc2.w"], params["fc2.b"]).reshape(
        lead + (mcfg.M, mcfg.n_t, mcfg.bits_per_symbol))
    z0 = z1.reshape(lead + (mcfg.L, mcfg.n_t, mcfg.in_features))
    return ForwardTrace(z0=z0, z1=z1, x1=x1, h1=h1, h1p=h1p, x2=x2, h2=h2, logits=logits)


def _layer(params, prefix, i):
    return {k: params[f"{prefix}.{i}.{k}"] for k in ENCODER_PARAM_NAMES}


def loss(logits, bits) -> Tensor:
    """Mean BCE-with-logits over every bit in the batch."""
    b = np.asarray(bits)
    if tuple(b.shape) != tuple(logits.shape):
        raise ShapeError(f"logits {logits.shape} vs bits {b.shape}")
    return bce_with_logits(logits, b)


def predict_bits(logits) -> np.ndarray:
    """Bit 1 iff logit > 0 (an exact zero decides 0)."""
    z = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    return (z > 0).astype(np.uint8)


class T3former:
    """Parameters plus the per-dataset input scale; inference and checkpoint I/O."""

    def __init__(self, mcfg: ModelConfig, params: dict | None = None, norm_scale: float = 1.0,
                 seed: int = 0, dtype=np.float32):
        self.mcfg = mcfg
        self.params = params if params is not None else init_params(mcfg, seed, dtype)
        self.norm_scale = float(norm_scale)

    def forward(self, z1) -> ForwardTrace:
        return forward(self.params, z1, self.mcfg)

    def logits(self, cubes, P, batch: int = 64) -> np.ndarray:
        """Logits for decoded cubes (N, L, N_t, M), evaluated in batches."""
        cubes = np.asarray(cubes)
        out = []
        for i in range(0, cubes.shape[0], batch):
            z1 = preprocess(cubes[i:i + batch], P, self.norm_scale, self.params["emb.w"].dtype)
            out.append(forward(self.params, z1, self.mcfg).logits.data)
        return np.concatenate(out, axis=0)

    def predict(self, cubes, P, batch: int = 64) -> np.ndarray:
        return predict_bits(self.logits(cubes, P, batch))

    def save(self, directory, meta: dict | None = None):
        extra = {"model_config": asdict(self.mcfg), "norm_scale": self.norm_scale}
        extra.update(meta or {})
        return save_tensors(directory, self.params, extra)

    @classmethod
    def load(cls, directory, mcfg: ModelConfig | None = None) -> "T3former":
        tensors, meta = load_tensors(directory)
        stored = ModelConfig(**meta["model_config"])
        if mcfg is not None and mcfg != stored:
            raise ConfigError(f"checkpoint model config {stored} differs from requested {mcfg}")
        mcfg = stored
        tensors, meta = load_tensors(directory, mcfg.param_shapes())
        params = {k: Tensor(np.array(tensors[k]), requires_grad=True) for k in mcfg.param_shapes()}
        model = cls(mcfg, params=params, norm_scale=meta["norm_scale"])
        model.meta = meta
        return model
