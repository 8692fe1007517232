"""Binary training-set files.

Layout (all integers little-endian)::

    b"PNIS" | u16 version | u32 header_len | JSON header
    record*: f32 (re, im) cube [l][n][m] | packed bits (MSB first) | u64 record seed
    footer : u64 record count | 32-byte sha256 of the JSON header

Each record's noise figure is a pure function of its seed, so it is not
stored; the loader regenerates it.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..channel import seed_rng
from ..config import ScenarioConfig
from ..errors import ConfigError, ShapeError
from .simulation import TAG_NF, TAG_RECORD, decoded_cube, derive_seed

MAGIC = b"PNIS"
VERSION = 1
_PREFIX = struct.Struct("<4sHI")
_FOOTER_LEN = 8 + 32


def record_seed(seed: int, user: int, index: int) -> int:
    return derive_seed(seed, TAG_RECORD, user, index)


def record_nf_db(config: ScenarioConfig, rec_seed: int) -> float:
    lo, hi = config.train_nf_range_db
    return float(seed_rng(rec_seed, TAG_NF).uniform(lo, hi)) if hi > lo else float(lo)


def _header(config: ScenarioConfig, user: int, count: int, seed: int) -> dict:
    return {
        "format": "pmcw-isac-dataset",
        "config": config.to_dict(),
        "config_digest": config.digest,
        "dims": {"L": config.code_length, "n_t": config.n_tx, "M": config.n_blocks,
                 "b": config.bits_per_symbol},
        "count": int(count),
        "user": int(user),
        "seed": int(seed),
        "pilot_free": True,
        "nf_range_db": list(config.train_nf_range_db),
        "dtype": "float32",
        "bit_order": "msb",
    }


def _record_sizes(dims: dict) -> tuple:
    n_cube = dims["L"] * dims["n_t"] * dims["M"]
    n_bits = dims["M"] * dims["n_t"] * dims["b"]
    return n_cube, n_bits, 8 * n_cube + (n_bits + 7) // 8 + 8


def build_records(config: ScenarioConfig, user: int, count: int, seed: int,
                  channel_seed: int | None = None) -> "Dataset":
    """In-memory records; ``channel_seed`` pins one channel realization for all of them."""
    cubes, bits, seeds = [], [], []
    for i in range(count):
        rs = record_seed(seed, user, i)
        cube, b = decoded_cube(config, user, rs, record_nf_db(config, rs), pilot_free=True,
                               channel_seed=channel_seed)
        cubes.append(cube.data.astype(np.complex64))
        bits.append(b)
        seeds.append(rs)
    header = _header(config, user, count, seed)
    header["channel_seed"] = channel_seed
    return Dataset(header=header, cubes=np.stack(cubes), bits=np.stack(bits),
                   seeds=np.array(seeds, dtype=np.uint64))


def generate_dataset(config: ScenarioConfig, user: int, count: int, seed: int, path) -> Path:
    """Write ``count`` pilot-free records for ``user``; each is a fresh channel, bits and noise."""
    if count < 1:
        raise ConfigError("dataset count must be >= 1")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = json.dumps(_header(config, user, count, seed), sort_keys=True,
                        separators=(",", ":")).encode()
    tmp = path.with_name(path.name + ".part")
    with open(tmp, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(header)))
        fh.write(header)
        for i in range(count):
            rs = record_seed(seed, user, i)
            cube, bits = decoded_cube(config, user, rs, record_nf_db(config, rs), pilot_free=True)
            fh.write(encode_record(cube.data, bits, rs))
        fh.write(struct.pack("<Q", count))
        fh.write(hashlib.sha256(header).digest())
    tmp.replace(path)
    return path


def encode_record(cube: np.ndarray, bits: np.ndarray, rec_seed: int) -> bytes:
    iq = np.stack([cube.real, cube.imag], axis=-1).astype("<f4")
    packed = np.packbits(np.asarray(bits, dtype=np.uint8).ravel(), bitorder="big")
    return iq.tobytes() + packed.tobytes() + struct.pack("<Q", int(rec_seed))


@dataclass
class Dataset:
    header: dict
    cubes: np.ndarray     # (N, L, N_t, M) complex64
    bits: np.ndarray      # (N, M, N_t, b) uint8
    seeds: np.ndarray     # (N,) uint64

    def __len__(self) -> int:
        return self.cubes.shape[0]

    @property
    def config(self) -> ScenarioConfig:
        return ScenarioConfig.from_dict(self.header["config"])

    @property
    def user(self) -> int:
        return int(self.header["user"])

    @property
    def digest(self) -> str:
        return self.header["config_digest"]

    def nf_db(self) -> np.ndarray:
        cfg = self.config
        return np.array([record_nf_db(cfg, int(s)) for s in self.seeds])

    def rms(self) -> float:
        """Root-mean-square magnitude of every decoded-cube entry."""
        return float(np.sqrt(np.mean(np.abs(self.cubes.astype(np.complex128)) ** 2)))

    def subset(self, index) -> "Dataset":
        return Dataset(header=self.header, cubes=self.cubes[index], bits=self.bits[index],
                       seeds=self.seeds[index])


def load_dataset(path) -> Dataset:
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size:
        raise ShapeError(f"{path}: truncated dataset file")
    magic, version, hlen = _PREFIX.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ShapeError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ShapeError(f"{path}: unsupported dataset version {version}")
    header_bytes = raw[_PREFIX.size:_PREFIX.size + hlen]
    header = json.loads(header_bytes)
    dims = header["dims"]
    n_cube, n_bits, rec_len = _record_sizes(dims)
    body = raw[_PREFIX.size + hlen:len(raw) - _FOOTER_LEN]
    footer = raw[len(raw) - _FOOTER_LEN:]
    (count,) = struct.unpack("<Q", footer[:8])
    if footer[8:] != hashlib.sha256(header_bytes).digest():
        raise ShapeError(f"{path}: header digest mismatch")
    if len(body) != count * rec_len:
        raise ShapeError(f"{path}: body holds {len(body)} bytes, expected {count} x {rec_len}")
    packed_len = (n_bits + 7) // 8
    rec = np.frombuffer(body, dtype=np.uint8).reshape(count, rec_len)
    iq = rec[:, :8 * n_cube].copy().view("<f4").reshape(count, dims["L"], dims["n_t"], dims["M"], 2)
    cubes = (iq[..., 0] + 1j * iq[..., 1]).astype(np.complex64)
    bits = np.unpackbits(rec[:, 8 * n_cube:8 * n_cube + packed_len], axis=1, bitorder="big",
                         count=n_bits).reshape(count, dims["M"], dims["n_t"], dims["b"])
    seeds = rec[:, 8 * n_cube + packed_len:].copy().view("<u8").ravel()
    return Dataset(header=header, cubes=cubes, bits=bits, seeds=seeds)
