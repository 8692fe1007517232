"""Per-frame link simulation shared by dataset generation and evaluation.

A frame is fully determined by ``(config, frame_seed, nf_db, pilot_free)``:
the channel realization, the bits and the noise direction all derive from
``frame_seed``, so sweeping ``nf_db`` only rescales the same noise draw.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..channel import (TAG_BITS, apply_comm_channel, noise_sigma_from_nf, sample_scenario,
                       seed_rng)
from ..comm import DecodedCube, decode_frame
from ..config import ScenarioConfig
from ..waveform import HadamardMatrix, PrbsCode, build_frame, gen_hadamard, gen_mseq, outer_code

TAG_RECORD, TAG_NF, TAG_INIT, TAG_SHUFFLE, TAG_EVAL = 23, 29, 31, 37, 41


@dataclass(frozen=True)
class Codebook:
    code: PrbsCode
    hadamard: HadamardMatrix
    outer: np.ndarray


@lru_cache(maxsize=16)
def codebook(code_length: int, n_tx: int) -> Codebook:
    code = gen_mseq(code_length)
    hadamard = gen_hadamard(n_tx)
    return Codebook(code=code, hadamard=hadamard, outer=outer_code(code, hadamard))


def codebook_for(config: ScenarioConfig) -> Codebook:
    return codebook(config.code_length, config.n_tx)


def derive_seed(*keys: int) -> int:
    """63-bit child seed of a key tuple."""
    return int(seed_rng(*keys).integers(0, 2 ** 63 - 1))


def noma_slot(config: ScenarioConfig, user: int) -> int:
    """Superposition slot of a user: 0 for the high-power (far) allocation."""
    if user not in (0, 1):
        raise ValueError(f"user index must be 0 or 1, got {user}")
    return 0 if user == config.far_user else 1


@dataclass(frozen=True)
class SimulatedFrame:
    cubes: dict          # user -> DecodedCube
    bits: dict           # user -> (M_data, N_t, b) uint8
    pilot_mask: np.ndarray
    nf_db: float
    seed: int


def simulate_frame(config: ScenarioConfig, frame_seed: int, nf_db: float, pilot_free: bool,
                   users=(0, 1), channel_seed: int | None = None) -> SimulatedFrame:
    """``channel_seed`` pins the channel realization (default: ``frame_seed``)."""
    book = codebook_for(config)
    frame = build_frame(config, rng=seed_rng(frame_seed, TAG_BITS), pilot_free=pilot_free)
    real = sample_scenario(config, frame_seed if channel_seed is None else channel_seed)
    sigma = noise_sigma_from_nf(nf_db, config.bandwidth_hz, config)
    cubes, bits = {}, {}
    for k in users:
        y = apply_comm_channel(frame, real, k, sigma, frame_seed)
        cubes[k] = decode_frame(y, book.hadamard, k)
        bits[k] = frame.bits[noma_slot(config, k)]
    return SimulatedFrame(cubes=cubes, bits=bits, pilot_mask=frame.pilot_mask, nf_db=float(nf_db),
                          seed=int(frame_seed))


def decoded_cube(config: ScenarioConfig, user: int, frame_seed: int, nf_db: float,
                 pilot_free: bool = True, channel_seed: int | None = None) -> tuple:
    """``(DecodedCube, bits)`` for one user of one frame."""
    sim = simulate_frame(config, frame_seed, nf_db, pilot_free, users=(user,),
                         channel_seed=channel_seed)
    return sim.cubes[user], sim.bits[user]


__all__ = ["Codebook", "codebook", "codebook_for", "derive_seed", "noma_slot", "SimulatedFrame",
           "simulate_frame", "decoded_cube", "DecodedCube", "TAG_RECORD", "TAG_NF", "TAG_INIT",
           "TAG_SHUFFLE", "TAG_EVAL"]
