"""Pilot-aided baseline receivers: Hadamard decoding, LS estimation, ZF and SIC detection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EstimationError, ShapeError
from .waveform import HadamardMatrix, qpsk_demod, qpsk_mod

UNDECODABLE_GAIN = 1e-9


@dataclass(frozen=True)
class DecodedCube:
    data: np.ndarray   # (L, N_t, M) complex
    user: int

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True)
class ChannelEstimate:
    gains: np.ndarray   # (N_t,) per-stream effective gain
    mode: str           # "pilot"
    residual: float     # mean squared spread of per-block estimates around their average


def hadamard_decode(y, hadamard: HadamardMatrix) -> np.ndarray:
    """``Y_dec[l, j] = sum_i y[l N_t + i] W[i, j]`` for the last axis of ``y``.

    ``y`` may carry leading axes, e.g. (M, L N_t) -> (M, L, N_t).
    """
    y = np.asarray(y)
    n_t = hadamard.order
    if y.shape[-1] % n_t:
        raise ShapeError(f"received length {y.shape[-1]} not divisible by N_t={n_t}")
    return y.reshape(y.shape[:-1] + (-1, n_t)) @ hadamard.entries


def decode_frame(y_blocks: np.ndarray, hadamard: HadamardMatrix, user: int) -> DecodedCube:
    """Decode all blocks (M, L N_t) into the cube (L, N_t, M)."""
    return DecodedCube(data=np.moveaxis(hadamard_decode(y_blocks, hadamard), 0, -1), user=user)


def _code_correlate(cube: DecodedCube, chips) -> np.ndarray:
    """``sum_l c[l] Y_dec[l, j, m]`` -> (N_t, M)."""
    return np.einsum("l,ljm->jm", np.asarray(chips, dtype=float), cube.data)


def ls_channel_estimate(cube: DecodedCube, pilot_mask, chips, pilot_symbol) -> ChannelEstimate:
    """Least-squares per-stream gain from the pilot blocks, averaged over all of them."""
    mask = np.asarray(pilot_mask, dtype=bool)
    L, n_t, m_blocks = cube.shape
    if mask.shape != (m_blocks,):
        raise ShapeError(f"pilot mask shape {mask.shape} vs {m_blocks} blocks")
    if not mask.any():
        raise EstimationError("no pilot blocks in frame; use the pilot-free neural receiver")
    s_p = np.broadcast_to(np.asarray(pilot_symbol, dtype=complex), (n_t,))
    if np.any(np.abs(s_p) == 0):
        raise ConfigError("pilot symbol must be nonzero on every stream")
    corr = _code_correlate(cube, chips)[:, mask]                 # (N_t, n_pilot)
    per_block = corr / (L * n_t * s_p[:, np.newaxis])
    gains = per_block.mean(axis=1)
    residual = float(np.mean(np.abs(per_block - gains[:, np.newaxis]) ** 2))
    return ChannelEstimate(gains=gains, mode="pilot", residual=residual)


def despread_symbols(cube: DecodedCube, chips, est: ChannelEstimate, block: int):
    """Code-matched filter and one-tap equalizer for one block.

    Returns ``(s_hat, decodable)``; streams whose estimated gain is below
    1e-9 are flagged and yield 0, which demaps to all-zero bits.
    """
    L, n_t, _ = cube.shape
    corr = np.einsum("l,lj->j", np.asarray(chips, dtype=float), cube.data[:, :, block])
    ok = np.abs(est.gains) >= UNDECODABLE_GAIN
    s_hat = np.zeros(n_t, dtype=np.complex128)
    s_hat[ok] = corr[ok] / (L * n_t * est.gains[ok])
    return s_hat, ok


def detect_far_zf(s_hat) -> np.ndarray:
    """Far user: demap the equalized symbol directly (near-user signal treated as noise)."""
    s = np.asarray(s_hat)
    return qpsk_demod(s).reshape(s.shape + (2,))


def detect_near_sic(s_hat, p1: float, p2: float):
    """Hard SIC: decide far bits, subtract the remodulated far symbol, demap the rest."""
    if not p1 > p2:
        raise ConfigError(f"SIC needs p1 > p2, got ({p1}, {p2})")
    s = np.asarray(s_hat)
    far = detect_far_zf(s)
    residual = s - np.sqrt(p1) * qpsk_mod(far.reshape(s.shape[:-1] + (-1,)) if s.ndim else far.ravel())
    near = qpsk_demod(residual).reshape(s.shape + (2,))
    return far, near


def detect_near_nosic(s_hat) -> np.ndarray:
    """Near-user demapper without cancellation (far signal left in as interference)."""
    return detect_far_zf(s_hat)


def ber_count(est_bits, true_bits):
    """``(errors, total, ratio)`` by Hamming distance."""
    a = np.asarray(est_bits)
    b = np.asarray(true_bits)
    if a.shape != b.shape:
        raise ShapeError(f"bit shapes differ: {a.shape} vs {b.shape}")
    errors = int(np.count_nonzero(a.astype(np.uint8) != b.astype(np.uint8)))
    total = int(a.size)
    return errors, total, (errors / total if total else 0.0)


def detect_frame(cube: DecodedCube, pilot_mask, chips, pilot_symbol, p1: float, p2: float,
                 role: str) -> np.ndarray:
    """Run LS estimation and per-block detection over every data block of a pilot frame.

    ``role`` is ``"far"`` (ZF), ``"near"`` (SIC), or ``"near-nosic"``.
    Returns bits (M_data, N_t, 2) for the receiving user.
    """
    est = ls_channel_estimate(cube, pilot_mask, chips, pilot_symbol)
    out = []
    for m in np.flatnonzero(~np.asarray(pilot_mask, dtype=bool)):
        s_hat, _ = despread_symbols(cube, chips, est, int(m))
        if role == "far":
            out.append(detect_far_zf(s_hat))
        elif role == "near":
            out.append(detect_near_sic(s_hat, p1, p2)[1])
        elif role == "near-nosic":
            out.append(detect_near_nosic(s_hat))
        else:
            raise ValueError(f"unknown receiver role {role!r}")
    return np.stack(out)
