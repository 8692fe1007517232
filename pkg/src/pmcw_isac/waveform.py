"""PMCW-NOMA transmit frame construction.

Inner code: one period of a binary m-sequence (chips +-1). Outer code:
Sylvester Hadamard matrix, one column per transmit antenna. Each block
carries one superposed two-user QPSK symbol per antenna.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SUPPORTED_CODE_LENGTHS, ScenarioConfig
from .errors import ConfigError, ShapeError

# degree -> (tap exponent a) for the primitive trinomial x^k + x^a + 1
_PRIMITIVE_TRINOMIALS = {3: 1, 4: 1, 5: 2, 6: 1}

PILOT_SYMBOL = (1.0 + 1.0j) / np.sqrt(2.0)


@dataclass(frozen=True)
class PrbsCode:
    chips: np.ndarray
    polynomial: str

    @property
    def length(self) -> int:
        return self.chips.size


@dataclass(frozen=True)
class HadamardMatrix:
    entries: np.ndarray

    @property
    def order(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class TxFrame:
    blocks: np.ndarray        # (M, L*N_t, N_t) complex
    symbols: np.ndarray       # (M, N_t) superposed symbols s_noma per block
    bits: tuple               # per user, (M_data, N_t, b) uint8
    pilot_mask: np.ndarray    # (M,) bool
    pilot_free: bool

    @property
    def n_blocks(self) -> int:
        return self.blocks.shape[0]

    @property
    def data_blocks(self) -> np.ndarray:
        return np.flatnonzero(~self.pilot_mask)


def gen_mseq(length: int) -> PrbsCode:
    """One period of the m-sequence of the given length as +-1 chips.

    Fibonacci LFSR on a fixed primitive trinomial, all-ones seed; bit b maps to 1-2b.
    """
    degree = {2 ** k - 1: k for k in _PRIMITIVE_TRINOMIALS}.get(length)
    if degree is None:
        raise ConfigError(f"unsupported m-sequence length {length}; supported: {SUPPORTED_CODE_LENGTHS}")
    tap = _PRIMITIVE_TRINOMIALS[degree]
    reg = [1] * degree
    bits = np.empty(length, dtype=np.int8)
    for n in range(length):
        bits[n] = reg[0]
        # s[n+k] = s[n+a] xor s[n]
        reg = reg[1:] + [reg[tap] ^ reg[0]]
    return PrbsCode(chips=(1 - 2 * bits).astype(np.int8), polynomial=f"x^{degree}+x^{tap}+1")


def gen_hadamard(order: int) -> HadamardMatrix:
    """Sylvester-construction Hadamard matrix of a power-of-two order."""
    if order < 1 or order & (order - 1):
        raise ConfigError(f"Hadamard order must be a power of two, got {order}")
    h = np.ones((1, 1), dtype=np.int8)
    while h.shape[0] < order:
        h = np.block([[h, h], [h, -h]])
    return HadamardMatrix(entries=h)


def outer_code(code: PrbsCode, hadamard: HadamardMatrix) -> np.ndarray:
    """``P = c kron W`` of shape (L*N_t, N_t); row l*N_t + i holds c[l] * W[i, :]."""
    return np.kron(code.chips.reshape(-1, 1), hadamard.entries).astype(np.int8)


def qpsk_mod(bits) -> np.ndarray:
    """Gray QPSK: (b0, b1) -> ((1-2 b0) + j(1-2 b1)) / sqrt(2)."""
    b = np.asarray(bits)
    if b.ndim == 0 or b.shape[-1] % 2:
        raise ShapeError(f"qpsk_mod needs an even number of bits on the last axis, got shape {b.shape}")
    pairs = b.reshape(b.shape[:-1] + (-1, 2)).astype(np.float64)
    return ((1.0 - 2.0 * pairs[..., 0]) + 1j * (1.0 - 2.0 * pairs[..., 1])) / np.sqrt(2.0)


def qpsk_demod(symbols) -> np.ndarray:
    """Hard-decision inverse of :func:`qpsk_mod`; exact zero decides bit 0.

    Symbols on the last axis expand to bit pairs on that axis (length doubles).
    """
    s = np.atleast_1d(np.asarray(symbols))
    bits = np.stack([s.real < 0, s.imag < 0], axis=-1).astype(np.uint8)
    return bits.reshape(s.shape[:-1] + (-1,))


def noma_superpose(s1, s2, p1: float, p2: float) -> np.ndarray:
    """Power-domain superposition ``sqrt(p1) s1 + sqrt(p2) s2``."""
    if not (abs(p1 + p2 - 1.0) < 1e-9 and p1 > p2 >= 0.0):
        raise ConfigError(f"invalid NOMA power split ({p1}, {p2}); need p1+p2=1 and p1>p2>=0")
    return np.sqrt(p1) * np.asarray(s1) + np.sqrt(p2) * np.asarray(s2)


def build_tx_block(P: np.ndarray, s_noma) -> np.ndarray:
    """``X_m = P * (1 s_noma^T)``: column j of the outer code scaled by symbol j."""
    s = np.asarray(s_noma)
    if s.ndim != 1 or P.shape[1] != s.size:
        raise ShapeError(f"outer code has {P.shape[1]} columns but {s.shape} symbols were given")
    return P * s[np.newaxis, :]


def data_block_count(config: ScenarioConfig, pilot_free: bool) -> int:
    return config.n_blocks if pilot_free else config.n_blocks - config.n_pilot_blocks


def pilot_mask(config: ScenarioConfig, pilot_free: bool) -> np.ndarray:
    mask = np.zeros(config.n_blocks, dtype=bool)
    if not pilot_free:
        mask[::config.pilot_period] = True
    return mask


def build_frame(config: ScenarioConfig, bits1=None, bits2=None, rng=None,
                pilot_free: bool = True) -> TxFrame:
    """Assemble the M-block frame.

    ``bits1`` / ``bits2`` are the far/near users' data bits, shaped
    (M_data, N_t, b). Missing bit tensors are drawn from ``rng``. In pilot
    mode blocks with index divisible by the pilot period carry the known
    symbol (1+j)/sqrt(2) on every antenna.
    """
    n_data = data_block_count(config, pilot_free)
    shape = (n_data, config.n_tx, config.bits_per_symbol)
    drawn = []
    for b in (bits1, bits2):
        if b is None:
            if rng is None:
                raise ValueError("rng is required when bits are not supplied")
            b = rng.integers(0, 2, size=shape, dtype=np.uint8)
        b = np.asarray(b, dtype=np.uint8)
        if b.shape != shape:
            raise ShapeError(
                f"bit tensor shape {b.shape} inconsistent with "
                f"{'pilot-free' if pilot_free else 'pilot'} frame; expected {shape}")
        drawn.append(b)
    bits1, bits2 = drawn

    mask = pilot_mask(config, pilot_free)
    symbols = np.empty((config.n_blocks, config.n_tx), dtype=np.complex128)
    symbols[mask] = PILOT_SYMBOL
    s1 = qpsk_mod(bits1.reshape(n_data, -1))
    s2 = qpsk_mod(bits2.reshape(n_data, -1))
    symbols[~mask] = noma_superpose(s1, s2, config.p1, config.p2)

    P = outer_code(gen_mseq(config.code_length), gen_hadamard(config.n_tx))
    blocks = P[np.newaxis, :, :] * symbols[:, np.newaxis, :]
    return TxFrame(blocks=blocks, symbols=symbols, bits=(bits1, bits2),
                   pilot_mask=mask, pilot_free=pilot_free)
