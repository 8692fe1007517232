"""Monostatic PMCW-MIMO sensing chain.

Stream separation and range compression correlate each receive channel
against every transmit column of the outer code at every inner-chip lag.
Doppler comes from an FFT across blocks; angle from beamforming the
``N_r x N_t`` virtual array.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import C0
from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class RadarCube:
    data: np.ndarray   # (N_r, L*N_t, M) complex
    noise_std: float
    t_block: float

    @property
    def n_blocks(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class VirtualArrayCube:
    data: np.ndarray   # (N_r, N_t, R_bins, M) complex
    t_block: float
    range_bin_m: float


@dataclass(frozen=True)
class RadarMap:
    """Nonnegative power grid with physical axes (rows: range, columns: angle or Doppler)."""
    power: np.ndarray
    range_m: np.ndarray
    axis: np.ndarray
    axis_name: str
    axis_unit: str
    meta: dict = field(default_factory=dict)


RangeAngleMap = RadarMap
RangeDopplerMap = RadarMap


@dataclass(frozen=True)
class Peak:
    indices: tuple
    range_m: float
    coordinate: float
    magnitude: float


def stream_separate_and_range_compress(cube: RadarCube, P: np.ndarray, chips: np.ndarray,
                                       n_bins: int | None = None, bandwidth_hz: float | None = None,
                                       symbols: np.ndarray | None = None) -> VirtualArrayCube:
    """Matched filter per (receive antenna, stream, lag, block), normalized by L*N_t.

    ``symbols`` (M, N_t) are the transmitted superposed symbols; when given
    (the base station knows its own data) they are divided out so that the
    slow-time phase carries only the channel.
    """
    chips = np.asarray(chips)
    L = chips.size
    n_r, n_fast, m_blocks = cube.data.shape
    if P.ndim != 2 or P.shape[0] != n_fast or P.shape[0] != L * P.shape[1]:
        raise ShapeError(f"outer code {P.shape} incompatible with cube {cube.data.shape} and L={L}")
    n_t = P.shape[1]
    n_bins = L if n_bins is None else min(int(n_bins), L)
    refs = np.stack([np.roll(P, tau * n_t, axis=0) for tau in range(n_bins)]).astype(np.float64)
    out = np.einsum("rtm,ktj->rjkm", cube.data, refs, optimize=True) / n_fast
    if symbols is not None:
        s = np.asarray(symbols)
        if s.shape != (m_blocks, n_t):
            raise ShapeError(f"symbols shape {s.shape} != ({m_blocks}, {n_t})")
        safe = np.where(np.abs(s) > 1e-12, s, 1.0)
        out = out / safe.T[np.newaxis, :, np.newaxis, :]
    bin_m = C0 / (2.0 * bandwidth_hz) if bandwidth_hz else 1.0
    return VirtualArrayCube(data=out, t_block=cube.t_block, range_bin_m=bin_m)


def doppler_fft(v: VirtualArrayCube, n_fft: int | None = None) -> np.ndarray:
    """Zero-padded FFT over blocks, shifted so index n_fft//2 is zero Doppler."""
    m_blocks = v.data.shape[-1]
    n_fft = 4 * m_blocks if n_fft is None else int(n_fft)
    if n_fft < m_blocks:
        raise ConfigError(f"n_fft ({n_fft}) must be >= number of blocks ({m_blocks})")
    return np.fft.fftshift(np.fft.fft(v.data, n=n_fft, axis=-1), axes=-1)


def doppler_axis(n_fft: int, t_block: float) -> np.ndarray:
    return np.fft.fftshift(np.fft.fftfreq(n_fft, d=t_block))


def range_axis(n_bins: int, range_bin_m: float) -> np.ndarray:
    return np.arange(n_bins) * range_bin_m


def range_doppler_map(d: np.ndarray, v: VirtualArrayCube) -> RadarMap:
    """Noncoherent power sum over the virtual array for every (range, Doppler) cell."""
    power = (np.abs(d) ** 2).sum(axis=(0, 1))
    n_fft = d.shape[-1]
    return RadarMap(power=power, range_m=range_axis(power.shape[0], v.range_bin_m),
                    axis=doppler_axis(n_fft, v.t_block), axis_name="doppler", axis_unit="Hz",
                    meta={"doppler_bin_hz": 1.0 / (n_fft * v.t_block), "n_fft": n_fft})


def angle_grid(n_points: int = 181) -> np.ndarray:
    if n_points < 1:
        raise ConfigError("angle grid is empty")
    return np.linspace(-math.pi / 2, math.pi / 2, n_points)


def range_angle_map(v: VirtualArrayCube, angles=None) -> RadarMap:
    """``|a(theta)^H x|^2`` with ``a = a_r(theta) kron a_t(theta)``, averaged over blocks."""
    angles = angle_grid() if angles is None else np.asarray(angles, dtype=float)
    if angles.size == 0:
        raise ConfigError("angle grid is empty")
    n_r, n_t, n_bins, m_blocks = v.data.shape
    phase_r = np.exp(-1j * np.pi * np.outer(np.arange(n_r), np.sin(angles)))  # (N_r, A)
    phase_t = np.exp(-1j * np.pi * np.outer(np.arange(n_t), np.sin(angles)))  # (N_t, A)
    # a^H x summed over the virtual array: conj(a_r[r]) conj(a_t[j]) x[r, j]
    beam = np.einsum("ra,ja,rjkm->kam", phase_r.conj(), phase_t.conj(), v.data, optimize=True)
    power = (np.abs(beam) ** 2).mean(axis=-1)
    return RadarMap(power=power, range_m=range_axis(n_bins, v.range_bin_m), axis=angles,
                    axis_name="angle", axis_unit="rad",
                    meta={"angle_step_rad": float(angles[1] - angles[0]) if angles.size > 1 else 0.0})


def detect_peaks(rmap: RadarMap, count: int, guard=2, local_maxima: bool = False) -> list:
    """Iteratively take the global maximum and mask +-guard cells around it.

    ``guard`` is one int or a (rows, columns) pair. With ``local_maxima``
    only cells not exceeded by any of their 8 neighbours are eligible, so
    the shoulder of a wide mainlobe cannot be reported as a second target.
    Ties resolve to the lowest flat (row-major) index.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    work = np.array(rmap.power, dtype=float)
    if count > work.size:
        raise ValueError(f"requested {count} peaks from a map with {work.size} cells")
    g_r, g_c = (guard, guard) if np.isscalar(guard) else (int(guard[0]), int(guard[1]))
    if local_maxima:
        padded = np.pad(work, 1, constant_values=-np.inf)
        rows, cols = work.shape
        neighbours = np.stack([padded[1 + dr:1 + dr + rows, 1 + dc:1 + dc + cols]
                               for dr in (-1, 0, 1) for dc in (-1, 0, 1) if dr or dc])
        work[work < neighbours.max(axis=0)] = -np.inf
    peaks = []
    for _ in range(count):
        flat = int(np.argmax(work))
        if not np.isfinite(work.flat[flat]) or work.flat[flat] < 0:
            break
        i, j = np.unravel_index(flat, work.shape)
        peaks.append(Peak(indices=(int(i), int(j)), range_m=float(rmap.range_m[i]),
                          coordinate=float(rmap.axis[j]), magnitude=float(rmap.power[i, j])))
        work[max(0, i - g_r):i + g_r + 1, max(0, j - g_c):j + g_c + 1] = -np.inf
    return peaks


def export_map(rmap: RadarMap, csv_path, extra_meta: dict | None = None) -> tuple:
    """Write the grid as CSV (header row = axis values) plus a JSON axis sidecar."""
    csv_path = Path(csv_path)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"range_m\\{rmap.axis_name}_{rmap.axis_unit}"] + [f"{a:.9g}" for a in rmap.axis])
        for r, row in zip(rmap.range_m, rmap.power):
            w.writerow([f"{r:.9g}"] + [f"{x:.9e}" for x in row])
    sidecar = csv_path.with_suffix(".json")
    meta = {
        "rows": "range", "columns": rmap.axis_name, "unit": rmap.axis_unit,
        "n_range": int(rmap.power.shape[0]), "n_columns": int(rmap.power.shape[1]),
        "range_bin_m": float(rmap.range_m[1] - rmap.range_m[0]) if rmap.range_m.size > 1 else 0.0,
        "axis_first": float(rmap.axis[0]), "axis_last": float(rmap.axis[-1]),
        **rmap.meta, **(extra_meta or {}),
    }
    sidecar.write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")
    return csv_path, sidecar
