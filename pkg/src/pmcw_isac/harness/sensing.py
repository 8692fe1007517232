"""End-to-end monostatic sensing run: one data frame, echo cube, maps and peak report."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..channel import TAG_BITS, apply_sensing_channel, sample_scenario, seed_rng
from ..config import ScenarioConfig
from ..radar import (RadarMap, angle_grid, detect_peaks, doppler_fft, export_map, range_angle_map,
                     range_doppler_map, stream_separate_and_range_compress)
from ..waveform import build_frame
from .simulation import codebook_for


@dataclass
class SensingResult:
    range_angle: RadarMap
    range_doppler: RadarMap
    report: dict


def sensing_noise_std(config: ScenarioConfig) -> float:
    """Per-element echo noise for the configured target-to-noise ratio."""
    if math.isinf(config.sensing_snr_db) and config.sensing_snr_db > 0:
        return 0.0
    return config.target_gain / math.sqrt(10.0 ** (config.sensing_snr_db / 10.0))


def run_sensing(config: ScenarioConfig, seed: int, symbols: str = "random",
                sigma: float | None = None) -> SensingResult:
    """``symbols`` is ``"random"`` (NOMA data frame) or ``"ones"`` (all symbols 1)."""
    book = codebook_for(config)
    frame = build_frame(config, rng=seed_rng(seed, TAG_BITS), pilot_free=True)
    if symbols == "ones":
        ones = np.ones_like(frame.symbols)
        frame = type(frame)(blocks=np.broadcast_to(book.outer, frame.blocks.shape).astype(complex),
                            symbols=ones, bits=frame.bits, pilot_mask=frame.pilot_mask,
                            pilot_free=True)
    elif symbols != "random":
        raise ValueError(f"symbols must be 'random' or 'ones', got {symbols!r}")
    real = sample_scenario(config, seed)
    sigma = sensing_noise_std(config) if sigma is None else float(sigma)
    cube = apply_sensing_channel(frame, real, sigma, seed)
    v = stream_separate_and_range_compress(cube, book.outer, book.code.chips,
                                           n_bins=config.n_range_bins,
                                           bandwidth_hz=config.bandwidth_hz, symbols=frame.symbols)
    ra = range_angle_map(v, angle_grid(config.angle_grid_points))
    rd = range_doppler_map(doppler_fft(v, config.doppler_fft_size), v)
    return SensingResult(range_angle=ra, range_doppler=rd, report=_report(config, real, ra, rd))


def _report(config, real, ra: RadarMap, rd: RadarMap) -> dict:
    count = len(real.targets)
    guard = config.peak_guard_cells
    # guard the Doppler axis in native (unpadded) resolution cells
    pad = max(1, rd.power.shape[1] // config.n_blocks)
    ra_peaks = detect_peaks(ra, count, guard, local_maxima=True)
    rd_peaks = detect_peaks(rd, count, (guard, guard * pad), local_maxima=True)
    step = float(ra.axis[1] - ra.axis[0]) if ra.axis.size > 1 else 1.0
    dop_bin = float(rd.axis[1] - rd.axis[0])
    bin_m = config.range_bin_m
    targets = []
    for i, tg in enumerate(real.targets):
        a = min(ra_peaks, key=lambda p: ((p.range_m - tg.range_m) / bin_m) ** 2
                + ((p.coordinate - tg.theta_a) / step) ** 2)
        d = min(rd_peaks, key=lambda p: ((p.range_m - tg.range_m) / bin_m) ** 2
                + ((p.coordinate - tg.doppler_hz) / dop_bin) ** 2)
        targets.append({
            "index": i,
            "truth": {"range_m": tg.range_m, "angle_rad": tg.theta_a, "doppler_hz": tg.doppler_hz,
                      "radial_velocity_mps": tg.radial_velocity},
            "range_angle_peak": {"range_m": a.range_m, "angle_rad": a.coordinate,
                                 "power": a.magnitude},
            "range_doppler_peak": {"range_m": d.range_m, "doppler_hz": d.coordinate,
                                   "power": d.magnitude},
            "delta_range_bins": (a.range_m - tg.range_m) / bin_m,
            "delta_angle_steps": (a.coordinate - tg.theta_a) / step,
            "delta_doppler_bins": (d.coordinate - tg.doppler_hz) / dop_bin,
            # peak cell minus the grid cell nearest to the truth
            "range_index_error": a.indices[0] - _nearest(ra.range_m, tg.range_m),
            "angle_index_error": a.indices[1] - _nearest(ra.axis, tg.theta_a),
            "doppler_index_error": d.indices[1] - _nearest(rd.axis, tg.doppler_hz),
        })
    return {"config_digest": config.digest, "range_bin_m": bin_m, "angle_step_rad": step,
            "doppler_bin_hz": dop_bin, "targets": targets}


def _nearest(axis, value) -> int:
    return int(np.argmin(np.abs(np.asarray(axis) - value)))


def sense(config: ScenarioConfig, seed: int, out_dir) -> SensingResult:
    """Write ``range_angle.csv``, ``range_doppler.csv`` (+ JSON sidecars) and ``peaks.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    res = run_sensing(config, seed)
    extra = {"config_digest": config.digest, "seed": int(seed)}
    export_map(res.range_angle, out_dir / "range_angle.csv", extra)
    export_map(res.range_doppler, out_dir / "range_doppler.csv", extra)
    report = {**res.report, "seed": int(seed)}
    (out_dir / "peaks.json").write_text(json.dumps(report, sort_keys=True, indent=1) + "\n")
    return res
