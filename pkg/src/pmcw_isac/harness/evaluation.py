"""BER / Goodput sweeps over the noise-figure axis with common random numbers."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..comm import ber_count, detect_frame
from ..config import ScenarioConfig
from ..t3former import T3former
from ..waveform import PILOT_SYMBOL
from .simulation import TAG_EVAL, codebook_for, derive_seed, simulate_frame

RESULT_COLUMNS = ("nf_db", "receiver", "user", "ber", "ber_ci", "goodput_bps", "bits",
                  "config_digest", "seed")

# receiver name -> (role, pilot-free)
RECEIVERS = {
    "zf-far": ("far", False),
    "sic-near": ("near", False),
    "nosic-near": ("near-nosic", False),
    "t3former-far": ("far", True),
    "t3former-near": ("near", True),
}


def max_rate(config: ScenarioConfig, pilot_free: bool) -> float:
    """Peak bit rate ``(M - n_pilot) * N_t * bits / (M * T_block)``.

    ``bits`` is log2(O) by default; ``goodput_literal_order`` counts O instead.
    """
    n_pilot = 0 if pilot_free else config.n_pilot_blocks
    per_symbol = config.modulation_order if config.goodput_literal_order else config.bits_per_symbol
    return (config.n_blocks - n_pilot) * config.n_tx * per_symbol / (config.n_blocks * config.t_block)


def goodput(ber: float, config: ScenarioConfig, pilot_free: bool) -> float:
    """``R_max * (1 - BER)``."""
    if not (0.0 <= ber <= 1.0) or math.isnan(ber):
        raise ValueError(f"BER must lie in [0, 1], got {ber}")
    return max_rate(config, pilot_free) * (1.0 - ber)


def wilson_interval(errors: int, total: int, z: float = 1.959963984540054) -> tuple:
    """Wilson score interval ``(center, radius)`` for a binomial proportion."""
    if total <= 0:
        return 0.0, 0.5
    p = errors / total
    denom = 1.0 + z * z / total
    center = (p + z * z / (2 * total)) / denom
    radius = z * math.sqrt(p * (1 - p) / total + z * z / (4 * total * total)) / denom
    return center, radius


@dataclass
class SweepRow:
    nf_db: float
    receiver: str
    user: int
    errors: int
    bits: int
    goodput_bps: float

    @property
    def ber(self) -> float:
        return self.errors / self.bits if self.bits else float("nan")

    @property
    def ber_ci(self) -> float:
        return wilson_interval(self.errors, self.bits)[1]


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)
    config_digest: str = ""
    seed: int = 0
    skipped: list = field(default_factory=list)

    def get(self, receiver: str, nf_db: float) -> SweepRow:
        for r in self.rows:
            if r.receiver == receiver and r.nf_db == nf_db:
                return r
        raise KeyError((receiver, nf_db))

    def curve(self, receiver: str) -> list:
        return sorted((r for r in self.rows if r.receiver == receiver), key=lambda r: r.nf_db)

    def write_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RESULT_COLUMNS)
            for r in self.rows:
                w.writerow([f"{r.nf_db:g}", r.receiver, r.user, f"{r.ber:.9g}", f"{r.ber_ci:.9g}",
                            f"{r.goodput_bps:.9g}", r.bits, self.config_digest, self.seed])
        return path


def _user_of(config: ScenarioConfig, role: str) -> int:
    return config.far_user if role == "far" else config.near_user


def eval_ber_sweep(config: ScenarioConfig, receivers, nf_list, frames: int, seed: int,
                   models: dict | None = None, batch: int = 64) -> SweepResult:
    """Evaluate every receiver on the same per-frame channels, bits and noise draws.

    ``models`` maps ``"far"`` / ``"near"`` to a :class:`T3former` or a
    checkpoint directory; neural receivers without a model are skipped with
    a warning.
    """
    receivers = list(receivers)
    unknown = [r for r in receivers if r not in RECEIVERS]
    if unknown:
        raise ValueError(f"unknown receivers {unknown}; choose from {sorted(RECEIVERS)}")
    if frames < 1:
        raise ValueError("frames must be >= 1")
    models = dict(models or {})
    result = SweepResult(config_digest=config.digest, seed=int(seed))
    active = []
    for name in receivers:
        role, pilot_free = RECEIVERS[name]
        if pilot_free:
            key = "far" if role == "far" else "near"
            m = models.get(key)
            if m is None:
                warnings.warn(f"no model for receiver {name!r}; skipped", RuntimeWarning, stacklevel=2)
                result.skipped.append(name)
                continue
            if not isinstance(m, T3former):
                models[key] = T3former.load(m)
        active.append(name)

    book = codebook_for(config)
    frame_seeds = [derive_seed(seed, TAG_EVAL, f) for f in range(frames)]
    for nf in nf_list:
        nf = float(nf)
        counts = {name: [0, 0] for name in active}
        pilot_names = [n for n in active if not RECEIVERS[n][1]]
        free_names = [n for n in active if RECEIVERS[n][1]]
        if pilot_names:
            for fs in frame_seeds:
                sim = simulate_frame(config, fs, nf, pilot_free=False)
                for name in pilot_names:
                    role = RECEIVERS[name][0]
                    k = _user_of(config, "far" if role == "far" else "near")
                    est = detect_frame(sim.cubes[k], sim.pilot_mask, book.code.chips, PILOT_SYMBOL,
                                       config.p1, config.p2, role)
                    e, t, _ = ber_count(est, sim.bits[k])
                    counts[name][0] += e
                    counts[name][1] += t
        if free_names:
            sims = [simulate_frame(config, fs, nf, pilot_free=True) for fs in frame_seeds]
            for name in free_names:
                role = RECEIVERS[name][0]
                k = _user_of(config, role)
                cubes = np.stack([s.cubes[k].data for s in sims])
                truth = np.stack([s.bits[k] for s in sims])
                est = models[role].predict(cubes, book.outer, batch=batch)
                e, t, _ = ber_count(est, truth)
                counts[name][0] += e
                counts[name][1] += t
        for name in active:
            role, pilot_free = RECEIVERS[name]
            e, t = counts[name]
            result.rows.append(SweepRow(nf_db=nf, receiver=name,
                                        user=_user_of(config, "far" if role == "far" else "near"),
                                        errors=e, bits=t,
                                        goodput_bps=goodput(e / t, config, pilot_free)))
    return result
