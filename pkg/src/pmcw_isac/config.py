"""Scenario configuration: the single source of truth for one run.

Defaults reproduce the published simulation table (77 GHz, 150 MHz,
16x16 ULA, L=63, M=8, ...). ``ScenarioConfig.desk()`` returns the reduced
profile used by the acceptance suite.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

C0 = 299_792_458.0
K_BOLTZMANN = 1.380649e-23
SUPPORTED_CODE_LENGTHS = (7, 15, 31, 63)


def _tuplify(value):
    if isinstance(value, list):
        return tuple(_tuplify(v) for v in value)
    return value


def _radial_velocity(position, speed):
    r = math.dist(position, (0.0, 0.0, 0.0))
    return tuple(speed * c / r for c in position)


@dataclass(frozen=True)
class ScenarioConfig:
    # --- system parameters --------------------------------------------
    carrier_hz: float = 77e9
    bandwidth_hz: float = 150e6
    n_tx: int = 16
    n_rx: int = 16
    user_positions: tuple = ((15.0, 15.0, 0.0), (5.0, 5.0, 0.0))
    target_positions: tuple = ((20.0, -12.0, 0.0), (35.0, 18.0, 0.0))
    target_velocities: tuple = ((4.0, 4.0, 2.0), (5.0, 5.0, 0.0))
    code_length: int = 63
    n_blocks: int = 8
    pilot_period: int = 4
    modulation_order: int = 4
    p1: float = 0.7
    p2: float = 0.3
    sensing_range_m: float = 60.0

    # --- channel model decisions ----------------------------------------
    target_gain: float = 1.0
    clutter_enabled: bool = True
    clutter_level_db: float = -15.0
    clutter_clusters: int = 3
    clutter_scatterers: int = 5
    user_paths: int = 5
    scatter_path_db: float = -10.0
    scatter_sector_rad: tuple = (-math.pi / 2, math.pi / 2)
    delays_enabled: bool = True
    tx_power_dbm: float = 20.0
    noise_temp_k: float = 290.0
    sensing_snr_db: float = 20.0

    # --- radar processing ---------------------------------------------
    angle_grid_points: int = 181
    doppler_fft_size: int = 512
    peak_guard_cells: int = 2

    # --- reporting ----------------------------------------------------
    # count O bits per symbol in R_max (literal published formula) instead of log2(O)
    goodput_literal_order: bool = False

    # --- T3former / training -------------------------------------------
    n_samples: int = 20000
    learning_rate: float = 1e-4
    batch_size: int = 16
    epochs: int = 100
    d_model: int = 256
    d_key: int = 64
    n_layers_1: int = 3
    n_layers_2: int = 6
    train_nf_range_db: tuple = (0.0, 25.0)
    eval_nf_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0)
    eval_frames: int = 200
    seed: int = 0

    def __post_init__(self):
        for name in ("user_positions", "target_positions", "target_velocities",
                     "scatter_sector_rad", "train_nf_range_db", "eval_nf_db"):
            object.__setattr__(self, name, _tuplify(getattr(self, name)))
        self.validate()

    # ------------------------------------------------------------------
    @classmethod
    def table1(cls, **overrides) -> "ScenarioConfig":
        return cls(**overrides)

    @classmethod
    def desk(cls, **overrides) -> "ScenarioConfig":
        params = dict(
            n_tx=4, n_rx=4, code_length=15, n_blocks=8, pilot_period=4,
            sensing_range_m=15.0,
            target_positions=((5.0, -3.0, 0.0), (9.0, 5.0, 0.0)),
            # one static target, one approaching at 5 m/s along its line of sight
            target_velocities=((0.0, 0.0, 0.0), _radial_velocity((9.0, 5.0, 0.0), -5.0)),
            tx_power_dbm=30.0,
            doppler_fft_size=4096,
            d_model=32, d_key=16, n_layers_1=2, n_layers_2=2,
            n_samples=2000, learning_rate=1e-3, epochs=30,
        )
        params.update(overrides)
        return cls(**params)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        """Read a JSON config. A top-level ``"profile": "desk"`` selects the base."""
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        profile = data.pop("profile", "table1")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}")
        if profile == "desk":
            return cls.desk(**data)
        if profile == "table1":
            return cls.table1(**data)
        raise ConfigError(f"unknown profile {profile!r}; expected 'desk' or 'table1'")

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return json.loads(self.to_json())

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True, separators=(",", ":"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(dataclasses.asdict(self), sort_keys=True, indent=2) + "\n")

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    # ------------------------------------------------------------------
    def validate(self) -> None:
        if self.code_length not in SUPPORTED_CODE_LENGTHS:
            raise ConfigError(
                f"code_length {self.code_length} unsupported; choose from {SUPPORTED_CODE_LENGTHS}")
        if self.n_tx < 1 or self.n_tx & (self.n_tx - 1):
            raise ConfigError(f"n_tx must be a power of two, got {self.n_tx}")
        if self.n_rx < 1:
            raise ConfigError("n_rx must be positive")
        if self.n_blocks < 1 or self.pilot_period < 1 or self.n_blocks % self.pilot_period:
            raise ConfigError(
                f"n_blocks ({self.n_blocks}) must be a positive multiple of pilot_period ({self.pilot_period})")
        if self.n_blocks // self.pilot_period >= self.n_blocks:
            raise ConfigError("pilot_period leaves no data blocks")
        if self.modulation_order != 4:
            raise ConfigError("only QPSK (modulation_order=4) is supported")
        if not (abs(self.p1 + self.p2 - 1.0) < 1e-12 and self.p1 > self.p2 >= 0.0):
            raise ConfigError(f"power split must satisfy p1+p2=1, p1>p2>=0; got ({self.p1}, {self.p2})")
        if len(self.user_positions) != 2:
            raise ConfigError("exactly two NOMA users are supported")
        if len(self.target_positions) != len(self.target_velocities):
            raise ConfigError("target_positions and target_velocities differ in length")
        if self.d_key < 1 or self.d_model % self.d_key:
            raise ConfigError(f"d_model ({self.d_model}) must be a multiple of d_key ({self.d_key})")
        if self.d_model % 2:
            raise ConfigError("d_model must be even for sinusoidal positional encodings")
        if self.user_paths < 1:
            raise ConfigError("user_paths must be >= 1")
        if self.doppler_fft_size < self.n_blocks:
            raise ConfigError("doppler_fft_size must be >= n_blocks")
        if self.angle_grid_points < 1:
            raise ConfigError("angle grid is empty")
        lo, hi = self.train_nf_range_db
        if hi < lo:
            raise ConfigError("train_nf_range_db must be (low, high)")
        if self.batch_size < 1 or self.epochs < 0 or self.n_samples < 1:
            raise ConfigError("batch_size, n_samples must be positive and epochs non-negative")

    # --- derived quantities ---------------------------------------------
    @property
    def wavelength(self) -> float:
        return C0 / self.carrier_hz

    @property
    def bits_per_symbol(self) -> int:
        return int(round(math.log2(self.modulation_order)))

    @property
    def fast_time_len(self) -> int:
        return self.code_length * self.n_tx

    @property
    def t_block(self) -> float:
        return self.fast_time_len / self.bandwidth_hz

    @property
    def n_pilot_blocks(self) -> int:
        return self.n_blocks // self.pilot_period

    @property
    def range_bin_m(self) -> float:
        return C0 / (2.0 * self.bandwidth_hz)

    @property
    def n_range_bins(self) -> int:
        """Range bins kept by the radar: one per inner-code chip lag, clipped to the sensing range."""
        return min(self.code_length, int(math.floor(self.sensing_range_m / self.range_bin_m)) + 1)

    @property
    def n_heads(self) -> int:
        return self.d_model // self.d_key

    @property
    def near_user(self) -> int:
        """Index of the user closest to the base station."""
        d = [math.dist(p, (0.0, 0.0, 0.0)) for p in self.user_positions]
        return int(min(range(len(d)), key=d.__getitem__))

    @property
    def far_user(self) -> int:
        return 1 - self.near_user
