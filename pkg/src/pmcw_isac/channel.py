"""Sensing and communication channels, and noise generation.

Sensing: sum of rank-1 target terms plus normalized clutter, each assigned
to the delay tap ``round(2 r B / c0)`` (in inner-code chips). Communication:
flat multipath per user, held constant within a block and rotated by each
path's Doppler at the block timestamp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import C0, K_BOLTZMANN, ScenarioConfig
from .errors import ConfigError, ShapeError
from .radar import RadarCube
from .waveform import TxFrame

# stream tags for SeedSequence spawning
TAG_CHANNEL, TAG_RADAR_NOISE, TAG_COMM_NOISE, TAG_BITS = 11, 13, 17, 19


@dataclass(frozen=True)
class TargetParams:
    alpha: complex
    doppler_hz: float
    theta_d: float
    theta_a: float
    range_m: float
    radial_velocity: float  # positive when approaching


@dataclass(frozen=True)
class ClutterParams:
    alpha: np.ndarray       # (C, S) complex
    doppler_hz: np.ndarray  # (C, S)
    theta_a: np.ndarray
    theta_d: np.ndarray
    range_m: np.ndarray

    @property
    def n_clusters(self) -> int:
        return self.alpha.shape[0]

    @property
    def n_scatterers(self) -> int:
        return self.alpha.shape[1]


@dataclass(frozen=True)
class UserPathParams:
    beta: np.ndarray        # (P,) complex, sorted by descending magnitude
    doppler_hz: np.ndarray
    theta_d: np.ndarray
    user: int
    position: tuple


@dataclass(frozen=True)
class ChannelRealization:
    targets: tuple
    clutter: ClutterParams | None
    users: tuple
    seed: int
    n_tx: int
    n_rx: int
    bandwidth_hz: float
    n_taps: int
    t_block: float
    delays_enabled: bool = True


def seed_rng(*keys: int) -> np.random.Generator:
    """Independent generator for a tuple of non-negative integer keys."""
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


def steering_vector(theta: float, n: int) -> np.ndarray:
    """Half-wavelength ULA response ``exp(-j pi k sin(theta))``, k = 0..n-1."""
    return np.exp(-1j * np.pi * np.arange(n) * np.sin(theta))


def delay_tap(range_m: float, bandwidth_hz: float) -> int:
    """Round-trip delay in inner-code chips of duration 1/B."""
    return int(round(2.0 * range_m * bandwidth_hz / C0))


def complex_noise(rng: np.random.Generator, shape, sigma: float) -> np.ndarray:
    """Circular complex Gaussian samples with total variance ``sigma**2``."""
    w = rng.standard_normal(shape + (2,) if isinstance(shape, tuple) else (shape, 2))
    return sigma * (w[..., 0] + 1j * w[..., 1]) / math.sqrt(2.0)


# --- sampling ---------------------------------------------------------------

def _target_params(config: ScenarioConfig, rng) -> tuple:
    lam = config.wavelength
    targets = []
    for pos, vel in zip(config.target_positions, config.target_velocities):
        p = np.asarray(pos, dtype=float)
        r = float(np.linalg.norm(p))
        if r == 0.0:
            raise ConfigError("target at the base station origin")
        theta = math.atan2(p[1], p[0])
        if abs(theta) > math.pi / 2 or r > config.sensing_range_m:
            raise ConfigError(
                f"target at {tuple(pos)} (r={r:.2f} m, theta={theta:.3f} rad) outside the sensing window")
        if config.delays_enabled and delay_tap(r, config.bandwidth_hz) >= config.code_length:
            raise ConfigError(
                f"target range {r:.2f} m exceeds the {config.code_length}-chip fast-time window")
        v_rad = -float(np.dot(np.asarray(vel, dtype=float), p / r))
        alpha = config.target_gain * np.exp(2j * np.pi * rng.uniform())
        targets.append(TargetParams(alpha=complex(alpha), doppler_hz=2.0 * v_rad / lam,
                                    theta_d=theta, theta_a=theta, range_m=r, radial_velocity=v_rad))
    return tuple(targets)


def _clutter_params(config: ScenarioConfig, rng) -> ClutterParams | None:
    if not config.clutter_enabled or config.clutter_clusters < 1 or config.clutter_scatterers < 1:
        return None
    c, s = config.clutter_clusters, config.clutter_scatterers
    r_max = min(config.sensing_range_m, (config.code_length - 1) * config.range_bin_m)
    centers_r = rng.uniform(config.range_bin_m, r_max, size=(c, 1))
    centers_th = rng.uniform(-0.45 * math.pi, 0.45 * math.pi, size=(c, 1))
    rng_m = np.clip(centers_r + rng.normal(0.0, config.range_bin_m, size=(c, s)), 0.0, r_max)
    theta = np.clip(centers_th + rng.normal(0.0, math.radians(3.0), size=(c, s)),
                    -math.pi / 2, math.pi / 2)
    power = 10.0 ** (config.clutter_level_db / 10.0) * config.target_gain ** 2
    alpha = math.sqrt(power / 2.0) * (rng.standard_normal((c, s)) + 1j * rng.standard_normal((c, s)))
    return ClutterParams(alpha=alpha, doppler_hz=np.zeros((c, s)), theta_a=theta, theta_d=theta.copy(),
                         range_m=rng_m)


def _user_paths(config: ScenarioConfig, rng) -> tuple:
    lam = config.wavelength
    dists = [float(np.linalg.norm(p)) for p in config.user_positions]
    d_ref = min(dists)
    v_max = max((float(np.linalg.norm(v)) for v in config.target_velocities), default=0.0)
    f_max = 2.0 * v_max / lam
    lo, hi = config.scatter_sector_rad
    users = []
    for k, (pos, d) in enumerate(zip(config.user_positions, dists)):
        amp = d_ref / d
        n_scatter = config.user_paths - 1
        # dominant line-of-sight path: deterministic for a fixed user location
        beta = [amp * np.exp(-2j * np.pi * d / lam)]
        theta = [math.atan2(pos[1], pos[0])]
        dop = [0.0]
        if n_scatter:
            g = amp * math.sqrt(10.0 ** (config.scatter_path_db / 10.0) / 2.0)
            beta.extend(g * (rng.standard_normal(n_scatter) + 1j * rng.standard_normal(n_scatter)))
            theta.extend(rng.uniform(lo, hi, size=n_scatter))
            dop.extend(rng.uniform(-f_max, f_max, size=n_scatter))
        beta, theta, dop = np.asarray(beta), np.asarray(theta), np.asarray(dop)
        order = np.argsort(-np.abs(beta), kind="stable")
        users.append(UserPathParams(beta=beta[order], doppler_hz=dop[order], theta_d=theta[order],
                                    user=k, position=tuple(pos)))
    return tuple(users)


def sample_scenario(config: ScenarioConfig, seed: int) -> ChannelRealization:
    """Draw one channel realization; identical (config, seed) give identical results."""
    rng = seed_rng(seed, TAG_CHANNEL)
    targets = _target_params(config, rng)
    clutter = _clutter_params(config, rng)
    users = _user_paths(config, rng)
    return ChannelRealization(targets=targets, clutter=clutter, users=users, seed=int(seed),
                              n_tx=config.n_tx, n_rx=config.n_rx, bandwidth_hz=config.bandwidth_hz,
                              n_taps=config.code_length, t_block=config.t_block,
                              delays_enabled=config.delays_enabled)


# --- channel evaluation ---------------------------------------------------------

def sensing_channel_at(real: ChannelRealization, t: float) -> dict:
    """Per-tap sensing channel ``{tap: (N_r, N_t) complex}`` at time ``t``.

    Taps at or beyond the fast-time window (``n_taps`` chips) are dropped.
    """
    taps: dict[int, np.ndarray] = {}

    def add(tap, term):
        if tap >= real.n_taps:
            return
        if tap in taps:
            taps[tap] = taps[tap] + term
        else:
            taps[tap] = term

    def tap_of(r):
        return delay_tap(r, real.bandwidth_hz) if real.delays_enabled else 0

    for tg in real.targets:
        term = (tg.alpha * np.exp(2j * np.pi * tg.doppler_hz * t)
                * np.outer(steering_vector(tg.theta_a, real.n_rx), steering_vector(tg.theta_d, real.n_tx)))
        add(tap_of(tg.range_m), term)

    cl = real.clutter
    if cl is not None:
        norm = 1.0 / math.sqrt(cl.n_clusters * cl.n_scatterers)
        for a, f, th_a, th_d, r in zip(cl.alpha.ravel(), cl.doppler_hz.ravel(), cl.theta_a.ravel(),
                                      cl.theta_d.ravel(), cl.range_m.ravel()):
            term = (norm * a * np.exp(2j * np.pi * f * t)
                    * np.outer(steering_vector(th_a, real.n_rx), steering_vector(th_d, real.n_tx)))
            add(tap_of(r), term)
    return dict(sorted(taps.items()))


def comm_channel_at(real: ChannelRealization, k: int, t: float) -> np.ndarray:
    """``h_k(t) = sum_p beta_p exp(j 2 pi f_p t) a_t(theta_p)``, length N_t."""
    if not 0 <= k < len(real.users):
        raise IndexError(f"user index {k} out of range for {len(real.users)} users")
    u = real.users[k]
    h = np.zeros(real.n_tx, dtype=np.complex128)
    for b, f, th in zip(u.beta, u.doppler_hz, u.theta_d):
        h += b * np.exp(2j * np.pi * f * t) * steering_vector(th, real.n_tx)
    return h


def apply_sensing_channel(frame: TxFrame, real: ChannelRealization, sigma_rad: float,
                          seed: int) -> RadarCube:
    """Monostatic echo cube ``N_r x (L N_t) x M`` with circular fast-time delays."""
    m_blocks, n_fast, n_tx = frame.blocks.shape
    if n_tx != real.n_tx:
        raise ShapeError(f"frame has {n_tx} streams, channel expects {real.n_tx}")
    chips_per_tap = n_fast // real.n_taps
    cube = np.zeros((real.n_rx, n_fast, m_blocks), dtype=np.complex128)
    for m in range(m_blocks):
        x = frame.blocks[m]
        for tap, h in sensing_channel_at(real, m * real.t_block).items():
            cube[:, :, m] += h @ np.roll(x, tap * chips_per_tap, axis=0).T
    if sigma_rad > 0:
        cube += complex_noise(seed_rng(seed, TAG_RADAR_NOISE), cube.shape, sigma_rad)
    return RadarCube(data=cube, noise_std=float(sigma_rad), t_block=real.t_block)


def apply_comm_channel(frame: TxFrame, real: ChannelRealization, k: int, sigma_com: float,
                       seed: int) -> np.ndarray:
    """Received blocks ``y_{k,m} = X_m h_k(t_m) + z_m`` stacked as (M, L N_t)."""
    m_blocks, n_fast, _ = frame.blocks.shape
    y = np.empty((m_blocks, n_fast), dtype=np.complex128)
    for m in range(m_blocks):
        y[m] = frame.blocks[m] @ comm_channel_at(real, k, m * real.t_block)
    if sigma_com > 0:
        y += complex_noise(seed_rng(seed, TAG_COMM_NOISE, k), y.shape, sigma_com)
    return y


# --- noise calibration ------------------------------------------------------

def thermal_noise_w(nf_db: float, bandwidth_hz: float, temperature_k: float = 290.0) -> float:
    """Receiver noise power ``k_B T0 B 10^(NF/10)`` in watts."""
    return K_BOLTZMANN * temperature_k * bandwidth_hz * 10.0 ** (nf_db / 10.0)


def reference_rx_power_w(config: ScenarioConfig) -> float:
    """Free-space received power at the near user for the configured transmit power."""
    d_ref = min(float(np.linalg.norm(p)) for p in config.user_positions)
    p_tx = 10.0 ** ((config.tx_power_dbm - 30.0) / 10.0)
    return p_tx * (config.wavelength / (4.0 * math.pi * d_ref)) ** 2


def noise_sigma_from_nf(nf_db: float, bandwidth_hz: float, config: ScenarioConfig) -> float:
    """Noise standard deviation on the simulation's normalized power scale.

    In dB the variance is ``-174 dBm/Hz + 10 log10(B) + NF - P_tx - PL(d_near)``,
    i.e. affine in the noise figure; unit channel gain corresponds to the
    near user's line-of-sight path.
    """
    var = thermal_noise_w(nf_db, bandwidth_hz, config.noise_temp_k) / reference_rx_power_w(config)
    return math.sqrt(var)
