"""Monte-Carlo earthquake catalog and stochastic ground-motion synthesis.

The catalog is a stationary Poisson process in each hazard window with
doubly truncated Gutenberg-Richter magnitudes and epicentres uniform over a
circular source area. Waveforms are enveloped, band-passed Gaussian noise
scaled by a power-law attenuation relation.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import List

import numpy as np
from scipy import signal as sps

from .errors import ConfigurationError, DomainError
from .signals import Waveform

_CHUNK_WINDOWS = 4096


@dataclass(frozen=True)
class HazardConfig:
    rate_per_year: float = 0.5
    window_years: float = 50.0
    n_windows: int = 10_000
    mw_min: float = 5.5
    mw_max: float = 6.8
    b_value: float = 0.9
    source_radius_km: float = 55.0
    depth_km: float = 15.0
    vs30_mps: float = 400.0
    n_steps: int = 4096
    dt_s: float = 0.01
    seed: int = 20240101

    def validate(self):
        problems = []
        if not self.rate_per_year >= 0:
            problems.append("rate_per_year must be >= 0")
        if not self.window_years > 0:
            problems.append("window_years must be > 0")
        if self.n_windows < 1:
            problems.append("n_windows must be >= 1")
        if not self.mw_min < self.mw_max:
            problems.append("mw_min must be < mw_max")
        if not self.b_value > 0:
            problems.append("b_value must be > 0")
        if not self.source_radius_km > 0:
            problems.append("source_radius_km must be > 0")
        if not self.depth_km >= 0:
            problems.append("depth_km must be >= 0")
        if self.n_steps < 1:
            problems.append("n_steps must be > 0")
        if not self.dt_s > 0:
            problems.append("dt_s must be > 0")
        if problems:
            raise ConfigurationError("invalid hazard config: " + "; ".join(problems))
        return self


@dataclass(frozen=True)
class CatalogEvent:
    window_index: int
    time_years: float
    mw: float
    r_epi_km: float
    r_rup_km: float
    event_index: int = 0  # position within its window

    @property
    def motion_id(self) -> str:
        return f"w{self.window_index:06d}e{self.event_index:03d}"


@dataclass(frozen=True)
class SynthesizerConfig:
    """Parameters of the stand-in motion generator.

    Amplitude scale (m/s^2) is ``amplitude_factor * 10**(a_0 + a_m*mw) /
    (r_rup + a_c)**a_r``. Duration of the envelope grows linearly with
    magnitude. ``site_freq_hz``/``site_damping`` add an optional Kanai-Tajimi
    style resonance on top of the band-pass; set ``site_freq_hz`` to 0 to
    disable it.
    """

    f_low_hz: float = 0.2
    f_high_hz: float = 20.0
    filter_order: int = 4
    site_freq_hz: float = 0.0
    site_damping: float = 0.6
    duration_base_s: float = 4.0
    duration_per_mw_s: float = 5.0
    rise_fraction: float = 0.25
    envelope_shape: float = 2.0
    a_0: float = -3.8
    a_m: float = 1.1
    a_r: float = 2.6
    a_c: float = 5.0
    amplitude_factor: float = 1.0

    def validate(self, dt_s: float):
        nyq = 0.5 / dt_s
        problems = []
        for name in ("f_low_hz", "f_high_hz"):
            f = getattr(self, name)
            if not 0 < f < nyq:
                problems.append(f"{name}={f} outside (0, {nyq})")
        if not self.f_low_hz < self.f_high_hz:
            problems.append("f_low_hz must be < f_high_hz")
        if self.site_freq_hz and not 0 < self.site_freq_hz < nyq:
            problems.append(f"site_freq_hz={self.site_freq_hz} outside (0, {nyq})")
        if not self.a_r >= 0:
            problems.append("a_r must be >= 0")
        if not self.a_c > 0:
            problems.append("a_c must be > 0")
        if self.filter_order < 1:
            problems.append("filter_order must be >= 1")
        if not 0 < self.rise_fraction < 1:
            problems.append("rise_fraction must be in (0, 1)")
        if not self.envelope_shape > 0:
            problems.append("envelope_shape must be > 0")
        if problems:
            raise ConfigurationError("invalid synthesizer config: " + "; ".join(problems))
        return self


def _check_unit(name, u):
    if not 0.0 <= u <= 1.0:
        raise DomainError(f"{name}={u} outside [0, 1]")


def magnitude_inverse_cdf(u, b, mw_min, mw_max):
    """Vectorised truncated Gutenberg-Richter inverse CDF (no domain checks)."""
    beta = b * math.log(10.0)
    span = 1.0 - math.exp(-beta * (mw_max - mw_min))
    mw = mw_min - np.log1p(-np.asarray(u, dtype=np.float64) * span) / beta
    # clip the one-ulp overshoot at u == 1
    return np.clip(mw, mw_min, mw_max)


def magnitude_cdf(mw, b, mw_min, mw_max):
    beta = b * math.log(10.0)
    x = np.clip(np.asarray(mw, dtype=np.float64), mw_min, mw_max)
    return -np.expm1(-beta * (x - mw_min)) / -math.expm1(-beta * (mw_max - mw_min))


def sample_magnitude(u: float, b: float, mw_min: float, mw_max: float) -> float:
    _check_unit("u", u)
    return float(magnitude_inverse_cdf(u, b, mw_min, mw_max))


def sample_location(u1: float, u2: float, radius_km: float, depth_km: float):
    """Epicentral and rupture distance for an epicentre uniform on a disc.

    ``u2`` picks the azimuth, which does not affect either distance.
    """
    _check_unit("u1", u1)
    _check_unit("u2", u2)
    r_epi = radius_km * math.sqrt(u1)
    return r_epi, math.hypot(r_epi, depth_km)


def _streams(seed: int):
    arrivals, mags, locs = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(arrivals), np.random.default_rng(mags),
            np.random.default_rng(locs))


def _arrivals(rng, n_windows: int, rate: float, window: float):
    """Event times for a block of windows via exponential inter-arrival gaps.

    Returns ``(window_offsets, times)`` sorted by window then time.
    """
    mean = rate * window
    width = int(math.ceil(mean + 8.0 * math.sqrt(mean) + 8.0))
    gaps = rng.exponential(1.0 / rate, size=(n_windows, width))
    times = np.cumsum(gaps, axis=1)
    # rows whose last arrival is still inside the window need more draws
    short = np.flatnonzero(times[:, -1] <= window)
    extra = {}
    for row in short:
        t = times[row, -1]
        more = []
        while t <= window:
            t += rng.exponential(1.0 / rate)
            more.append(t)
        extra[row] = np.array(more[:-1])
    inside = times <= window
    counts = inside.sum(axis=1)
    rows = np.repeat(np.arange(n_windows), counts)
    flat = times[inside]
    if extra:
        rows_l, flat_l = [], []
        for row in range(n_windows):
            rows_l.append(np.full(counts[row] + len(extra.get(row, ())), row))
            flat_l.append(times[row, :counts[row]])
            if row in extra:
                flat_l.append(extra[row])
        rows = np.concatenate(rows_l)
        flat = np.concatenate(flat_l)
    return rows, flat


def event_counts(cfg: HazardConfig) -> np.ndarray:
    """Number of events in each window, drawn exactly as in ``simulate_catalog``."""
    cfg.validate()
    counts = np.zeros(cfg.n_windows, dtype=np.int64)
    if cfg.rate_per_year == 0:
        return counts
    rng, _, _ = _streams(cfg.seed)
    for start in range(0, cfg.n_windows, _CHUNK_WINDOWS):
        n = min(_CHUNK_WINDOWS, cfg.n_windows - start)
        rows, _ = _arrivals(rng, n, cfg.rate_per_year, cfg.window_years)
        counts[start:start + n] = np.bincount(rows, minlength=n)
    return counts


def simulate_catalog_arrays(cfg: HazardConfig) -> dict:
    """Catalog as a dict of equal-length numpy arrays."""
    cfg.validate()
    keys = ("window_index", "event_index", "time_years", "mw", "r_epi_km", "r_rup_km")
    if cfg.rate_per_year == 0:
        return {k: np.zeros(0, dtype=np.int64 if k.endswith("index") else np.float64)
                for k in keys}
    rng_t, rng_m, rng_l = _streams(cfg.seed)
    parts = {k: [] for k in keys}
    for start in range(0, cfg.n_windows, _CHUNK_WINDOWS):
        n = min(_CHUNK_WINDOWS, cfg.n_windows - start)
        rows, times = _arrivals(rng_t, n, cfg.rate_per_year, cfg.window_years)
        m = rows.size
        counts = np.bincount(rows, minlength=n)
        first = np.concatenate(([0], np.cumsum(counts)[:-1]))
        parts["window_index"].append(rows + start)
        parts["event_index"].append(np.arange(m) - np.repeat(first, counts))
        parts["time_years"].append(times)
        parts["mw"].append(magnitude_inverse_cdf(rng_m.random(m), cfg.b_value,
                                                 cfg.mw_min, cfg.mw_max))
        r_epi = cfg.source_radius_km * np.sqrt(rng_l.random(m))
        rng_l.random(m)  # azimuth draw, kept so the stream layout is explicit
        parts["r_epi_km"].append(r_epi)
        parts["r_rup_km"].append(np.hypot(r_epi, cfg.depth_km))
    return {k: np.concatenate(v) for k, v in parts.items()}


def simulate_catalog(cfg: HazardConfig) -> List[CatalogEvent]:
    arrs = simulate_catalog_arrays(cfg)
    return [CatalogEvent(int(w), float(t), float(mw), float(re), float(rr), int(e))
            for w, e, t, mw, re, rr in zip(arrs["window_index"], arrs["event_index"],
                                           arrs["time_years"], arrs["mw"],
                                           arrs["r_epi_km"], arrs["r_rup_km"])]


def event_noise_seed(seed: int, event: CatalogEvent) -> tuple:
    return (int(seed), int(event.window_index), int(event.event_index))


def amplitude_scale(mw: float, r_rup_km: float, synth: SynthesizerConfig) -> float:
    return (synth.amplitude_factor * 10.0 ** (synth.a_0 + synth.a_m * mw)
            / (r_rup_km + synth.a_c) ** synth.a_r)


def envelope(n_steps: int, dt_s: float, mw: float, synth: SynthesizerConfig) -> np.ndarray:
    """Gamma-shaped envelope with unit peak at ``rise_fraction * duration``."""
    duration = synth.duration_base_s + synth.duration_per_mw_s * max(mw - 5.0, 0.0)
    t_peak = synth.rise_fraction * duration
    t = np.arange(n_steps) * dt_s
    k = synth.envelope_shape
    x = t / t_peak
    with np.errstate(divide="ignore"):
        env = np.exp(k * (np.log(np.where(x > 0, x, 1.0)) + 1.0 - x))
    env[0] = 0.0
    return env


def _noise_filter(synth: SynthesizerConfig, dt_s: float):
    fs = 1.0 / dt_s
    return sps.butter(synth.filter_order, [synth.f_low_hz, synth.f_high_hz],
                      btype="bandpass", fs=fs, output="sos")


def filtered_noise(n_steps: int, dt_s: float, synth: SynthesizerConfig, noise_seed) -> np.ndarray:
    """Band-passed Gaussian noise with unit sample variance."""
    rng = np.random.default_rng(noise_seed)
    pad = n_steps // 2
    white = rng.standard_normal(n_steps + 2 * pad)
    x = sps.sosfiltfilt(_noise_filter(synth, dt_s), white)
    if synth.site_freq_hz:
        # Kanai-Tajimi filter: base excitation of a damped oscillator, absolute accel
        wg = 2.0 * math.pi * synth.site_freq_hz
        zg = synth.site_damping
        num = [2 * zg * wg, wg * wg]
        den = [1.0, 2 * zg * wg, wg * wg]
        b, a = sps.bilinear(num, den, fs=1.0 / dt_s)
        x = sps.lfilter(b, a, x)
    x = x[pad:pad + n_steps]
    std = x.std()
    return x / std if std > 0 else x


def synthesize_motion(event: CatalogEvent, synth: SynthesizerConfig, n_steps: int,
                      dt_s: float, noise_seed) -> Waveform:
    synth.validate(dt_s)
    scale = amplitude_scale(event.mw, event.r_rup_km, synth)
    if scale == 0.0:
        return Waveform(np.zeros(n_steps), dt_s, event.motion_id)
    noise = filtered_noise(n_steps, dt_s, synth, noise_seed)
    acc = scale * envelope(n_steps, dt_s, event.mw, synth) * noise
    return Waveform(acc, dt_s, event.motion_id)


def synthesize_suite(events, synth: SynthesizerConfig, cfg: HazardConfig) -> List[Waveform]:
    return [synthesize_motion(ev, synth, cfg.n_steps, cfg.dt_s, event_noise_seed(cfg.seed, ev))
            for ev in events]


def config_dict(obj) -> dict:
    return asdict(obj)
