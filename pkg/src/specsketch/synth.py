"""Deterministic synthetic ensembles with known spectral structure.

Two generators, both row-streamable in constant memory per row and fully
reproducible from a 64-bit seed:

two-frequency
    Every particle is a unit sinusoid with a random phase and one of two
    frequencies (fast or slow, equal probability). The ensemble
    autocorrelation is the average of the two cosines, so the spectrum
    shows two finite-sample-broadened peaks.

adversarial
    An ensemble built to break classical subsampling: almost all particles
    share one eigenfrequency, a handful of "special" particles carry a
    large-amplitude second frequency (particle subsampling almost surely
    misses them), and two short high pulses hit every particle (time
    subsampling almost surely misses those). White noise keeps the
    spectral floor away from zero. Sketches, which mix all particles and
    all times, see both features.

The special count (3), special amplitude (80), pulse amplitude (10) and
pulse width (0.6 of the common period) are the canonical construction;
the frequencies, pulse centers and noise level are free parameters with
illustrative defaults.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .seeding import derive_seed, generator
from .spectral import TimeSeriesSource

_PHASE_STREAM = 0x5048
_NOISE_STREAM = 0x4E4F


@dataclass(frozen=True)
class TwoFrequencyConfig:
    n_particles: int = 10_000
    n_steps: int = 2000
    f_fast: float = 50.0
    f_slow: float = 5.0
    dt: float = 1e-3
    seed: int = 0

    def validate(self) -> None:
        if self.n_particles < 2:
            raise ValueError("need at least 2 particles")
        nyquist = 1.0 / (2.0 * self.dt)
        for f in (self.f_fast, self.f_slow):
            if not 0.0 < f < nyquist:
                raise ValueError(f"frequency {f} Hz is at or above the "
                                 f"Nyquist limit {nyquist} Hz")


def _two_frequency_state(cfg: TwoFrequencyConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-particle frequency assignment and phase, fixed by the seed."""
    rng = generator(derive_seed(cfg.seed, _PHASE_STREAM))
    fast = rng.integers(0, 2, size=cfg.n_particles).astype(bool)
    phases = rng.uniform(0.0, 2.0 * math.pi, size=cfg.n_particles)
    freqs = np.where(fast, cfg.f_fast, cfg.f_slow)
    return freqs, phases


def gen_two_frequency(cfg: TwoFrequencyConfig) -> TimeSeriesSource:
    """x_i(t) = sin(2 pi f_i t dt + phi_i) for t = 1..n_steps."""
    cfg.validate()
    freqs, phases = _two_frequency_state(cfg)
    omega = 2.0 * math.pi * freqs * cfg.dt

    def rows():
        for t in range(1, cfg.n_steps + 1):
            yield np.sin(omega * t + phases)

    return TimeSeriesSource(cfg.n_steps, cfg.n_particles, cfg.dt, rows)


def two_frequency_truth(cfg: TwoFrequencyConfig, n_lags: int) -> np.ndarray:
    """Phase-averaged autocorrelation of the realized ensemble.

    For each particle the phase average of the lag product is
    cos(2 pi f_i tau dt) / 2, so the ensemble value is the mean cosine over
    the particles actually assigned to each frequency. Finite-sample
    estimates fluctuate around this at O(1/sqrt(n_particles)).
    """
    freqs, _ = _two_frequency_state(cfg)
    taus = np.arange(n_lags)
    angles = 2.0 * math.pi * cfg.dt * np.outer(taus, freqs)
    return 0.5 * np.cos(angles).mean(axis=1)


#: Default eigenfrequencies sit exactly on the default spectral grid
#: k / (2 * 2048 - 1), so the finite-sample peaks are leakage-free and the
#: spectral floor between them is set by the noise, not by ringing.
_DEFAULT_OMEGA = 2.0 * math.pi * 196 / 4095
_DEFAULT_OMEGA_PRIME = 2.0 * math.pi * 717 / 4095


@dataclass(frozen=True)
class AdversarialConfig:
    n_particles: int = 10_000
    n_special: int = 3
    n_steps: int = 2048
    omega: float = _DEFAULT_OMEGA              # rad per step, shared
    omega_prime: float = _DEFAULT_OMEGA_PRIME  # rad per step, special extra
    special_amp: float = 80.0
    pulse_amp: float = 10.0
    pulse_width: float | None = None       # default 0.6 * 2 pi / omega
    pulse_centers: tuple[float, float] | None = None
    noise_sigma: float = 2.0
    dt: float = 1.0
    seed: int = 0

    @property
    def width(self) -> float:
        return self.pulse_width if self.pulse_width is not None \
            else 0.6 * 2.0 * math.pi / self.omega

    @property
    def centers(self) -> tuple[float, float]:
        if self.pulse_centers is not None:
            return self.pulse_centers
        return (round(self.n_steps * 0.25), round(self.n_steps * 0.65))

    def validate(self) -> None:
        if self.n_particles < 2:
            raise ValueError("need at least 2 particles")
        if not 0 <= self.n_special <= self.n_particles:
            raise ValueError("n_special must lie in [0, n_particles]")
        for w in (self.omega, self.omega_prime):
            if not 0.0 < w < math.pi / self.dt:
                raise ValueError(f"angular frequency {w} is at or above "
                                 f"the Nyquist limit {math.pi / self.dt}")
        half = self.width / 2.0
        t1, t2 = self.centers
        if t1 - half < 1 or t2 + half > self.n_steps or t1 > t2:
            raise ValueError("pulse supports must lie inside [1, n_steps]")
        if t2 - half <= t1 + half:
            raise ValueError("pulse supports overlap")


def pulse_shape(t, center: float, width: float, amp: float):
    """Half-sine burst amp * sin(pi (t - center) / width) on |t - center| <= width/2.

    The support boundary is inclusive on both sides.
    """
    s = np.asarray(t, dtype=np.float64) - center
    inside = np.abs(s) <= width / 2.0
    return np.where(inside, amp * np.sin(math.pi * s / width), 0.0)


def _adversarial_state(cfg: AdversarialConfig) -> tuple[np.ndarray, np.ndarray]:
    rng = generator(derive_seed(cfg.seed, _PHASE_STREAM))
    phases = rng.uniform(0.0, 2.0 * math.pi, size=cfg.n_particles)
    special_phases = rng.uniform(0.0, 2.0 * math.pi, size=cfg.n_special)
    return phases, special_phases


def gen_adversarial(cfg: AdversarialConfig) -> TimeSeriesSource:
    """Common dynamics plus special particles and shared pulses.

    Particles 1..N-k follow sin(omega t + phi_i) + p1(t) + p2(t) + noise;
    the last k = n_special particles additionally carry
    special_amp * sin(omega_prime t + phi'_j). Noise rows are drawn from a
    per-row substream, so row t is reproducible in isolation.
    """
    cfg.validate()
    phases, special_phases = _adversarial_state(cfg)
    t1, t2 = cfg.centers
    width = cfg.width
    n_special = cfg.n_special

    def rows():
        for t in range(1, cfg.n_steps + 1):
            base = np.sin(cfg.omega * t + phases)
            base += pulse_shape(t, t1, width, cfg.pulse_amp)
            base += pulse_shape(t, t2, width, cfg.pulse_amp)
            if n_special:
                base[-n_special:] += cfg.special_amp * np.sin(
                    cfg.omega_prime * t + special_phases)
            if cfg.noise_sigma > 0.0:
                noise_rng = generator(derive_seed(cfg.seed, _NOISE_STREAM, t))
                base += cfg.noise_sigma * noise_rng.standard_normal(cfg.n_particles)
            yield base

    return TimeSeriesSource(cfg.n_steps, cfg.n_particles, cfg.dt, rows)


def freq_bin(freq_hz: float, n_lags: int, dt: float) -> int:
    """Nearest PSD grid bin for a frequency in Hz (grid k / ((2T-1) dt))."""
    return int(round(freq_hz * (2 * n_lags - 1) * dt))


def omega_bin(omega: float, n_lags: int, dt: float) -> int:
    """Nearest PSD grid bin for an angular frequency in rad per time unit."""
    return freq_bin(omega / (2.0 * math.pi), n_lags, dt)
