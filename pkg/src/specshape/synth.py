"""Synthesis of the noise-free mean field and noisy THz-TDS observations.

Everything is done directly in the frequency domain on the scenario grid;
with the flat-spectrum pulse convention this is exact. The output field is
normalized so a unit-gain flat-channel LoS shot has peak power 1 (the
unobservable constant of the closed-form power spectrum is fixed to 1/4),
and SNR then references the mean per-antenna signal power.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import channel_response
from .scenario import C_LIGHT, FrequencyGrid, Scenario, ValidationError


@dataclass(frozen=True)
class MeanField:
    """Noise-free complex field at the combined THz-TDS detector.

    antenna_power is the mean signal power received per antenna (the
    quantity the SNR definition references), which differs from the power
    of the summed field.
    """

    grid: FrequencyGrid
    values: np.ndarray
    antenna_power: float

    def __post_init__(self):
        if len(self.values) != self.grid.n_samples:
            raise ValidationError("field length != grid.n_samples")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("field contains non-finite values")

    @property
    def power_spectrum(self) -> np.ndarray:
        return np.abs(self.values) ** 2


@dataclass(frozen=True)
class ObservedSpectrum:
    """One THz-TDS magnitude shot z(f_k) plus its generating mean field.

    Each z_k is Rice-distributed with nu = |mean_k| and sigma^2 = n0/2;
    n0 = 0 marks a noise-free observation.
    """

    grid: FrequencyGrid
    z: np.ndarray
    mean: MeanField
    n0: float

    def __post_init__(self):
        if np.any(self.z < 0.0):
            raise ValidationError("magnitude observation must be >= 0")
        if self.n0 < 0.0:
            raise ValidationError("n0 must be >= 0")

    @classmethod
    def noise_free(cls, mean: MeanField) -> "ObservedSpectrum":
        return cls(grid=mean.grid, z=np.abs(mean.values), mean=mean, n0=0.0)


def delta_t(theta_deg: float, d_m: float) -> float:
    """Inter-antenna arrival-time shift -(D/c)*cos(theta) in seconds."""
    return -(d_m / C_LIGHT) * np.cos(np.radians(theta_deg))


def shaper_zeta(theta_deg, d_m: float):
    """Spectral-ripple lag zeta(theta) = (2D/c) sin^2(theta/2), seconds.

    Monotone increasing on [0, 180] degrees, so a detected lag inverts
    uniquely to a direction of arrival.
    """
    half = np.radians(np.asarray(theta_deg, dtype=float)) / 2.0
    out = (2.0 * d_m / C_LIGHT) * np.sin(half) ** 2
    return float(out) if out.ndim == 0 else out


def tx_pair_lag(aod_deg: float, d_m: float, delay_factor: float = 3.0) -> float:
    """TX-pair harmonic lag (D/c)(delay_factor - cos(aod)), seconds."""
    return (d_m / C_LIGHT) * (delay_factor - np.cos(np.radians(aod_deg)))


def aod_harmonic_lags(theta_i_deg, theta_d_deg, d_m: float):
    """The four harmonic lags of a TX-pair shot, in seconds.

    Returned in the order (doa, aod, sum, difference); for every angle
    pair, sum >= aod >= max(doa, difference) >= 0, which is what makes the
    two largest detected lags invert uniquely to (aod, doa).
    """
    ci = np.cos(np.radians(np.asarray(theta_i_deg, dtype=float)))
    cd = np.cos(np.radians(np.asarray(theta_d_deg, dtype=float)))
    scale = d_m / C_LIGHT
    return (
        scale * (1.0 - ci),
        scale * (3.0 - cd),
        scale * (4.0 - ci - cd),
        scale * (2.0 - cd + ci),
    )


def _pair_factor(f_hz: np.ndarray, lag_s: float) -> np.ndarray:
    # (1 + e^{-j 2 pi f lag}) / 2 in half-angle form; keeps |.| an exact
    # cosine so the closed-form power spectrum matches to the ulp
    phase = np.pi * f_hz * lag_s
    return np.cos(phase) * np.exp(-1j * phase)


def synth_single(scenario: Scenario, delay_line: bool = True) -> MeanField:
    """Mean field of a single-path, single-TX shot.

    With the receive delay line (the production design) the power spectrum
    is gain^2 |a|^2 cos^2(pi f (2D/c) sin^2(theta/2)); `delay_line=False`
    exposes the plain two-antenna variant whose spectrum is symmetric
    about 90 degrees (test hook for the observability-doubling claim).
    """
    if len(scenario.paths) != 1:
        raise ValidationError("synth_single requires exactly one path")
    if scenario.tx_mode != "single":
        raise ValidationError("synth_single requires tx_mode=single")
    path = scenario.paths[0]
    f = scenario.grid.frequencies_hz
    amplitude = channel_response(scenario.grid, scenario.channel)
    if delay_line:
        lag = shaper_zeta(path.theta_deg, scenario.d_m)
    else:
        lag = delta_t(path.theta_deg, scenario.d_m)
    antenna_field = 0.5 * path.gain_linear * amplitude
    values = 2.0 * antenna_field * _pair_factor(f, lag)
    return MeanField(
        grid=scenario.grid,
        values=values,
        antenna_power=float(np.mean(antenna_field**2)),
    )


def synth_multi(scenario: Scenario) -> MeanField:
    """Mean field of a multipath shot: coherent sum of per-path fields.

    Each path contributes gain_k a(f) e^{-j 2 pi f T_k} (1 + e^{-j 2 pi f
    zeta_k})/2, so the magnitude-squared carries the per-path shaper
    harmonics plus cross terms at the (shaper-shifted) time-of-flight
    differences.
    """
    if scenario.tx_mode != "single":
        raise ValidationError("synth_multi requires tx_mode=single")
    f = scenario.grid.frequencies_hz
    amplitude = channel_response(scenario.grid, scenario.channel)
    values = np.zeros(len(f), dtype=complex)
    antenna = np.zeros(len(f), dtype=complex)
    for path in scenario.paths:
        lag = shaper_zeta(path.theta_deg, scenario.d_m)
        tof_phase = np.exp(-2j * np.pi * f * path.tof_s)
        per_antenna = 0.5 * path.gain_linear * amplitude * tof_phase
        antenna += per_antenna
        values += 2.0 * per_antenna * _pair_factor(f, lag)
    return MeanField(
        grid=scenario.grid,
        values=values,
        antenna_power=float(np.mean(np.abs(antenna) ** 2)),
    )


def synth_aod(scenario: Scenario) -> MeanField:
    """Mean field of the TX-pair (AoD) configuration.

    Both link ends carry an antenna pair; the TX delay line is
    tx_delay_factor (default 3) times D, so the power spectrum is the
    product of two cosine shapers and decomposes into exactly the four
    harmonics returned by aod_harmonic_lags.
    """
    if scenario.tx_mode != "pair":
        raise ValidationError("synth_aod requires tx_mode=pair")
    path = scenario.paths[0]
    f = scenario.grid.frequencies_hz
    amplitude = channel_response(scenario.grid, scenario.channel)
    lag_doa = shaper_zeta(path.theta_deg, scenario.d_m)
    lag_aod = tx_pair_lag(path.aod_deg, scenario.d_m, scenario.tx_delay_factor)
    # each antenna sees both TX pulses: per-antenna field carries the TX
    # pair factor; the RX pair factor applies to the combined output
    antenna_field = 0.5 * path.gain_linear * amplitude * _pair_factor(f, lag_aod)
    values = 2.0 * antenna_field * _pair_factor(f, lag_doa)
    return MeanField(
        grid=scenario.grid,
        values=values,
        antenna_power=float(np.mean(np.abs(antenna_field) ** 2)),
    )


def synthesize(scenario: Scenario) -> MeanField:
    """Dispatch on tx_mode / path count."""
    if scenario.tx_mode == "pair":
        return synth_aod(scenario)
    if len(scenario.paths) == 1:
        return synth_single(scenario)
    return synth_multi(scenario)


def noise_power_for_snr(mean: MeanField, snr_db: float) -> float:
    """Total noise power N0 so that antenna_power / (N0/2) = 10^(snr/10)."""
    if np.isinf(snr_db):
        return 0.0
    return 2.0 * mean.antenna_power / 10.0 ** (snr_db / 10.0)


def trial_rng(seed: int, trial_index: int | None = None) -> np.random.Generator:
    """Deterministic per-trial stream; (seed, i) streams are independent."""
    if trial_index is None:
        return np.random.default_rng(seed)
    return np.random.default_rng((seed, trial_index))


def add_noise(mean: MeanField, snr_db: float, seed: int,
              trial_index: int | None = None) -> ObservedSpectrum:
    """Draw one noisy magnitude observation of the mean field.

    The two antenna noises add at the single detector, so each bin gets
    circular complex Gaussian noise of total power N0 and the observed
    magnitude is Rice(nu=|mean_k|, sigma^2=N0/2). snr_db=inf returns the
    noise-free magnitudes with n0=0. Fixed (seed, trial_index) gives an
    identical observation on every run.
    """
    n0 = noise_power_for_snr(mean, snr_db)
    if n0 == 0.0:
        return ObservedSpectrum.noise_free(mean)
    rng = trial_rng(seed, trial_index)
    sigma = np.sqrt(n0 / 2.0)
    noise = sigma * (
        rng.standard_normal(len(mean.values))
        + 1j * rng.standard_normal(len(mean.values))
    )
    z = np.abs(mean.values + noise)
    return ObservedSpectrum(grid=mean.grid, z=z, mean=mean, n0=n0)


def observe(scenario: Scenario, noise_free: bool = False,
            trial_index: int | None = None) -> ObservedSpectrum:
    """Synthesize the scenario and attach (or skip) measurement noise."""
    mean = synthesize(scenario)
    if noise_free:
        return ObservedSpectrum.noise_free(mean)
    return add_noise(mean, scenario.snr_db, scenario.seed, trial_index)
