"""Core domain types, physical constants, and scenario (de)serialization.

All quantities are SI (Hz, seconds, meters); angles cross module boundaries
in degrees. Every type here is an immutable (frozen) dataclass, safe to
share across workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path as FilePath

import numpy as np

from .channel import ChannelProfile

C_LIGHT = 299_792_458.0
"""Speed of light in m/s (exact)."""


class ValidationError(ValueError):
    """A scenario field violates one of its invariants."""


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform sampling of the relevant band, endpoints inclusive.

    The default band is [0.1 THz, 1 THz] with 600 samples, matching a
    THz-TDS spectral resolution of ~1.5 GHz.
    """

    f_start_hz: float = 100e9
    f_stop_hz: float = 1000e9
    n_samples: int = 600

    def __post_init__(self):
        if not self.f_start_hz > 0:
            raise ValidationError("f_start_hz must be > 0")
        if not self.f_stop_hz > self.f_start_hz:
            raise ValidationError("f_stop_hz must exceed f_start_hz")
        if self.n_samples < 2:
            raise ValidationError("n_samples must be >= 2")

    @property
    def spacing_hz(self) -> float:
        return (self.f_stop_hz - self.f_start_hz) / (self.n_samples - 1)

    @property
    def bandwidth_hz(self) -> float:
        return self.f_stop_hz - self.f_start_hz

    @property
    def frequencies_hz(self) -> np.ndarray:
        return np.linspace(self.f_start_hz, self.f_stop_hz, self.n_samples)


def nyquist_lag(grid: FrequencyGrid) -> float:
    """Largest unambiguous lag (seconds) of a spectrum sampled on `grid`.

    A ripple with lag zeta is only recoverable from samples spaced
    spacing_hz apart when zeta <= 1/(2*spacing_hz); the distance
    equivalent is c/(2*spacing_hz).
    """
    return 1.0 / (2.0 * grid.spacing_hz)


@dataclass(frozen=True)
class Path:
    """One propagation path: direction of arrival, excess length, gain.

    excess_length_m is relative to the shortest path (the first path is 0
    by convention); only pairwise time-of-flight differences are
    observable, so the absolute LoS length never enters. gain_linear is an
    amplitude; power in dB is 20*log10(gain_linear). aod_deg is the angle
    of departure, only meaningful (and required) for TX-pair scenarios.
    """

    theta_deg: float
    excess_length_m: float = 0.0
    gain_linear: float = 1.0
    aod_deg: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.theta_deg <= 180.0:
            raise ValidationError(
                f"theta out of [0,180]: {self.theta_deg}"
            )
        if self.aod_deg is not None and not 0.0 <= self.aod_deg <= 180.0:
            raise ValidationError(f"aod out of [0,180]: {self.aod_deg}")
        if self.excess_length_m < 0.0:
            raise ValidationError("excess_length_m must be >= 0")
        if not self.gain_linear > 0.0:
            raise ValidationError("gain_linear must be > 0")

    @property
    def tof_s(self) -> float:
        """Time of flight relative to the shortest path."""
        return self.excess_length_m / C_LIGHT


@dataclass(frozen=True)
class Scenario:
    """Full experiment description for one synthetic THz-TDS shot."""

    d_m: float = 5e-3
    grid: FrequencyGrid = field(default_factory=FrequencyGrid)
    paths: tuple[Path, ...] = (Path(theta_deg=60.0),)
    tx_mode: str = "single"
    tx_delay_factor: float = 3.0
    channel: ChannelProfile = field(default_factory=ChannelProfile)
    snr_db: float = 20.0
    seed: int = 0

    def __post_init__(self):
        if not self.d_m > 0.0:
            raise ValidationError("d_m must be > 0")
        if self.tx_mode not in ("single", "pair"):
            raise ValidationError(f"tx_mode must be single|pair: {self.tx_mode}")
        if len(self.paths) < 1:
            raise ValidationError("at least one path required")
        if self.tx_mode == "pair":
            if len(self.paths) != 1:
                raise ValidationError("tx_mode=pair requires exactly one path")
            if self.paths[0].aod_deg is None:
                raise ValidationError("tx_mode=pair requires aod_deg on the path")
        if self.seed < 0:
            raise ValidationError("seed must be an unsigned integer")
        object.__setattr__(self, "paths", tuple(self.paths))

    @property
    def snr_linear(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)

    def replace(self, **kwargs) -> "Scenario":
        from dataclasses import replace as _replace
        return _replace(self, **kwargs)


@dataclass(frozen=True)
class ZetaSpectrum:
    """Spectrum of the power spectrum: magnitude versus lag zeta (seconds).

    The lag axis is uniform, starts at 0 and extends to the Nyquist lag
    1/(2*spacing_hz) of the frequency grid it came from.
    """

    zeta_s: np.ndarray
    magnitude: np.ndarray

    def __post_init__(self):
        if len(self.zeta_s) != len(self.magnitude):
            raise ValidationError("zeta and magnitude lengths differ")

    @property
    def distance_m(self) -> np.ndarray:
        """Lag axis converted to path-length difference, c*zeta."""
        return self.zeta_s * C_LIGHT

    @property
    def spacing_s(self) -> float:
        return float(self.zeta_s[1] - self.zeta_s[0])


def _scenario_to_dict(scenario: Scenario) -> dict:
    d = {
        "d_m": scenario.d_m,
        "grid": {
            "f_start_hz": scenario.grid.f_start_hz,
            "f_stop_hz": scenario.grid.f_stop_hz,
            "n_samples": scenario.grid.n_samples,
        },
        "tx_mode": scenario.tx_mode,
        "tx_delay_factor": scenario.tx_delay_factor,
        "paths": [
            {k: v for k, v in asdict(p).items() if not (k == "aod_deg" and v is None)}
            for p in scenario.paths
        ],
        "channel": {
            "kind": scenario.channel.kind,
            "water_vapor_g_m3": scenario.channel.water_vapor_g_m3,
            "range_m": scenario.channel.range_m,
            "temperature_k": scenario.channel.temperature_k,
            "pressure_hpa": scenario.channel.pressure_hpa,
        },
        "snr_db": scenario.snr_db,
        "seed": scenario.seed,
    }
    if scenario.channel.table is not None:
        d["channel"]["table"] = [list(row) for row in scenario.channel.table]
    return d


def save_scenario(scenario: Scenario, path: str | FilePath) -> None:
    """Write a scenario as JSON. load_scenario(save_scenario(s)) == s."""
    with open(path, "w") as f:
        json.dump(_scenario_to_dict(scenario), f, indent=2)
        f.write("\n")


def scenario_from_dict(raw: dict) -> Scenario:
    """Build a validated Scenario from parsed JSON."""
    try:
        grid_raw = raw.get("grid", {})
        grid = FrequencyGrid(
            f_start_hz=float(grid_raw.get("f_start_hz", 100e9)),
            f_stop_hz=float(grid_raw.get("f_stop_hz", 1000e9)),
            n_samples=int(grid_raw.get("n_samples", 600)),
        )
        paths = tuple(
            Path(
                theta_deg=float(p["theta_deg"]),
                excess_length_m=float(p.get("excess_length_m", 0.0)),
                gain_linear=float(p.get("gain_linear", 1.0)),
                aod_deg=float(p["aod_deg"]) if p.get("aod_deg") is not None else None,
            )
            for p in raw["paths"]
        )
        ch_raw = raw.get("channel", {})
        table = ch_raw.get("table")
        channel = ChannelProfile(
            kind=ch_raw.get("kind", "dry"),
            water_vapor_g_m3=float(ch_raw.get("water_vapor_g_m3", 0.0))
            if "water_vapor_g_m3" in ch_raw
            else (10.0 if ch_raw.get("kind") == "humid" else 0.0),
            range_m=float(ch_raw.get("range_m", 100.0)),
            temperature_k=float(ch_raw.get("temperature_k", 288.15)),
            pressure_hpa=float(ch_raw.get("pressure_hpa", 1013.25)),
            table=tuple((float(f), float(g)) for f, g in table)
            if table is not None
            else None,
        )
        return Scenario(
            d_m=float(raw["d_m"]),
            grid=grid,
            paths=paths,
            tx_mode=raw.get("tx_mode", "single"),
            tx_delay_factor=float(raw.get("tx_delay_factor", 3.0)),
            channel=channel,
            snr_db=float(raw["snr_db"]),
            seed=int(raw.get("seed", 0)),
        )
    except KeyError as exc:
        raise ValidationError(f"missing scenario key: {exc}") from exc


def load_scenario(path: str | FilePath) -> Scenario:
    """Load and validate a scenario JSON file.

    Raises json.JSONDecodeError on malformed files and ValidationError
    (naming the violated invariant) on bad values.
    """
    with open(path) as f:
        raw = json.load(f)
    return scenario_from_dict(raw)
