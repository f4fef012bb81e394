"""Frequency-selective THz channel magnitude from atmospheric gas attenuation.

Specific attenuation follows the line-by-line model of ITU-R P.676-12
Annex 1: resonance sums over the dominant O2 and H2O lines with the
P.676 line-shape factor plus the dry-air continuum (non-resonant Debye
spectrum and pressure-induced nitrogen absorption). Line coefficients
live in data/gas_lines.csv. Free-space spreading loss is deliberately
excluded; the per-antenna SNR definition absorbs it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import TYPE_CHECKING, Optional

import numpy as np

if TYPE_CHECKING:
    from .scenario import FrequencyGrid

F_MIN_HZ = 0.05e12
F_MAX_HZ = 1.1e12

# amplitudes below this are clamped so the linear response stays in (0, 1]
# even where hundreds of dB of water-vapor absorption underflow float64
_AMPLITUDE_FLOOR = 1e-300


class OutOfBandError(ValueError):
    """Frequency outside the supported [0.05, 1.1] THz range."""


class TableCoverageError(ValueError):
    """Tabulated profile does not cover a requested frequency."""


@dataclass(frozen=True)
class ChannelProfile:
    """Atmospheric profile: dry, humid, or a user-supplied table.

    water_vapor_g_m3 is the absolute humidity (0 for dry, default 10 for
    humid); range_m the propagation path length; temperature/pressure
    default to the standard atmosphere. A tabulated profile is a sorted
    sequence of (frequency_hz, specific attenuation dB/km) pairs that must
    cover the scenario grid.
    """

    kind: str = "dry"
    water_vapor_g_m3: float = 0.0
    range_m: float = 100.0
    temperature_k: float = 288.15
    pressure_hpa: float = 1013.25
    table: Optional[tuple[tuple[float, float], ...]] = None

    def __post_init__(self):
        from .scenario import ValidationError

        if self.kind not in ("dry", "humid", "tabulated"):
            raise ValidationError(f"unknown channel kind: {self.kind}")
        if self.kind == "dry" and self.water_vapor_g_m3 != 0.0:
            raise ValidationError("dry profile requires water_vapor_g_m3 = 0")
        if self.kind == "humid" and self.water_vapor_g_m3 == 0.0:
            object.__setattr__(self, "water_vapor_g_m3", 10.0)
        if self.water_vapor_g_m3 < 0.0:
            raise ValidationError("water_vapor_g_m3 must be >= 0")
        if not self.range_m > 0.0:
            raise ValidationError("range_m must be > 0")
        if self.kind == "tabulated":
            if self.table is None or len(self.table) < 2:
                raise ValidationError("tabulated profile needs >= 2 rows")
            freqs = [row[0] for row in self.table]
            if any(b <= a for a, b in zip(freqs, freqs[1:])):
                raise ValidationError("tabulated profile must be sorted by frequency")


@lru_cache(maxsize=1)
def _gas_lines() -> dict[str, np.ndarray]:
    """Load the versioned line-coefficient table, split by species."""
    path = resources.files("specshape.data").joinpath("gas_lines.csv")
    species, rows = [], []
    with path.open() as f:
        for row in csv.reader(ln for ln in f if not ln.startswith("#")):
            if row[0] == "species":
                continue
            species.append(row[0])
            rows.append([float(x) for x in row[1:]])
    arr = np.asarray(rows)
    species = np.asarray(species)
    out = {}
    for name in ("O2", "H2O"):
        out[name] = arr[species == name]
    return out


def _line_shape(f_ghz: np.ndarray, f0: np.ndarray, width: np.ndarray,
                interference: np.ndarray) -> np.ndarray:
    """P.676 line-shape factor F_i, (lines x frequencies)."""
    f = f_ghz[np.newaxis, :]
    f0 = f0[:, np.newaxis]
    width = width[:, np.newaxis]
    delta = interference[:, np.newaxis]
    below = (width - delta * (f0 - f)) / ((f0 - f) ** 2 + width**2)
    above = (width - delta * (f0 + f)) / ((f0 + f) ** 2 + width**2)
    return (f / f0) * (below + above)


def _specific_attenuation_db_km(f_hz: np.ndarray, vapor_g_m3: float,
                                temperature_k: float, pressure_hpa: float) -> np.ndarray:
    f_ghz = np.asarray(f_hz, dtype=float) / 1e9
    theta = 300.0 / temperature_k
    e = vapor_g_m3 * temperature_k / 216.7  # water vapor partial pressure, hPa
    p_dry = pressure_hpa - e

    lines = _gas_lines()
    ox, wa = lines["O2"], lines["H2O"]

    # oxygen resonances
    f0 = ox[:, 0] / 1e9
    strength = ox[:, 1] * 1e-7 * p_dry * theta**3 * np.exp(ox[:, 2] * (1.0 - theta))
    width = ox[:, 3] * 1e-4 * (p_dry * theta ** (0.8 - ox[:, 4]) + 1.1 * e * theta)
    width = np.sqrt(width**2 + 2.25e-6)  # Zeeman/Doppler floor
    interference = (ox[:, 5] + ox[:, 6] * theta) * 1e-4 * (p_dry + e) * theta**0.8
    refractivity = np.sum(
        strength[:, None] * _line_shape(f_ghz, f0, width, interference), axis=0
    )

    # dry continuum: Debye spectrum + pressure-induced N2
    d = 5.6e-4 * (p_dry + e) * theta**0.8
    refractivity += f_ghz * p_dry * theta**2 * (
        6.14e-5 / (d * (1.0 + (f_ghz / d) ** 2))
        + 1.4e-12 * p_dry * theta**1.5 / (1.0 + 1.9e-5 * f_ghz**1.5)
    )

    # water vapor resonances
    if e > 0.0:
        f0 = wa[:, 0] / 1e9
        strength = wa[:, 1] * 1e-1 * e * theta**3.5 * np.exp(wa[:, 2] * (1.0 - theta))
        width = wa[:, 3] * 1e-4 * (p_dry * theta ** wa[:, 4] + wa[:, 5] * e * theta ** wa[:, 6])
        width = 0.535 * width + np.sqrt(0.217 * width**2 + 2.1316e-12 * f0**2 / theta)
        refractivity += np.sum(
            strength[:, None] * _line_shape(f_ghz, f0, width, np.zeros_like(f0)),
            axis=0,
        )

    return 0.182 * f_ghz * refractivity


def specific_attenuation(f_hz, profile: ChannelProfile):
    """Specific attenuation gamma(f) in dB/km for scalar or array f.

    Raises OutOfBandError outside [0.05, 1.1] THz and TableCoverageError
    when a tabulated profile does not span the requested frequencies.
    """
    f = np.asarray(f_hz, dtype=float)
    scalar = f.ndim == 0
    f = np.atleast_1d(f)
    if np.any(f < F_MIN_HZ) or np.any(f > F_MAX_HZ):
        raise OutOfBandError(
            f"frequency outside [{F_MIN_HZ:.3g}, {F_MAX_HZ:.3g}] Hz"
        )
    if profile.kind == "tabulated":
        tab = np.asarray(profile.table, dtype=float)
        if np.any(f < tab[0, 0]) or np.any(f > tab[-1, 0]):
            raise TableCoverageError("tabulated profile does not cover grid")
        gamma = np.interp(f, tab[:, 0], tab[:, 1])
    else:
        gamma = _specific_attenuation_db_km(
            f, profile.water_vapor_g_m3, profile.temperature_k, profile.pressure_hpa
        )
    return float(gamma[0]) if scalar else gamma


def channel_response(grid: "FrequencyGrid", profile: ChannelProfile) -> np.ndarray:
    """Linear amplitude response |a(f_k)| of the gas channel over the grid.

    |a| = 10**(-gamma * range_km / 20), clamped away from exact zero so
    values stay in (0, 1] even under extreme absorption.
    """
    gamma = specific_attenuation(grid.frequencies_hz, profile)
    loss_db = gamma * (profile.range_m / 1000.0)
    return np.maximum(10.0 ** (-loss_db / 20.0), _AMPLITUDE_FLOOR)


def load_attenuation_table(path) -> tuple[tuple[float, float], ...]:
    """Read a tabulated-profile CSV with columns (f_hz, gamma_db_per_km)."""
    rows = []
    with open(path) as f:
        for row in csv.reader(ln for ln in f if not ln.startswith("#")):
            if not row or row[0] in ("f_hz",):
                continue
            rows.append((float(row[0]), float(row[1])))
    return tuple(rows)
