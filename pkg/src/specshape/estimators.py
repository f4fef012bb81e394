"""Single-shot estimation: DoA, multipath DoA/power, distances, AoD, MMSE.

All estimators consume one ObservedSpectrum. Lag-domain detection follows
one convention package-wide: mean removal, Hann window, 8x zero-padded
FFT, local maxima above 6x the median magnitude, 3-point parabolic
interpolation. Detected lags are then polished by a harmonic
least-squares refinement (fitting offset + cosine + sine at a candidate
lag and minimizing the residual), which stays accurate deep in the
sub-bin regime where a windowed FFT peak alone cannot be.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import optimize, signal

from .scenario import C_LIGHT, ZetaSpectrum, nyquist_lag
from .synth import ObservedSpectrum, shaper_zeta

DC_EXCLUSION_FRACTION = 0.05
PEAK_THRESHOLD_FACTOR = 6.0
PAD_FACTOR = 8
NEAR_ENDFIRE_BINS = 2.0


class EstimationError(RuntimeError):
    """Base class for single-shot estimation failures."""


class NoPeakError(EstimationError):
    """No lag peak exceeds the noise-floor threshold."""


class OutOfRangeError(EstimationError):
    """Dominant lag is inconsistent with any direction of arrival."""


class HarmonicCountMismatchError(EstimationError):
    """Fewer resolvable harmonics than the TX-pair geometry requires."""


class InconsistentLagsError(EstimationError):
    """Detected lags invert to a cosine outside [-1, 1] beyond tolerance."""


class ModelOrderTooLargeError(ValueError):
    """Requested subspace model order exceeds what the sequence supports."""


class AliasRiskWarning(UserWarning):
    """Requested search range exceeds the unambiguous lag of the grid."""


def lag_transform(values: np.ndarray, d_f: float, remove_mean: bool = True,
                  window: bool = True, pad_factor: int = PAD_FACTOR) -> ZetaSpectrum:
    """Magnitude of the zero-padded DFT of a frequency-domain sequence.

    The lag axis runs from 0 to the Nyquist lag 1/(2*d_f).
    """
    x = np.asarray(values, dtype=float)
    if remove_mean:
        x = x - x.mean()
    if window:
        x = x * np.hanning(len(x))
    n_fft = pad_factor * len(values)
    mag = np.abs(np.fft.rfft(x, n=n_fft))
    zeta = np.fft.rfftfreq(n_fft, d=d_f)
    return ZetaSpectrum(zeta_s=zeta, magnitude=mag)


def zeta_spectrum(spectrum: ObservedSpectrum) -> ZetaSpectrum:
    """Spectrum of the measured power spectrum z^2 (mean removed, Hann
    windowed, 8x zero-padded)."""
    return lag_transform(spectrum.z**2, spectrum.grid.spacing_hz)


def _local_maxima(mag: np.ndarray) -> np.ndarray:
    idx = np.nonzero((mag[1:-1] > mag[:-2]) & (mag[1:-1] >= mag[2:]))[0] + 1
    return idx


def _parabolic_peak(x: np.ndarray, y: np.ndarray, i: int) -> tuple[float, float]:
    """Refine peak i of sampled curve (x uniform) by a 3-point parabola."""
    if i <= 0 or i >= len(y) - 1:
        return float(x[i]), float(y[i])
    a, b, c = y[i - 1], y[i], y[i + 1]
    denom = a - 2.0 * b + c
    if denom == 0.0:
        return float(x[i]), float(y[i])
    delta = 0.5 * (a - c) / denom
    delta = float(np.clip(delta, -0.5, 0.5))
    step = x[1] - x[0]
    return float(x[i] + delta * step), float(b - 0.25 * (a - c) * delta)


@dataclass(frozen=True)
class LagPeak:
    zeta_s: float
    amplitude: float


def find_lag_peaks(zspec: ZetaSpectrum, min_zeta: float = 0.0,
                   max_zeta: float = np.inf,
                   threshold_factor: float = PEAK_THRESHOLD_FACTOR) -> list[LagPeak]:
    """Interpolated local maxima above threshold_factor x median magnitude,
    strongest first."""
    mag = zspec.magnitude
    floor = threshold_factor * np.median(mag)
    peaks = []
    for i in _local_maxima(mag):
        if mag[i] <= floor:
            continue
        zeta, amp = _parabolic_peak(zspec.zeta_s, mag, i)
        if min_zeta <= zeta <= max_zeta:
            peaks.append(LagPeak(zeta_s=zeta, amplitude=amp))
    peaks.sort(key=lambda p: (-p.amplitude, p.zeta_s))
    return peaks


def _harmonic_residual(x: np.ndarray, f_hz: np.ndarray, zeta_s) -> float:
    """Residual sum of squares of the best fit x ~ c0 + c1 cos + c2 sin at
    lag zeta."""
    phase = 2.0 * np.pi * f_hz * zeta_s
    design = np.column_stack([np.ones_like(f_hz), np.cos(phase), np.sin(phase)])
    _, res, rank, _ = np.linalg.lstsq(design, x, rcond=None)
    if rank < 3 or res.size == 0:
        fit = design @ np.linalg.lstsq(design, x, rcond=None)[0]
        return float(np.sum((x - fit) ** 2))
    return float(res[0])


def _harmonic_fit(x: np.ndarray, f_hz: np.ndarray, zetas: list[float]) -> np.ndarray:
    """LS reconstruction of x from offset plus tones at the given lags."""
    cols = [np.ones_like(f_hz)]
    for z in zetas:
        phase = 2.0 * np.pi * f_hz * z
        cols += [np.cos(phase), np.sin(phase)]
    design = np.column_stack(cols)
    coef = np.linalg.lstsq(design, x, rcond=None)[0]
    return design @ coef


def refine_lag(x: np.ndarray, f_hz: np.ndarray, lo: float, hi: float,
               n_scan: int = 64) -> float:
    """Lag minimizing the single-tone harmonic residual on [lo, hi].

    A coarse scan guards against local minima, then Brent polishes.
    """
    candidates = np.linspace(lo, hi, n_scan)
    residuals = [_harmonic_residual(x, f_hz, z) for z in candidates]
    i = int(np.argmin(residuals))
    a = candidates[max(i - 1, 0)]
    b = candidates[min(i + 1, n_scan - 1)]
    if a == b:
        return float(candidates[i])
    result = optimize.minimize_scalar(
        lambda z: _harmonic_residual(x, f_hz, z),
        bounds=(a, b),
        method="bounded",
        options={"xatol": (hi - lo) * 1e-9},
    )
    return float(result.x)


def _refine_small_lag(x: np.ndarray, f_hz: np.ndarray, hi: float) -> float:
    """Refinement for lags inside the FFT mainlobe, scanning five decades
    below the bracket top on a log-spaced grid before polishing."""
    lo = hi * 1e-5
    candidates = np.geomspace(lo, hi, 220)
    residuals = [_harmonic_residual(x, f_hz, z) for z in candidates]
    i = int(np.argmin(residuals))
    a = candidates[max(i - 1, 0)]
    b = candidates[min(i + 1, len(candidates) - 1)]
    result = optimize.minimize_scalar(
        lambda z: _harmonic_residual(x, f_hz, z),
        bounds=(a, b),
        method="bounded",
        options={"xatol": a * 1e-9},
    )
    return float(result.x)


def estimate_doa_single(spectrum: ObservedSpectrum, d_m: float) -> float:
    """Direction of arrival (degrees) from a single-path observation.

    The dominant non-DC lag peak (DC exclusion 0.05*(2D/c)) is refined and
    inverted through theta = 2 asin(sqrt(zeta c / 2D)). Raises
    NoPeakError when nothing exceeds the noise floor and OutOfRangeError
    when the refined lag is inconsistent with any angle.
    """
    theta, _ = _estimate_doa_single_diag(spectrum, d_m)
    return theta


def _estimate_doa_single_diag(spectrum: ObservedSpectrum, d_m: float) -> tuple[float, dict]:
    x = spectrum.z**2
    f = spectrum.grid.frequencies_hz
    d_f = spectrum.grid.spacing_hz
    shaper_band = 2.0 * d_m / C_LIGHT
    bin_width = 1.0 / (len(x) * d_f)

    centered = x - x.mean()
    if float(np.sqrt(np.mean(centered**2))) <= 1e-12 * max(float(x.mean()), np.finfo(float).tiny):
        raise NoPeakError("power spectrum is flat (endfire or empty)")

    zspec = lag_transform(x, d_f)
    peaks = find_lag_peaks(zspec, min_zeta=DC_EXCLUSION_FRACTION * shaper_band)
    if peaks:
        coarse = peaks[0].zeta_s
    else:
        # everything may sit inside the DC exclusion zone (near-endfire);
        # model refinement below can still resolve it, so only give up if
        # the whole lag spectrum is below threshold
        if not find_lag_peaks(zspec, min_zeta=0.0):
            raise NoPeakError("no lag peak above the noise-floor threshold")
        coarse = 0.0

    if coarse > shaper_band + bin_width:
        raise OutOfRangeError(
            f"dominant lag {coarse:.3e}s exceeds the shaper band {shaper_band:.3e}s"
        )

    diagnostics = {"coarse_zeta_s": coarse}
    lo = max(coarse - bin_width, bin_width * 1e-3)
    hi = min(coarse + bin_width, shaper_band + bin_width)
    zeta_hat = refine_lag(centered, f, lo, hi)
    residual = _harmonic_residual(centered, f, zeta_hat)
    if coarse < 10.0 * bin_width or residual > 0.5 * float(np.sum(centered**2)):
        # a tone under ~4 bins interferes with its negative-lag mirror and
        # the skirt of the removed angle-independent term, displacing the
        # apparent FFT peak by several bins; scan the small-lag regime too
        # and keep whichever lag explains the spectrum better
        scan_hi = min(max(coarse + bin_width, 4.0 * bin_width), shaper_band)
        small = _refine_small_lag(centered, f, scan_hi)
        if _harmonic_residual(centered, f, small) < residual:
            zeta_hat = small
    diagnostics["near_endfire"] = bool(zeta_hat < NEAR_ENDFIRE_BINS * bin_width)

    ratio = zeta_hat * C_LIGHT / (2.0 * d_m)
    if ratio > 1.0 + 1e-9:
        raise OutOfRangeError(
            f"refined lag {zeta_hat:.3e}s maps outside [0, 180] degrees"
        )
    diagnostics["zeta_s"] = zeta_hat
    theta = float(np.degrees(2.0 * np.arcsin(np.sqrt(min(ratio, 1.0)))))
    return theta, diagnostics


def lowpass(zspec: ZetaSpectrum, d_m: float) -> ZetaSpectrum:
    """Zero every lag bin beyond 2D/c plus one guard bin."""
    cutoff = 2.0 * d_m / C_LIGHT + zspec.spacing_s
    mag = np.where(zspec.zeta_s <= cutoff, zspec.magnitude, 0.0)
    return ZetaSpectrum(zeta_s=zspec.zeta_s, magnitude=mag)


def lowpass_power_spectrum(power: np.ndarray, d_f: float, d_m: float,
                           stopband_rejection_db: float = 70.0) -> np.ndarray:
    """Low-pass the power spectrum along f with lag cutoff 2D/c.

    Zero-phase FIR (Kaiser-windowed sinc) with reflected edges; passband
    covers the whole shaper band, the stopband starts at 12x the cutoff so
    inter-path cross terms obeying the 50*(2D) separation rule land deep
    in the stopband.
    """
    nyq = 1.0 / (2.0 * d_f)
    cutoff = 2.0 * d_m / C_LIGHT
    stop = min(12.0 * cutoff, 0.9 * nyq)
    if cutoff >= nyq:
        return np.asarray(power, dtype=float).copy()
    numtaps, beta = signal.kaiserord(stopband_rejection_db, (stop - cutoff) / nyq)
    numtaps = min(numtaps | 1, (len(power) // 2) * 2 - 1)
    taps = signal.firwin(numtaps, (cutoff + stop) / 2.0, window=("kaiser", beta), fs=2.0 * nyq)
    half = numtaps // 2
    padded = np.pad(np.asarray(power, dtype=float), half, mode="reflect")
    return np.convolve(padded, taps, mode="valid")


def harmonic_decompose(data, method: str = "periodogram", max_components: int = 4,
                       d_f: float | None = None) -> list[tuple[float, float]]:
    """Decompose a power-spectrum sequence into (lag, amplitude) tones.

    `data` may be an ObservedSpectrum, a raw power-spectrum array (then
    d_f is required), or - for the periodogram method only - a
    ZetaSpectrum. The periodogram picks interpolated local maxima of the
    lag spectrum; `music` eigendecomposes the forward-backward
    autocorrelation of the sequence (model order 2*max_components) and
    reads peaks off the noise-subspace pseudo-spectrum. Amplitudes come
    from a least-squares cosine fit at the detected lags. An empty list
    means nothing rose above the detection floor.
    """
    if max_components < 1:
        raise ValueError("max_components must be >= 1")

    if isinstance(data, ObservedSpectrum):
        x = data.z**2
        d_f = data.grid.spacing_hz
        f = data.grid.frequencies_hz
    elif isinstance(data, ZetaSpectrum):
        if method != "periodogram":
            raise TypeError("subspace methods need the power-spectrum sequence")
        peaks = find_lag_peaks(data)[:max_components]
        return [(p.zeta_s, p.amplitude) for p in peaks]
    else:
        if d_f is None:
            raise ValueError("raw arrays need d_f")
        x = np.asarray(data, dtype=float)
        f = np.arange(len(x)) * d_f

    if method == "periodogram":
        zspec = lag_transform(x, d_f)
        peaks = find_lag_peaks(zspec)[:max_components]
        lags = [p.zeta_s for p in peaks]
    elif method == "music":
        lags = _music_lags(x, d_f, max_components)
    else:
        raise ValueError(f"unknown method: {method}")

    if not lags:
        return []
    centered = x - x.mean()
    out = []
    for lag in sorted(lags):
        others = [z for z in lags if z != lag]
        residual = centered - _harmonic_fit(centered, f, others) if others else centered
        bin_width = 1.0 / (len(x) * d_f)
        lo = max(lag - bin_width, bin_width * 1e-3)
        refined = refine_lag(residual, f, lo, lag + bin_width)
        phase = 2.0 * np.pi * f * refined
        design = np.column_stack([np.ones_like(f), np.cos(phase), np.sin(phase)])
        coef = np.linalg.lstsq(design, centered, rcond=None)[0]
        out.append((refined, float(np.hypot(coef[1], coef[2]))))
    out.sort(key=lambda t: -t[1])
    return out


def _music_lags(x: np.ndarray, d_f: float, max_components: int) -> list[float]:
    x = np.asarray(x, dtype=float)
    n = len(x)
    order = 2 * max_components
    if order > n // 3:
        raise ModelOrderTooLargeError(
            f"model order {order} exceeds n_samples/3 = {n // 3}"
        )
    centered = x - x.mean()
    if not np.any(np.abs(centered) > 1e-14 * max(abs(x.mean()), 1.0)):
        return []
    m = n // 3  # subarray length
    snapshots = np.lib.stride_tricks.sliding_window_view(centered, m).T
    r = snapshots @ snapshots.T / snapshots.shape[1]
    flip = np.eye(m)[::-1]
    r = 0.5 * (r + flip @ r.T @ flip)
    eigvals, eigvecs = np.linalg.eigh(r)
    noise = eigvecs[:, : m - order]
    zeta_grid = np.linspace(0.0, 1.0 / (2.0 * d_f), PAD_FACTOR * n // 2 + 1)
    steering = np.exp(
        -2j * np.pi * d_f * np.outer(np.arange(m), zeta_grid)
    ) / np.sqrt(m)
    denom = np.sum(np.abs(noise.T @ steering) ** 2, axis=0)
    pseudo = 1.0 / np.maximum(denom, 1e-300)
    floor = PEAK_THRESHOLD_FACTOR * np.median(pseudo)
    lags = []
    for i in _local_maxima(pseudo):
        if pseudo[i] > floor:
            lag, amp = _parabolic_peak(zeta_grid, pseudo, i)
            lags.append((lag, amp))
    lags.sort(key=lambda t: -t[1])
    return [lag for lag, _ in lags[:max_components] if lag > 0.0]


@dataclass(frozen=True)
class MatchedFilterCurve:
    theta_deg: np.ndarray
    energy: np.ndarray


def matched_filter(spectrum: ObservedSpectrum, d_m: float,
                   resolution_deg: float = 0.1,
                   taper: bool = True) -> MatchedFilterCurve:
    """Correlate the power spectrum against the expected shaper harmonic.

    E(theta) = integral of cos(2 pi f (2D/c) sin^2(theta/2)) times the
    (mean-removed) power spectrum, by trapezoid over the grid. Mean
    removal stops the angle-independent term from masking the harmonic
    peaks; the optional Hann taper (default on) suppresses finite-band
    sidelobes and cancels out of peak-height ratios.
    """
    if resolution_deg <= 0.0:
        raise ValueError("resolution_deg must be > 0")
    f = spectrum.grid.frequencies_hz
    x = spectrum.z**2
    x = x - x.mean()
    if taper:
        x = x * np.hanning(len(x))
    thetas = np.arange(0.0, 180.0 + resolution_deg / 2.0, resolution_deg)
    energy = np.empty_like(thetas)
    chunk = 256
    for start in range(0, len(thetas), chunk):
        lags = shaper_zeta(thetas[start : start + chunk], d_m)
        kernel = np.cos(2.0 * np.pi * np.outer(lags, f))
        energy[start : start + chunk] = np.trapezoid(kernel * x, f, axis=1)
    return MatchedFilterCurve(theta_deg=thetas, energy=energy)


def matched_filter_peaks(curve: MatchedFilterCurve, d_m: float,
                         bandwidth_hz: float,
                         threshold_factor: float = PEAK_THRESHOLD_FACTOR) -> list[tuple[float, float]]:
    """(theta, height) local maxima of the matched-filter curve, strongest
    first, using the same 6x-median floor as lag-domain detection.

    The band does not start at DC, so each genuine peak rides on carrier
    fringes about 1/f_center wide in lag; maxima whose lag falls within
    the resolution window of a stronger peak are folded into it.
    """
    floor = threshold_factor * np.median(np.abs(curve.energy))
    raw = []
    for i in _local_maxima(curve.energy):
        if curve.energy[i] <= floor:
            continue
        theta, height = _parabolic_peak(curve.theta_deg, curve.energy, i)
        raw.append((float(np.clip(theta, 0.0, 180.0)), height))
    raw.sort(key=lambda t: -t[1])
    window = 2.5 / bandwidth_hz
    out: list[tuple[float, float]] = []
    for theta, height in raw:
        lag = shaper_zeta(theta, d_m)
        if all(abs(lag - shaper_zeta(t, d_m)) > window for t, _ in out):
            out.append((theta, height))
    return out


def estimate_rel_distances(spectrum: ObservedSpectrum, d_m: float,
                           doas_deg: list[float] | None = None,
                           max_distance_m: float | None = None) -> list[float]:
    """Pairwise path-length differences (meters) from the lag spectrum.

    Each inter-path cross term appears as a cluster of four tones at
    dT + {-zeta_p, 0, zeta_k - zeta_p, zeta_k} around the time-of-flight
    difference dT. With DoA estimates supplied, the cluster is matched
    against that pattern, pinning c*dT to a fraction of a lag bin;
    otherwise the amplitude-weighted cluster centroid is returned, which
    carries the (bounded by D) shaper-shift bias.
    """
    zs = zeta_spectrum(spectrum)
    nyq = nyquist_lag(spectrum.grid)
    if max_distance_m is not None and max_distance_m > C_LIGHT * nyq:
        warnings.warn(
            f"search range {max_distance_m} m exceeds the unambiguous "
            f"{C_LIGHT * nyq:.3f} m; distances may alias",
            AliasRiskWarning,
        )
    shaper_band = 2.0 * d_m / C_LIGHT
    guard = 2.0 / (len(spectrum.z) * spectrum.grid.spacing_hz)
    peaks = find_lag_peaks(zs, min_zeta=shaper_band + guard)
    # cross terms carry power comparable to the shaper tones; anything far
    # below the global lag-spectrum scale is window leakage, not a path pair
    reference = float(np.max(zs.magnitude[zs.zeta_s > guard], initial=0.0))
    peaks = [p for p in peaks if p.amplitude >= 0.02 * reference]
    if peaks:
        peaks = [p for p in peaks if p.amplitude >= 0.05 * peaks[0].amplitude]
    if not peaks:
        return []

    clusters = _cluster_lags(sorted(peaks, key=lambda p: p.zeta_s), shaper_band)
    distances = []
    for cluster in clusters:
        lag = _cluster_tof(cluster, d_m, doas_deg)
        distances.append(lag * C_LIGHT)
    return sorted(distances)


def _cluster_lags(peaks: list[LagPeak], shaper_band: float) -> list[list[LagPeak]]:
    clusters = [[peaks[0]]]
    for peak in peaks[1:]:
        if peak.zeta_s - clusters[-1][-1].zeta_s <= 1.2 * shaper_band:
            clusters[-1].append(peak)
        else:
            clusters.append([peak])
    return clusters


def _cluster_tof(cluster: list[LagPeak], d_m: float,
                 doas_deg: list[float] | None) -> float:
    members = np.array([p.zeta_s for p in cluster])
    weights = np.array([p.amplitude for p in cluster])
    if doas_deg is not None and len(doas_deg) >= 2 and len(members) >= 2:
        best = None
        for a in doas_deg:
            for b in doas_deg:
                if a == b:
                    continue
                zp, zk = shaper_zeta(a, d_m), shaper_zeta(b, d_m)
                offsets = np.array([-zp, 0.0, zk - zp, zk])
                # anchor each member to each offset, score the implied dT
                for m in members:
                    for o in offsets:
                        tof = m - o
                        if tof <= 0.0:
                            continue
                        err = sum(
                            np.min(np.abs(mm - (tof + offsets))) for mm in members
                        )
                        if best is None or err < best[0]:
                            best = (err, tof)
        if best is not None:
            return best[1]
    return float(np.average(members, weights=weights))


def estimate_aod_doa(spectrum: ObservedSpectrum, d_m: float) -> tuple[float, float]:
    """(aod_deg, doa_deg) from the two largest lags of a TX-pair shot.

    The largest lag is (D/c)(4 - cos_i - cos_d) and the second largest
    (D/c)(3 - cos_d), so the pair inverts uniquely on [0, 180]. The two
    remaining harmonics only serve as a consistency check (a warning is
    emitted when the best match deviates by more than 5 percent).
    """
    x = spectrum.z**2
    f = spectrum.grid.frequencies_hz
    d_f = spectrum.grid.spacing_hz
    shaper_band = 2.0 * d_m / C_LIGHT
    bin_width = 1.0 / (len(x) * d_f)

    zspec = lag_transform(x, d_f)
    peaks = find_lag_peaks(zspec, min_zeta=DC_EXCLUSION_FRACTION * shaper_band)
    # window sidelobes of the strong harmonics can clear the median floor;
    # the true four-tone set spans only a 2:1 amplitude range, so anything
    # an order of magnitude below the strongest peak is not a harmonic
    if peaks:
        peaks = [p for p in peaks if p.amplitude >= 0.1 * peaks[0].amplitude][:4]
    if len(peaks) < 2:
        raise HarmonicCountMismatchError(
            f"need >= 2 resolvable harmonics, found {len(peaks)}"
        )
    lags = sorted(p.zeta_s for p in peaks)
    centered = x - x.mean()
    refined = []
    for lag in lags:
        others = [z for z in lags if z != lag]
        residual = centered - _harmonic_fit(centered, f, others)
        refined.append(
            refine_lag(residual, f, max(lag - bin_width, bin_width * 1e-3), lag + bin_width)
        )
    refined.sort()
    zeta1, zeta2 = refined[-1], refined[-2]

    cos_d = 3.0 - zeta2 * C_LIGHT / d_m
    cos_d = _checked_cosine(cos_d, "aod")
    theta_d = float(np.degrees(np.arccos(cos_d)))
    cos_i = 4.0 - zeta1 * C_LIGHT / d_m - cos_d
    cos_i = _checked_cosine(cos_i, "doa")
    theta_i = float(np.degrees(np.arccos(cos_i)))

    scale = d_m / C_LIGHT
    expected_rest = [scale * (1.0 - cos_i), scale * (2.0 - cos_d + cos_i)]
    rest = refined[:-2]
    for expect in expected_rest:
        if expect < DC_EXCLUSION_FRACTION * shaper_band or not rest:
            continue
        residual = min(abs(r - expect) for r in rest) / expect
        if residual > 0.05:
            warnings.warn(
                f"secondary harmonic off by {residual:.1%} from the lag "
                "structure implied by the two largest peaks",
                UserWarning,
            )
    return theta_d, theta_i


def _checked_cosine(value: float, label: str, tol: float = 0.02) -> float:
    if abs(value) > 1.0 + tol:
        raise InconsistentLagsError(
            f"{label} inversion gives cos = {value:.4f}, outside [-1, 1]"
        )
    return float(np.clip(value, -1.0, 1.0))


def _grid_argmin_refined(grid: np.ndarray, values: np.ndarray) -> float:
    i = int(np.argmin(values))
    if 0 < i < len(values) - 1:
        # an exact zero at a grid point IS the minimum; the parabola
        # through asymmetric neighbors would shift off it
        if values[i] <= 1e-12 * max(values[i - 1], values[i + 1]):
            return float(grid[i])
    theta, _ = _parabolic_peak(grid, -values, i)
    return float(np.clip(theta, grid[0], grid[-1]))


def mmse_estimate(observed: ObservedSpectrum, template_builder,
                  theta_grid_deg: np.ndarray) -> float:
    """Angle minimizing the squared distance between the observed power
    spectrum and noise-free templates, with 3-point parabolic refinement.

    template_builder maps an angle (degrees) to the noise-free power
    spectrum on the observation grid.
    """
    theta_grid_deg = np.asarray(theta_grid_deg, dtype=float)
    a = observed.z**2
    distances = np.empty(len(theta_grid_deg))
    for i, theta in enumerate(theta_grid_deg):
        t = template_builder(theta)
        distances[i] = np.sum((a - t) ** 2)
    return _grid_argmin_refined(theta_grid_deg, distances)


@dataclass(frozen=True)
class EstimateReport:
    """Bundle of everything one shot reveals about the propagation paths."""

    doas_deg: list[float]
    powers_db: list[float]
    rel_distances_m: list[float] = field(default_factory=list)
    aod_deg: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(not 0.0 <= t <= 180.0 for t in self.doas_deg):
            raise ValueError("DoA outside [0, 180]")
        if any(d < 0.0 for d in self.rel_distances_m):
            raise ValueError("negative relative distance")

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(asdict(self), indent=indent)


def build_report(spectrum: ObservedSpectrum, d_m: float,
                 tx_mode: str = "single") -> EstimateReport:
    """Full single-shot report: DoAs with relative powers, pairwise
    distances (TX single), or the AoD/DoA pair (TX pair)."""
    if tx_mode == "pair":
        aod, doa = estimate_aod_doa(spectrum, d_m)
        return EstimateReport(
            doas_deg=[doa], powers_db=[0.0], aod_deg=aod,
            diagnostics={"method": "aod_harmonics"},
        )

    curve = matched_filter(spectrum, d_m)
    peaks = matched_filter_peaks(curve, d_m, spectrum.grid.bandwidth_hz)
    diagnostics: dict = {"method": "matched_filter", "n_peaks": len(peaks)}
    if not peaks:
        # single shaper tone may be too weak for the curve floor; fall
        # back to the lag-domain estimator
        theta, diag = _estimate_doa_single_diag(spectrum, d_m)
        diagnostics.update(diag)
        bin_width = 1.0 / (len(spectrum.z) * spectrum.grid.spacing_hz)
        if diag["zeta_s"] < 5.0 * bin_width:
            # nothing cleared the curve floor and the recovered lag sits in
            # the skirt of the removed mean: endfire-degenerate geometry
            diagnostics["degenerate"] = True
        return EstimateReport(doas_deg=[theta], powers_db=[0.0], diagnostics=diagnostics)

    shaper_band = 2.0 * d_m / C_LIGHT
    bin_width = 1.0 / (len(spectrum.z) * spectrum.grid.spacing_hz)
    endfire_theta = np.degrees(
        2.0 * np.arcsin(np.sqrt(min(NEAR_ENDFIRE_BINS * bin_width / shaper_band, 1.0)))
    )
    # lags under ~2 bins are indistinguishable from the residual of the
    # removed angle-independent term; angles that map there are degenerate
    resolvable = [(t, h) for t, h in peaks if t >= endfire_theta]
    diagnostics["near_endfire"] = len(resolvable) < len(peaks)
    if not resolvable:
        return EstimateReport(
            doas_deg=[peaks[0][0]], powers_db=[0.0],
            diagnostics={**diagnostics, "degenerate": True},
        )
    diagnostics["peak_heights"] = [h for _, h in resolvable]

    doas = [t for t, _ in resolvable]
    top = resolvable[0][1]
    powers = [float(10.0 * np.log10(max(h, 1e-300) / top)) for _, h in resolvable]
    distances = estimate_rel_distances(spectrum, d_m, doas_deg=doas)
    return EstimateReport(
        doas_deg=doas, powers_db=powers, rel_distances_m=distances,
        diagnostics=diagnostics,
    )
