"""Numerical Cramer-Rao bounds under the Rician magnitude observation
model, plus deterministic ULA and lens-array baselines and the Monte
Carlo RMSE harness.

The per-bin observation is Rice(nu_k(angles), sigma^2 = N0/2) with the
channel treated as known (the baseline nuisance mode); an optional
flat-gain mode augments the parameter vector with a common amplitude to
quantify the cost of not knowing the channel level. Expectations over z
use Gauss-Legendre quadrature on [max(0, nu - 12 sigma), nu + 12 sigma],
which keeps the nodes where the density lives even at high SNR.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .channel import channel_response
from .scenario import C_LIGHT, Scenario, ValidationError
from .synth import (
    noise_power_for_snr,
    shaper_zeta,
    synth_aod,
    synth_single,
    trial_rng,
    tx_pair_lag,
)
from . import estimators

QUAD_NODES = 240
TAIL_SIGMAS = 12.0


class EstimatorAbortError(RuntimeError):
    """Monte Carlo aborted: too many single-shot estimation failures."""


@dataclass(frozen=True)
class FisherResult:
    """Fisher information over the angle parameters, in rad^-2."""

    params: tuple[str, ...]
    information: np.ndarray

    @property
    def crb_deg(self) -> np.ndarray:
        """Per-parameter sqrt of the inverse-information diagonal, degrees.

        Singular information yields inf for the affected parameter rather
        than raising.
        """
        j = np.atleast_2d(self.information)
        n = j.shape[0]
        out = np.full(n, np.inf)
        keep = np.abs(np.diag(j)) > 1e-300
        if np.any(keep):
            sub = j[np.ix_(keep, keep)]
            try:
                inv = np.linalg.inv(sub)
                diag = np.diag(inv).copy()
                if np.all(diag > 0.0):
                    out[keep] = np.degrees(np.sqrt(diag))
            except np.linalg.LinAlgError:
                pass
        return out


def rice_loglik(z, nu, n0: float):
    """Log density of the Rice magnitude observation.

    ln p = ln z - ln(N0/2) - (z^2 + nu^2)/N0 + ln I0(2 z nu / N0), with
    the Bessel term computed from the exponentially scaled i0e so large
    arguments stay finite.
    """
    z = np.asarray(z, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if np.any(z < 0.0):
        raise ValueError("z must be >= 0")
    if np.any(nu < 0.0):
        raise ValueError("nu must be >= 0")
    if not n0 > 0.0:
        raise ValueError("n0 must be > 0")
    arg = 2.0 * z * nu / n0
    with np.errstate(divide="ignore"):
        log_z = np.log(z)
    return (
        log_z
        - np.log(n0 / 2.0)
        - (z**2 + nu**2) / n0
        + np.log(special.i0e(arg))
        + arg
    )


def bessel_ratio(x):
    """I1(x)/I0(x), overflow-safe for any x >= 0."""
    x = np.asarray(x, dtype=float)
    return special.i1e(x) / special.i0e(x)


def _score_moments(nu: np.ndarray, n0: float, nodes: int = QUAD_NODES) -> tuple[np.ndarray, np.ndarray]:
    """E[d ln p / d nu] and E[(d ln p / d nu)^2] per bin by quadrature.

    The score wrt nu is -2 nu/N0 + (2 z/N0) I1/I0(2 z nu/N0); the first
    moment should vanish (regularity), the second drives the Fisher sums.
    """
    sigma = np.sqrt(n0 / 2.0)
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    lo = np.maximum(nu - TAIL_SIGMAS * sigma, 0.0)
    hi = nu + TAIL_SIGMAS * sigma
    x_gl, w_gl = np.polynomial.legendre.leggauss(nodes)
    # map [-1, 1] nodes onto each bin's interval
    z = 0.5 * (hi - lo)[:, None] * x_gl[None, :] + 0.5 * (hi + lo)[:, None]
    w = 0.5 * (hi - lo)[:, None] * w_gl[None, :]
    with np.errstate(divide="ignore"):
        pdf = np.exp(rice_loglik(z, nu[:, None], n0))
    pdf = np.where(z > 0.0, pdf, 0.0)
    score = -2.0 * nu[:, None] / n0 + (2.0 * z / n0) * bessel_ratio(
        2.0 * z * nu[:, None] / n0
    )
    first = np.sum(score * pdf * w, axis=1)
    second = np.sum(score**2 * pdf * w, axis=1)
    return first, second


def _sind(theta_deg: float) -> float:
    """sin in degrees with exact zeros at the endfire endpoints, where the
    shaper derivative genuinely vanishes (float sin(pi) does not)."""
    if theta_deg % 180.0 == 0.0:
        return 0.0
    return float(np.sin(np.radians(theta_deg)))


def _ssh_nu_and_gradient(scenario: Scenario, theta_deg: float) -> tuple[np.ndarray, np.ndarray]:
    """nu_k(theta) and d nu_k / d theta (per radian) for the single-path
    shaper model nu = g a |cos(pi f zeta(theta))|."""
    path = scenario.paths[0]
    f = scenario.grid.frequencies_hz
    amplitude = path.gain_linear * channel_response(scenario.grid, scenario.channel)
    zeta = shaper_zeta(theta_deg, scenario.d_m)
    phase = np.pi * f * zeta
    cos_term = np.cos(phase)
    nu = amplitude * np.abs(cos_term)
    dzeta_dtheta = (scenario.d_m / C_LIGHT) * _sind(theta_deg)
    dnu = -amplitude * np.sign(cos_term) * np.sin(phase) * np.pi * f * dzeta_dtheta
    return nu, dnu


def fim_ssh_doa(scenario: Scenario, theta_deg: float,
                nuisance: str = "known") -> FisherResult:
    """Fisher information for DoA from the single-path shaper observation.

    nuisance="known" treats the channel as known (1x1 information in
    theta); "flat_gain" adds a common amplitude scale as a second unknown
    and returns the 2x2 information over (theta, gain). At 0 or 180
    degrees the shaper derivative vanishes for every bin, so the
    information is singular and crb_deg reports inf.
    """
    mean = synth_single(scenario.replace(
        paths=(scenario.paths[0].__class__(theta_deg=theta_deg,
                                           gain_linear=scenario.paths[0].gain_linear),),
    ))
    n0 = noise_power_for_snr(mean, scenario.snr_db)
    if n0 <= 0.0:
        raise ValidationError("Fisher information needs finite SNR")
    nu, dnu_dtheta = _ssh_nu_and_gradient(scenario, theta_deg)
    _, second = _score_moments(nu, n0)
    if nuisance == "known":
        j = np.array([[np.sum(second * dnu_dtheta**2)]])
        return FisherResult(params=("theta_i",), information=j)
    if nuisance == "flat_gain":
        gain = scenario.paths[0].gain_linear
        dnu_dgain = nu / gain
        j = np.empty((2, 2))
        j[0, 0] = np.sum(second * dnu_dtheta**2)
        j[0, 1] = j[1, 0] = np.sum(second * dnu_dtheta * dnu_dgain)
        j[1, 1] = np.sum(second * dnu_dgain**2)
        return FisherResult(params=("theta_i", "gain"), information=j)
    raise ValueError(f"unknown nuisance mode: {nuisance}")


def score_regularity(scenario: Scenario, theta_deg: float) -> float:
    """Sum over bins of E[score]; should be 0 to quadrature accuracy."""
    mean = synth_single(scenario.replace(
        paths=(scenario.paths[0].__class__(theta_deg=theta_deg),),
    ))
    n0 = noise_power_for_snr(mean, scenario.snr_db)
    nu, dnu = _ssh_nu_and_gradient(scenario, theta_deg)
    first, _ = _score_moments(nu, n0)
    return float(np.sum(first * dnu))


def _joint_nu_and_gradients(scenario: Scenario, theta_i_deg: float,
                            theta_d_deg: float):
    path = scenario.paths[0]
    f = scenario.grid.frequencies_hz
    amplitude = path.gain_linear * channel_response(scenario.grid, scenario.channel)
    phase_i = np.pi * f * shaper_zeta(theta_i_deg, scenario.d_m)
    phase_d = np.pi * f * tx_pair_lag(theta_d_deg, scenario.d_m,
                                      scenario.tx_delay_factor)
    cos_i, cos_d = np.cos(phase_i), np.cos(phase_d)
    nu = amplitude * np.abs(cos_i * cos_d)
    scale = np.pi * f * (scenario.d_m / C_LIGHT)
    dnu_i = (
        -amplitude * np.abs(cos_d) * np.sign(cos_i) * np.sin(phase_i)
        * scale * _sind(theta_i_deg)
    )
    dnu_d = (
        -amplitude * np.abs(cos_i) * np.sign(cos_d) * np.sin(phase_d)
        * scale * _sind(theta_d_deg)
    )
    return nu, dnu_i, dnu_d


def fim_joint(scenario: Scenario, theta_i_deg: float,
              theta_d_deg: float) -> FisherResult:
    """2x2 Fisher information over (theta_i, theta_d) for the TX-pair
    observation nu = g a |cos(pi f (2D/c) sin^2(ti/2)) cos(pi f (D/c)(3 -
    cos td))|."""
    if scenario.tx_mode != "pair":
        raise ValidationError("fim_joint requires a tx_mode=pair scenario")
    path = scenario.paths[0]
    mean = synth_aod(scenario.replace(
        paths=(path.__class__(theta_deg=theta_i_deg, aod_deg=theta_d_deg,
                              gain_linear=path.gain_linear),),
    ))
    n0 = noise_power_for_snr(mean, scenario.snr_db)
    if n0 <= 0.0:
        raise ValidationError("Fisher information needs finite SNR")
    nu, dnu_i, dnu_d = _joint_nu_and_gradients(scenario, theta_i_deg, theta_d_deg)
    _, second = _score_moments(nu, n0)
    j = np.empty((2, 2))
    j[0, 0] = np.sum(second * dnu_i**2)
    j[1, 1] = np.sum(second * dnu_d**2)
    j[0, 1] = j[1, 0] = np.sum(second * dnu_i * dnu_d)
    return FisherResult(params=("theta_i", "theta_d"), information=j)


def crb_ula(n_elements: int, snr_db: float, theta_deg: float) -> float:
    """Single-snapshot DoA bound (std, degrees) for a half-wavelength ULA.

    Deterministic-signal bound with unknown complex amplitude:
    var = 6 / (SNR pi^2 N (N^2 - 1) sin^2 theta) rad^2; the angle is
    measured from the array axis, so the endpoints diverge.
    """
    if n_elements < 2:
        raise ValueError("need at least 2 elements")
    snr = 10.0 ** (snr_db / 10.0)
    s = np.sin(np.radians(theta_deg))
    if s == 0.0:
        return np.inf
    var_rad2 = 6.0 / (snr * np.pi**2 * n_elements * (n_elements**2 - 1) * s**2)
    return float(np.degrees(np.sqrt(var_rad2)))


def lens_response(theta_deg, m_elements: int, aperture_over_lambda: float) -> np.ndarray:
    """Energy-focusing lens response g_m(theta) = sinc(m - (L/lambda) cos
    theta) over symmetric element indices."""
    m = np.arange(m_elements) - (m_elements - 1) / 2.0
    u = m[None, :] - aperture_over_lambda * np.cos(
        np.radians(np.atleast_1d(theta_deg))
    )[:, None]
    return np.squeeze(np.sinc(u))


def _lens_response_derivative(theta_deg: float, m_elements: int,
                              aperture_over_lambda: float) -> np.ndarray:
    """Analytic d g_m / d theta (per radian)."""
    m = np.arange(m_elements) - (m_elements - 1) / 2.0
    theta = np.radians(theta_deg)
    u = m - aperture_over_lambda * np.cos(theta)
    du_dtheta = aperture_over_lambda * np.sin(theta)
    small = np.abs(u) < 1e-6
    with np.errstate(divide="ignore", invalid="ignore"):
        dsinc = (np.cos(np.pi * u) - np.sinc(u)) / u
    dsinc = np.where(small, -(np.pi**2) * u / 3.0, dsinc)
    return dsinc * du_dtheta


def crb_lens(m_elements: int, aperture_over_lambda: float, snr_db: float,
             theta_deg: float) -> float:
    """DoA bound (std, degrees) for the sinc-focusing lens array.

    FIM = 2 SNR_ap (||g'||^2 - (g.g')^2/||g||^2) with SNR_ap = M x the
    per-antenna SNR: an aperture L = M lambda/2 intercepts M elements'
    worth of the incident power, and the per-antenna SNR convention keys
    the noise to a single element.
    """
    if m_elements < 2:
        raise ValueError("need at least 2 elements")
    snr = 10.0 ** (snr_db / 10.0) * m_elements
    g = lens_response(theta_deg, m_elements, aperture_over_lambda)
    dg = _lens_response_derivative(theta_deg, m_elements, aperture_over_lambda)
    norm2 = float(g @ g)
    fim = 2.0 * snr * (float(dg @ dg) - float(g @ dg) ** 2 / norm2)
    if fim <= 0.0:
        return np.inf
    return float(np.degrees(np.sqrt(1.0 / fim)))


@dataclass(frozen=True)
class MonteCarloResult:
    rmse_deg: np.ndarray
    mc_stderr_deg: np.ndarray
    n_trials: int
    n_failures: int

    def scalar(self) -> tuple[float, float]:
        return float(self.rmse_deg[0]), float(self.mc_stderr_deg[0])


def _rmse_from_errors(errors: np.ndarray) -> tuple[float, float]:
    sq = errors**2
    rmse = float(np.sqrt(np.mean(sq)))
    if rmse == 0.0:
        return 0.0, 0.0
    stderr_mse = float(np.std(sq, ddof=1) / np.sqrt(len(sq)))
    return rmse, stderr_mse / (2.0 * rmse)


def _ssh_template_matrix(scenario: Scenario, theta_grid: np.ndarray) -> np.ndarray:
    path = scenario.paths[0]
    t = np.empty((len(theta_grid), scenario.grid.n_samples))
    for i, theta in enumerate(theta_grid):
        s = scenario.replace(paths=(path.__class__(
            theta_deg=float(theta), gain_linear=path.gain_linear),))
        t[i] = synth_single(s).power_spectrum
    return t


def _batched_noisy_z(mean_values: np.ndarray, n0: float, seed: int,
                     trials: int) -> np.ndarray:
    z = np.empty((trials, len(mean_values)))
    sigma = np.sqrt(n0 / 2.0)
    for t in range(trials):
        rng = trial_rng(seed, t)
        noise = sigma * (
            rng.standard_normal(len(mean_values))
            + 1j * rng.standard_normal(len(mean_values))
        )
        z[t] = np.abs(mean_values + noise)
    return z


def _argmin_refined_rows(grid: np.ndarray, dist: np.ndarray) -> np.ndarray:
    """Per-row grid argmin with 3-point parabolic refinement."""
    idx = np.argmin(dist, axis=1)
    idx = np.clip(idx, 1, dist.shape[1] - 2)
    cols = np.arange(len(idx))
    a = dist[cols, idx - 1]
    b = dist[cols, idx]
    c = dist[cols, idx + 1]
    denom = a - 2.0 * b + c
    delta = np.where(np.abs(denom) > 0.0, 0.5 * (a - c) / np.where(denom == 0.0, 1.0, denom), 0.0)
    delta = np.clip(delta, -0.5, 0.5)
    step = grid[1] - grid[0]
    return np.clip(grid[idx] + delta * step, grid[0], grid[-1])


def _run_ssh_mmse(scenario: Scenario, trials: int,
                  grid_step_deg: float = 0.25) -> np.ndarray:
    truth = scenario.paths[0].theta_deg
    mean = synth_single(scenario)
    n0 = noise_power_for_snr(mean, scenario.snr_db)
    theta_grid = np.arange(0.0, 180.0 + grid_step_deg / 2.0, grid_step_deg)
    templates = _ssh_template_matrix(scenario, theta_grid)
    if n0 == 0.0:
        z2 = mean.power_spectrum[None, :]
    else:
        z2 = _batched_noisy_z(mean.values, n0, scenario.seed, trials) ** 2
    # ||A - T||^2 row-wise via the expanded form; the ||A||^2 term is
    # constant per trial and drops out of the argmin
    dist = -2.0 * z2 @ templates.T + np.sum(templates**2, axis=1)[None, :]
    estimates = _argmin_refined_rows(theta_grid, dist)
    if n0 == 0.0:
        estimates = np.repeat(estimates, trials)
    return estimates - truth


def _run_joint_mmse(scenario: Scenario, trials: int,
                    grid_step_deg: float = 1.0) -> np.ndarray:
    path = scenario.paths[0]
    truth = np.array([path.theta_deg, path.aod_deg])
    mean = synth_aod(scenario)
    n0 = noise_power_for_snr(mean, scenario.snr_db)
    f = scenario.grid.frequencies_hz
    amplitude = path.gain_linear * channel_response(scenario.grid, scenario.channel)
    grid = np.arange(0.0, 180.0 + grid_step_deg / 2.0, grid_step_deg)
    cos_i = np.cos(np.pi * f[None, :] * shaper_zeta(grid, scenario.d_m)[:, None]) ** 2
    lag_d = np.array([tx_pair_lag(td, scenario.d_m, scenario.tx_delay_factor)
                      for td in grid])
    cos_d = np.cos(np.pi * f[None, :] * lag_d[:, None]) ** 2
    # template(i, d, f) = (a cos_i cos_d)^2 separates, so the distance
    # cross term is a single matrix product per trial
    ci = cos_i * amplitude[None, :] ** 2
    cd = cos_d
    quad = (ci**2) @ (cd**2).T  # sum_f template^2
    z2 = _batched_noisy_z(mean.values, n0, scenario.seed, trials) ** 2

    def distance(theta_i: float, theta_d: float, z2_row: np.ndarray) -> float:
        t_i = np.cos(np.pi * f * shaper_zeta(theta_i, scenario.d_m)) ** 2
        t_d = np.cos(np.pi * f * tx_pair_lag(theta_d, scenario.d_m,
                                             scenario.tx_delay_factor)) ** 2
        template = amplitude**2 * t_i * t_d
        return float(np.sum((z2_row - template) ** 2))

    from scipy import optimize

    errors = np.empty((trials, 2))
    step = grid_step_deg
    for t in range(trials):
        cross = ci @ (z2[t][:, None] * cd.T)
        dist = quad - 2.0 * cross
        i_idx, d_idx = np.unravel_index(np.argmin(dist), dist.shape)
        est_i, est_d = grid[i_idx], grid[d_idx]
        # alternate bounded 1-D polishes; the objective is smooth and the
        # coarse grid already brackets the global minimum
        for _ in range(3):
            est_i = optimize.minimize_scalar(
                lambda v: distance(v, est_d, z2[t]),
                bounds=(max(est_i - step, 0.0), min(est_i + step, 180.0)),
                method="bounded", options={"xatol": 1e-4},
            ).x
            est_d = optimize.minimize_scalar(
                lambda v: distance(est_i, v, z2[t]),
                bounds=(max(est_d - step, 0.0), min(est_d + step, 180.0)),
                method="bounded", options={"xatol": 1e-4},
            ).x
        errors[t] = (est_i - truth[0], est_d - truth[1])
    return errors


def _parabolic_argmin(grid: np.ndarray, values: np.ndarray, i: int) -> float:
    if i <= 0 or i >= len(values) - 1:
        return float(grid[i])
    a, b, c = values[i - 1], values[i], values[i + 1]
    denom = a - 2.0 * b + c
    if denom <= 0.0:
        return float(grid[i])
    delta = float(np.clip(0.5 * (a - c) / denom, -0.5, 0.5))
    return float(np.clip(grid[i] + delta * (grid[1] - grid[0]), grid[0], grid[-1]))


def ula_response(theta_deg, n_elements: int) -> np.ndarray:
    """Half-wavelength ULA steering vectors over symmetric element indices;
    theta is measured from the array axis."""
    n = np.arange(n_elements) - (n_elements - 1) / 2.0
    cos = np.cos(np.radians(np.atleast_1d(theta_deg)))
    return np.squeeze(np.exp(1j * np.pi * np.outer(cos, n)))


def array_rmse_monte_carlo(kind: str, n_elements: int, snr_db: float,
                           theta_deg: float, trials: int = 1000, seed: int = 0,
                           grid_step_deg: float = 0.25) -> MonteCarloResult:
    """Monte Carlo RMSE of single-snapshot grid matching for the array
    baselines (per-element SNR, unknown complex amplitude: the score is
    the normalized matched projection |h(theta)^H y|^2 / ||h||^2)."""
    snr = 10.0 ** (snr_db / 10.0)
    grid = np.arange(0.0, 180.0 + grid_step_deg / 2.0, grid_step_deg)
    if kind == "ula":
        responses = ula_response(grid, n_elements)
        truth_vec = ula_response(theta_deg, n_elements)
        sigma = np.sqrt(1.0 / snr)
    elif kind == "lens":
        scale = np.sqrt(n_elements)
        responses = scale * lens_response(grid, n_elements, n_elements / 2.0)
        truth_vec = scale * lens_response(theta_deg, n_elements, n_elements / 2.0)
        sigma = np.sqrt(1.0 / snr)
    else:
        raise ValueError(f"unknown array kind: {kind}")
    norms = np.sum(np.abs(responses) ** 2, axis=1)
    errors = np.empty(trials)
    for t in range(trials):
        rng = trial_rng(seed, t)
        noise = sigma * np.sqrt(0.5) * (
            rng.standard_normal(n_elements) + 1j * rng.standard_normal(n_elements)
        )
        y = truth_vec + noise
        score = np.abs(responses @ y.conj()) ** 2 / norms
        i = int(np.argmax(score))
        est = _parabolic_argmin(grid, -score, i)
        errors[t] = est - theta_deg
    rmse, stderr = _rmse_from_errors(errors)
    return MonteCarloResult(rmse_deg=np.array([rmse]), mc_stderr_deg=np.array([stderr]),
                            n_trials=trials, n_failures=0)


def rmse_monte_carlo(scenario: Scenario, estimator_id: str,
                     trials: int = 1000) -> MonteCarloResult:
    """Root mean squared angular error of an estimator over seeded trials.

    estimator_id selects among "ssh_mmse", "ssh_peak" (lag-domain
    single-path DoA), and "joint_mmse" (2D AoD/DoA grid search; returns a
    2-vector RMSE over (doa, aod)). Per-trial failures are tolerated up to
    20 percent of trials, then the run aborts with a diagnostic.
    """
    if trials < 100:
        raise ValueError("trials must be >= 100")
    failures = 0
    if estimator_id == "ssh_mmse":
        errors = _run_ssh_mmse(scenario, trials)[:, None]
    elif estimator_id == "joint_mmse":
        errors = _run_joint_mmse(scenario, trials)
    elif estimator_id == "ssh_peak":
        from .synth import add_noise

        mean = synth_single(scenario)
        errs = []
        for t in range(trials):
            obs = add_noise(mean, scenario.snr_db, scenario.seed, t)
            try:
                est = estimators.estimate_doa_single(obs, scenario.d_m)
                errs.append(est - scenario.paths[0].theta_deg)
            except estimators.EstimationError:
                failures += 1
                if failures > 0.2 * trials:
                    raise EstimatorAbortError(
                        f"{failures} failures in {t + 1} trials (> 20%)"
                    )
        errors = np.asarray(errs)[:, None]
    else:
        raise ValueError(f"unknown estimator_id: {estimator_id}")

    rmse = np.empty(errors.shape[1])
    stderr = np.empty(errors.shape[1])
    for k in range(errors.shape[1]):
        rmse[k], stderr[k] = _rmse_from_errors(errors[:, k])
    return MonteCarloResult(rmse_deg=rmse, mc_stderr_deg=stderr,
                            n_trials=trials, n_failures=failures)
