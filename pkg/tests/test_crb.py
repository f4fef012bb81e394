import numpy as np
import pytest
from scipy import integrate

import specshape as ss
from specshape import crb
from specshape.crb import (
    EstimatorAbortError,
    array_rmse_monte_carlo,
    bessel_ratio,
    lens_response,
    score_regularity,
    ula_response,
)


def dry_scenario(theta=60.0, snr_db=5.0, d_m=5e-3, range_m=100.0, vapor=0.0):
    kind = "dry" if vapor == 0.0 else "humid"
    return ss.Scenario(
        d_m=d_m,
        paths=(ss.Path(theta_deg=theta),),
        channel=ss.ChannelProfile(kind=kind, water_vapor_g_m3=vapor,
                                  range_m=range_m),
        snr_db=snr_db,
    )


class TestRiceLoglik:
    def test_zero_nu_is_rayleigh(self):
        z = np.array([0.3, 1.0, 2.5])
        n0 = 0.8
        expected = np.log(z / (n0 / 2.0)) - z**2 / n0
        np.testing.assert_allclose(ss.rice_loglik(z, 0.0, n0), expected,
                                   rtol=1e-12)

    @pytest.mark.parametrize("nu,n0", [(1.0, 0.1), (3.0, 1.0)])
    def test_density_normalized(self, nu, n0):
        sigma = np.sqrt(n0 / 2.0)
        total, err = integrate.quad(
            lambda z: np.exp(float(ss.rice_loglik(z, nu, n0))),
            0.0, nu + 14.0 * sigma, limit=200,
        )
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_large_argument_matches_extended_precision(self):
        # 2 z nu / N0 = 1e4: compare ln I0 against mpmath
        import mpmath

        mpmath.mp.dps = 50
        z, nu, n0 = 100.0, 50.0, 1.0
        arg = 2.0 * z * nu / n0
        assert arg == 1e4
        expected = (
            float(mpmath.log(z / (n0 / 2.0)))
            - (z**2 + nu**2) / n0
            + float(mpmath.log(mpmath.besseli(0, arg)))
        )
        got = float(ss.rice_loglik(z, nu, n0))
        assert got == pytest.approx(expected, rel=1e-10)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            ss.rice_loglik(-0.1, 1.0, 1.0)
        with pytest.raises(ValueError):
            ss.rice_loglik(1.0, 1.0, 0.0)

    def test_bessel_ratio_limits(self):
        assert bessel_ratio(0.0) == 0.0
        assert float(bessel_ratio(1e6)) == pytest.approx(1.0, abs=1e-5)
        # small-argument expansion I1/I0 ~ x/2
        assert float(bessel_ratio(1e-4)) == pytest.approx(5e-5, rel=1e-3)


class TestFimSshDoa:
    def test_endpoints_singular(self):
        sc = dry_scenario()
        assert crb.fim_ssh_doa(sc, 0.0).crb_deg[0] == np.inf
        assert crb.fim_ssh_doa(sc, 180.0).crb_deg[0] == np.inf

    def test_score_zero_mean(self):
        assert abs(score_regularity(dry_scenario(snr_db=5.0), 60.0)) < 1e-6

    def test_high_snr_matches_gaussian_limit(self):
        # independent oracle: for nu >> sigma the magnitude observation is
        # nu + radial Gaussian noise of variance N0/2, so the information
        # is sum (dnu/dtheta)^2 / (N0/2)
        from specshape.crb import _ssh_nu_and_gradient
        from specshape.synth import noise_power_for_snr, synth_single

        sc = dry_scenario(snr_db=40.0)
        mean = synth_single(sc.replace(paths=(ss.Path(60.0),)))
        n0 = noise_power_for_snr(mean, 40.0)
        nu, dnu = _ssh_nu_and_gradient(sc, 60.0)
        gaussian = np.sum(dnu**2 / (n0 / 2.0))
        quad = crb.fim_ssh_doa(sc, 60.0).information[0, 0]
        assert quad == pytest.approx(gaussian, rel=0.05)

    def test_crb_symmetric_about_broadside_flat_channel(self, flat_scenario):
        # |d zeta / d theta| is exactly symmetric about broadside; the
        # residual asymmetry comes from the finite number of ripple cycles
        # in the band and shrinks as theta approaches 90 degrees
        sc = flat_scenario(snr_db=5.0)
        for theta, tol in ((30.0, 0.15), (60.0, 0.05), (85.0, 0.02)):
            a = crb.fim_ssh_doa(sc, theta).crb_deg[0]
            b = crb.fim_ssh_doa(sc, 180.0 - theta).crb_deg[0]
            assert a == pytest.approx(b, rel=tol)

    def test_crb_scales_inverse_square_gap(self):
        a = crb.fim_ssh_doa(dry_scenario(snr_db=0.0), 90.0).crb_deg[0]
        b = crb.fim_ssh_doa(dry_scenario(snr_db=0.0, d_m=10e-3), 90.0).crb_deg[0]
        assert (b / a) ** 2 == pytest.approx(0.25, rel=0.10)

    def test_high_snr_slope_minus_one(self):
        snrs = np.array([20.0, 25.0, 30.0, 35.0, 40.0])
        variances = [
            np.radians(crb.fim_ssh_doa(dry_scenario(snr_db=s), 60.0).crb_deg[0]) ** 2
            for s in snrs
        ]
        slope = np.polyfit(snrs / 10.0, np.log10(variances), 1)[0]
        assert slope == pytest.approx(-1.0, abs=0.1)

    def test_monotone_decreasing_in_snr(self):
        values = [
            crb.fim_ssh_doa(dry_scenario(snr_db=s), 60.0).crb_deg[0]
            for s in (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
        ]
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_information_psd(self):
        for theta in (20.0, 60.0, 140.0):
            result = crb.fim_ssh_doa(dry_scenario(), theta, nuisance="flat_gain")
            eigs = np.linalg.eigvalsh(result.information)
            assert eigs.min() >= -1e-10 * max(eigs.max(), 1.0)

    def test_flat_gain_nuisance_never_tightens(self):
        known = crb.fim_ssh_doa(dry_scenario(), 60.0).crb_deg[0]
        with_gain = crb.fim_ssh_doa(dry_scenario(), 60.0,
                                    nuisance="flat_gain").crb_deg[0]
        assert with_gain >= known * (1.0 - 1e-9)

    def test_humid_range_degrades_bound(self):
        values = [
            crb.fim_ssh_doa(dry_scenario(snr_db=5.0, vapor=10.0, range_m=r),
                            60.0).crb_deg[0]
            for r in (10.0, 100.0, 1000.0)
        ]
        assert values[0] <= values[1] <= values[2]


class TestFimJoint:
    def pair_scenario(self, snr_db=5.0):
        return ss.Scenario(
            tx_mode="pair",
            paths=(ss.Path(theta_deg=60.0, aod_deg=60.0),),
            channel=ss.ChannelProfile(kind="dry", range_m=100.0),
            snr_db=snr_db,
        )

    def test_information_symmetric(self):
        result = crb.fim_joint(self.pair_scenario(), 60.0, 120.0)
        j = result.information
        assert abs(j[0, 1] - j[1, 0]) <= 1e-10 * abs(j[0, 0])

    def test_aod_doa_bounds_close(self):
        result = crb.fim_joint(self.pair_scenario(), 60.0, 60.0)
        lo, hi = sorted(result.crb_deg)
        assert hi / lo < 1.25

    def test_aod_barely_moves_doa_bound(self):
        bounds = [
            crb.fim_joint(self.pair_scenario(), 60.0, td).crb_deg[0]
            for td in (30.0, 90.0, 150.0)
        ]
        assert max(bounds) / min(bounds) < 1.2

    def test_endfire_incidence_singular_in_theta_i_only(self):
        result = crb.fim_joint(self.pair_scenario(), 0.0, 90.0)
        assert result.crb_deg[0] == np.inf
        assert np.isfinite(result.crb_deg[1])

    def test_psd(self):
        result = crb.fim_joint(self.pair_scenario(), 50.0, 110.0)
        eigs = np.linalg.eigvalsh(result.information)
        assert eigs.min() >= -1e-10 * eigs.max()


class TestCrbUla:
    def test_snr_scaling(self):
        a = crb.crb_ula(16, 10.0, 90.0)
        b = crb.crb_ula(16, 13.0103, 90.0)  # doubled linear SNR
        assert (b / a) ** 2 == pytest.approx(0.5, rel=1e-4)

    def test_element_count_scaling(self):
        # variance ratio N(N^2-1) between 7 and 111 elements
        a = crb.crb_ula(7, 0.0, 90.0)
        b = crb.crb_ula(111, 0.0, 90.0)
        expected = 111 * (111**2 - 1) / (7 * (7**2 - 1))
        assert (a / b) ** 2 == pytest.approx(expected, rel=1e-9)

    def test_broadside_is_best(self):
        values = [crb.crb_ula(16, 0.0, t) for t in (30.0, 60.0, 90.0, 120.0)]
        assert min(values) == values[2]

    def test_endpoint_diverges(self):
        assert crb.crb_ula(16, 0.0, 0.0) == np.inf

    def test_formula_against_steering_vector_fim(self):
        # numerical oracle: complex-Gaussian FIM with projected steering
        # derivative, J = 2 SNR (||da||^2 - |a^H da|^2 / N)
        n, snr_db, theta = 9, 7.0, 70.0
        snr = 10.0 ** (snr_db / 10.0)
        h = 1e-7
        a_p = ula_response(theta + np.degrees(h), n)
        a_m = ula_response(theta - np.degrees(h), n)
        da = (a_p - a_m) / (2.0 * h)
        a0 = ula_response(theta, n)
        j = 2.0 * snr * (np.linalg.norm(da) ** 2
                         - abs(np.vdot(a0, da)) ** 2 / n)
        numeric = np.degrees(np.sqrt(1.0 / j))
        assert crb.crb_ula(n, snr_db, theta) == pytest.approx(numeric, rel=1e-4)


class TestCrbLens:
    def test_more_elements_tighter(self):
        values = [
            crb.crb_lens(m, m / 2.0, 0.0, 90.0) for m in (15, 31, 63, 201)
        ]
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_derivative_matches_finite_difference(self):
        from specshape.crb import _lens_response_derivative

        m, aperture = 31, 15.5
        for theta in (40.0, 90.0, 130.0):
            h = 1e-6
            numeric = (
                lens_response(theta + np.degrees(h), m, aperture)
                - lens_response(theta - np.degrees(h), m, aperture)
            ) / (2.0 * h)
            analytic = _lens_response_derivative(theta, m, aperture)
            np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-8)

    def test_endfire_diverges(self):
        assert crb.crb_lens(15, 7.5, 0.0, 0.0) == np.inf


class TestMonteCarlo:
    def test_noise_free_mmse_hits_grid_resolution(self, flat_scenario):
        sc = flat_scenario(theta_deg=60.0, snr_db=np.inf)
        result = crb.rmse_monte_carlo(sc, "ssh_mmse", trials=100)
        assert result.rmse_deg[0] < 0.1

    def test_mmse_respects_crb(self):
        sc = dry_scenario(theta=60.0, snr_db=10.0)
        result = crb.rmse_monte_carlo(sc.replace(seed=21), "ssh_mmse",
                                      trials=500)
        bound = crb.fim_ssh_doa(sc, 60.0).crb_deg[0]
        assert result.rmse_deg[0] >= bound - 3.0 * result.mc_stderr_deg[0]

    def test_mmse_within_factor_three_of_bound(self):
        sc = dry_scenario(theta=60.0, snr_db=10.0)
        result = crb.rmse_monte_carlo(sc.replace(seed=4), "ssh_mmse",
                                      trials=1000)
        bound = crb.fim_ssh_doa(sc, 60.0).crb_deg[0]
        assert result.rmse_deg[0] < 3.0 * bound

    def test_trials_floor(self):
        with pytest.raises(ValueError):
            crb.rmse_monte_carlo(dry_scenario(), "ssh_mmse", trials=10)

    def test_unknown_estimator(self):
        with pytest.raises(ValueError):
            crb.rmse_monte_carlo(dry_scenario(), "nope", trials=100)

    def test_failure_fraction_aborts(self, flat_scenario):
        # endfire with no noise: every trial raises NoPeak, so the run
        # aborts after crossing the 20 percent budget
        sc = flat_scenario(theta_deg=0.0, snr_db=np.inf)
        with pytest.raises(EstimatorAbortError):
            crb.rmse_monte_carlo(sc, "ssh_peak", trials=100)

    def test_array_baselines_run(self):
        res = array_rmse_monte_carlo("ula", 16, 10.0, 60.0, trials=100, seed=2)
        assert res.rmse_deg[0] < 1.0
        res = array_rmse_monte_carlo("lens", 16, 10.0, 60.0, trials=100, seed=2)
        assert res.rmse_deg[0] < 1.0

    def test_array_rmse_not_below_crb(self):
        res = array_rmse_monte_carlo("ula", 16, 5.0, 60.0, trials=400, seed=9)
        bound = crb.crb_ula(16, 5.0, 60.0)
        assert res.rmse_deg[0] >= bound - 3.0 * res.mc_stderr_deg[0]
