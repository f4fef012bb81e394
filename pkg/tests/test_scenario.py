import json

import numpy as np
import pytest

import specshape as ss
from specshape import estimators
from specshape.scenario import ValidationError, scenario_from_dict


class TestFrequencyGrid:
    def test_default_grid_matches_tds_resolution(self):
        grid = ss.FrequencyGrid()
        assert grid.n_samples == 600
        assert grid.f_start_hz == 100e9
        assert grid.f_stop_hz == 1000e9
        # ~1.5 GHz spectral resolution
        assert grid.spacing_hz == pytest.approx(1.5e9, rel=2e-3)

    def test_spacing_positive_and_axis_shape(self):
        grid = ss.FrequencyGrid(1e11, 2e11, 11)
        assert grid.spacing_hz == pytest.approx(1e10)
        f = grid.frequencies_hz
        assert len(f) == 11
        assert f[0] == 1e11 and f[-1] == 2e11

    @pytest.mark.parametrize("kwargs", [
        dict(f_start_hz=0.0),
        dict(f_start_hz=-1e9),
        dict(f_stop_hz=50e9),
        dict(n_samples=1),
    ])
    def test_invalid_grids_rejected(self, kwargs):
        with pytest.raises(ValidationError):
            ss.FrequencyGrid(**{**dict(f_start_hz=100e9, f_stop_hz=1000e9,
                                       n_samples=600), **kwargs})


class TestNyquistLag:
    def test_value_at_default_spacing(self):
        grid = ss.FrequencyGrid(100e9, 1000e9, 601)  # exactly 1.5 GHz
        lag = ss.nyquist_lag(grid)
        assert lag == pytest.approx(3.3333e-10, rel=1e-4)
        assert lag * ss.C_LIGHT == pytest.approx(0.09993, rel=1e-3)

    def test_value_at_fine_spacing(self):
        grid = ss.FrequencyGrid(100e9, 1000e9, 6001)  # 0.15 GHz
        assert ss.nyquist_lag(grid) == pytest.approx(3.3333e-9, rel=1e-4)
        assert ss.nyquist_lag(grid) * ss.C_LIGHT == pytest.approx(0.9993, rel=1e-3)

    def test_doubling_spacing_halves_lag(self):
        a = ss.FrequencyGrid(100e9, 1000e9, 601)
        b = ss.FrequencyGrid(100e9, 1000e9, 301)  # doubled spacing
        assert ss.nyquist_lag(b) == pytest.approx(ss.nyquist_lag(a) / 2.0)

    def test_product_with_spacing_is_exactly_half(self):
        for n in (2, 17, 600, 6001):
            grid = ss.FrequencyGrid(100e9, 1000e9, n)
            assert ss.nyquist_lag(grid) * 2.0 * grid.spacing_hz == pytest.approx(1.0, rel=1e-15)

    def test_matches_fft_axis_of_synthetic_tone(self):
        # independent cross-check: the lag-transform axis of any sequence
        # on this grid tops out at the nyquist lag, and a mid-band tone
        # lands on the expected axis position
        grid = ss.FrequencyGrid(100e9, 1000e9, 600)
        lag0 = 1.2e-10
        x = np.cos(2 * np.pi * grid.frequencies_hz * lag0)
        zspec = estimators.lag_transform(x, grid.spacing_hz)
        assert zspec.zeta_s[-1] == pytest.approx(ss.nyquist_lag(grid))
        peak = zspec.zeta_s[np.argmax(zspec.magnitude)]
        assert peak == pytest.approx(lag0, abs=1.0 / (2 * grid.bandwidth_hz))


class TestPath:
    def test_theta_bounds_named_in_error(self):
        with pytest.raises(ValidationError, match=r"theta out of \[0,180\]"):
            ss.Path(theta_deg=190.0)

    def test_negative_excess_rejected(self):
        with pytest.raises(ValidationError):
            ss.Path(theta_deg=10.0, excess_length_m=-0.1)

    def test_zero_gain_rejected(self):
        with pytest.raises(ValidationError):
            ss.Path(theta_deg=10.0, gain_linear=0.0)

    def test_tof_is_excess_over_c(self):
        p = ss.Path(theta_deg=30.0, excess_length_m=0.5)
        assert p.tof_s == pytest.approx(0.5 / ss.C_LIGHT)


class TestScenario:
    def test_pair_mode_needs_single_path_with_aod(self):
        with pytest.raises(ValidationError):
            ss.Scenario(tx_mode="pair",
                        paths=(ss.Path(10.0), ss.Path(20.0, aod_deg=30.0)))
        with pytest.raises(ValidationError):
            ss.Scenario(tx_mode="pair", paths=(ss.Path(10.0),))
        sc = ss.Scenario(tx_mode="pair", paths=(ss.Path(10.0, aod_deg=40.0),))
        assert sc.paths[0].aod_deg == 40.0

    def test_bad_gap_and_mode(self):
        with pytest.raises(ValidationError):
            ss.Scenario(d_m=0.0)
        with pytest.raises(ValidationError):
            ss.Scenario(tx_mode="both")


class TestScenarioIO:
    def _minimal(self):
        return {
            "d_m": 5e-3,
            "grid": {"f_start_hz": 100e9, "f_stop_hz": 1000e9, "n_samples": 600},
            "tx_mode": "single",
            "paths": [{"theta_deg": 60.0}],
            "channel": {"kind": "dry", "range_m": 100.0},
            "snr_db": 20.0,
            "seed": 0,
        }

    def test_minimal_los_file(self, tmp_path):
        path = tmp_path / "los.json"
        path.write_text(json.dumps(self._minimal()))
        sc = ss.load_scenario(path)
        assert len(sc.paths) == 1
        assert sc.paths[0].theta_deg == 60.0
        assert sc.channel.kind == "dry"

    def test_theta_violation_named(self, tmp_path):
        raw = self._minimal()
        raw["paths"][0]["theta_deg"] = 190.0
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(raw))
        with pytest.raises(ValidationError, match=r"theta out of \[0,180\]"):
            ss.load_scenario(path)

    def test_malformed_json_raises_parse_error(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(json.JSONDecodeError):
            ss.load_scenario(path)

    def test_two_path_benchmark_file(self, tmp_path):
        raw = self._minimal()
        raw["paths"] = [
            {"theta_deg": 60.0, "excess_length_m": 0.0, "gain_linear": 1.0},
            {"theta_deg": 100.0, "excess_length_m": 0.5, "gain_linear": 0.5012},
        ]
        path = tmp_path / "two.json"
        path.write_text(json.dumps(raw))
        sc = ss.load_scenario(path)
        assert len(sc.paths) == 2
        second_db = 20.0 * np.log10(sc.paths[1].gain_linear)
        assert second_db == pytest.approx(-6.0, abs=0.01)

    def test_round_trip_bit_exact(self, tmp_path):
        raw = self._minimal()
        raw["paths"][0]["theta_deg"] = 123.456789012345
        raw["snr_db"] = -3.25
        first = tmp_path / "a.json"
        second = tmp_path / "b.json"
        first.write_text(json.dumps(raw))
        sc1 = ss.load_scenario(first)
        ss.save_scenario(sc1, second)
        sc2 = ss.load_scenario(second)
        assert sc1 == sc2

    def test_tabulated_channel_round_trip(self, tmp_path):
        raw = self._minimal()
        raw["channel"] = {
            "kind": "tabulated", "water_vapor_g_m3": 0.0, "range_m": 10.0,
            "table": [[1e9, 0.0], [2e12, 0.0]],
        }
        path = tmp_path / "tab.json"
        path.write_text(json.dumps(raw))
        sc = ss.load_scenario(path)
        out = tmp_path / "tab2.json"
        ss.save_scenario(sc, out)
        assert ss.load_scenario(out) == sc

    def test_missing_key_is_validation_error(self):
        with pytest.raises(ValidationError, match="missing scenario key"):
            scenario_from_dict({"d_m": 5e-3})


class TestZetaSpectrum:
    def test_axis_and_distance(self):
        zeta = np.linspace(0.0, 1e-9, 101)
        mag = np.zeros(101)
        zs = ss.ZetaSpectrum(zeta_s=zeta, magnitude=mag)
        np.testing.assert_allclose(zs.distance_m, zeta * ss.C_LIGHT)
        assert zs.spacing_s == pytest.approx(1e-11)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            ss.ZetaSpectrum(zeta_s=np.arange(4.0), magnitude=np.zeros(3))
