import numpy as np
import pytest

from specshape import ChannelProfile, FrequencyGrid, Path, Scenario


@pytest.fixture
def flat_profile():
    """Lossless channel: |a(f)| = 1 everywhere."""
    return ChannelProfile(kind="tabulated", table=((1e9, 0.0), (2e12, 0.0)))


@pytest.fixture
def flat_scenario(flat_profile):
    def make(theta_deg=60.0, d_m=5e-3, snr_db=20.0, seed=0, grid=None, **kwargs):
        return Scenario(
            d_m=d_m,
            grid=grid or FrequencyGrid(),
            paths=(Path(theta_deg=theta_deg),),
            channel=flat_profile,
            snr_db=snr_db,
            seed=seed,
            **kwargs,
        )

    return make


@pytest.fixture
def two_path_scenario(flat_profile):
    """The two-path benchmark: LoS 60 deg, NLoS 100 deg 0.5 m longer and
    6 dB weaker."""
    def make(grid=None, channel=None, snr_db=20.0, seed=0):
        return Scenario(
            d_m=5e-3,
            grid=grid or FrequencyGrid(),
            paths=(
                Path(theta_deg=60.0, excess_length_m=0.0, gain_linear=1.0),
                Path(theta_deg=100.0, excess_length_m=0.5,
                     gain_linear=10.0 ** (-6.0 / 20.0)),
            ),
            channel=channel or flat_profile,
            snr_db=snr_db,
            seed=seed,
        )

    return make


@pytest.fixture
def fine_grid():
    """0.15 GHz spacing: unambiguous distances out to ~1 m."""
    return FrequencyGrid(100e9, 1000e9, 6001)


def assert_close(actual, expected, rtol=1e-9, atol=0.0):
    np.testing.assert_allclose(actual, expected, rtol=rtol, atol=atol)
