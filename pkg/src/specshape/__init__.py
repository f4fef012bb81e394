"""Single-shot THz link discovery by spectrum shaping.

A two-antenna receiver with a delay line multiplies the received power
spectrum by an angle-dependent cosine ripple; one THz-TDS magnitude shot
then reveals directions, relative powers, and relative distances of all
propagation paths. This package synthesizes such shots under atmospheric
gas attenuation, estimates path parameters from them, and computes
numerical Cramer-Rao bounds against array baselines.
"""

__version__ = "0.1.0"

from .scenario import (
    C_LIGHT,
    FrequencyGrid,
    Path,
    Scenario,
    ValidationError,
    ZetaSpectrum,
    load_scenario,
    nyquist_lag,
    save_scenario,
)
from .channel import ChannelProfile, channel_response, specific_attenuation
from .synth import (
    MeanField,
    ObservedSpectrum,
    add_noise,
    delta_t,
    observe,
    shaper_zeta,
    synth_aod,
    synth_multi,
    synth_single,
)
from .estimators import (
    EstimateReport,
    build_report,
    estimate_aod_doa,
    estimate_doa_single,
    estimate_rel_distances,
    harmonic_decompose,
    lowpass,
    matched_filter,
    mmse_estimate,
    zeta_spectrum,
)
from .crb import (
    FisherResult,
    crb_lens,
    crb_ula,
    fim_joint,
    fim_ssh_doa,
    rice_loglik,
    rmse_monte_carlo,
)
