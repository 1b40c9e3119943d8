"""Reference configurations for the 5G sensing scenario.

The baseline is a 3.5 GHz carrier, 1500 subcarriers at 60 kHz spacing and a
4-element half-wavelength ULA, smoothed with a frequency aperture of 1401
subcarriers decimated by 100 and an antenna aperture of 3 (decimation 1),
unit strides in both dimensions. That yields 15 x 3 = 45 samples per
sub-array, 100 x 2 = 200 sub-arrays, 1.78 m range resolution and a 25 m
unambiguous range.

The speed of light is taken as 3e8 m/s here so the published radar
characteristics (25 m unambiguous range) come out exactly.
"""

from __future__ import annotations

from .errors import ConfigError
from .signal_model import RadioConfig
from .smoothing import SubarrayPlan, make_plan

BASELINE_SPEED_OF_LIGHT = 3.0e8

# Equal-sample-count variants trading unambiguous range for range resolution:
# frequency decimation -> (aperture, stride). All keep 15 decimated
# subcarriers per sub-array (M = 45 with the 3-antenna aperture) and strides
# chosen for 100 frequency sets (98 for decimation 10, where 100 is not
# reachable with an integer stride).
EQUAL_M_VARIANTS = {
    1: (15, 15),
    10: (141, 14),
    50: (701, 8),
    100: (1401, 1),
}


def baseline_radio() -> RadioConfig:
    wavelength = BASELINE_SPEED_OF_LIGHT / 3.5e9
    return RadioConfig(
        n_subcarriers=1500,
        subcarrier_spacing_hz=60e3,
        carrier_freq_hz=3.5e9,
        n_antennas=4,
        antenna_spacing_m=wavelength / 2.0,
        speed_of_light_m_s=BASELINE_SPEED_OF_LIGHT)


def baseline_plan(radio: RadioConfig | None = None) -> SubarrayPlan:
    radio = radio or baseline_radio()
    return make_plan(radio, aperture_f=1401, aperture_a=3, decim_f=100, decim_a=1,
                     stride_f=1, stride_a=1)


def range_only_plan(radio: RadioConfig | None = None) -> SubarrayPlan:
    """Baseline with a single-antenna aperture: range-only (1D) estimation."""
    radio = radio or baseline_radio()
    return make_plan(radio, aperture_f=1401, aperture_a=1, decim_f=100, decim_a=1,
                     stride_f=1, stride_a=1)


def equal_m_plan(decim_f: int, radio: RadioConfig | None = None) -> SubarrayPlan:
    """Variant with the given frequency decimation at equal sub-array size."""
    radio = radio or baseline_radio()
    try:
        aperture_f, stride_f = EQUAL_M_VARIANTS[decim_f]
    except KeyError:
        raise ConfigError(
            f"no equal-M variant for decimation {decim_f}; "
            f"choose one of {sorted(EQUAL_M_VARIANTS)}")
    return make_plan(radio, aperture_f=aperture_f, aperture_a=3, decim_f=decim_f,
                     decim_a=1, stride_f=stride_f, stride_a=1)
