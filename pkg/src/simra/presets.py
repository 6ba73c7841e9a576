"""Named chip configurations mirroring the three tested SK Hynix die families.

The analog constants are tuned so the simulated average cache-block
entropies land near the per-family means (8Gb A-die highest, 4Gb M-die
lowest) and the 8Gb A-die family loses entropy with temperature at roughly
the measured rate. They are behavioral fits, not device parameters.
"""

from __future__ import annotations

from dataclasses import replace

from .analog import AnalogParams, ChipConfig, bit_swap_remap
from .dram import DramGeometry
from .errors import ConfigError

# average cache-block entropy per family at 50 C, used as calibration targets
REFERENCE_ENTROPY = {"8Gb-A": 37.62, "4Gb-A": 25.06, "4Gb-M": 16.83}


def _preset(name: str) -> ChipConfig:
    if name == "8Gb-A":
        geometry = DramGeometry(banks_per_chip=16, subarrays_per_bank=128)
        analog = AnalogParams(c_bitline=2.0, thermal_noise_sigma=2.1e-4, temp_drift_alpha=6.0e-5)
        return ChipConfig(geometry=geometry, analog=analog, name=name)
    if name == "4Gb-A":
        geometry = DramGeometry(banks_per_chip=16, subarrays_per_bank=64)
        analog = AnalogParams(c_bitline=8.0, thermal_noise_sigma=9.0e-5, temp_drift_alpha=3.5e-5)
        return ChipConfig(geometry=geometry, analog=analog, name=name)
    if name == "4Gb-M":
        geometry = DramGeometry(banks_per_chip=16, subarrays_per_bank=64)
        analog = AnalogParams(c_bitline=2.0, thermal_noise_sigma=1.0e-4, temp_drift_alpha=3.0e-5)
        remap = bit_swap_remap(geometry.rows_per_subarray, 0, 3)
        return ChipConfig(geometry=geometry, analog=analog, remap=remap, name=name)
    raise ConfigError(f"unknown preset {name!r}; choose one of {sorted(REFERENCE_ENTROPY)}")


PRESETS = tuple(REFERENCE_ENTROPY)


def preset(name: str, **overrides) -> ChipConfig:
    """Look up a preset, optionally replacing top-level ChipConfig fields."""
    cfg = _preset(name)
    return replace(cfg, **overrides) if overrides else cfg
