"""Stochastic UWB air-to-ground channel simulator and parameter estimation toolkit."""
from .core import (
    Cir,
    DegenerateInputError,
    EnvironmentClass,
    Geometry,
    NakagamiParams,
    PathLossParams,
    Pdp,
    PresetNotFoundError,
    RandomSource,
    ScanSet,
    ScenarioId,
    ScenarioPreset,
    SvParams,
    ValidationError,
    spherical_distance,
)
from .presets import all_presets, preset_lookup

__version__ = "0.1.0"
