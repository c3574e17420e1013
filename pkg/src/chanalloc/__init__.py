"""Dynamic channel allocation for 2.4 GHz WLANs fed by low-cost spectrum analyzers."""

from .core import (
    CHANNELS,
    FrequencyBin,
    QualityBand,
    binary_grid,
    bins_for_channel,
    channel_center_mhz,
    classify_quality,
    crossing_coefficient,
    growth_model,
)
from .estimation import (
    BinaryEstimatorConfig,
    PointMeasurementSet,
    WifiScanEntry,
    binary_estimate,
    card_channel_estimate,
    channel_average,
    fuse_external,
)

__all__ = [
    "CHANNELS",
    "FrequencyBin",
    "QualityBand",
    "binary_grid",
    "bins_for_channel",
    "channel_center_mhz",
    "classify_quality",
    "crossing_coefficient",
    "growth_model",
    "BinaryEstimatorConfig",
    "PointMeasurementSet",
    "WifiScanEntry",
    "binary_estimate",
    "card_channel_estimate",
    "channel_average",
    "fuse_external",
]

__version__ = "0.1.0"
