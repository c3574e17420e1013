"""2.4 GHz channel and bin geometry, crossing coefficients, quality bands.

Channels are plain ``int`` indices (1..13). Frequencies are in MHz and
levels in dBm throughout the package.
"""

from __future__ import annotations

import enum
import math
from fractions import Fraction
from functools import lru_cache
from typing import NamedTuple, Sequence

CHANNELS: tuple[int, ...] = tuple(range(1, 14))
CHANNEL_WIDTH_MHZ = 20.0
CHANNEL_SPACING_MHZ = 5.0
CHANNEL_1_CENTER_MHZ = 2412.0

GRID_START_MHZ = 2400.0
GRID_STEP_MHZ = 0.9765625
GRID_POINTS = 128

GROWTH_EXPONENT = 4.54
GROWTH_OFFSET = 3450.0
GROWTH_EPOCH = 2000

# keyed by |ch - k|; anything >= 4 is zero
CROSSING_TABLE: dict[int, Fraction] = {
    0: Fraction(1),
    1: Fraction(3, 4),
    2: Fraction(1, 2),
    3: Fraction(1, 4),
}


class ChannelError(ValueError):
    pass


class GridError(ValueError):
    """Raised when a frequency grid does not cover a requested channel."""


class FrequencyBin(NamedTuple):
    index: int
    center_mhz: float


def check_channel(ch: int) -> int:
    if isinstance(ch, bool) or not isinstance(ch, int) or not 1 <= ch <= 13:
        raise ChannelError(f"channel must be an integer in 1..13, got {ch!r}")
    return ch


def channel_center_mhz(ch: int) -> float:
    check_channel(ch)
    return CHANNEL_1_CENTER_MHZ + CHANNEL_SPACING_MHZ * (ch - 1)


def binary_grid(points: int = GRID_POINTS) -> tuple[FrequencyBin, ...]:
    """The measuring-point grid of the binary-flag receiver (976.5625 kHz steps)."""
    return tuple(FrequencyBin(i, GRID_START_MHZ + GRID_STEP_MHZ * i) for i in range(points))


def bins_for_channel(ch: int, grid: Sequence[FrequencyBin]) -> list[FrequencyBin]:
    """Bins whose centre lies within half a channel width of the channel centre.

    >>> [b.index for b in bins_for_channel(6, binary_grid())][:3]
    [28, 29, 30]
    """
    return list(_channel_members(ch, tuple(grid)))


@lru_cache(maxsize=256)
def _channel_members(ch: int, grid: tuple[FrequencyBin, ...]) -> tuple[FrequencyBin, ...]:
    center = channel_center_mhz(ch)
    half = CHANNEL_WIDTH_MHZ / 2
    selected = tuple(b for b in grid if abs(b.center_mhz - center) <= half)
    if not selected:
        raise GridError(f"grid does not cover channel {ch} ({center} MHz)")
    return selected


def crossing_coefficient(ch: int, k: int) -> Fraction:
    check_channel(ch)
    check_channel(k)
    return CROSSING_TABLE.get(abs(ch - k), Fraction(0))


class QualityBand(enum.Enum):
    """Signal quality grades with (lower, upper] style bounds.

    Every table endpoint stays in the band that lists it: -90 and -81 are
    Bad, -80 and -71 Acceptable, -70 and -67 Very good. The gaps between
    rows are absorbed by the band above them.
    """

    UNACCEPTABLE = ("Unacceptable", -math.inf, -90.0)
    BAD = ("Bad", -90.0, -81.0)
    ACCEPTABLE = ("Acceptable", -81.0, -71.0)
    VERY_GOOD = ("Very good", -71.0, -67.0)
    EXCELLENT = ("Excellent", -67.0, math.inf)

    def __init__(self, label: str, lower_dbm: float, upper_dbm: float):
        self.label = label
        self.lower_dbm = lower_dbm
        self.upper_dbm = upper_dbm

    def contains(self, level: float) -> bool:
        if self is QualityBand.UNACCEPTABLE:
            return level < self.upper_dbm
        if self is QualityBand.BAD:
            return self.lower_dbm <= level <= self.upper_dbm
        return self.lower_dbm < level <= self.upper_dbm

    def __str__(self) -> str:
        return self.label


def classify_quality(level: float) -> QualityBand:
    if not math.isfinite(level):
        raise ValueError(f"level must be finite, got {level!r}")
    for band in QualityBand:
        if band.contains(level):
            return band
    raise AssertionError(f"no band for {level}")  # bands partition the line


def growth_model(year: int) -> float:
    """Power-law estimate of the number of access points at the end of ``year``.

    Evaluated as written, the formula gives about five hundred thousand for
    2018, nowhere near the often-cited figure of 400 million APs.

    >>> growth_model(2001)
    3451.0
    >>> round(growth_model(2018) / 1e5, 2)
    5.03
    >>> growth_model(2018) < 4e8 / 100
    True
    """
    if year <= GROWTH_EPOCH:
        raise ValueError(f"growth model is defined for years after {GROWTH_EPOCH}, got {year}")
    return (year - GROWTH_EPOCH) ** GROWTH_EXPONENT + GROWTH_OFFSET


def dbm_to_mw(level):
    return 10.0 ** (level / 10.0)


def mw_to_dbm(power):
    return 10.0 * math.log10(power)
