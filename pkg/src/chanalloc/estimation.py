"""Harmonization of heterogeneous sensor measurements into per-channel levels.

Averages are taken arithmetically over dBm values. Built-in Wi-Fi card
scans are combined in the linear power domain by default; the
``"literal"`` mode multiplies the dBm values by the crossing coefficients
directly, which raises the apparent level of adjacent channels and is kept
only for auditing.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import FrequencyBin, bins_for_channel, check_channel, crossing_coefficient

DEFAULT_SAMPLES_PER_POINT = 100
DEFAULT_NOISE_FLOOR_DBM = -100.0

LINEAR_POWER = "linear"
LITERAL_SUM = "literal"


class InsufficientData(ValueError):
    """Not enough measurements to produce an estimate."""


class MalformedInput(ValueError):
    pass


@dataclass
class PointMeasurementSet:
    samples: dict[FrequencyBin, list[float]]
    samples_per_point: int = DEFAULT_SAMPLES_PER_POINT

    def __post_init__(self):
        for b, values in self.samples.items():
            if len(values) == 0:
                raise MalformedInput(f"bin {b.index} has no samples")

    @functools.cached_property
    def _levels(self) -> dict[FrequencyBin, float]:
        return {b: math.fsum(v) / len(v) for b, v in self.samples.items()}

    def point_levels(self) -> dict[FrequencyBin, float]:
        """Mean of the polled samples at each measuring point."""
        return dict(self._levels)

    @classmethod
    def from_levels(cls, grid: Sequence[FrequencyBin], levels: Iterable[float]):
        """One sample per bin; used for already-averaged per-bin values."""
        return cls({b: [float(x)] for b, x in zip(grid, levels)}, samples_per_point=1)


@dataclass(frozen=True)
class WifiScanEntry:
    channel: int
    level: float

    def __post_init__(self):
        check_channel(self.channel)


@dataclass(frozen=True)
class BinaryEstimatorConfig:
    l_min: float = -85.0
    l_av: float = -64.0
    n_samples: int = 200

    def __post_init__(self):
        if not self.l_min < self.l_av:
            raise ValueError("l_min must be below the flag trigger level l_av")
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")

    @property
    def slope(self) -> float:
        return 2 * (self.l_av - self.l_min) / self.n_samples

    @property
    def l_max(self) -> float:
        return self.l_min + 2 * (self.l_av - self.l_min)


def channel_average(points: PointMeasurementSet, ch: int) -> float:
    levels = points._levels
    try:
        members = bins_for_channel(ch, levels)
    except ValueError as exc:
        raise InsufficientData(f"no measured bins for channel {ch}") from exc
    return math.fsum(levels[b] for b in members) / len(members)


def normalize_weights(weights: Sequence[float]) -> list[float]:
    """Rescale so the weights have mean 1. All-zero weights become all ones."""
    if any(w < 0 or not math.isfinite(w) for w in weights):
        raise ValueError("weights must be finite and non-negative")
    total = math.fsum(weights)
    if not weights:
        return []
    if total == 0:
        return [1.0] * len(weights)
    return [w * len(weights) / total for w in weights]


def fuse_external(reports: Sequence[tuple[float, Mapping[int, float]]], ch: int) -> float:
    """(1/M) * sum(mu_j * L_j) over the reports, exactly as written.

    The mean-1 weight convention is the caller's job (see ``normalize_weights``).
    """
    if not reports:
        raise InsufficientData("no external sensor reports")
    terms = []
    for mu, levels in reports:
        if ch not in levels:
            raise InsufficientData(f"report lacks channel {ch}")
        terms.append(mu * levels[ch])
    return math.fsum(terms) / len(reports)


def card_channel_estimate(
    cards: Sequence[tuple[float, Sequence[WifiScanEntry]]],
    ch: int,
    mode: str = LINEAR_POWER,
    noise_floor_dbm: float = DEFAULT_NOISE_FLOOR_DBM,
) -> float:
    if not cards:
        raise InsufficientData("no Wi-Fi card scans")
    terms = []
    if mode == LINEAR_POWER:
        floor_mw = 10.0 ** (noise_floor_dbm / 10.0)
        for mu, entries in cards:
            power = math.fsum(
                float(crossing_coefficient(ch, e.channel)) * 10.0 ** (e.level / 10.0) for e in entries
            )
            terms.append(mu * 10.0 * math.log10(max(power, floor_mw)))
    elif mode == LITERAL_SUM:
        for mu, entries in cards:
            terms.append(mu * math.fsum(float(crossing_coefficient(ch, e.channel)) * e.level for e in entries))
    else:
        raise ValueError(f"unknown card estimate mode {mode!r}")
    return math.fsum(terms) / len(cards)


def binary_estimate(hits: Sequence[int], cfg: BinaryEstimatorConfig = BinaryEstimatorConfig()) -> np.ndarray:
    """Per-bin level from flag hit counts: affine between l_min and l_max.

    >>> binary_estimate([0, 100, 200]).tolist()
    [-85.0, -64.0, -43.0]
    """
    h = np.asarray(hits)
    if h.size and (not np.issubdtype(h.dtype, np.integer)):
        if not np.all(np.equal(np.mod(h, 1), 0)):
            raise MalformedInput("hit counts must be integers")
    h = h.astype(np.int64)
    if np.any(h < 0) or np.any(h > cfg.n_samples):
        raise MalformedInput(f"hit counts must lie in [0, {cfg.n_samples}]")
    # multiply before dividing so the printed endpoints come out exact
    return cfg.l_min + (2 * (cfg.l_av - cfg.l_min)) * h / cfg.n_samples
