"""Deterministic 2.4 GHz radio environment.

Received power at a point is the linear sum of every active emitter whose
spectral occupancy covers the frequency, plus the noise floor. Path loss is
log-distance with optional static log-normal shadowing per link. Time is
discrete: ``slot`` indexes collection time and ``sub`` indexes the polls a
sensor takes within one slot; Bluetooth hoppers retune on every (slot, sub).
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import FrequencyBin, channel_center_mhz, check_channel

WIFI20 = "wifi20"
BLUETOOTH = "bluetooth"
NOISE = "noise"
EMITTER_KINDS = (WIFI20, BLUETOOTH, NOISE)

BT_HOPS = 79
BT_FIRST_MHZ = 2402.0
MIN_DISTANCE_M = 0.1


@dataclass(frozen=True)
class Propagation:
    pl0_db: float = 40.0
    exponent_n: float = 2.7
    shadowing_sigma_db: float = 0.0

    def __post_init__(self):
        if not self.pl0_db > 0:
            raise ValueError("pl0_db must be positive")
        if not 1.6 <= self.exponent_n <= 6:
            raise ValueError("exponent_n must lie in [1.6, 6]")
        if not self.shadowing_sigma_db >= 0:
            raise ValueError("shadowing_sigma_db must be non-negative")


@dataclass(frozen=True)
class Emitter:
    id: str
    kind: str
    position: tuple[float, float]
    tx_power_dbm: float
    channel: Optional[int] = None
    band: Optional[tuple[float, float]] = None
    active_from: int = 0
    active_until: Optional[int] = None  # exclusive

    def __post_init__(self):
        if self.kind not in EMITTER_KINDS:
            raise ValueError(f"unknown emitter kind {self.kind!r}")
        if self.kind == WIFI20:
            check_channel(self.channel)
        if self.kind == NOISE:
            if self.band is None or not self.band[0] <= self.band[1]:
                raise ValueError("noise emitter needs a band (lo_mhz, hi_mhz) with lo <= hi")
        if not -30.0 <= self.tx_power_dbm <= 30.0:
            raise ValueError("tx_power_dbm must lie in [-30, 30]")
        if not all(math.isfinite(c) for c in self.position):
            raise ValueError("position must be finite")

    def is_active(self, slot: int) -> bool:
        if slot < self.active_from:
            return False
        return self.active_until is None or slot < self.active_until


@dataclass(frozen=True)
class RfScenario:
    emitters: tuple[Emitter, ...] = ()
    propagation: Propagation = field(default_factory=Propagation)
    noise_floor_dbm: float = -100.0
    rng_seed: int = 0

    def __post_init__(self):
        ids = [e.id for e in self.emitters]
        if len(set(ids)) != len(ids):
            raise ValueError("emitter ids must be unique")


def stable_key(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


def bluetooth_hop(seed: int, emitter_id: str, slot: int, sub: int = 0) -> int:
    """Hop channel index 0..78 occupied during (slot, sub)."""
    rng = np.random.default_rng([seed, stable_key(emitter_id), slot, sub])
    return int(rng.integers(BT_HOPS))


def shadowing_db(scenario: RfScenario, emitter: Emitter, point: tuple[float, float]) -> float:
    sigma = scenario.propagation.shadowing_sigma_db
    if sigma == 0:
        return 0.0
    where = stable_key(f"{point[0]:.6f},{point[1]:.6f}")
    rng = np.random.default_rng([scenario.rng_seed, stable_key(emitter.id), where])
    return float(rng.normal(0.0, sigma))


def link_level_dbm(scenario: RfScenario, emitter: Emitter, point: tuple[float, float]) -> float:
    """Emitter power arriving at ``point`` before any spectral gating."""
    prop = scenario.propagation
    d = max(math.dist(emitter.position, point), MIN_DISTANCE_M)
    return emitter.tx_power_dbm - prop.pl0_db - 10.0 * prop.exponent_n * math.log10(d) - shadowing_db(
        scenario, emitter, point
    )


def occupancy_mask(emitter: Emitter, freqs: np.ndarray, hop: Optional[int] = None) -> np.ndarray:
    if emitter.kind == WIFI20:
        return np.abs(freqs - channel_center_mhz(emitter.channel)) <= 10.0
    if emitter.kind == NOISE:
        lo, hi = emitter.band
        return (freqs >= lo) & (freqs <= hi)
    return np.abs(freqs - (BT_FIRST_MHZ + hop)) <= 0.5


def power_matrix(
    scenario: RfScenario,
    point: tuple[float, float],
    grid: Sequence[FrequencyBin],
    slot: int,
    n_sub: int = 1,
    emitters: Optional[Iterable[Emitter]] = None,
) -> np.ndarray:
    """Received dBm for sub-polls ``0..n_sub-1`` of ``slot``; shape (n_sub, len(grid))."""
    freqs = np.array([b.center_mhz for b in grid], dtype=float)
    emitters = scenario.emitters if emitters is None else tuple(emitters)
    static = np.full(len(freqs), 10.0 ** (scenario.noise_floor_dbm / 10.0))
    out = np.repeat(static[None, :], n_sub, axis=0)
    for em in emitters:
        if not em.is_active(slot):
            continue
        mw = 10.0 ** (link_level_dbm(scenario, em, point) / 10.0)
        if em.kind == BLUETOOTH:
            for sub in range(n_sub):
                hop = bluetooth_hop(scenario.rng_seed, em.id, slot, sub)
                out[sub] += mw * occupancy_mask(em, freqs, hop)
        else:
            out += mw * occupancy_mask(em, freqs)
    return 10.0 * np.log10(out)


def snapshot(
    scenario: RfScenario,
    point: tuple[float, float],
    grid: Sequence[FrequencyBin],
    time_slot: int,
    sub: int = 0,
    emitters: Optional[Iterable[Emitter]] = None,
) -> np.ndarray:
    return power_matrix(scenario, point, grid, time_slot, n_sub=sub + 1, emitters=emitters)[sub]


def received_power(
    scenario: RfScenario,
    point: tuple[float, float],
    bin: FrequencyBin,
    time_slot: int,
    sub: int = 0,
    emitters: Optional[Iterable[Emitter]] = None,
) -> float:
    return float(snapshot(scenario, point, [bin], time_slot, sub, emitters)[0])
