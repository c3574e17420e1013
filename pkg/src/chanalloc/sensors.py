"""Simulated measurement devices and the reports they send to the controller.

Three device families observe the ``rfsim`` ground truth:

* ``RssiSensor``: continuous receiver, clipped to its chip range and
  quantized to 0.5 dB.
* ``BinarySensor``: single-flag receiver reporting hit counts against a
  fixed threshold; levels are reconstructed with ``binary_estimate``.
* ``WifiCardScanner``: a client's built-in card, which sees only 802.11
  networks and reports one (channel, level) entry per network.

Each sensor draws from its own RNG stream seeded by (scenario seed, sensor
id, slot), so results do not depend on the order sensors are polled in.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from scipy.special import ndtr

from . import protocol
from .core import CHANNELS, FrequencyBin, binary_grid
from .estimation import (
    BinaryEstimatorConfig,
    PointMeasurementSet,
    WifiScanEntry,
    binary_estimate,
    channel_average,
)
from .rfsim import WIFI20, Emitter, RfScenario, link_level_dbm, power_matrix, stable_key

Position = tuple[float, float]
Waypoints = tuple[tuple[int, Position], ...]


def _position_at(position: Position, waypoints: Waypoints, slot: int) -> Position:
    current = position
    for start, where in waypoints:
        if start <= slot:
            current = where
    return current


def sensor_rng(scenario: RfScenario, sensor_id: str, slot: int) -> np.random.Generator:
    return np.random.default_rng([scenario.rng_seed, stable_key(sensor_id), slot])


@dataclass(frozen=True)
class RssiSensor:
    id: str
    position: Position
    weight: float = 1.0
    min_dbm: float = -104.0
    max_dbm: float = -13.0
    resolution_khz: float = 812.0
    step_db: float = 0.5
    samples_per_point: int = 100
    jitter_sigma_db: float = 0.0
    waypoints: Waypoints = ()

    kind = protocol.RSSI_SENSOR

    def position_at(self, slot: int) -> Position:
        return _position_at(self.position, self.waypoints, slot)


@dataclass(frozen=True)
class BinarySensor:
    id: str
    position: Position
    weight: float = 1.0
    threshold_dbm: float = -64.0
    l_min_dbm: float = -85.0
    n_samples: int = 200
    jitter_sigma_db: float = 2.0
    waypoints: Waypoints = ()

    kind = protocol.BINARY_SENSOR

    def position_at(self, slot: int) -> Position:
        return _position_at(self.position, self.waypoints, slot)

    @property
    def estimator(self) -> BinaryEstimatorConfig:
        return BinaryEstimatorConfig(l_min=self.l_min_dbm, l_av=self.threshold_dbm, n_samples=self.n_samples)


@dataclass(frozen=True)
class WifiCardScanner:
    id: str
    position: Position
    weight: float = 1.0
    detection_floor_dbm: float = -90.0
    waypoints: Waypoints = ()

    kind = protocol.WIFI_CARD

    def position_at(self, slot: int) -> Position:
        return _position_at(self.position, self.waypoints, slot)


Sensor = Union[RssiSensor, BinarySensor, WifiCardScanner]


def quantize(levels: np.ndarray, step: float) -> np.ndarray:
    """Round to the nearest multiple of ``step``; exact halves go down."""
    return step * np.ceil(levels / step - 0.5)


def rssi_scan(
    sensor: RssiSensor,
    scenario: RfScenario,
    slot: int,
    grid: Sequence[FrequencyBin] = binary_grid(),
    emitters: Optional[Iterable[Emitter]] = None,
) -> PointMeasurementSet:
    truth = power_matrix(scenario, sensor.position_at(slot), grid, slot, sensor.samples_per_point, emitters)
    if sensor.jitter_sigma_db > 0:
        truth = truth + sensor_rng(scenario, sensor.id, slot).normal(0.0, sensor.jitter_sigma_db, truth.shape)
    readings = np.clip(quantize(truth, sensor.step_db), sensor.min_dbm, sensor.max_dbm)
    return PointMeasurementSet(
        dict(zip(grid, readings.T.tolist())),
        samples_per_point=sensor.samples_per_point,
    )


def draw_flag_hits(truth: np.ndarray, threshold_dbm: float, sigma_db: float, rng: np.random.Generator) -> np.ndarray:
    """Flag outcomes for a (samples, bins) matrix of true levels, summed per bin."""
    if sigma_db == 0:
        flags = truth >= threshold_dbm
    else:
        flags = rng.random(truth.shape) < ndtr((truth - threshold_dbm) / sigma_db)
    return flags.sum(axis=0).astype(np.int64)


def binary_scan(
    sensor: BinarySensor,
    scenario: RfScenario,
    slot: int,
    emitters: Optional[Iterable[Emitter]] = None,
) -> np.ndarray:
    truth = power_matrix(scenario, sensor.position_at(slot), binary_grid(), slot, sensor.n_samples, emitters)
    return draw_flag_hits(truth, sensor.threshold_dbm, sensor.jitter_sigma_db, sensor_rng(scenario, sensor.id, slot))


def wifi_scan(
    sensor: WifiCardScanner,
    scenario: RfScenario,
    slot: int,
    emitters: Optional[Iterable[Emitter]] = None,
) -> list[WifiScanEntry]:
    where = sensor.position_at(slot)
    entries = []
    for em in scenario.emitters if emitters is None else emitters:
        if em.kind != WIFI20 or not em.is_active(slot):
            continue
        level = link_level_dbm(scenario, em, where)
        if level >= sensor.detection_floor_dbm:
            entries.append(WifiScanEntry(em.channel, level))
    return entries


def scan(sensor: Sensor, scenario: RfScenario, slot: int, emitters: Optional[Iterable[Emitter]] = None):
    if isinstance(sensor, RssiSensor):
        return rssi_scan(sensor, scenario, slot, emitters=emitters)
    if isinstance(sensor, BinarySensor):
        return binary_scan(sensor, scenario, slot, emitters=emitters)
    return wifi_scan(sensor, scenario, slot, emitters=emitters)


def make_channel_report(
    sensor: Sensor,
    output,
    seq: int,
    slot: int,
    channels: Sequence[int] = CHANNELS,
) -> Union[protocol.ChannelReport, protocol.WifiCardReport]:
    """Unify a sensor's raw output into the message the controller ingests.

    RSSI sets are averaged per channel, binary hit counts are turned into
    per-bin levels first and then averaged, card scans are forwarded as-is
    because the crossing-coefficient fusion happens at the controller.
    """
    if isinstance(sensor, WifiCardScanner):
        entries = tuple((e.channel, e.level) for e in output)
        return protocol.WifiCardReport(sensor.id, seq, slot, entries)
    if isinstance(sensor, BinarySensor):
        output = PointMeasurementSet.from_levels(binary_grid(), binary_estimate(output, sensor.estimator))
    levels = tuple((ch, channel_average(output, ch)) for ch in sorted(channels))
    return protocol.ChannelReport(sensor.id, seq, slot, levels)


def hello(sensor: Sensor) -> protocol.Hello:
    return protocol.Hello(sensor.id, sensor.kind, float(sensor.weight))
