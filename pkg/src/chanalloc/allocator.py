"""Controller state machine: collect reports, unify them, pick channels.

One allocation round works on the freshest report per device. For every
access point the bound external sensors are fused into one level per
channel, the bound Wi-Fi card scans into another, and the two are mixed
with fixed weights. APs are then visited greedily; each AP already placed
in the round adds a virtual emitter, scaled by the crossing coefficient,
to the candidates of the APs after it. A move is only issued when it
improves the AP's level by more than the hysteresis margin.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional, Protocol

from . import protocol
from .core import CHANNELS, check_channel, crossing_coefficient
from .estimation import (
    DEFAULT_NOISE_FLOOR_DBM,
    LINEAR_POWER,
    InsufficientData,
    WifiScanEntry,
    card_channel_estimate,
    fuse_external,
    normalize_weights,
)
from .protocol import AssignChannel, ChannelReport, Hello, WifiCardReport

log = logging.getLogger(__name__)


@dataclass
class AllocatorConfig:
    hysteresis_db: float = 3.0
    collection_window_slots: int = 10
    allowed_channels: tuple[int, ...] = CHANNELS
    # ap_id -> device ids; an AP missing from the map is bound to every sensor
    sensor_binding: dict[str, frozenset[str]] = field(default_factory=dict)
    w_ext: float = 0.5
    w_int: float = 0.5
    virtual_ap_level_dbm: float = -50.0
    report_ttl_windows: int = 3
    noise_floor_dbm: float = DEFAULT_NOISE_FLOOR_DBM
    card_mode: str = LINEAR_POWER

    def __post_init__(self):
        if self.hysteresis_db < 0:
            raise ValueError("hysteresis_db must be >= 0")
        if self.collection_window_slots < 1:
            raise ValueError("collection_window_slots must be >= 1")
        if not self.allowed_channels:
            raise ValueError("allowed_channels must not be empty")
        self.allowed_channels = tuple(sorted(set(check_channel(c) for c in self.allowed_channels)))
        if min(self.w_ext, self.w_int) < 0 or not math.isclose(self.w_ext + self.w_int, 1.0):
            raise ValueError("w_ext and w_int must be non-negative and sum to 1")
        if self.report_ttl_windows < 1:
            raise ValueError("report_ttl_windows must be >= 1")
        self.sensor_binding = {ap: frozenset(ids) for ap, ids in self.sensor_binding.items()}

    @property
    def ttl_slots(self) -> int:
        return self.report_ttl_windows * self.collection_window_slots


@dataclass
class Device:
    kind: str
    weight: float
    last_seq: Optional[int] = None


@dataclass
class AllocationState:
    config: AllocatorConfig = field(default_factory=AllocatorConfig)
    devices: dict[str, Device] = field(default_factory=dict)
    reports: dict[str, ChannelReport | WifiCardReport] = field(default_factory=dict)
    ap_channels: dict[str, Optional[int]] = field(default_factory=dict)
    round: int = 0
    history: list[AssignChannel] = field(default_factory=list)
    last_occupancy: dict[str, dict[int, float]] = field(default_factory=dict)
    reports_ingested: int = 0

    def register_ap(self, ap_id: str, channel: Optional[int] = None, weight: float = 1.0):
        self.devices[ap_id] = Device(protocol.ACCESS_POINT, weight)
        self.ap_channels[ap_id] = channel

    @property
    def now_slot(self) -> int:
        return self.round * self.config.collection_window_slots


def ingest(state: AllocationState, msg: protocol.Message):
    """Apply one inbound message; returns the reply (Ack/Error) or None."""
    if isinstance(msg, Hello):
        if msg.device_kind == protocol.ACCESS_POINT:
            if msg.device_id not in state.ap_channels:
                state.register_ap(msg.device_id, weight=msg.weight)
            return None
        prev = state.devices.get(msg.device_id)
        state.devices[msg.device_id] = Device(msg.device_kind, msg.weight, prev.last_seq if prev else None)
        return None
    if isinstance(msg, (ChannelReport, WifiCardReport)):
        dev = state.devices.get(msg.device_id)
        if dev is None:
            return protocol.Error(protocol.UNKNOWN_DEVICE, f"device {msg.device_id!r} has not said hello")
        if dev.last_seq is not None and msg.seq <= dev.last_seq:
            return protocol.Error(protocol.STALE, f"seq {msg.seq} <= last seen {dev.last_seq}")
        dev.last_seq = msg.seq
        state.reports[msg.device_id] = msg
        state.reports_ingested += 1
        return protocol.Ack(msg.seq)
    return protocol.Error(protocol.PARSE, f"controller does not accept {protocol.TYPE_NAMES[type(msg)]}")


def expire_reports(state: AllocationState, now_slot: int):
    ttl = state.config.ttl_slots
    for dev_id in [d for d, r in state.reports.items() if now_slot - r.slot > ttl]:
        del state.reports[dev_id]


def bound_devices(state: AllocationState, ap_id: str) -> list[str]:
    binding = state.config.sensor_binding.get(ap_id)
    return sorted(
        d for d, dev in state.devices.items()
        if dev.kind != protocol.ACCESS_POINT and (binding is None or d in binding)
    )


def occupancy_vector(state: AllocationState, ap_id: str, channels: Iterable[int] | None = None) -> dict[int, float]:
    if ap_id not in state.ap_channels:
        raise KeyError(f"unknown access point {ap_id!r}")
    cfg = state.config
    channels = cfg.allowed_channels if channels is None else tuple(channels)
    ext, cards = [], []
    for d in bound_devices(state, ap_id):
        rep = state.reports.get(d)
        if isinstance(rep, ChannelReport):
            ext.append((state.devices[d].weight, rep.levels()))
        elif isinstance(rep, WifiCardReport):
            cards.append((state.devices[d].weight, [WifiScanEntry(c, lv) for c, lv in rep.entries]))
    if not ext and not cards:
        raise InsufficientData(f"no fresh reports bound to {ap_id!r}")
    ext = list(zip(normalize_weights([w for w, _ in ext]), (lv for _, lv in ext)))
    cards = list(zip(normalize_weights([w for w, _ in cards]), (e for _, e in cards)))
    out = {}
    for ch in channels:
        parts = []
        if ext:
            parts.append((cfg.w_ext, fuse_external(ext, ch)))
        if cards:
            parts.append((cfg.w_int, card_channel_estimate(cards, ch, cfg.card_mode, cfg.noise_floor_dbm)))
        out[ch] = parts[0][1] if len(parts) == 1 else math.fsum(w * v for w, v in parts)
    return out


def occupancy(state: AllocationState, ap_id: str, ch: int) -> float:
    return occupancy_vector(state, ap_id, [ch])[ch]


def ap_order(state: AllocationState) -> list[str]:
    return sorted(state.ap_channels, key=lambda ap: (-len(bound_devices(state, ap)), ap))


def penalized(occ: dict[int, float], placed: list[int], virtual_level_dbm: float) -> dict[int, float]:
    virtual_mw = 10.0 ** (virtual_level_dbm / 10.0)
    out = {}
    for ch, level in occ.items():
        extra = math.fsum(float(crossing_coefficient(ch, p)) * virtual_mw for p in placed)
        out[ch] = level if extra == 0 else 10.0 * math.log10(10.0 ** (level / 10.0) + extra)
    return out


def allocate_round(state: AllocationState, now_slot: Optional[int] = None) -> list[AssignChannel]:
    cfg = state.config
    now_slot = state.now_slot if now_slot is None else now_slot
    expire_reports(state, now_slot)
    assignments = []
    placed: list[int] = []
    state.last_occupancy = {}
    for ap in ap_order(state):
        try:
            occ = occupancy_vector(state, ap)
        except InsufficientData:
            log.info("round %d: no data for %s, keeping channel %s", state.round, ap, state.ap_channels[ap])
            continue
        state.last_occupancy[ap] = occ
        score = penalized(occ, placed, cfg.virtual_ap_level_dbm)
        candidate = min(cfg.allowed_channels, key=lambda c: (score[c], c))
        current = state.ap_channels[ap]
        if current not in score or score[current] - score[candidate] > cfg.hysteresis_db:
            if candidate != current:
                log.info("round %d: %s %s -> %d", state.round, ap, current, candidate)
                msg = AssignChannel(ap, candidate, state.round)
                assignments.append(msg)
                state.history.append(msg)
                state.ap_channels[ap] = candidate
        placed.append(state.ap_channels[ap])
    state.round += 1
    return assignments


def status(state: AllocationState) -> dict:
    return {
        "round": state.round,
        "ap_channels": dict(state.ap_channels),
        "occupancy": {ap: {str(c): v for c, v in occ.items()} for ap, occ in state.last_occupancy.items()},
        "history": [protocol.to_dict(a) for a in state.history],
        "devices": sorted(state.devices),
        "reports_ingested": state.reports_ingested,
    }


class Transport(Protocol):
    def collect(self, state: AllocationState, window_start: int, window_end: int) -> Iterable[protocol.Message]: ...

    def deliver(self, assignments: list[AssignChannel]) -> None: ...


def run_control_loop(
    state: AllocationState,
    transport: Transport,
    rounds: Optional[int] = None,
    retries: int = 5,
    backoff_s: float = 0.05,
    on_round=None,
):
    """Alternate collection windows and allocation rounds.

    Runs forever when ``rounds`` is None. ``on_round(state, assignments)``
    is called after each round, e.g. to record a report.
    """
    done = 0
    while rounds is None or done < rounds:
        start = state.now_slot
        end = start + state.config.collection_window_slots
        for attempt in range(retries + 1):
            try:
                messages = list(transport.collect(state, start, end))
                break
            except ConnectionError:
                if attempt == retries:
                    raise
                log.warning("transport failure, retrying in %.2fs", backoff_s * 2**attempt)
                time.sleep(backoff_s * 2**attempt)
        for msg in messages:
            reply = ingest(state, msg)
            if isinstance(reply, protocol.Error):
                log.warning("rejected message: %s %s", reply.code, reply.detail)
        assignments = allocate_round(state, now_slot=start)
        transport.deliver(assignments)
        if on_round is not None:
            on_round(state, assignments)
        done += 1
