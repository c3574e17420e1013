"""Scenario files: the simulated environment plus device placements.

A scenario is a YAML mapping::

    format_version: 1
    name: single_jammer
    seed: 7
    noise_floor_dbm: -100.0
    channels: [1, 2, ..., 13]
    propagation: {pl0_db: 40.0, exponent_n: 2.7, shadowing_sigma_db: 0.0}
    emitters:
      - {id: jammer, kind: wifi20, channel: 6, position: [5, 0], tx_power_dbm: 20}
      - {id: headset, kind: bluetooth, position: [2, 2], tx_power_dbm: 4}
      - {id: oven, kind: noise, band: [2440, 2470], position: [8, 1], tx_power_dbm: 10,
         active_from: 30, active_until: 60}
    sensors:
      - {id: s1, kind: rssi, position: [1, 0], weight: 1.0}
      - {id: s2, kind: binary, position: [0, 1], jitter_sigma_db: 2.0}
      - {id: s3, kind: wifi_card, position: [-1, 0],
         waypoints: [{slot: 50, position: [3, 3]}]}
    aps:
      - {id: ap1, position: [0, 0], channel: 6, tx_power_dbm: 20, sensors: [s1, s2]}
    allocator: {hysteresis_db: 3.0, collection_window_slots: 10}

Omitted optional keys take the defaults of the corresponding classes. An
AP without a ``sensors`` list is bound to every sensor. Sensors never see
the APs they are bound to: an AP goes silent while its own analyzers scan.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import yaml

from .allocator import AllocatorConfig
from .core import CHANNELS
from .rfsim import EMITTER_KINDS, NOISE, WIFI20, Emitter, Propagation, RfScenario
from .sensors import BinarySensor, RssiSensor, Sensor, WifiCardScanner

FORMAT_VERSION = 1
SENSOR_KINDS = {"rssi": RssiSensor, "binary": BinarySensor, "wifi_card": WifiCardScanner}
KIND_NAMES = {cls: name for name, cls in SENSOR_KINDS.items()}


class ScenarioError(ValueError):
    def __init__(self, where: str, problem: str):
        super().__init__(f"{where}: {problem}")
        self.where = where


@dataclass(frozen=True)
class AccessPoint:
    id: str
    position: tuple[float, float]
    channel: Optional[int] = None
    tx_power_dbm: float = 20.0
    sensors: Optional[tuple[str, ...]] = None

    def binds(self, sensor_id: str) -> bool:
        return self.sensors is None or sensor_id in self.sensors


@dataclass(frozen=True)
class Scenario:
    rf: RfScenario
    sensors: tuple[Sensor, ...] = ()
    aps: tuple[AccessPoint, ...] = ()
    channels: tuple[int, ...] = CHANNELS
    allocator: dict = field(default_factory=dict)
    name: str = "scenario"

    @property
    def seed(self) -> int:
        return self.rf.rng_seed

    def with_seed(self, seed: int) -> "Scenario":
        return dataclasses.replace(self, rf=dataclasses.replace(self.rf, rng_seed=seed))

    def sensor(self, sensor_id: str) -> Sensor:
        for s in self.sensors:
            if s.id == sensor_id:
                return s
        raise KeyError(sensor_id)

    def allocator_config(self) -> AllocatorConfig:
        binding = {ap.id: frozenset(ap.sensors) for ap in self.aps if ap.sensors is not None}
        return AllocatorConfig(
            allowed_channels=self.channels,
            sensor_binding=binding,
            noise_floor_dbm=self.rf.noise_floor_dbm,
            **self.allocator,
        )

    def ap_emitters(self, ap_channels: dict[str, Optional[int]], sensor_id: Optional[str] = None) -> list[Emitter]:
        out = []
        for ap in self.aps:
            ch = ap_channels.get(ap.id, ap.channel)
            if ch is None or (sensor_id is not None and ap.binds(sensor_id)):
                continue
            out.append(Emitter(ap.id, WIFI20, ap.position, ap.tx_power_dbm, channel=ch))
        return out

    def visible_emitters(self, sensor_id: str, ap_channels: dict[str, Optional[int]]) -> tuple[Emitter, ...]:
        return self.rf.emitters + tuple(self.ap_emitters(ap_channels, sensor_id))

    def to_dict(self) -> dict[str, Any]:
        return {
            "format_version": FORMAT_VERSION,
            "name": self.name,
            "seed": self.rf.rng_seed,
            "noise_floor_dbm": self.rf.noise_floor_dbm,
            "channels": list(self.channels),
            "propagation": dataclasses.asdict(self.rf.propagation),
            "emitters": [_emitter_dict(e) for e in self.rf.emitters],
            "sensors": [_sensor_dict(s) for s in self.sensors],
            "aps": [_ap_dict(a) for a in self.aps],
            "allocator": dict(self.allocator),
        }

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)


def _emitter_dict(e: Emitter) -> dict:
    d = {"id": e.id, "kind": e.kind, "position": list(e.position), "tx_power_dbm": e.tx_power_dbm}
    if e.kind == WIFI20:
        d["channel"] = e.channel
    if e.kind == NOISE:
        d["band"] = list(e.band)
    d["active_from"] = e.active_from
    d["active_until"] = e.active_until
    return d


def _sensor_dict(s: Sensor) -> dict:
    d = {"kind": KIND_NAMES[type(s)]}
    for f in dataclasses.fields(s):
        value = getattr(s, f.name)
        if f.name == "position":
            value = list(value)
        elif f.name == "waypoints":
            value = [{"slot": t, "position": list(p)} for t, p in value]
        d[f.name] = value
    return d


def _ap_dict(a: AccessPoint) -> dict:
    return {
        "id": a.id,
        "position": list(a.position),
        "channel": a.channel,
        "tx_power_dbm": a.tx_power_dbm,
        "sensors": None if a.sensors is None else list(a.sensors),
    }


# -- parsing ---------------------------------------------------------------

def _number(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ScenarioError(where, f"expected a finite number, got {value!r}")
    return float(value)


def _integer(value, where, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(where, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ScenarioError(where, f"must be >= {minimum}")
    return value


def _text(value, where):
    if not isinstance(value, str) or not value:
        raise ScenarioError(where, f"expected a non-empty string, got {value!r}")
    return value


def _point(value, where):
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ScenarioError(where, "expected [x, y]")
    return (_number(value[0], f"{where}[0]"), _number(value[1], f"{where}[1]"))


def _mapping(value, where):
    if not isinstance(value, dict):
        raise ScenarioError(where, "expected a mapping")
    return value


def _listing(value, where):
    if value is None:
        return []
    if not isinstance(value, list):
        raise ScenarioError(where, "expected a list")
    return value


def _build(cls, where, **kwargs):
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ScenarioError(where, str(exc)) from None


def _parse_emitter(raw, where) -> Emitter:
    raw = _mapping(raw, where)
    kind = raw.get("kind")
    if kind not in EMITTER_KINDS:
        raise ScenarioError(f"{where}.kind", f"must be one of {EMITTER_KINDS}, got {kind!r}")
    kw = {
        "id": _text(raw.get("id"), f"{where}.id"),
        "kind": kind,
        "position": _point(raw.get("position"), f"{where}.position"),
        "tx_power_dbm": _number(raw.get("tx_power_dbm"), f"{where}.tx_power_dbm"),
        "active_from": _integer(raw.get("active_from", 0), f"{where}.active_from", 0),
    }
    if not -30.0 <= kw["tx_power_dbm"] <= 30.0:
        raise ScenarioError(f"{where}.tx_power_dbm", "must lie in [-30, 30]")
    if raw.get("active_until") is not None:
        kw["active_until"] = _integer(raw["active_until"], f"{where}.active_until", 0)
    if kind == WIFI20:
        ch = raw.get("channel")
        if isinstance(ch, bool) or not isinstance(ch, int) or not 1 <= ch <= 13:
            raise ScenarioError(f"{where}.channel", f"expected a channel in 1..13, got {ch!r}")
        kw["channel"] = ch
    elif kind == NOISE:
        kw["band"] = _point(raw.get("band"), f"{where}.band")
    return _build(Emitter, where, **kw)


def _parse_sensor(raw, where) -> Sensor:
    raw = _mapping(raw, where)
    kind = raw.get("kind")
    if kind not in SENSOR_KINDS:
        raise ScenarioError(f"{where}.kind", f"must be one of {sorted(SENSOR_KINDS)}, got {kind!r}")
    cls = SENSOR_KINDS[kind]
    kw: dict[str, Any] = {}
    for f in dataclasses.fields(cls):
        key = f"{where}.{f.name}"
        if f.name not in raw:
            if f.default is dataclasses.MISSING:
                raise ScenarioError(key, "missing")
            continue
        value = raw[f.name]
        if f.name == "id":
            kw["id"] = _text(value, key)
        elif f.name == "position":
            kw["position"] = _point(value, key)
        elif f.name == "waypoints":
            kw["waypoints"] = tuple(
                (_integer(_mapping(w, f"{key}[{i}]").get("slot"), f"{key}[{i}].slot", 0),
                 _point(w.get("position"), f"{key}[{i}].position"))
                for i, w in enumerate(_listing(value, key))
            )
        elif f.name in ("samples_per_point", "n_samples"):
            kw[f.name] = _integer(value, key, 1)
        else:
            kw[f.name] = _number(value, key)
            if f.name in ("weight", "jitter_sigma_db", "step_db") and kw[f.name] < 0:
                raise ScenarioError(key, "must be >= 0")
    if kind == "rssi" and raw.get("min_dbm", -104.0) >= raw.get("max_dbm", -13.0):
        raise ScenarioError(f"{where}.min_dbm", "must be below max_dbm")
    if kind == "binary" and raw.get("l_min_dbm", -85.0) >= raw.get("threshold_dbm", -64.0):
        raise ScenarioError(f"{where}.l_min_dbm", "must be below threshold_dbm")
    if kind == "rssi" and kw.get("step_db", 0.5) == 0:
        raise ScenarioError(f"{where}.step_db", "must be > 0")
    return _build(cls, where, **kw)


def _parse_ap(raw, where, sensor_ids) -> AccessPoint:
    raw = _mapping(raw, where)
    kw: dict[str, Any] = {
        "id": _text(raw.get("id"), f"{where}.id"),
        "position": _point(raw.get("position"), f"{where}.position"),
        "tx_power_dbm": _number(raw.get("tx_power_dbm", 20.0), f"{where}.tx_power_dbm"),
    }
    if not -30.0 <= kw["tx_power_dbm"] <= 30.0:
        raise ScenarioError(f"{where}.tx_power_dbm", "must lie in [-30, 30]")
    ch = raw.get("channel")
    if ch is not None:
        if isinstance(ch, bool) or not isinstance(ch, int) or not 1 <= ch <= 13:
            raise ScenarioError(f"{where}.channel", f"expected a channel in 1..13, got {ch!r}")
        kw["channel"] = ch
    if raw.get("sensors") is not None:
        bound = tuple(_text(s, f"{where}.sensors[{i}]") for i, s in enumerate(_listing(raw["sensors"], f"{where}.sensors")))
        for i, s in enumerate(bound):
            if s not in sensor_ids:
                raise ScenarioError(f"{where}.sensors[{i}]", f"unknown sensor {s!r}")
        kw["sensors"] = bound
    return AccessPoint(**kw)


ALLOCATOR_KEYS = {
    "hysteresis_db": float, "collection_window_slots": int, "w_ext": float, "w_int": float,
    "virtual_ap_level_dbm": float, "report_ttl_windows": int, "card_mode": str,
}


def from_dict(raw: Any) -> Scenario:
    raw = _mapping(raw, "scenario")
    version = raw.get("format_version")
    if version != FORMAT_VERSION:
        raise ScenarioError("format_version", f"expected {FORMAT_VERSION}, got {version!r}")
    seed = _integer(raw.get("seed", 0), "seed", 0)
    floor = _number(raw.get("noise_floor_dbm", -100.0), "noise_floor_dbm")
    prop_raw = _mapping(raw.get("propagation", {}), "propagation")
    prop_kw = {}
    for f in dataclasses.fields(Propagation):
        if f.name in prop_raw:
            prop_kw[f.name] = _number(prop_raw[f.name], f"propagation.{f.name}")
    prop = _build(Propagation, "propagation", **prop_kw)
    emitters = tuple(_parse_emitter(e, f"emitters[{i}]") for i, e in enumerate(_listing(raw.get("emitters"), "emitters")))
    sensors = tuple(_parse_sensor(s, f"sensors[{i}]") for i, s in enumerate(_listing(raw.get("sensors"), "sensors")))
    sensor_ids = [s.id for s in sensors]
    aps = tuple(_parse_ap(a, f"aps[{i}]", set(sensor_ids)) for i, a in enumerate(_listing(raw.get("aps"), "aps")))
    all_ids = [e.id for e in emitters] + sensor_ids + [a.id for a in aps]
    for i, ident in enumerate(all_ids):
        if ident in all_ids[:i]:
            raise ScenarioError("ids", f"duplicate device/emitter id {ident!r}")
    channels = tuple(_listing(raw.get("channels", list(CHANNELS)), "channels"))
    for i, ch in enumerate(channels):
        if isinstance(ch, bool) or not isinstance(ch, int) or not 1 <= ch <= 13:
            raise ScenarioError(f"channels[{i}]", f"expected a channel in 1..13, got {ch!r}")
    if not channels:
        raise ScenarioError("channels", "must not be empty")
    alloc = dict(_mapping(raw.get("allocator", {}) or {}, "allocator"))
    for key, value in alloc.items():
        if key not in ALLOCATOR_KEYS:
            raise ScenarioError(f"allocator.{key}", "unknown setting")
        kind = ALLOCATOR_KEYS[key]
        if kind is float:
            alloc[key] = _number(value, f"allocator.{key}")
        elif kind is int:
            alloc[key] = _integer(value, f"allocator.{key}", 1)
        else:
            alloc[key] = _text(value, f"allocator.{key}")
    scenario = Scenario(
        rf=RfScenario(emitters=emitters, propagation=prop, noise_floor_dbm=floor, rng_seed=seed),
        sensors=sensors,
        aps=aps,
        channels=channels,
        allocator=alloc,
        name=str(raw.get("name", "scenario")),
    )
    try:
        scenario.allocator_config()
    except ValueError as exc:
        raise ScenarioError("allocator", str(exc)) from None
    return scenario


def loads(text: str) -> Scenario:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError("file", f"not valid YAML: {exc}") from None
    return from_dict(raw)


def bundled_names() -> list[str]:
    root = resources.files("chanalloc") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load(path_or_name: str | Path) -> Scenario:
    """Load a scenario file, or a bundled scenario by name (e.g. ``single_jammer``)."""
    path = Path(path_or_name)
    if path.exists():
        return loads(path.read_text())
    if str(path_or_name) in bundled_names():
        return loads((resources.files("chanalloc") / "scenarios" / f"{path_or_name}.yaml").read_text())
    raise ScenarioError("scenario", f"no such file or bundled scenario: {path_or_name}")
