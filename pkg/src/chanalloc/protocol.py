"""Line-delimited JSON wire protocol between devices and the controller.

Each message is one JSON object terminated by ``\\n``. The ``type`` key
selects the message; the remaining keys are the message fields. Unknown keys
are ignored on decode, missing or invalid ones are rejected. Floats are
rounded to 6 fractional digits on encode.

>>> encode(Ack(ref_seq=7))
b'{"type":"ack","ref_seq":7}\\n'
>>> decode(b'{"type":"ack","ref_seq":7,"extra":1}')
Ack(ref_seq=7)
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from typing import Any, Union

FORMAT_VERSION = 1
U64_MAX = 2**64 - 1

RSSI_SENSOR = "rssi_sensor"
BINARY_SENSOR = "binary_sensor"
WIFI_CARD = "wifi_card"
ACCESS_POINT = "access_point"
DEVICE_KINDS = (RSSI_SENSOR, BINARY_SENSOR, WIFI_CARD, ACCESS_POINT)

PARSE = "parse"
STALE = "stale"
UNKNOWN_DEVICE = "unknown_device"


class InvalidMessage(ValueError):
    pass


class ProtocolError(Exception):
    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}")
        self.code = code
        self.detail = detail

    def to_message(self) -> "Error":
        return Error(code=self.code, detail=self.detail)


def _require(cond: bool, what: str):
    if not cond:
        raise InvalidMessage(what)


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _u64(x, name):
    _require(_is_int(x) and 0 <= x <= U64_MAX, f"{name} must be an unsigned 64-bit integer")


def _level(x, name="level_dbm"):
    _require(isinstance(x, float) and math.isfinite(x), f"{name} must be a finite number")


def _text(x, name):
    _require(isinstance(x, str) and x != "", f"{name} must be a non-empty string")


def _channel(x):
    _require(_is_int(x) and 1 <= x <= 13, "channel must be an integer in 1..13")


def _pairs(msg, name):
    raw = getattr(msg, name)
    _require(isinstance(raw, (list, tuple)), f"{name} must be a sequence")
    pairs = []
    for item in raw:
        _require(isinstance(item, (list, tuple)) and len(item) == 2, f"{name} items must be (channel, level) pairs")
        ch, level = item
        _channel(ch)
        _require(_is_int(level) or isinstance(level, float), "level_dbm must be a number")
        level = float(level)
        _level(level)
        pairs.append((ch, level))
    object.__setattr__(msg, name, tuple(pairs))
    return pairs


@dataclass(frozen=True)
class Hello:
    device_id: str
    device_kind: str
    weight: float = 1.0
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        _text(self.device_id, "device_id")
        _require(self.device_kind in DEVICE_KINDS, f"device_kind must be one of {DEVICE_KINDS}")
        _require(_is_int(self.weight) or isinstance(self.weight, float), "weight must be a number")
        object.__setattr__(self, "weight", float(self.weight))
        _require(math.isfinite(self.weight) and self.weight >= 0, "weight must be a finite non-negative number")
        _require(_is_int(self.format_version) and self.format_version >= 1, "format_version must be >= 1")


@dataclass(frozen=True)
class ChannelReport:
    device_id: str
    seq: int
    slot: int
    channels: tuple[tuple[int, float], ...]

    def __post_init__(self):
        _text(self.device_id, "device_id")
        _u64(self.seq, "seq")
        _u64(self.slot, "slot")
        chs = [c for c, _ in _pairs(self, "channels")]
        _require(all(a < b for a, b in zip(chs, chs[1:])), "channels must be strictly ascending")

    def levels(self) -> dict[int, float]:
        return dict(self.channels)


@dataclass(frozen=True)
class WifiCardReport:
    device_id: str
    seq: int
    slot: int
    entries: tuple[tuple[int, float], ...]

    def __post_init__(self):
        _text(self.device_id, "device_id")
        _u64(self.seq, "seq")
        _u64(self.slot, "slot")
        _pairs(self, "entries")


@dataclass(frozen=True)
class AssignChannel:
    ap_id: str
    channel: int
    round: int

    def __post_init__(self):
        _text(self.ap_id, "ap_id")
        _channel(self.channel)
        _u64(self.round, "round")


@dataclass(frozen=True)
class Ack:
    ref_seq: int

    def __post_init__(self):
        _u64(self.ref_seq, "ref_seq")


@dataclass(frozen=True)
class Error:
    code: str
    detail: str = ""

    def __post_init__(self):
        _text(self.code, "code")
        _require(isinstance(self.detail, str), "detail must be a string")


@dataclass(frozen=True)
class StatusQuery:
    pass


@dataclass(frozen=True)
class Status:
    body: dict

    def __post_init__(self):
        _require(isinstance(self.body, dict), "body must be an object")


Message = Union[Hello, ChannelReport, WifiCardReport, AssignChannel, Ack, Error, StatusQuery, Status]

TYPE_NAMES: dict[type, str] = {
    Hello: "hello",
    ChannelReport: "channel_report",
    WifiCardReport: "wifi_card_report",
    AssignChannel: "assign_channel",
    Ack: "ack",
    Error: "error",
    StatusQuery: "status_query",
    Status: "status",
}
TYPES_BY_NAME = {v: k for k, v in TYPE_NAMES.items()}


def _pairs_out(pairs):
    return [{"channel": c, "level_dbm": round(v, 6)} for c, v in pairs]


def _pairs_in(raw):
    _require(isinstance(raw, list), "expected a list of {channel, level_dbm} objects")
    out = []
    for item in raw:
        _require(isinstance(item, dict), "list items must be objects")
        _require("channel" in item and "level_dbm" in item, "items need channel and level_dbm")
        level = item["level_dbm"]
        _require(_is_int(level) or isinstance(level, float), "level_dbm must be a number")
        out.append((item["channel"], float(level)))
    return tuple(out)


def to_dict(msg: Message) -> dict[str, Any]:
    out: dict[str, Any] = {"type": TYPE_NAMES[type(msg)]}
    for f in dataclasses.fields(msg):
        value = getattr(msg, f.name)
        if f.name in ("channels", "entries"):
            value = _pairs_out(value)
        elif isinstance(value, float):
            value = round(value, 6)
        out[f.name] = value
    return out


def encode(msg: Message) -> bytes:
    return (json.dumps(to_dict(msg), separators=(",", ":"), allow_nan=False) + "\n").encode("utf-8")


def _reject_constant(name):
    raise InvalidMessage(f"non-finite number {name}")


def from_dict(obj: dict[str, Any]) -> Message:
    _require(isinstance(obj, dict), "message must be a JSON object")
    cls = TYPES_BY_NAME.get(obj.get("type"))
    _require(cls is not None, f"unknown message type {obj.get('type')!r}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        _require(f.name in obj, f"missing field {f.name!r}")
        value = obj[f.name]
        if f.name in ("channels", "entries"):
            value = _pairs_in(value)
        kwargs[f.name] = value
    return cls(**kwargs)


def decode(line: bytes | str) -> Message:
    """Parse one line; any failure raises ``ProtocolError`` with code ``parse``."""
    try:
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        line = line.rstrip("\n")
        _require("\n" not in line, "embedded newline")
        obj = json.loads(line, parse_constant=_reject_constant)
        return from_dict(obj)
    except (ValueError, TypeError, UnicodeDecodeError) as exc:
        raise ProtocolError(PARSE, str(exc)) from None


def read_lines(stream) -> list[Message]:
    """Decode every non-blank line of a binary stream (e.g. a replay log)."""
    return [decode(raw) for raw in stream if raw.strip()]
