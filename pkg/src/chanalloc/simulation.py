"""In-process harness wiring rfsim, sensors and the allocator, and the run report."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional

from . import protocol
from .allocator import AllocationState, allocate_round, ingest, run_control_loop
from .protocol import AssignChannel
from .scenario import Scenario
from .sensors import hello, make_channel_report, scan


def bootstrap_state(scenario: Scenario) -> AllocationState:
    state = AllocationState(config=scenario.allocator_config())
    for ap in scenario.aps:
        state.register_ap(ap.id, ap.channel)
    return state


class SensorAgent:
    """Runs one simulated sensor and produces its wire messages.

    ``ap_channels`` is the agent's view of where the managed APs currently
    transmit; the in-process harness shares the controller's dict, a
    networked emitter updates its own copy from assignments it receives.
    """

    def __init__(self, scenario: Scenario, sensor_id: str, ap_channels: Optional[dict] = None):
        self.scenario = scenario
        self.sensor = scenario.sensor(sensor_id)
        self.ap_channels = {ap.id: ap.channel for ap in scenario.aps} if ap_channels is None else ap_channels
        self.seq = 0

    def hello(self) -> bytes:
        return protocol.encode(hello(self.sensor))

    def report(self, slot: int) -> bytes:
        emitters = self.scenario.visible_emitters(self.sensor.id, self.ap_channels)
        output = scan(self.sensor, self.scenario.rf, slot, emitters=emitters)
        self.seq += 1
        return protocol.encode(make_channel_report(self.sensor, output, self.seq, slot, self.scenario.channels))

    def apply(self, msg: AssignChannel):
        self.ap_channels[msg.ap_id] = msg.channel


@dataclass
class RunReport:
    scenario: str
    seed: int
    rounds: int
    assignments: list[dict] = field(default_factory=list)
    final_ap_channels: dict[str, Optional[int]] = field(default_factory=dict)
    # one entry per (round, ap) with data: {"round", "ap_id", "levels": {channel: dBm}}
    occupancy: list[dict] = field(default_factory=list)
    metric_dbm: list[Optional[float]] = field(default_factory=list)

    def record_round(self, state: AllocationState, assignments: list[AssignChannel], previous: dict):
        r = state.round - 1
        for a in assignments:
            self.assignments.append({"round": r, "ap_id": a.ap_id, "channel": a.channel, "previous": previous[a.ap_id]})
        for ap in sorted(state.last_occupancy):
            self.occupancy.append({"round": r, "ap_id": ap, "levels": dict(sorted(state.last_occupancy[ap].items()))})
        self.metric_dbm.append(interference_metric(state))
        self.final_ap_channels = dict(sorted(state.ap_channels.items()))

    # -- structured -------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "rounds": self.rounds,
            "assignments": self.assignments,
            "final_ap_channels": self.final_ap_channels,
            "occupancy": [
                {"round": o["round"], "ap_id": o["ap_id"], "levels": {str(c): v for c, v in o["levels"].items()}}
                for o in self.occupancy
            ],
            "metric_dbm": self.metric_dbm,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        d = json.loads(text)
        occ = [
            {"round": o["round"], "ap_id": o["ap_id"], "levels": {int(c): v for c, v in o["levels"].items()}}
            for o in d["occupancy"]
        ]
        return cls(d["scenario"], d["seed"], d["rounds"], d["assignments"], d["final_ap_channels"], occ, d["metric_dbm"])

    # -- tabular ----------------------------------------------------------
    CSV_HEADER = ("record", "round", "ap_id", "channel", "value")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_HEADER)
        w.writerow(("meta", "", "scenario", "", self.scenario))
        w.writerow(("meta", "", "seed", "", self.seed))
        w.writerow(("meta", "", "rounds", "", self.rounds))
        for a in self.assignments:
            w.writerow(("assignment", a["round"], a["ap_id"], a["channel"], _cell(a["previous"])))
        for o in self.occupancy:
            for ch, level in o["levels"].items():
                w.writerow(("occupancy", o["round"], o["ap_id"], ch, repr(level)))
        for r, m in enumerate(self.metric_dbm):
            w.writerow(("metric", r, "", "", _cell(m)))
        for ap, ch in self.final_ap_channels.items():
            w.writerow(("final", "", ap, _cell(ch), ""))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "RunReport":
        rows = list(csv.reader(io.StringIO(text)))
        if tuple(rows[0]) != cls.CSV_HEADER:
            raise ValueError("not a run report table")
        meta = {r[2]: r[4] for r in rows[1:] if r[0] == "meta"}
        report = cls(meta["scenario"], int(meta["seed"]), int(meta["rounds"]))
        occ: dict[tuple[int, str], dict[int, float]] = {}
        for kind, rnd, ap, ch, value in rows[1:]:
            if kind == "assignment":
                report.assignments.append(
                    {"round": int(rnd), "ap_id": ap, "channel": int(ch), "previous": _int_or_none(value)}
                )
            elif kind == "occupancy":
                occ.setdefault((int(rnd), ap), {})[int(ch)] = float(value)
            elif kind == "metric":
                report.metric_dbm.append(None if value == "" else float(value))
            elif kind == "final":
                report.final_ap_channels[ap] = _int_or_none(ch)
        report.occupancy = [{"round": r, "ap_id": ap, "levels": lv} for (r, ap), lv in occ.items()]
        return report

    def summary(self) -> str:
        """Human-readable digest; levels at 2 decimals."""
        lines = [f"scenario {self.scenario}  seed {self.seed}  rounds {self.rounds}"]
        for a in self.assignments:
            lines.append(f"  round {a['round']:>3}: {a['ap_id']} {a['previous']} -> {a['channel']}")
        for ap, ch in self.final_ap_channels.items():
            last = [o for o in self.occupancy if o["ap_id"] == ap]
            level = f"{last[-1]['levels'][ch]:.2f} dBm" if last and ch in last[-1]["levels"] else "n/a"
            lines.append(f"  final {ap}: channel {ch} ({level})")
        finite = [m for m in self.metric_dbm if m is not None]
        if finite:
            lines.append(f"  interference metric, last round: {finite[-1]:.2f} dBm")
        return "\n".join(lines) + "\n"


def _cell(value):
    return "" if value is None else repr(value) if isinstance(value, float) else value


def _int_or_none(value: str):
    return None if value == "" else int(value)


def interference_metric(state: AllocationState) -> Optional[float]:
    """Sum over APs of the occupancy on their channel, combined in mW, as dBm."""
    terms = [
        10.0 ** (occ[state.ap_channels[ap]] / 10.0)
        for ap, occ in state.last_occupancy.items()
        if state.ap_channels.get(ap) in occ
    ]
    return 10.0 * math.log10(math.fsum(terms)) if terms else None


class InProcessTransport:
    def __init__(self, scenario: Scenario, state: AllocationState, record: Optional[list[bytes]] = None):
        self.agents = [SensorAgent(scenario, s.id, state.ap_channels) for s in scenario.sensors]
        self.pending = [a.hello() for a in self.agents]
        self.record = record

    def collect(self, state, window_start, window_end):
        lines, self.pending = self.pending, []
        lines.extend(a.report(window_start) for a in self.agents)
        if self.record is not None:
            self.record.extend(lines)
        # decode the wire bytes so in-process runs see exactly what a socket would carry
        return [protocol.decode(line) for line in lines]

    def deliver(self, assignments):
        pass


def simulate(
    scenario: Scenario, rounds: int, seed: Optional[int] = None, record: Optional[list[bytes]] = None
) -> RunReport:
    """Run ``rounds`` collection windows in-process; ``record`` collects the wire lines."""
    if seed is not None:
        scenario = scenario.with_seed(seed)
    state = bootstrap_state(scenario)
    report = RunReport(scenario.name, scenario.seed, rounds, final_ap_channels=dict(sorted(state.ap_channels.items())))
    transport = InProcessTransport(scenario, state, record)
    previous = {}

    def on_round(st, assignments):
        report.record_round(st, assignments, previous)
        previous.update(st.ap_channels)

    previous.update(state.ap_channels)
    run_control_loop(state, transport, rounds=rounds, on_round=on_round)
    return report


def replay(scenario: Scenario, messages: list[protocol.Message], rounds: Optional[int] = None) -> RunReport:
    """Feed a recorded message log to the controller, windowed by report slot."""
    state = bootstrap_state(scenario)
    window = state.config.collection_window_slots
    slots = [m.slot for m in messages if hasattr(m, "slot")]
    if rounds is None:
        rounds = (max(slots) // window + 1) if slots else 0
    report = RunReport(scenario.name, scenario.seed, rounds, final_ap_channels=dict(sorted(state.ap_channels.items())))
    previous = dict(state.ap_channels)
    queue = list(messages)
    for _ in range(rounds):
        end = state.now_slot + window
        while queue and getattr(queue[0], "slot", -1) < end:
            ingest(state, queue.pop(0))
        assignments = allocate_round(state)
        report.record_round(state, assignments, previous)
        previous.update(state.ap_channels)
    return report
