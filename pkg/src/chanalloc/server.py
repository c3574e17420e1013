"""Networked controller and the sensor-emitter client that talks to it.

The controller speaks the line protocol over TCP. Every connection may
carry several devices. Reports are ingested in arrival order, which keeps
each device's order intact. A collection window closes once every
registered sensor has delivered a report for it, or when
``window_timeout`` expires. At that point the allocation round runs. The
controller then broadcasts the round's assignments to all connections and
sends the deferred Acks for the reports that round consumed. Emitters
therefore know their reports were used, and where the APs now transmit,
before they scan again.

A ``{"type": "status_query"}`` line gets a single ``status`` line back,
carrying the occupancy matrix, AP channels and assignment history.
"""

from __future__ import annotations

import asyncio
import logging
import signal
import socket
import threading
import time
from typing import Optional

from . import protocol
from .allocator import allocate_round, ingest, status
from .scenario import Scenario
from .simulation import RunReport, SensorAgent, bootstrap_state

log = logging.getLogger(__name__)


class _Conn:
    def __init__(self, writer: asyncio.StreamWriter):
        self.writer = writer
        self.acks: list[protocol.Ack] = []

    def send(self, msg: protocol.Message):
        if not self.writer.is_closing():
            self.writer.write(protocol.encode(msg))


class Controller:
    def __init__(
        self,
        scenario: Scenario,
        rounds: Optional[int] = None,
        expect_devices: int = 0,
        window_timeout: float = 2.0,
        start_timeout: float = 30.0,
    ):
        self.scenario = scenario
        self.state = bootstrap_state(scenario)
        self.rounds = rounds
        self.expect_devices = expect_devices
        self.window_timeout = window_timeout
        self.start_timeout = start_timeout
        self.report = RunReport(scenario.name, scenario.seed, 0, final_ap_channels=dict(sorted(self.state.ap_channels.items())))
        self.conns: set[_Conn] = set()
        self.changed = asyncio.Event()
        self.server: Optional[asyncio.base_events.Server] = None

    # -- ingestion ----------------------------------------------------------
    def _sensors(self) -> list[str]:
        return [d for d, dev in self.state.devices.items() if dev.kind != protocol.ACCESS_POINT]

    async def handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        conn = _Conn(writer)
        self.conns.add(conn)
        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                if not line.strip():
                    continue
                try:
                    msg = protocol.decode(line)
                except protocol.ProtocolError as exc:
                    conn.send(exc.to_message())
                    await writer.drain()
                    continue
                if isinstance(msg, protocol.StatusQuery):
                    conn.send(protocol.Status(status(self.state)))
                else:
                    reply = ingest(self.state, msg)
                    if isinstance(reply, protocol.Ack):
                        conn.acks.append(reply)
                    elif reply is not None:
                        conn.send(reply)
                    self.changed.set()
                await writer.drain()
        except (ConnectionError, asyncio.IncompleteReadError):
            pass
        finally:
            self.conns.discard(conn)
            writer.close()

    # -- control loop -------------------------------------------------------
    async def _wait_until(self, predicate, timeout: float) -> bool:
        deadline = time.monotonic() + timeout
        while not predicate():
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return False
            self.changed.clear()
            try:
                await asyncio.wait_for(self.changed.wait(), remaining)
            except asyncio.TimeoutError:
                return predicate()
        return True

    def _window_complete(self, start: int) -> bool:
        sensors = self._sensors()
        return bool(sensors) and all(
            d in self.state.reports and self.state.reports[d].slot >= start for d in sensors
        )

    async def control_loop(self):
        if self.expect_devices:
            ok = await self._wait_until(lambda: len(self._sensors()) >= self.expect_devices, self.start_timeout)
            if not ok:
                log.warning("only %d of %d devices registered, starting anyway", len(self._sensors()), self.expect_devices)
        done = 0
        while self.rounds is None or done < self.rounds:
            start = self.state.now_slot
            await self._wait_until(lambda: self._window_complete(start), self.window_timeout)
            previous = dict(self.state.ap_channels)
            assignments = allocate_round(self.state, now_slot=start)
            self.report.rounds += 1
            self.report.record_round(self.state, assignments, previous)
            for conn in list(self.conns):
                for a in assignments:
                    conn.send(a)
                for ack in conn.acks:
                    conn.send(ack)
                conn.acks.clear()
                try:
                    await conn.writer.drain()
                except ConnectionError:
                    self.conns.discard(conn)
            done += 1

    async def start(self, host: str, port: int):
        self.server = await asyncio.start_server(self.handle, host, port)
        return self.server.sockets[0].getsockname()[:2]

    async def run(self, stop: Optional[asyncio.Event] = None):
        """Run the control loop until it finishes or ``stop`` is set."""
        loop_task = asyncio.ensure_future(self.control_loop())
        waiters = [loop_task]
        if stop is not None:
            waiters.append(asyncio.ensure_future(stop.wait()))
        await asyncio.wait(waiters, return_when=asyncio.FIRST_COMPLETED)
        for t in waiters:
            if not t.done():
                t.cancel()
        if loop_task.done() and not loop_task.cancelled() and loop_task.exception():
            raise loop_task.exception()
        self.server.close()
        for conn in list(self.conns):
            conn.writer.close()
        await self.server.wait_closed()


def serve(
    scenario: Scenario,
    host: str,
    port: int,
    rounds: Optional[int] = None,
    expect_devices: int = 0,
    window_timeout: float = 2.0,
    on_listening=None,
    on_finished=None,
) -> RunReport:
    """Blocking entry point; SIGINT/SIGTERM stop the loop and return the report so far.

    ``on_finished(report)`` runs before the signal handlers are restored, so
    a second signal cannot cut short writing the report out.
    """
    stopper: list = [None]

    def on_signal(signum, frame):
        if stopper[0] is not None:
            stopper[0]()

    async def main():
        ctl = Controller(scenario, rounds, expect_devices, window_timeout)
        addr = await ctl.start(host, port)
        stop = asyncio.Event()
        loop = asyncio.get_running_loop()
        stopper[0] = lambda: loop.call_soon_threadsafe(stop.set)
        if on_listening is not None:
            on_listening(addr)
        await ctl.run(stop)
        stopper[0] = None
        return ctl.report

    previous = {}
    if threading.current_thread() is threading.main_thread():
        previous = {sig: signal.signal(sig, on_signal) for sig in (signal.SIGINT, signal.SIGTERM)}
    try:
        report = asyncio.run(main())
        if on_finished is not None:
            on_finished(report)
        return report
    finally:
        for sig, handler in previous.items():
            signal.signal(sig, handler)


# -- client side ---------------------------------------------------------------

def run_emitter(
    scenario: Scenario,
    sensor_ids: list[str],
    host: str,
    port: int,
    rounds: int,
    timeout: float = 30.0,
    connect_retries: int = 20,
) -> dict[str, Optional[int]]:
    """Drive simulated sensors against a live controller.

    Returns the emitter's final view of the AP channels.
    """
    ap_channels = {ap.id: ap.channel for ap in scenario.aps}
    agents = [SensorAgent(scenario, sid, ap_channels) for sid in sensor_ids]
    window = scenario.allocator_config().collection_window_slots
    for attempt in range(connect_retries + 1):
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
            break
        except ConnectionRefusedError:
            if attempt == connect_retries:
                raise
            time.sleep(0.05 * 2 ** min(attempt, 5))
    with sock, sock.makefile("rwb") as stream:
        for a in agents:
            stream.write(a.hello())
        stream.flush()
        for r in range(rounds):
            outstanding = set()
            for a in agents:
                stream.write(a.report(r * window))
                outstanding.add((a.sensor.id, a.seq))
            stream.flush()
            seqs = {seq for _, seq in outstanding}
            # each agent numbers its own reports, so several agents can share one seq
            pending = len(outstanding)
            while pending:
                line = stream.readline()
                if not line:
                    raise ConnectionError("controller closed the connection")
                msg = protocol.decode(line)
                if isinstance(msg, protocol.AssignChannel):
                    ap_channels[msg.ap_id] = msg.channel
                elif isinstance(msg, protocol.Ack) and msg.ref_seq in seqs:
                    pending -= 1
                elif isinstance(msg, protocol.Error):
                    log.warning("controller error: %s %s", msg.code, msg.detail)
                    pending -= 1
    return ap_channels


def send_lines(host: str, port: int, lines: list[bytes], query_status: bool = True, timeout: float = 10.0):
    """Push raw protocol lines (e.g. a replay log) and optionally fetch status."""
    with socket.create_connection((host, port), timeout=timeout) as sock, sock.makefile("rwb") as stream:
        for line in lines:
            stream.write(line if line.endswith(b"\n") else line + b"\n")
        stream.flush()
        if not query_status:
            return None
        stream.write(protocol.encode(protocol.StatusQuery()))
        stream.flush()
        replies = []
        while True:
            line = stream.readline()
            if not line:
                return None
            msg = protocol.decode(line)
            replies.append(msg)
            if isinstance(msg, protocol.Status):
                return msg, replies
