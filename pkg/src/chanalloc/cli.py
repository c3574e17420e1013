"""Command line entry point: ``chanalloc <command> ...``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import protocol, scenario as scenario_mod
from .core import classify_quality, growth_model
from .simulation import RunReport, replay, simulate

log = logging.getLogger("chanalloc")


def _address(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected ADDR:PORT, got {text!r}")
    return host, int(port)


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _load(args):
    scn = scenario_mod.load(args.scenario)
    if getattr(args, "seed", None) is not None:
        scn = scn.with_seed(args.seed)
    return scn


def _emit_report(report: RunReport, args):
    text = report.to_csv() if args.format == "table" else report.to_json()
    if args.out:
        Path(args.out).write_text(text)
        sys.stdout.write(report.summary())
    else:
        sys.stdout.write(text)
    if getattr(args, "figures", None):
        from .plotting import render_report

        stem = Path(args.out).stem if args.out else report.scenario
        for p in render_report(report, args.figures, stem):
            log.info("wrote %s", p)


def cmd_simulate(args) -> int:
    scn = _load(args)
    lines = [] if args.log else None
    report = simulate(scn, args.rounds, record=lines)
    if args.log:
        Path(args.log).write_bytes(b"".join(lines))
    _emit_report(report, args)
    return 0


def cmd_replay(args) -> int:
    scn = _load(args)
    with open(args.log, "rb") as fh:
        messages = []
        for n, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                messages.append(protocol.decode(raw))
            except protocol.ProtocolError as exc:
                log.warning("%s:%d: %s", args.log, n, exc)
    _emit_report(replay(scn, messages, args.rounds), args)
    return 0


def cmd_serve(args) -> int:
    from .server import serve

    scn = _load(args)
    host, port = args.listen

    def announce(addr):
        print(f"listening on {addr[0]}:{addr[1]}", flush=True)

    try:
        serve(scn, host, port, args.rounds, args.expect, args.window_timeout,
              on_listening=announce, on_finished=lambda report: _emit_report(report, args))
    except OSError as exc:
        print(f"error: cannot listen on {host}:{port}: {exc.strerror or exc}", file=sys.stderr)
        return 3
    return 0


def cmd_emit(args) -> int:
    from .server import run_emitter, send_lines

    host, port = args.connect
    if args.replay:
        lines = [l for l in Path(args.replay).read_bytes().splitlines(keepends=True) if l.strip()]
        result = send_lines(host, port, lines)
        if result is None:
            print("error: no status reply", file=sys.stderr)
            return 1
        status, _ = result
        sys.stdout.write(protocol.encode(status).decode())
        return 0
    scn = _load(args)
    ids = args.device or [s.id for s in scn.sensors]
    final = run_emitter(scn, ids, host, port, args.rounds)
    for ap, ch in sorted(final.items()):
        print(f"{ap} {ch}")
    return 0


def cmd_growth(args) -> int:
    try:
        value = growth_model(args.year)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"{value:.10g} access points")
    return 0


def cmd_classify(args) -> int:
    try:
        band = classify_quality(args.level_dbm)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(band.label)
    return 0


def cmd_scenarios(args) -> int:
    for name in scenario_mod.bundled_names():
        print(name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chanalloc", description="2.4 GHz dynamic channel allocation simulator and controller")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp, rounds_default=None):
        sp.add_argument("--scenario", required=True, help="scenario file or bundled scenario name")
        sp.add_argument("--rounds", type=int, default=rounds_default)
        sp.add_argument("--seed", type=_u64, default=None, help="override the scenario seed")

    def output_args(sp):
        sp.add_argument("--out", help="write the run report here instead of stdout")
        sp.add_argument("--format", choices=("table", "structured"), default="structured")
        sp.add_argument("--figures", metavar="DIR", help="also render figures into DIR")

    sp = sub.add_parser("simulate", help="run rfsim, sensors and the allocator in-process")
    scenario_args(sp, 20)
    output_args(sp)
    sp.add_argument("--log", metavar="PATH", help="also record the sensor message log for replay")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("serve", help="run the controller on a TCP port")
    scenario_args(sp)
    output_args(sp)
    sp.add_argument("--listen", type=_address, default=("127.0.0.1", 7411), metavar="ADDR:PORT")
    sp.add_argument("--expect", type=int, default=0, help="wait for this many sensors before round 0")
    sp.add_argument("--window-timeout", type=float, default=2.0, help="seconds before a window closes without all reports")
    sp.set_defaults(func=cmd_serve)

    sp = sub.add_parser("emit", help="run simulated sensors against a controller, or push a log")
    sp.add_argument("--connect", type=_address, required=True, metavar="ADDR:PORT")
    sp.add_argument("--scenario")
    sp.add_argument("--device", action="append", help="sensor id to drive (repeatable; default all)")
    sp.add_argument("--rounds", type=int, default=20)
    sp.add_argument("--seed", type=_u64, default=None)
    sp.add_argument("--replay", metavar="FILE", help="send the lines of FILE and print the status reply")
    sp.set_defaults(func=cmd_emit)

    sp = sub.add_parser("replay", help="feed a recorded message log to the allocator")
    scenario_args(sp)
    output_args(sp)
    sp.add_argument("--log", required=True, metavar="FILE")
    sp.set_defaults(func=cmd_replay)

    sp = sub.add_parser("growth", help="access-point growth model for a year")
    sp.add_argument("year", type=int)
    sp.set_defaults(func=cmd_growth)

    sp = sub.add_parser("classify", help="signal quality band of a level in dBm")
    sp.add_argument("level_dbm", type=float)
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("scenarios", help="list bundled scenarios")
    sp.set_defaults(func=cmd_scenarios)
    return p


def main(argv=None) -> int:
    level = os.environ.get("CHANALLOC_LOG", "WARNING").upper()
    logging.basicConfig(
        level=level if isinstance(logging.getLevelName(level), int) else "WARNING",
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    args = build_parser().parse_args(argv)
    if args.command == "emit" and not args.replay and not args.scenario:
        print("error: emit needs --scenario unless --replay is given", file=sys.stderr)
        return 2
    if getattr(args, "rounds", None) is not None and args.rounds < 0:
        print("error: --rounds must be >= 0", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except scenario_mod.ScenarioError as exc:
        print(f"error: invalid scenario: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
