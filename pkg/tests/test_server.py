import json
import socket

from conftest import run_cli

from chanalloc import protocol


def test_replayed_log_is_ingested(controller, tmp_path):
    log = tmp_path / "sensors.jsonl"
    assert run_cli("simulate", "--scenario", "single_jammer", "--rounds", "2", "--log", str(log), "--out", str(tmp_path / "r.json")).returncode == 0
    ctl = controller("--scenario", "single_jammer", "--window-timeout", "0.2")
    res = run_cli("emit", "--connect", ctl.address, "--replay", str(log))
    assert res.returncode == 0, res.stderr
    body = protocol.decode(res.stdout).body
    assert body["reports_ingested"] >= 1
    assert "analyzer-rssi" in body["devices"]
    code, out, _ = ctl.stop()
    assert code == 0
    assert json.loads(out)["scenario"] == "single_jammer"


def test_malformed_line_keeps_connection(controller):
    ctl = controller("--scenario", "single_jammer", "--window-timeout", "0.2")
    with socket.create_connection((ctl.host, ctl.port), timeout=10) as sock, sock.makefile("rwb") as s:
        s.write(b"this is not a message\n")
        s.flush()
        reply = protocol.decode(s.readline())
        assert isinstance(reply, protocol.Error) and reply.code == protocol.PARSE
        s.write(protocol.encode(protocol.ChannelReport("stranger", 1, 0, ((1, -80.0),))))
        s.flush()
        reply = protocol.decode(s.readline())
        assert reply.code == protocol.UNKNOWN_DEVICE
        s.write(protocol.encode(protocol.StatusQuery()))
        s.flush()
        assert isinstance(protocol.decode(s.readline()), protocol.Status)
    assert ctl.stop()[0] == 0


def test_second_controller_on_same_port_fails(controller):
    first = controller("--scenario", "single_jammer")
    res = run_cli("serve", "--scenario", "single_jammer", "--listen", first.address, timeout=20)
    assert res.returncode != 0
    assert "cannot listen" in res.stderr
    assert first.proc.poll() is None


def test_bounded_run_exits_by_itself(controller, tmp_path):
    ctl = controller("--scenario", "two_ap_flat", "--rounds", "3", "--expect", "1", "--out", str(tmp_path / "r.csv"), "--format", "table")
    res = run_cli("emit", "--connect", ctl.address, "--scenario", "two_ap_flat", "--rounds", "3")
    assert res.returncode == 0, res.stderr
    assert res.stdout.split() == ["ap-a", "6", "ap-b", "1"]
    out, _ = ctl.proc.communicate(timeout=20)
    assert ctl.proc.returncode == 0 and "ap-b 6 -> 1" in out
    assert (tmp_path / "r.csv").read_text().startswith("record,round,ap_id,channel,value\n")
