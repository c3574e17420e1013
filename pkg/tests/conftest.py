import signal
import subprocess
import sys

import pytest
from hypothesis import settings

from chanalloc import scenario as scenario_mod

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


@pytest.fixture
def single_jammer():
    return scenario_mod.load("single_jammer")


@pytest.fixture
def static_office():
    return scenario_mod.load("static_office")


class Controller:
    """A `chanalloc serve` subprocess on an ephemeral loopback port."""

    def __init__(self, *args):
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "chanalloc", "serve", "--listen", "127.0.0.1:0", *args],
            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True,
        )
        line = self.proc.stdout.readline()
        if not line.startswith("listening on "):
            self.proc.kill()
            raise RuntimeError(f"controller did not start: {line!r} {self.proc.stderr.read()}")
        host, port = line.split()[-1].rsplit(":", 1)
        self.host, self.port = host, int(port)

    @property
    def address(self) -> str:
        return f"{self.host}:{self.port}"

    def stop(self, timeout=20):
        if self.proc.poll() is None:
            self.proc.send_signal(signal.SIGTERM)
        out, err = self.proc.communicate(timeout=timeout)
        return self.proc.returncode, out, err


@pytest.fixture
def controller():
    started = []

    def start(*args):
        c = Controller(*args)
        started.append(c)
        return c

    yield start
    for c in started:
        if c.proc.poll() is None:
            c.proc.kill()
            c.proc.communicate()


def run_cli(*args, timeout=60):
    return subprocess.run([sys.executable, "-m", "chanalloc", *args], capture_output=True, text=True, timeout=timeout)
