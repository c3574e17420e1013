
import numpy as np
import pytest

from chanalloc import protocol
from chanalloc.core import CHANNELS, binary_grid, crossing_coefficient
from chanalloc.estimation import PointMeasurementSet
from chanalloc.rfsim import BLUETOOTH, NOISE, WIFI20, Emitter, Propagation, RfScenario
from chanalloc.sensors import (
    BinarySensor,
    RssiSensor,
    WifiCardScanner,
    binary_scan,
    draw_flag_hits,
    make_channel_report,
    quantize,
    rssi_scan,
    wifi_scan,
)

GRID = binary_grid()
PROP = Propagation(40.0, 2.7, 0.0)


def test_quantize_half_down():
    assert quantize(np.array([-60.3]), 0.5)[0] == -60.5
    assert quantize(np.array([-60.25]), 0.5)[0] == -60.5
    assert quantize(np.array([-60.2]), 0.5)[0] == -60.0
    assert quantize(np.array([-60.75]), 0.5)[0] == -61.0


class TestRssi:
    def test_empty_scenario(self):
        pts = rssi_scan(RssiSensor("s", (0, 0)), RfScenario(), 0)
        assert set(pts.point_levels().values()) == {-100.0}
        assert pts.samples_per_point == 100
        assert all(len(v) == 100 for v in pts.samples.values())

    def test_ceiling_clip(self):
        # -10 dBm truth at 1 m: 30 dBm - 40 dB
        scn = RfScenario((Emitter("e", WIFI20, (1, 0), 30.0, channel=6),), PROP)
        pts = rssi_scan(RssiSensor("s", (0, 0)), scn, 0)
        assert max(pts.point_levels().values()) == -13.0

    def test_floor_clip(self):
        pts = rssi_scan(RssiSensor("s", (0, 0), min_dbm=-90.0), RfScenario(), 0)
        assert set(pts.point_levels().values()) == {-90.0}

    def test_quantized_truth(self):
        # pick a distance that gives -60.3 dBm exactly on-channel
        d = 10 ** ((20.0 - 40.0 + 60.3) / 27.0)
        scn = RfScenario((Emitter("e", WIFI20, (d, 0), 20.0, channel=6),), PROP, noise_floor_dbm=-200.0)
        pts = rssi_scan(RssiSensor("s", (0, 0)), scn, 0)
        on = [v for b, v in pts.point_levels().items() if abs(b.center_mhz - 2437) <= 10]
        assert set(on) == {-60.5}

    def test_waypoints(self):
        s = RssiSensor("s", (0.0, 0.0), waypoints=((10, (5.0, 0.0)), (20, (9.0, 0.0))))
        assert [s.position_at(t) for t in (0, 9, 10, 19, 25)] == [(0.0, 0.0), (0.0, 0.0), (5.0, 0.0), (5.0, 0.0), (9.0, 0.0)]


class TestBinary:
    def test_far_below_threshold(self):
        hits = binary_scan(BinarySensor("b", (0, 0), jitter_sigma_db=0.0), RfScenario(), 0)
        assert hits.shape == (128,)
        assert hits.sum() == 0

    def test_far_above_threshold(self):
        scn = RfScenario((Emitter("e", NOISE, (1, 0), 30.0, band=(2390.0, 2530.0)),), PROP)
        hits = binary_scan(BinarySensor("b", (0, 0), jitter_sigma_db=0.0), scn, 0)
        assert np.all(hits == 200)

    def test_at_threshold_with_jitter(self):
        truth = np.full((200, 1), -64.0)
        rng = np.random.default_rng(0)
        frac = draw_flag_hits(truth, -64.0, 2.0, rng)[0] / 200
        assert 0.40 <= frac <= 0.60

    def test_at_threshold_binomial_oracle(self):
        # direct Bernoulli(0.5) sampling over many seeds: >= 99% inside [0.40, 0.60]
        inside = 0
        for seed in range(400):
            frac = draw_flag_hits(np.full((200, 1), -64.0), -64.0, 2.0, np.random.default_rng(seed))[0] / 200
            inside += 0.40 <= frac <= 0.60
        assert inside >= 396

    def test_sensor_stream_deterministic(self):
        scn = RfScenario((Emitter("e", WIFI20, (8, 0), 5.0, channel=3),), PROP, rng_seed=3)
        s = BinarySensor("b", (0, 0))
        assert np.array_equal(binary_scan(s, scn, 4), binary_scan(s, scn, 4))


class TestWifiCard:
    def test_no_wifi(self):
        scn = RfScenario((Emitter("bt", BLUETOOTH, (1, 0), 0.0), Emitter("n", NOISE, (1, 0), 0.0, band=(2400.0, 2480.0))), PROP)
        assert wifi_scan(WifiCardScanner("c", (0, 0)), scn, 0) == []

    def test_one_network(self):
        d = 10 ** ((20.0 - 40.0 + 55.0) / 27.0)
        scn = RfScenario((Emitter("e", WIFI20, (d, 0), 20.0, channel=6),), PROP)
        [entry] = wifi_scan(WifiCardScanner("c", (0, 0)), scn, 0)
        assert entry.channel == 6
        assert entry.level == pytest.approx(-55.0)

    def test_below_detection_floor(self):
        d = 10 ** ((20.0 - 40.0 + 95.0) / 27.0)
        scn = RfScenario((Emitter("e", WIFI20, (d, 0), 20.0, channel=6),), PROP)
        assert wifi_scan(WifiCardScanner("c", (0, 0)), scn, 0) == []


class TestReports:
    def test_uniform_rssi(self):
        pts = PointMeasurementSet.from_levels(GRID, [-80.0] * 128)
        rep = make_channel_report(RssiSensor("s", (0, 0)), pts, 1, 0)
        assert rep.channels == tuple((c, -80.0) for c in CHANNELS)

    def test_binary_zero_hits(self):
        rep = make_channel_report(BinarySensor("b", (0, 0)), np.zeros(128, dtype=int), 1, 0)
        assert rep.channels == tuple((c, -85.0) for c in CHANNELS)

    def test_card_forwards_entries(self):
        d = 10 ** ((20.0 - 40.0 + 55.0) / 27.0)
        scn = RfScenario((Emitter("e", WIFI20, (d, 0), 20.0, channel=6),), PROP)
        s = WifiCardScanner("c", (0, 0))
        rep = make_channel_report(s, wifi_scan(s, scn, 0), 3, 10)
        assert isinstance(rep, protocol.WifiCardReport)
        assert rep.entries[0][0] == 6 and rep.seq == 3 and rep.slot == 10

    @pytest.mark.parametrize("sensor", [RssiSensor("s", (1, 1)), BinarySensor("b", (1, 1), jitter_sigma_db=0.0)])
    def test_single_emitter_argmin_far_away(self, sensor):
        scn = RfScenario((Emitter("e", WIFI20, (3, 0), 20.0, channel=6),), PROP)
        rep = make_channel_report(sensor, rssi_scan(sensor, scn, 0) if isinstance(sensor, RssiSensor) else binary_scan(sensor, scn, 0), 1, 0)
        levels = rep.levels()
        best = min(levels, key=lambda c: (levels[c], c))
        assert best in {1, 11, 12, 13}
        assert all(levels[c] == levels[best] for c in CHANNELS if crossing_coefficient(c, 6) == 0)

    def test_report_ranges(self):
        scn = RfScenario(
            (Emitter("e", WIFI20, (1, 0), 30.0, channel=6), Emitter("f", WIFI20, (9, 0), 10.0, channel=11)),
            Propagation(40, 2.7, 4.0), rng_seed=1,
        )
        r = RssiSensor("s", (0, 0))
        rep = make_channel_report(r, rssi_scan(r, scn, 0), 1, 0)
        assert all(r.min_dbm <= v <= r.max_dbm for _, v in rep.channels)
        b = BinarySensor("b", (0, 0))
        rep = make_channel_report(b, binary_scan(b, scn, 0), 1, 0)
        assert all(-85.0 <= v <= -43.0 for _, v in rep.channels)

    def test_static_scenario_reports_repeat(self):
        scn = RfScenario((Emitter("e", WIFI20, (4, 0), 20.0, channel=3),), PROP, rng_seed=2)
        r = RssiSensor("s", (0, 0))
        b = BinarySensor("b", (0, 0), jitter_sigma_db=0.0)
        for s, scan in ((r, rssi_scan), (b, binary_scan)):
            reps = {make_channel_report(s, scan(s, scn, t), 1, 0).channels for t in (0, 10, 20)}
            assert len(reps) == 1

    def test_binary_and_rssi_rank_alike(self):
        # emitters well above the floor on distinct channels; both sensors order channels the same
        scn = RfScenario(
            (Emitter("a", WIFI20, (2, 0), 20.0, channel=1), Emitter("b", WIFI20, (6, 0), 20.0, channel=11)),
            PROP,
        )
        r = RssiSensor("s", (0, 0))
        b = BinarySensor("b", (0, 0), jitter_sigma_db=0.0)
        lr = make_channel_report(r, rssi_scan(r, scn, 0), 1, 0).levels()
        lb = make_channel_report(b, binary_scan(b, scn, 0), 1, 0).levels()
        for c1 in CHANNELS:
            for c2 in CHANNELS:
                if lr[c1] + 6 <= lr[c2]:
                    assert lb[c1] <= lb[c2]
