import json

import numpy as np
import pytest

from fanetsim import (
    DeliveryRecord,
    MetricsError,
    compare,
    compute_report,
    read_report,
    write_comparison,
    write_report,
)


def rec(pid, src, size=1000, send=0.0, deliver=None, reason=None):
    dropped = deliver is None
    return DeliveryRecord(
        packet_id=pid, src=src, size=size, path=(str(src), "server"),
        send_time=send, delivery_time=deliver, dropped=dropped,
        drop_reason=reason)


def test_jitter_mean_absolute_consecutive_difference():
    # delays in delivery order: 2 ms, 4 ms, 3 ms -> |2| and |-1| average 1.5
    records = [
        rec(0, 0, send=0.0, deliver=0.002),
        rec(1, 0, send=0.0, deliver=0.004),
        rec(2, 0, send=0.004, deliver=0.007),
    ]
    report = compute_report(records, duration=1.0)
    stats = report.stations[0]
    assert stats.delay_ms == pytest.approx(3.0)
    assert stats.jitter_ms == pytest.approx(1.5)
    assert stats.delivered == 3


def test_jitter_uses_delivery_order_not_packet_order():
    # same three deliveries listed backwards must give the same jitter
    records = [
        rec(2, 0, send=0.004, deliver=0.007),
        rec(1, 0, send=0.0, deliver=0.004),
        rec(0, 0, send=0.0, deliver=0.002),
    ]
    assert compute_report(records, 1.0).stations[0].jitter_ms == pytest.approx(1.5)


def test_single_delivery_has_zero_jitter():
    report = compute_report([rec(0, 3, deliver=0.001)], duration=2.0)
    assert report.stations[3].jitter_ms == 0.0
    assert report.stations[3].delay_ms == pytest.approx(1.0)


def test_station_with_no_deliveries_is_absent_from_aggregates():
    records = [
        rec(0, 0, deliver=0.002),
        rec(1_000_000, 1, reason="queue"),
        rec(1_000_001, 1, reason="queue"),
    ]
    report = compute_report(records, duration=1.0)
    starved = report.stations[1]
    assert starved.delay_ms is None
    assert starved.jitter_ms is None
    assert starved.throughput_bps is None
    assert starved.dropped == 2
    # aggregates skip the absent station instead of counting zeros
    assert report.aggregates["delay_ms"]["count"] == 1
    assert report.aggregates["delay_ms"]["mean"] == pytest.approx(2.0)
    assert report.aggregates["dropped"]["count"] == 2


def test_throughput_is_bytes_over_shared_duration():
    records = [rec(0, 0, size=500, deliver=0.001),
               rec(1, 0, size=700, deliver=0.002)]
    report = compute_report(records, duration=4.0)
    assert report.stations[0].throughput_bps == pytest.approx(300.0)
    assert report.stations[0].delivered_bytes == 1200


def test_aggregate_mean_and_population_std():
    records = [rec(i, i, deliver=0.001 * (i + 1)) for i in range(3)]
    report = compute_report(records, duration=1.0)
    agg = report.aggregates["delay_ms"]
    assert agg["mean"] == pytest.approx(2.0)
    assert agg["std"] == pytest.approx(0.816496580927726, rel=1e-12)
    assert agg["count"] == 3


def test_compute_report_validation_and_labels():
    with pytest.raises(MetricsError):
        compute_report([], duration=0.0)
    report = compute_report([rec(0, 0, deliver=0.001)], 1.0,
                            mode="decentralized", clustering=False)
    assert report.label() == "decentralized-nonclustered"
    assert compute_report([], 1.0).label() == "run"


def test_compare_percentages():
    a = compute_report([rec(0, 0, deliver=0.002), rec(1, 1, deliver=0.002)], 1.0,
                       mode="centralized", clustering=True)
    b = compute_report([rec(0, 0, deliver=0.001), rec(1, 1, deliver=0.003)], 1.0,
                       mode="decentralized", clustering=True)
    cmpab = compare(a, b)
    assert cmpab.label_a == "centralized-clustered"
    assert cmpab.percent["delay_ms"] == pytest.approx(0.0)  # mean 2 -> mean 2
    assert cmpab.per_station[0]["delay_ms"] == pytest.approx(-50.0)
    assert cmpab.per_station[1]["delay_ms"] == pytest.approx(50.0)
    # antisymmetry of the raw differences
    cmpba = compare(b, a)
    for key, diff in cmpab.raw_diff.items():
        assert cmpba.raw_diff[key] == pytest.approx(-diff)


def test_compare_zero_base_flag():
    a = compute_report([rec(0, 0, reason="queue")], 1.0)
    b = compute_report([rec(0, 0, deliver=0.001)], 1.0)
    comp = compare(a, b)
    # station 0 delivered nothing in a: delay means are absent, not zero
    assert comp.percent["delay_ms"] is None
    assert not comp.zero_base["delay_ms"]
    assert comp.means["throughput_bps"][0] is None

    with pytest.raises(MetricsError):
        compare(a, compute_report([rec(0, 5, deliver=0.001)], 1.0))


def test_report_roundtrip(tmp_path):
    records = [rec(0, 0, deliver=0.002), rec(1, 0, deliver=0.004),
               rec(1_000_000, 1, reason="queue")]
    report = compute_report(records, 2.5, mode="centralized", clustering=False)
    csv_path = tmp_path / "report.csv"
    json_path = tmp_path / "report.json"
    write_report(report, str(csv_path), str(json_path))

    back = read_report(str(json_path))
    assert back.duration == report.duration
    assert back.mode == report.mode
    assert back.clustering == report.clustering
    assert back.stations[0].delay_ms == report.stations[0].delay_ms
    assert back.stations[1].throughput_bps is None
    assert back.aggregates["delay_ms"]["mean"] == report.aggregates["delay_ms"]["mean"]

    lines = csv_path.read_text().splitlines()
    assert lines[0] == "station_id,delay_ms,jitter_ms,throughput_bps,delivered,dropped"
    assert lines[2].startswith("1,,,")  # absent metrics serialize as empty cells

    json_path.write_text("[]")
    with pytest.raises(MetricsError):
        read_report(str(json_path))


def test_write_comparison(tmp_path):
    a = compute_report([rec(0, 0, deliver=0.002)], 1.0, mode="centralized",
                       clustering=True)
    b = compute_report([rec(0, 0, deliver=0.001)], 1.0, mode="decentralized",
                       clustering=True)
    path = tmp_path / "comparison.json"
    write_comparison([compare(a, b)], str(path))
    payload = json.loads(path.read_text())
    entry = payload["comparisons"][0]
    assert entry["a"] == "centralized-clustered"
    assert entry["b"] == "decentralized-clustered"
    assert entry["percent"]["delay_ms"] == pytest.approx(-50.0)
    assert entry["per_station"]["0"]["delay_ms"] == pytest.approx(-50.0)
