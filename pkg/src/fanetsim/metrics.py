"""Per-station and aggregate delay, jitter, and throughput reporting.

Delay and jitter are in milliseconds, throughput in bytes per second.
Jitter is the mean absolute difference of consecutive end-to-end delays in
each station's delivery order; a station with a single delivery has jitter
0, and a station with no deliveries carries no metrics at all (absent, not
zero). Dropped packets are counted separately and never pollute delay.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MetricsError
from .ioutil import atomic_write_json, atomic_write_text, load_json

METRIC_KEYS = ("delay_ms", "jitter_ms", "throughput_bps")


@dataclass(frozen=True)
class StationStats:
    station_id: int
    delivered: int
    dropped: int
    delivered_bytes: int
    delay_ms: float | None
    jitter_ms: float | None
    throughput_bps: float | None

    def metric(self, key: str) -> float | None:
        return getattr(self, key)


@dataclass
class RunReport:
    duration: float
    stations: dict[int, StationStats]
    aggregates: dict[str, dict[str, float | None]]
    mode: str | None = None
    clustering: bool | None = None

    def label(self) -> str:
        if self.mode is None and self.clustering is None:
            return "run"
        cl = {True: "clustered", False: "nonclustered", None: "?"}[self.clustering]
        return f"{self.mode or '?'}-{cl}"


@dataclass
class Comparison:
    label_a: str
    label_b: str
    means: dict[str, tuple[float | None, float | None]]
    percent: dict[str, float | None]
    zero_base: dict[str, bool]
    raw_diff: dict[str, float | None]
    per_station: dict[int, dict[str, float | None]]


def _aggregate(values: list[float]) -> dict[str, float | None]:
    if not values:
        return {"mean": None, "std": None, "count": 0}
    arr = np.array(values, dtype=float)
    return {"mean": float(arr.mean()), "std": float(arr.std()), "count": int(arr.size)}


def aggregate_stats(stations: dict[int, StationStats]) -> dict[str, dict[str, float | None]]:
    """Unweighted mean and population std across stations, skipping absent."""
    out = {}
    for key in METRIC_KEYS:
        out[key] = _aggregate([
            s.metric(key) for s in stations.values() if s.metric(key) is not None])
    out["dropped"] = {"mean": None, "std": None,
                      "count": int(sum(s.dropped for s in stations.values()))}
    return out


def compute_report(records, duration: float, mode: str | None = None,
                   clustering: bool | None = None) -> RunReport:
    """Fold delivery records into a per-station report.

    duration is the shared measurement window used for throughput; using one
    value across scenarios keeps their throughputs comparable.
    """
    if duration <= 0:
        raise MetricsError(f"duration must be > 0, got {duration}")
    by_src: dict[int, list] = {}
    for r in records:
        by_src.setdefault(r.src, []).append(r)

    stations: dict[int, StationStats] = {}
    for sid in sorted(by_src):
        recs = by_src[sid]
        delivered = [r for r in recs if not r.dropped]
        dropped = len(recs) - len(delivered)
        if not delivered:
            stations[sid] = StationStats(
                station_id=sid, delivered=0, dropped=dropped, delivered_bytes=0,
                delay_ms=None, jitter_ms=None, throughput_bps=None)
            continue
        delivered.sort(key=lambda r: (r.delivery_time, r.packet_id))
        delays = np.array([
            (r.delivery_time - r.send_time) * 1e3 for r in delivered])
        if delays.size > 1:
            jitter = float(np.mean(np.abs(np.diff(delays))))
        else:
            jitter = 0.0
        nbytes = int(sum(r.size for r in delivered))
        stations[sid] = StationStats(
            station_id=sid, delivered=len(delivered), dropped=dropped,
            delivered_bytes=nbytes, delay_ms=float(delays.mean()),
            jitter_ms=jitter, throughput_bps=nbytes / duration)

    return RunReport(duration=duration, stations=stations,
                     aggregates=aggregate_stats(stations),
                     mode=mode, clustering=clustering)


def _pct(a: float | None, b: float | None):
    """Signed percent change and a flag for an unusable zero base."""
    if a is None or b is None:
        return None, False
    if a == 0:
        return None, True
    return 100.0 * (b - a) / a, False


def compare(a: RunReport, b: RunReport) -> Comparison:
    if set(a.stations) != set(b.stations):
        raise MetricsError("reports cover different station sets")
    means: dict[str, tuple[float | None, float | None]] = {}
    percent: dict[str, float | None] = {}
    zero_base: dict[str, bool] = {}
    raw_diff: dict[str, float | None] = {}
    for key in METRIC_KEYS:
        ma = a.aggregates[key]["mean"]
        mb = b.aggregates[key]["mean"]
        means[key] = (ma, mb)
        percent[key], zero_base[key] = _pct(ma, mb)
        raw_diff[key] = None if ma is None or mb is None else mb - ma
    per_station: dict[int, dict[str, float | None]] = {}
    for sid in sorted(a.stations):
        row: dict[str, float | None] = {}
        for key in METRIC_KEYS:
            row[key], _ = _pct(a.stations[sid].metric(key), b.stations[sid].metric(key))
        per_station[sid] = row
    return Comparison(label_a=a.label(), label_b=b.label(), means=means,
                      percent=percent, zero_base=zero_base, raw_diff=raw_diff,
                      per_station=per_station)


def _stats_payload(s: StationStats) -> dict:
    return {"delivered": s.delivered, "dropped": s.dropped,
            "delivered_bytes": s.delivered_bytes, "delay_ms": s.delay_ms,
            "jitter_ms": s.jitter_ms, "throughput_bps": s.throughput_bps}


def write_report(report: RunReport, csv_path: str, json_path: str) -> None:
    def cell(v):
        return "" if v is None else repr(v)

    lines = ["station_id,delay_ms,jitter_ms,throughput_bps,delivered,dropped"]
    for sid in sorted(report.stations):
        s = report.stations[sid]
        lines.append(f"{sid},{cell(s.delay_ms)},{cell(s.jitter_ms)},"
                     f"{cell(s.throughput_bps)},{s.delivered},{s.dropped}")
    atomic_write_text(csv_path, "\n".join(lines) + "\n")

    payload = {
        "mode": report.mode,
        "clustering": report.clustering,
        "duration": report.duration,
        "aggregates": report.aggregates,
        "stations": {str(sid): _stats_payload(s)
                     for sid, s in sorted(report.stations.items())},
    }
    atomic_write_json(json_path, payload)


def read_report(json_path: str) -> RunReport:
    raw = load_json(json_path)
    try:
        stations = {}
        for sid_str, s in raw["stations"].items():
            sid = int(sid_str)
            stations[sid] = StationStats(
                station_id=sid, delivered=int(s["delivered"]), dropped=int(s["dropped"]),
                delivered_bytes=int(s["delivered_bytes"]),
                delay_ms=s["delay_ms"], jitter_ms=s["jitter_ms"],
                throughput_bps=s["throughput_bps"])
        return RunReport(
            duration=float(raw["duration"]), stations=stations,
            aggregates=raw["aggregates"], mode=raw["mode"],
            clustering=raw["clustering"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MetricsError(f"malformed report file {json_path}: {exc}") from exc


def write_comparison(comparisons: list[Comparison], path: str) -> None:
    payload = []
    for c in comparisons:
        payload.append({
            "a": c.label_a,
            "b": c.label_b,
            "means": {k: list(v) for k, v in c.means.items()},
            "percent": c.percent,
            "zero_base": c.zero_base,
            "raw_diff": c.raw_diff,
            "per_station": {str(sid): row for sid, row in c.per_station.items()},
        })
    atomic_write_json(path, {"comparisons": payload})
