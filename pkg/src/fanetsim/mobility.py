"""Random-waypoint mobility traces on a rectangular arena.

Each station starts at a uniform random position, picks a uniform random
destination, travels toward it in a straight line at a per-leg uniform speed,
optionally pauses on arrival, and repeats. Positions are sampled on a fixed
time grid. Samples are stored quantized to 9 significant digits (the trace
file resolution) while the walker itself keeps full precision, so a written
trace reloads bit-for-bit without accumulating rounding error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, TraceParseError

# Substitute leg speed when min_speed is 0, so a zero-speed draw cannot park a
# station forever. Not applied when max_speed is 0 (deliberately static fleet).
EPSILON_SPEED = 0.01

TRACE_HEADER = "time,station_id,x,y"


def quantize(value: float) -> float:
    """Round to 9 significant digits, the on-disk trace resolution."""
    return float(f"{value:.9g}")


@dataclass(frozen=True)
class ArenaConfig:
    width: float = 500.0
    height: float = 500.0
    num_stations: int = 25
    min_speed: float = 0.0
    max_speed: float = 15.0
    pause_time: float = 0.0
    sample_interval: float = 1.0
    duration: float = 3600.0
    seed: int = 0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ConfigError(f"arena must have positive size, got {self.width}x{self.height}")
        if self.num_stations < 1:
            raise ConfigError(f"need at least one station, got {self.num_stations}")
        if self.min_speed < 0:
            raise ConfigError(f"min_speed must be >= 0, got {self.min_speed}")
        if self.max_speed < self.min_speed:
            raise ConfigError(
                f"max_speed {self.max_speed} below min_speed {self.min_speed}")
        if self.pause_time < 0:
            raise ConfigError(f"pause_time must be >= 0, got {self.pause_time}")
        if self.sample_interval <= 0:
            raise ConfigError(f"sample_interval must be > 0, got {self.sample_interval}")
        if self.duration < 0:
            raise ConfigError(f"duration must be >= 0, got {self.duration}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")

    @property
    def num_samples(self) -> int:
        return int(math.floor(self.duration / self.sample_interval)) + 1


@dataclass(frozen=True)
class TraceSample:
    time: float
    station_id: int
    x: float
    y: float


class Trace:
    """Sampled positions for a set of stations on one shared time grid."""

    def __init__(self, times: np.ndarray, positions: dict[int, np.ndarray],
                 config: ArenaConfig | None = None):
        self.times = np.asarray(times, dtype=float)
        self.positions = {int(k): np.asarray(v, dtype=float) for k, v in positions.items()}
        self.config = config
        for sid, pos in self.positions.items():
            if pos.shape != (len(self.times), 2):
                raise ConfigError(
                    f"station {sid}: expected {len(self.times)}x2 positions, got {pos.shape}")

    @property
    def station_ids(self) -> list[int]:
        return sorted(self.positions)

    @property
    def num_samples(self) -> int:
        return len(self.times)

    def iter_samples(self):
        """Yield TraceSample rows in file order: by (station_id, time)."""
        for sid in self.station_ids:
            pos = self.positions[sid]
            for i, t in enumerate(self.times):
                yield TraceSample(float(t), sid, float(pos[i, 0]), float(pos[i, 1]))

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        if self.station_ids != other.station_ids:
            return False
        if not np.array_equal(self.times, other.times):
            return False
        return all(np.array_equal(self.positions[s], other.positions[s])
                   for s in self.station_ids)


def _walk_station(config: ArenaConfig, rng: np.random.Generator) -> np.ndarray:
    """Simulate one station; returns (num_samples, 2) quantized positions."""
    n = config.num_samples
    out = np.empty((n, 2))
    x = rng.uniform(0.0, config.width)
    y = rng.uniform(0.0, config.height)
    out[0] = (quantize(x), quantize(y))

    if config.max_speed == 0.0:
        # Static fleet: every sample repeats the start position.
        out[1:] = out[0]
        return out

    target = None
    speed = 0.0
    pause_left = 0.0
    dt = config.sample_interval
    for i in range(1, n):
        t_left = dt
        while t_left > 1e-12:
            if pause_left > 0.0:
                step = min(pause_left, t_left)
                pause_left -= step
                t_left -= step
                continue
            if target is None:
                target = (rng.uniform(0.0, config.width), rng.uniform(0.0, config.height))
                speed = rng.uniform(config.min_speed, config.max_speed)
                if speed < EPSILON_SPEED:
                    speed = EPSILON_SPEED
            dist = math.hypot(target[0] - x, target[1] - y)
            if dist <= speed * t_left:
                # Arrive inside this step, then start pausing (possibly 0 s).
                t_left -= dist / speed
                x, y = target
                target = None
                pause_left = config.pause_time
            else:
                frac = speed * t_left / dist
                x += (target[0] - x) * frac
                y += (target[1] - y) * frac
                t_left = 0.0
        out[i] = (quantize(x), quantize(y))
    return out


def simulate_random_waypoint(config: ArenaConfig) -> Trace:
    """Generate a deterministic random-waypoint trace for config.seed.

    Every station consumes its own RNG substream keyed by (seed, station_id),
    so traces are reproducible station-by-station.
    """
    times = np.array([quantize(i * config.sample_interval) for i in range(config.num_samples)])
    positions = {}
    for sid in range(config.num_stations):
        rng = np.random.default_rng([config.seed, sid])
        positions[sid] = _walk_station(config, rng)
    return Trace(times, positions, config)


def write_trace(trace: Trace, path: str) -> None:
    """Write the trace CSV: header time,station_id,x,y, rows sorted by
    (station_id, time), floats as 9-significant-digit decimals."""
    from .ioutil import atomic_write_text

    lines = [TRACE_HEADER]
    for s in trace.iter_samples():
        lines.append(f"{s.time:.9g},{s.station_id},{s.x:.9g},{s.y:.9g}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_trace(path: str, config: ArenaConfig | None = None) -> Trace:
    """Parse a trace CSV back into a Trace.

    The file format carries no arena metadata, so the config echo is supplied
    by the caller (and validated against the data when present). Malformed
    rows raise TraceParseError naming the 1-based line number.
    """
    rows: dict[int, list[tuple[float, float, float]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n\r")
        if header != TRACE_HEADER:
            raise TraceParseError(f"expected header {TRACE_HEADER!r}, got {header!r}", line=1)
        last_key = None
        for lineno, raw in enumerate(fh, start=2):
            raw = raw.strip()
            if not raw:
                continue
            parts = raw.split(",")
            if len(parts) != 4:
                raise TraceParseError(f"expected 4 columns, got {len(parts)}", line=lineno)
            try:
                t = float(parts[0])
                sid = int(parts[1])
                x = float(parts[2])
                y = float(parts[3])
            except ValueError as exc:
                raise TraceParseError(str(exc), line=lineno) from None
            if not (math.isfinite(t) and math.isfinite(x) and math.isfinite(y)):
                raise TraceParseError("non-finite value", line=lineno)
            if sid < 0:
                raise TraceParseError(f"negative station id {sid}", line=lineno)
            key = (sid, t)
            if last_key is not None:
                if sid < last_key[0]:
                    raise TraceParseError("rows not sorted by station_id", line=lineno)
                if sid == last_key[0] and t <= last_key[1]:
                    raise TraceParseError("time not strictly increasing", line=lineno)
            last_key = key
            rows.setdefault(sid, []).append((t, x, y))

    if not rows:
        times = np.array([])
        trace = Trace(times, {}, config)
        return trace

    ids = sorted(rows)
    ref_times = np.array([r[0] for r in rows[ids[0]]])
    if len(ref_times) >= 2:
        spacing = np.diff(ref_times)
        ref_dt = spacing[0]
        if np.any(np.abs(spacing - ref_dt) > 1e-9 * max(1.0, abs(ref_dt))):
            raise TraceParseError("sample spacing is not constant")
    positions = {}
    for sid in ids:
        arr = np.array(rows[sid])
        if len(arr) != len(ref_times) or not np.array_equal(arr[:, 0], ref_times):
            raise TraceParseError(f"station {sid} does not share the common sample grid")
        positions[sid] = arr[:, 1:3]

    trace = Trace(ref_times, positions, config)
    if config is not None:
        _validate_against_config(trace, config)
    return trace


def _validate_against_config(trace: Trace, config: ArenaConfig) -> None:
    for sid, pos in trace.positions.items():
        if np.any(pos[:, 0] < 0) or np.any(pos[:, 0] > config.width) \
                or np.any(pos[:, 1] < 0) or np.any(pos[:, 1] > config.height):
            raise TraceParseError(f"station {sid} leaves the {config.width}x{config.height} arena")
    if trace.num_samples >= 2:
        dt = trace.times[1] - trace.times[0]
        if abs(dt - config.sample_interval) > 1e-9 * max(1.0, config.sample_interval):
            raise TraceParseError(
                f"sample spacing {dt} does not match configured interval {config.sample_interval}")
