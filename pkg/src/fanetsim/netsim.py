"""Discrete-event delivery simulation over four scenario topologies.

Stations upload packets to a server either directly or through their cluster
head. Every hop is served by the receiving side's channel: one shared air
channel when clustering is off, one channel per cluster plus a backbone when
it is on. Centralized runs use a single server (and a single backbone
channel); decentralized runs give every cluster its own server. A channel
transmits one packet at a time; others wait in a bounded FIFO queue and are
dropped on overflow. Hop latency is queue wait + serialization + propagation
+ a fixed processing delay.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field, fields

from .errors import ConfigError, SimulationError, TopologyError
from .ioutil import atomic_write_text

MODES = ("centralized", "decentralized")
LIGHT_SPEED_M_S = 3.0e8


@dataclass(frozen=True)
class TopologyConfig:
    mode: str = "centralized"
    clustering: bool = True
    link_bitrate: float = 10e6
    backbone_bitrate: float = 50e6
    propagation_speed: float = LIGHT_SPEED_M_S
    processing_delay: float = 1e-4
    queue_capacity: int = 3
    radio_range: float = 500.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.link_bitrate <= 0 or self.backbone_bitrate <= 0:
            raise ConfigError("bitrates must be > 0")
        if self.propagation_speed <= 0:
            raise ConfigError("propagation_speed must be > 0")
        if self.processing_delay < 0:
            raise ConfigError("processing_delay must be >= 0")
        if self.queue_capacity < 0:
            raise ConfigError("queue_capacity must be >= 0")
        if self.radio_range <= 0:
            raise ConfigError("radio_range must be > 0")


@dataclass(frozen=True)
class SimConfig:
    """Scenario parameter sheet, echoed into every report.

    The routing-protocol fields (q-values, SINR weight, hello timers and so
    on) are carried for provenance and config round-trips but do not alter
    the relay-forwarding engine here.
    """
    area_width: float = 500.0
    area_height: float = 500.0
    num_nodes: int = 25
    radio_range: float = 500.0
    interference: str = "orthogonal"
    modulation: str = "bpsk"
    mobility_model: str = "random_waypoint"
    antenna: str = "omnidirectional"
    energy_model: str = "linear"
    hello_interval: float = 0.1
    expire_time: float = 0.3
    initial_q: float = 0.0
    min_speed: float = 0.0
    max_speed: float = 15.0
    min_power: float = 60.0
    max_power: float = 80.0
    packet_size: float = 1024.0
    packet_size_sigma: float = 256.0
    sinr_weight: float = 0.7
    latency_threshold: float = 0.010
    qnoise_lookback: int = 10
    w: float = 0.5
    alpha: float = 0.2
    epsilon: float = 0.2

    @classmethod
    def from_mapping(cls, mapping) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(mapping) - known)
        if unknown:
            raise ConfigError(f"unrecognized simulation keys: {', '.join(unknown)}")
        return cls(**mapping)

    def __post_init__(self):
        if not 0 < self.w < 1:
            raise ConfigError(f"w must satisfy 0 < w < 1, got {self.w}")
        if self.num_nodes < 1:
            raise ConfigError(f"num_nodes must be >= 1, got {self.num_nodes}")


@dataclass(frozen=True)
class Hop:
    src: str
    dst: str
    distance: float
    channel: str


@dataclass
class Topology:
    config: TopologyConfig
    stations: dict[int, tuple[float, float]]
    servers: dict[str, tuple[float, float]]
    paths: dict[int, tuple[Hop, ...]]
    channels: dict[str, float]


@dataclass(frozen=True)
class SimEvent:
    time: float
    sequence: int
    kind: str
    packet: int
    node: str

    def __lt__(self, other: "SimEvent") -> bool:
        return (self.time, self.sequence) < (other.time, other.sequence)


@dataclass(frozen=True)
class DeliveryRecord:
    packet_id: int
    src: int
    size: int
    path: tuple[str, ...]
    send_time: float
    delivery_time: float | None
    dropped: bool
    drop_reason: str | None = None

    @property
    def hops(self) -> int:
        return len(self.path) - 1


def _distance(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def _check_range(hop: Hop, limit: float) -> Hop:
    if hop.distance > limit:
        raise TopologyError(
            f"hop {hop.src}->{hop.dst} spans {hop.distance:.1f} m, beyond range {limit} m")
    return hop


def build_topology(config: TopologyConfig, positions: dict[int, tuple[float, float]],
                   clusters=None, heads=None,
                   arena: tuple[float, float] = (500.0, 500.0)) -> Topology:
    """Wire stations to servers for one scenario.

    clusters maps cluster -> member station ids (or provides members());
    heads maps cluster -> head station id (or provides head_ids()). Clusters
    are required whenever clustering is on, and also for decentralized mode
    with clustering off, where they only place the per-group servers.
    """
    if not positions:
        raise TopologyError("no station positions")
    stations = {int(s): (float(p[0]), float(p[1])) for s, p in positions.items()}

    if clusters is not None and hasattr(clusters, "members"):
        clusters = clusters.members()
    if heads is not None and hasattr(heads, "head_ids"):
        heads = heads.head_ids()

    needs_clusters = config.clustering or config.mode == "decentralized"
    if needs_clusters and clusters is None:
        raise TopologyError(f"{config.mode} mode with clustering="
                            f"{'on' if config.clustering else 'off'} requires clusters")
    if config.clustering and heads is None:
        raise TopologyError("clustering requires cluster heads")

    if clusters is not None:
        assigned = sorted(sid for members in clusters.values() for sid in members)
        if assigned != sorted(stations):
            raise TopologyError("clusters do not cover the station set exactly")
        for c, members in clusters.items():
            if not members:
                raise TopologyError(f"cluster {c} is empty")
        if config.clustering:
            for c in clusters:
                if c not in heads:
                    raise TopologyError(f"cluster {c} has no head")
                if heads[c] not in clusters[c]:
                    raise TopologyError(
                        f"head {heads[c]} is not a member of cluster {c}")

    def centroid(member_ids):
        xs = [stations[s][0] for s in member_ids]
        ys = [stations[s][1] for s in member_ids]
        return (sum(xs) / len(xs), sum(ys) / len(ys))

    servers: dict[str, tuple[float, float]] = {}
    if config.mode == "centralized":
        servers["server"] = (arena[0] / 2.0, arena[1] / 2.0)
    else:
        for c in sorted(clusters):
            servers[f"server{c}"] = centroid(clusters[c])

    channels: dict[str, float] = {}
    paths: dict[int, tuple[Hop, ...]] = {}

    if config.clustering:
        if config.mode == "centralized":
            channels["backbone"] = config.backbone_bitrate
        for c in sorted(clusters):
            channels[f"cluster{c}"] = config.link_bitrate
            if config.mode == "decentralized":
                channels[f"backbone{c}"] = config.backbone_bitrate
        for c in sorted(clusters):
            head = heads[c]
            server = "server" if config.mode == "centralized" else f"server{c}"
            backbone = "backbone" if config.mode == "centralized" else f"backbone{c}"
            head_hop = _check_range(
                Hop(str(head), server, _distance(stations[head], servers[server]),
                    backbone), config.radio_range)
            for sid in sorted(clusters[c]):
                if sid == head:
                    paths[sid] = (head_hop,)
                else:
                    member_hop = _check_range(
                        Hop(str(sid), str(head),
                            _distance(stations[sid], stations[head]), f"cluster{c}"),
                        config.radio_range)
                    paths[sid] = (member_hop, head_hop)
    else:
        channels["air"] = config.link_bitrate
        names = sorted(servers)
        for sid in sorted(stations):
            if config.mode == "centralized":
                target = "server"
            else:
                target = min(names, key=lambda nm: (_distance(stations[sid], servers[nm]), nm))
            paths[sid] = (_check_range(
                Hop(str(sid), target, _distance(stations[sid], servers[target]), "air"),
                config.radio_range),)

    return Topology(config=config, stations=stations, servers=servers,
                    paths=paths, channels=channels)


class _ChannelState:
    __slots__ = ("bitrate", "busy", "queue")

    def __init__(self, bitrate: float):
        self.bitrate = bitrate
        self.busy = False
        self.queue: deque[int] = deque()


def run_sim(topology: Topology, workload, horizon: float | None = None,
            seed: int = 0) -> list[DeliveryRecord]:
    """Run every packet to delivery or drop; returns records by packet_id.

    seed is part of the stable interface but the engine itself is
    deterministic, so it is unused. A finite horizon cuts the run off and
    drops whatever is still in flight, keeping conservation intact.
    """
    del seed
    channels = {name: _ChannelState(rate) for name, rate in topology.channels.items()}
    packets = list(workload)
    hops: list[tuple[Hop, ...]] = []
    for pkt in packets:
        if pkt.src not in topology.paths:
            raise SimulationError(f"packet {pkt.packet_id}: unknown source {pkt.src}")
        if pkt.size <= 0:
            raise SimulationError(f"packet {pkt.packet_id}: non-positive size")
        hops.append(topology.paths[pkt.src])

    heap: list[SimEvent] = []
    seq = 0
    hop_idx = [0] * len(packets)
    resolved: list[DeliveryRecord | None] = [None] * len(packets)

    def push(time: float, kind: str, packet: int, node: str):
        nonlocal seq
        heapq.heappush(heap, SimEvent(time, seq, kind, packet, node))
        seq += 1

    def start_service(ch: _ChannelState, name: str, packet: int, now: float):
        ch.busy = True
        push(now + packets[packet].size * 8.0 / ch.bitrate, "service-end", packet, name)

    for i, pkt in enumerate(packets):
        push(pkt.creation_time, "arrival", i, hops[i][0].channel)

    while heap:
        if horizon is not None and heap[0].time > horizon:
            break
        ev = heapq.heappop(heap)
        i = ev.packet
        if ev.kind == "arrival":
            ch = channels[ev.node]
            if ch.busy:
                if len(ch.queue) >= topology.config.queue_capacity:
                    pkt = packets[i]
                    walked = (hops[i][0].src,) + tuple(h.dst for h in hops[i][:hop_idx[i]])
                    resolved[i] = DeliveryRecord(
                        packet_id=pkt.packet_id, src=pkt.src, size=pkt.size,
                        path=walked, send_time=pkt.creation_time,
                        delivery_time=None, dropped=True, drop_reason="queue")
                else:
                    ch.queue.append(i)
            else:
                start_service(ch, ev.node, i, ev.time)
        elif ev.kind == "service-end":
            ch = channels[ev.node]
            hop = hops[i][hop_idx[i]]
            arrive = (ev.time + hop.distance / topology.config.propagation_speed
                      + topology.config.processing_delay)
            if hop_idx[i] + 1 == len(hops[i]):
                push(arrive, "delivery", i, hop.dst)
            else:
                hop_idx[i] += 1
                push(arrive, "arrival", i, hops[i][hop_idx[i]].channel)
            if ch.queue:
                start_service(ch, ev.node, ch.queue.popleft(), ev.time)
            else:
                ch.busy = False
        else:
            pkt = packets[i]
            full_path = (hops[i][0].src,) + tuple(h.dst for h in hops[i])
            resolved[i] = DeliveryRecord(
                packet_id=pkt.packet_id, src=pkt.src, size=pkt.size,
                path=full_path, send_time=pkt.creation_time,
                delivery_time=ev.time, dropped=False)

    for i, rec in enumerate(resolved):
        if rec is None:
            pkt = packets[i]
            walked = (hops[i][0].src,) + tuple(h.dst for h in hops[i][:hop_idx[i]])
            resolved[i] = DeliveryRecord(
                packet_id=pkt.packet_id, src=pkt.src, size=pkt.size,
                path=walked, send_time=pkt.creation_time,
                delivery_time=None, dropped=True, drop_reason="horizon")

    records = [rec for rec in resolved if rec is not None]
    records.sort(key=lambda r: r.packet_id)
    return records


def conservation_check(records: list[DeliveryRecord], workload) -> dict:
    """Hard accounting audit: sent == delivered + dropped, sane paths/times."""
    sent = {p.packet_id for p in workload}
    seen = [r.packet_id for r in records]
    if len(seen) != len(set(seen)):
        raise SimulationError("duplicate packet_id in records")
    if set(seen) != sent:
        missing = sorted(sent - set(seen))[:5]
        extra = sorted(set(seen) - sent)[:5]
        raise SimulationError(
            f"records do not match workload (missing {missing}, extra {extra})")
    delivered = dropped = 0
    by_reason: dict[str, int] = {}
    srcs = {p.packet_id: p.src for p in workload}
    for r in records:
        if r.src != srcs[r.packet_id]:
            raise SimulationError(f"packet {r.packet_id}: src mismatch")
        if r.dropped:
            dropped += 1
            reason = r.drop_reason or "unknown"
            by_reason[reason] = by_reason.get(reason, 0) + 1
        else:
            delivered += 1
            if r.delivery_time is None or r.delivery_time < r.send_time:
                raise SimulationError(f"packet {r.packet_id}: bad delivery time")
            if len(r.path) < 2 or r.path[0] != str(r.src) or not r.path[-1].startswith("server"):
                raise SimulationError(f"packet {r.packet_id}: bad path {r.path}")
    if delivered + dropped != len(sent):
        raise SimulationError("sent != delivered + dropped")
    return {"sent": len(sent), "delivered": delivered, "dropped": dropped,
            "by_reason": by_reason}


def write_records(records: list[DeliveryRecord], path: str) -> None:
    lines = ["packet_id,src,hops,send_time,delivery_time,dropped"]
    for r in records:
        dt = "" if r.delivery_time is None else repr(r.delivery_time)
        lines.append(f"{r.packet_id},{r.src},{r.hops},{r.send_time!r},{dt},{int(r.dropped)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_records(path: str) -> list[DeliveryRecord]:
    """Rows back as records. Sizes and node labels are not part of this
    format, so the path collapses to its hop count and size reads as 0;
    metric reports are produced at run time from in-memory records."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "packet_id,src,hops,send_time,delivery_time,dropped":
            raise SimulationError(f"unexpected records header: {header!r}")
        for raw in fh:
            raw = raw.strip()
            if not raw:
                continue
            try:
                pid, src, hops_n, send, dt, dropped = raw.split(",")
                path_stub = tuple([src] + ["?"] * int(hops_n))
                records.append(DeliveryRecord(
                    packet_id=int(pid), src=int(src), size=0, path=path_stub,
                    send_time=float(send),
                    delivery_time=None if dt == "" else float(dt),
                    dropped=dropped == "1",
                    drop_reason=None))
            except ValueError as exc:
                raise SimulationError(f"malformed records row {raw!r}") from exc
    return records
