"""Cluster-head election.

Candidates are ranked from pairwise distance and received-power tables. Four
routes to a head are provided and cross-checked in tests: the heuristic mean
power-minus-distance score, exact enumeration of the weighted objective, a
normalized weight sweep, and a k-nearest-neighbor approximation that scores
each candidate against only its local neighborhood.
"""

from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import BenchmarkError, SelectionError
from .ioutil import atomic_write_json, atomic_write_text, load_json
from .spatial import KDTree

PATH_LOSS_EXPONENT = 2.0
REFERENCE_DISTANCE_M = 1.0
MIN_BASE_POWER_DBM = 60.0
MAX_BASE_POWER_DBM = 80.0


@dataclass(frozen=True)
class StationRadio:
    station_id: int
    position: tuple[float, float]
    base_power: float


@dataclass(frozen=True)
class PairwiseTables:
    """Distance and received-power tables over one cluster.

    Rows follow station_ids, sorted ascending; both diagonals are zero, so a
    plain row sum is already the sum over j != i. With ids ascending, numpy's
    first-occurrence argmin/argmax gives the lowest-id tie-break for free.
    """
    station_ids: list[int]
    d: np.ndarray
    p: np.ndarray

    @property
    def size(self) -> int:
        return len(self.station_ids)


@dataclass(frozen=True)
class ClusterHead:
    cluster: int
    head_id: int
    method: str
    w: float | None
    member_ids: list[int]
    scores: list[float]


@dataclass(frozen=True)
class HeadSelection:
    heads: dict[int, ClusterHead]

    def head_ids(self) -> dict[int, int]:
        return {c: ch.head_id for c, ch in self.heads.items()}


@dataclass(frozen=True)
class WeightSweep:
    station_ids: list[int]
    w_grid: np.ndarray
    objectives: np.ndarray
    argmin_ids: list[int]
    dist_sum: np.ndarray
    power_sum: np.ndarray
    mode: str


def received_power(tx: StationRadio, rx: StationRadio) -> float:
    """Log-distance path loss, exponent 2, 1 m reference.

    Distances under the reference clamp to it, so co-located stations see the
    transmitter's base power unattenuated.
    """
    dx = tx.position[0] - rx.position[0]
    dy = tx.position[1] - rx.position[1]
    d = math.hypot(dx, dy)
    d = max(d, REFERENCE_DISTANCE_M)
    return tx.base_power - 10.0 * PATH_LOSS_EXPONENT * math.log10(d / REFERENCE_DISTANCE_M)


def _tables_from_arrays(ids: list[int], pos: np.ndarray, power: np.ndarray) -> PairwiseTables:
    sq = np.sum(pos * pos, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (pos @ pos.T)
    np.maximum(d2, 0.0, out=d2)
    d = np.sqrt(d2)
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    p = power[:, None] - 10.0 * PATH_LOSS_EXPONENT * np.log10(
        np.maximum(d, REFERENCE_DISTANCE_M) / REFERENCE_DISTANCE_M)
    np.fill_diagonal(p, 0.0)
    return PairwiseTables(station_ids=ids, d=d, p=p)


def build_pairwise(members: list[StationRadio]) -> PairwiseTables:
    """Full M x M tables for one cluster; O(M^2) time and space."""
    if not members:
        raise SelectionError("cannot build tables for an empty cluster")
    members = sorted(members, key=lambda m: m.station_id)
    ids = [m.station_id for m in members]
    if len(set(ids)) != len(ids):
        raise SelectionError("duplicate station_id in cluster")
    pos = np.array([m.position for m in members], dtype=float)
    power = np.array([m.base_power for m in members], dtype=float)
    return _tables_from_arrays(ids, pos, power)


def heuristic_score(tables: PairwiseTables) -> np.ndarray:
    """Score_i = mean received power minus mean distance, over all j != i.

    Units are mixed on purpose (dBm minus meters); the normalized sweep below
    is the unit-free alternative. A singleton cluster scores [0.0].
    """
    m = tables.size
    if m == 1:
        return np.zeros(1)
    return (tables.p.sum(axis=1) - tables.d.sum(axis=1)) / (m - 1)


def select_heads(clusters, radios: dict[int, StationRadio]) -> HeadSelection:
    """Highest heuristic score per cluster; ties go to the lowest station_id.

    clusters is either a cluster -> member-id map or any object exposing
    members() that returns one. O(L * M^2) total work, O(L) extra space.
    """
    if hasattr(clusters, "members"):
        clusters = clusters.members()
    heads: dict[int, ClusterHead] = {}
    for cluster in sorted(clusters):
        member_ids = sorted(clusters[cluster])
        if not member_ids:
            raise SelectionError(f"cluster {cluster} is empty")
        try:
            members = [radios[sid] for sid in member_ids]
        except KeyError as exc:
            raise SelectionError(f"no radio for station {exc.args[0]}") from exc
        tables = build_pairwise(members)
        scores = heuristic_score(tables)
        head_id = tables.station_ids[int(np.argmax(scores))]
        heads[cluster] = ClusterHead(
            cluster=cluster, head_id=head_id, method="heuristic", w=None,
            member_ids=tables.station_ids, scores=[float(s) for s in scores])
    return HeadSelection(heads=heads)


def exact_head(tables: PairwiseTables, w: float) -> int:
    """Exhaustive minimum of sum(d_ij) - w * sum(p_ij) over candidates i.

    The one-head constraint makes candidate enumeration exact, so this is the
    reference answer the other selectors are tested against.
    """
    if tables.size < 1:
        raise SelectionError("empty tables")
    if w < 0:
        raise SelectionError(f"w must be >= 0, got {w}")
    objective = tables.d.sum(axis=1) - w * tables.p.sum(axis=1)
    return tables.station_ids[int(np.argmin(objective))]


def _normalize_offdiag(table: np.ndarray) -> np.ndarray:
    """Min-max normalize the off-diagonal entries jointly to [0, 1].

    A constant table maps to all zeros. The diagonal stays zero either way.
    """
    m = table.shape[0]
    mask = ~np.eye(m, dtype=bool)
    vals = table[mask]
    lo, hi = vals.min(), vals.max()
    out = np.zeros_like(table)
    if hi > lo:
        out[mask] = (vals - lo) / (hi - lo)
    return out


def weight_sweep(tables: PairwiseTables, grid_size: int = 11,
                 mode: str = "literal") -> WeightSweep:
    """Trade-off analysis on normalized tables over a uniform w grid in [0,1].

    literal mode: J_i(w) = sum d~ - w * sum p~ (the distance term never
    leaves). convex mode: (1-w) sum d~ - w sum p~, which reaches pure
    power selection at w=1. Both are affine in w per candidate.
    """
    if tables.size < 2:
        raise SelectionError("weight sweep needs at least 2 stations")
    if grid_size < 2:
        raise SelectionError(f"grid_size must be >= 2, got {grid_size}")
    if mode not in ("literal", "convex"):
        raise SelectionError(f"unknown sweep mode {mode!r}")
    d_norm = _normalize_offdiag(tables.d)
    p_norm = _normalize_offdiag(tables.p)
    a = d_norm.sum(axis=1)
    b = p_norm.sum(axis=1)
    w_grid = np.linspace(0.0, 1.0, grid_size)
    if mode == "literal":
        objectives = a[None, :] - w_grid[:, None] * b[None, :]
    else:
        objectives = (1.0 - w_grid[:, None]) * a[None, :] - w_grid[:, None] * b[None, :]
    argmin_ids = [tables.station_ids[int(np.argmin(row))] for row in objectives]
    return WeightSweep(
        station_ids=list(tables.station_ids), w_grid=w_grid, objectives=objectives,
        argmin_ids=argmin_ids, dist_sum=a, power_sum=b, mode=mode)


def knn_head(members, radios: dict[int, StationRadio] | None = None, k: int = 1) -> int:
    """Heuristic score restricted to each candidate's k nearest neighbors.

    Replaces the all-pairs tables with a k-d tree, so per cluster the work
    trends toward O(M log M + k M). k = M-1 degenerates to the full score
    and must agree with select_heads exactly. members is a list of station
    ids resolved through radios, or StationRadio objects directly.
    """
    if radios is not None:
        try:
            members = [radios[sid] for sid in members]
        except KeyError as exc:
            raise SelectionError(f"no radio for station {exc.args[0]}") from exc
    members = sorted(members, key=lambda m: m.station_id)
    m = len(members)
    if not 1 <= k <= m - 1:
        raise SelectionError(f"k must be in [1, {m - 1}], got {k}")
    pos = np.array([mem.position for mem in members], dtype=float)
    tree = KDTree(pos)
    best_idx = 0
    best_score = -math.inf
    for i in range(m):
        neighbors = tree.query(pos[i], k, exclude=i)
        total = 0.0
        for dist, j in neighbors:
            dist_c = max(dist, REFERENCE_DISTANCE_M)
            p = members[i].base_power - 10.0 * PATH_LOSS_EXPONENT * math.log10(
                dist_c / REFERENCE_DISTANCE_M)
            total += p - dist
        score = total / k
        if score > best_score:
            best_score = score
            best_idx = i
    return members[best_idx].station_id


# --- scaling benchmark ---------------------------------------------------

BENCH_MIN_M = 64


@dataclass
class BenchResult:
    rows: list[tuple[str, int, int]]
    slopes: dict[str, float]
    reference: dict[str, list[tuple[int, float]]] = field(default_factory=dict)
    k: int = 16


def _random_instance(m: int, seed: int):
    rng = np.random.default_rng([seed, m])
    pos = rng.uniform(0.0, 500.0, size=(m, 2))
    power = rng.uniform(MIN_BASE_POWER_DBM, MAX_BASE_POWER_DBM, size=m)
    return pos, power


def _pairwise_scores(pos: np.ndarray, power: np.ndarray) -> np.ndarray:
    """heuristic_score without materializing the full M x M tables.

    Row-blocked so the working set stays cache-sized; at M = 4096 the full
    tables run past 100 MB of temporaries and the timing curve bends away
    from quadratic for memory reasons, not algorithmic ones.
    """
    m = pos.shape[0]
    sq = np.sum(pos * pos, axis=1)
    d_sum = np.empty(m)
    loss_sum = np.empty(m)
    step = max(1, (4 * 1024 * 1024) // (8 * m))
    for lo in range(0, m, step):
        hi = min(lo + step, m)
        d2 = sq[lo:hi, None] + sq[None, :] - 2.0 * (pos[lo:hi] @ pos.T)
        np.maximum(d2, 0.0, out=d2)
        d = np.sqrt(d2, out=d2)
        d[np.arange(hi - lo), np.arange(lo, hi)] = 0.0
        d_sum[lo:hi] = d.sum(axis=1)
        np.maximum(d, REFERENCE_DISTANCE_M, out=d)
        np.log10(d, out=d)
        loss_sum[lo:hi] = d.sum(axis=1)
    total_p = (m - 1) * power - 10.0 * PATH_LOSS_EXPONENT * loss_sum
    return (total_p - d_sum) / (m - 1)


def _pairwise_once(ids, pos, power) -> int:
    return ids[int(np.argmax(_pairwise_scores(pos, power)))]


def _knn_once(pos, power, k: int) -> int:
    tree = KDTree(pos)
    best_idx = 0
    best_score = -math.inf
    for i in range(pos.shape[0]):
        total = 0.0
        for dist, _ in tree.query(pos[i], k, exclude=i):
            dist_c = max(dist, REFERENCE_DISTANCE_M)
            total += power[i] - 10.0 * PATH_LOSS_EXPONENT * math.log10(
                dist_c / REFERENCE_DISTANCE_M) - dist
        score = total / k
        if score > best_score:
            best_score = score
            best_idx = i
    return best_idx


def _fit_slope(ms: list[int], times_ns: list[int]) -> float:
    xs = np.log(np.array(ms, dtype=float))
    ys = np.log(np.array(times_ns, dtype=float))
    return float(np.polyfit(xs, ys, 1)[0])


def bench_ch(m_values: list[int], repetitions: int = 5, k: int = 16,
             seed: int = 0) -> BenchResult:
    """Median wall time of both selector variants as cluster size grows.

    Also emits analytic reference series (values are log10 of nanoseconds,
    anchored at the first measured point) for growth-rate comparison plots:
    quadratic all-pairs, M log M + kM, linear metaheuristic-style, and
    factorial exhaustive-search growth. The last two are plot references
    only, not implemented algorithms.
    """
    ms = sorted(set(int(m) for m in m_values))
    if len(ms) < 3:
        raise BenchmarkError(f"need >= 3 distinct M values, got {len(ms)}")
    if ms[0] < BENCH_MIN_M:
        raise BenchmarkError(f"M values must be >= {BENCH_MIN_M}, got {ms[0]}")
    if repetitions < 1:
        raise BenchmarkError(f"repetitions must be >= 1, got {repetitions}")

    rows: list[tuple[str, int, int]] = []
    med: dict[str, list[int]] = {"pairwise": [], "knn": []}
    for m in ms:
        if k >= m:
            raise BenchmarkError(f"k={k} must be < M={m}")
        pos, power = _random_instance(m, seed)
        ids = list(range(m))
        for method, fn in (("pairwise", lambda: _pairwise_once(ids, pos, power)),
                           ("knn", lambda: _knn_once(pos, power, k))):
            fn()
            samples = []
            for _ in range(repetitions):
                t0 = time.perf_counter_ns()
                fn()
                samples.append(time.perf_counter_ns() - t0)
            m_ns = int(statistics.median(samples))
            rows.append((method, m, m_ns))
            med[method].append(m_ns)

    slopes = {name: _fit_slope(ms, series) for name, series in med.items()}

    m0 = ms[0]
    pair0 = float(med["pairwise"][0])
    knn0 = float(med["knn"][0])

    def _mlogm(m: int) -> float:
        return m * math.log(m) + k * m

    reference = {
        "ref_quadratic": [
            (m, math.log10(pair0) + 2.0 * math.log10(m / m0)) for m in ms],
        "ref_mlogm_kM": [
            (m, math.log10(knn0) + math.log10(_mlogm(m) / _mlogm(m0))) for m in ms],
        "ref_metaheuristic": [
            (m, math.log10(pair0) + math.log10(m / m0)) for m in ms],
        "ref_exhaustive": [
            (m, math.log10(pair0)
             + (math.lgamma(m + 1) - math.lgamma(m0 + 1)) / math.log(10)) for m in ms],
    }
    return BenchResult(rows=rows, slopes=slopes, reference=reference, k=k)


def write_bench(result: BenchResult, path: str) -> None:
    lines = ["method,M,median_ns"]
    for method, m, ns in result.rows:
        lines.append(f"{method},{m},{ns}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_bench_refs(result: BenchResult, path: str) -> None:
    lines = ["series,M,log10_ns"]
    for series in sorted(result.reference):
        for m, v in result.reference[series]:
            lines.append(f"{series},{m},{v!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_heads(selection: HeadSelection, path: str) -> None:
    payload = {
        "clusters": {
            str(c): {
                "head_id": ch.head_id,
                "method": ch.method,
                "w": ch.w,
                "member_ids": ch.member_ids,
                "scores": ch.scores,
            }
            for c, ch in sorted(selection.heads.items())
        }
    }
    atomic_write_json(path, payload)


def read_heads(path: str) -> HeadSelection:
    raw = load_json(path)
    try:
        heads = {}
        for c_str, entry in raw["clusters"].items():
            c = int(c_str)
            heads[c] = ClusterHead(
                cluster=c, head_id=int(entry["head_id"]), method=str(entry["method"]),
                w=None if entry["w"] is None else float(entry["w"]),
                member_ids=[int(s) for s in entry["member_ids"]],
                scores=[float(s) for s in entry["scores"]])
    except (KeyError, TypeError, ValueError) as exc:
        raise SelectionError(f"malformed heads file {path}: {exc}") from exc
    for ch in heads.values():
        if ch.head_id not in ch.member_ids:
            raise SelectionError(
                f"heads file {path}: head {ch.head_id} not in cluster {ch.cluster}")
    return HeadSelection(heads=heads)
