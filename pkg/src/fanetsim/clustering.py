"""K-means partitioning of station positions with automatic k selection.

The cluster count comes from the within-cluster-sum-of-squares curve: run
k-means for every candidate k, then pick the point of the curve farthest from
the straight line joining its endpoints (the usual knee heuristic). A config
override can pin k instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ClusteringError
from .ioutil import atomic_write_json, load_json

DEFAULT_RESTARTS = 10
DEFAULT_MAX_ITERS = 100
DEFAULT_TOL = 1e-6
KNEE_FLAT_TOL = 1e-6


@dataclass
class ClusterAssignment:
    k: int
    station_ids: list[int]
    labels: np.ndarray
    centroids: np.ndarray
    wcss: float
    wcss_curve: list[tuple[int, float]] = field(default_factory=list)
    no_knee: bool = False
    iteration_wcss: list[float] = field(default_factory=list)

    def assignment(self) -> dict[int, int]:
        return {sid: int(c) for sid, c in zip(self.station_ids, self.labels)}

    def members(self) -> dict[int, list[int]]:
        """Cluster index -> sorted member station ids. Never empty clusters."""
        out: dict[int, list[int]] = {c: [] for c in range(self.k)}
        for sid, c in zip(self.station_ids, self.labels):
            out[int(c)].append(sid)
        return out

    def __eq__(self, other):
        if not isinstance(other, ClusterAssignment):
            return NotImplemented
        return (self.k == other.k
                and self.station_ids == other.station_ids
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.centroids, other.centroids)
                and self.wcss == other.wcss
                and self.wcss_curve == other.wcss_curve
                and self.no_knee == other.no_knee)


def _sse(points: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> float:
    diff = points - centroids[labels]
    return float(np.sum(diff * diff))


def _init_plusplus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    first = int(rng.integers(n))
    centers[0] = points[first]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            # All remaining mass sits on existing centers; take the lowest
            # index not yet chosen so duplicates cannot stall the init.
            taken = {tuple(ctr) for ctr in centers[:c]}
            idx = -1
            for i in range(n):
                if tuple(points[i]) not in taken:
                    idx = i
                    break
            if idx < 0:
                raise ClusteringError(f"fewer than {k} distinct points")
        centers[c] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centers[c]) ** 2, axis=1))
    return centers


def _repair_empty(points, labels, centroids, counts):
    """Reseed each empty cluster with the point farthest from its centroid.

    Donor points come only from clusters that keep >= 2 members. The donor
    centroid is recomputed immediately so overall WCSS cannot increase.
    """
    for c in range(centroids.shape[0]):
        if counts[c] > 0:
            continue
        resid = np.sum((points - centroids[labels]) ** 2, axis=1)
        resid[counts[labels] < 2] = -1.0
        donor = int(np.argmax(resid))
        if resid[donor] < 0:
            raise ClusteringError("cannot repair empty cluster: no donor")
        old = labels[donor]
        labels[donor] = c
        counts[old] -= 1
        counts[c] += 1
        centroids[c] = points[donor]
        centroids[old] = points[labels == old].mean(axis=0)


def kmeans(points, k: int, seed=0,
           max_iters: int = DEFAULT_MAX_ITERS, tol: float = DEFAULT_TOL,
           rng: np.random.Generator | None = None) -> ClusterAssignment:
    """Lloyd's algorithm with k-means++ seeding, single run.

    Nearest-centroid ties go to the lowest cluster index; the WCSS recorded
    after every assignment pass is non-increasing, which the tests rely on.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ClusteringError(f"points must be 2-D, got shape {points.shape}")
    n = points.shape[0]
    if k < 1:
        raise ClusteringError(f"k must be >= 1, got {k}")
    if np.unique(points, axis=0).shape[0] < k:
        raise ClusteringError(f"fewer than {k} distinct points")
    if rng is None:
        rng = np.random.default_rng(seed)

    centroids = _init_plusplus(points, k, rng)
    labels = np.zeros(n, dtype=np.intp)
    iteration_wcss: list[float] = []
    for _ in range(max_iters):
        d2 = np.sum((points[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        labels = np.argmin(d2, axis=1)
        counts = np.bincount(labels, minlength=k)
        if (counts == 0).any():
            _repair_empty(points, labels, centroids, counts)
        iteration_wcss.append(_sse(points, labels, centroids))
        new_centroids = np.empty_like(centroids)
        for c in range(k):
            new_centroids[c] = points[labels == c].mean(axis=0)
        shift = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        if shift < tol:
            break
    wcss = _sse(points, labels, centroids)
    return ClusterAssignment(
        k=k, station_ids=list(range(n)), labels=labels, centroids=centroids,
        wcss=wcss, iteration_wcss=iteration_wcss)


def _best_kmeans(points, k: int, seed: int, restarts: int,
                 max_iters: int = DEFAULT_MAX_ITERS,
                 tol: float = DEFAULT_TOL) -> ClusterAssignment:
    """Best of `restarts` independent runs, ranked by (wcss, restart index)."""
    best: ClusterAssignment | None = None
    for r in range(restarts):
        rng = np.random.default_rng(np.random.SeedSequence([seed, k, r]))
        cand = kmeans(points, k, max_iters=max_iters, tol=tol, rng=rng)
        if best is None or cand.wcss < best.wcss:
            best = cand
    assert best is not None
    return best


def elbow_curve(points, k_max: int, seed: int = 0,
                restarts: int = DEFAULT_RESTARTS) -> list[tuple[int, float]]:
    """Best-of-restarts WCSS for k = 1..k_max.

    Prefix minima are applied afterwards so the curve is non-increasing even
    when a larger k lands in a worse local optimum than a smaller one.
    """
    points = np.asarray(points, dtype=float)
    distinct = np.unique(points, axis=0).shape[0]
    if k_max < 1:
        raise ClusteringError(f"k_max must be >= 1, got {k_max}")
    if k_max > distinct:
        raise ClusteringError(f"k_max {k_max} exceeds {distinct} distinct points")
    wcss = np.array([
        _best_kmeans(points, k, seed, restarts).wcss for k in range(1, k_max + 1)])
    wcss = np.minimum.accumulate(wcss)
    return [(k, float(w)) for k, w in zip(range(1, k_max + 1), wcss)]


def knee_point(curve: list[tuple[int, float]]) -> tuple[int, bool]:
    """Knee of a WCSS curve: the point farthest from the endpoint chord.

    Both axes are min-max normalized first, so the choice is invariant under
    affine rescaling of either axis. Returns (k, no_knee). A curve flatter
    than KNEE_FLAT_TOL everywhere has no usable knee; k falls back to the
    first candidate. Ties go to the smallest k.
    """
    if len(curve) < 3:
        raise ClusteringError(f"knee detection needs >= 3 points, got {len(curve)}")
    ks = np.array([c[0] for c in curve], dtype=float)
    ws = np.array([c[1] for c in curve], dtype=float)
    k_span = ks[-1] - ks[0]
    w_span = ws.max() - ws.min()
    if k_span <= 0:
        raise ClusteringError("curve k values must be strictly increasing")
    if w_span == 0:
        return int(ks[0]), True
    x = (ks - ks[0]) / k_span
    y = (ws - ws.min()) / w_span
    # Perpendicular distance from each point to the chord between endpoints.
    p0 = np.array([x[0], y[0]])
    p1 = np.array([x[-1], y[-1]])
    chord = p1 - p0
    rel = np.stack([x, y], axis=1) - p0
    cross = chord[0] * rel[:, 1] - chord[1] * rel[:, 0]
    dist = np.abs(cross) / np.linalg.norm(chord)
    best = int(np.argmax(dist))
    if dist[best] < KNEE_FLAT_TOL:
        return int(ks[0]), True
    return int(ks[best]), False


def create_clusters(positions: dict[int, tuple[float, float]],
                    k_max: int | None = None, seed: int = 0,
                    restarts: int = DEFAULT_RESTARTS,
                    fixed_k: int | None = None) -> ClusterAssignment:
    """Full selection pipeline over a station_id -> (x, y) map.

    The WCSS curve is always computed and recorded, even when fixed_k pins
    the final cluster count, so reports can show it either way.
    """
    if not positions:
        raise ClusteringError("no positions given")
    ids = sorted(positions)
    points = np.array([positions[sid] for sid in ids], dtype=float)
    if not np.isfinite(points).all():
        raise ClusteringError("positions must be finite")
    n = len(ids)
    distinct = np.unique(points, axis=0).shape[0]
    if k_max is None:
        k_max = min(10, n - 1) if n > 1 else 1
    k_max = max(1, min(k_max, distinct))

    curve = elbow_curve(points, k_max, seed=seed, restarts=restarts)
    no_knee = False
    if fixed_k is not None:
        if not (1 <= fixed_k <= distinct):
            raise ClusteringError(
                f"fixed_k {fixed_k} not in [1, {distinct}] for this data")
        chosen = fixed_k
    elif len(curve) < 3:
        chosen, no_knee = curve[0][0], True
    else:
        chosen, no_knee = knee_point(curve)

    best = _best_kmeans(points, chosen, seed, restarts)
    return ClusterAssignment(
        k=chosen, station_ids=ids, labels=best.labels, centroids=best.centroids,
        wcss=best.wcss, wcss_curve=curve, no_knee=no_knee,
        iteration_wcss=best.iteration_wcss)


def write_clusters(assignment: ClusterAssignment, path: str) -> None:
    payload = {
        "k": assignment.k,
        "no_knee": assignment.no_knee,
        "wcss": assignment.wcss,
        "wcss_curve": [[k, w] for k, w in assignment.wcss_curve],
        "centroids": [[float(x), float(y)] for x, y in assignment.centroids],
        "assignment": {str(sid): int(c)
                       for sid, c in zip(assignment.station_ids, assignment.labels)},
    }
    atomic_write_json(path, payload)


def read_clusters(path: str) -> ClusterAssignment:
    raw = load_json(path)
    try:
        ids = sorted(int(s) for s in raw["assignment"])
        labels = np.array([raw["assignment"][str(sid)] for sid in ids], dtype=np.intp)
        centroids = np.array(raw["centroids"], dtype=float)
        k = int(raw["k"])
        result = ClusterAssignment(
            k=k, station_ids=ids, labels=labels, centroids=centroids,
            wcss=float(raw["wcss"]),
            wcss_curve=[(int(k_), float(w)) for k_, w in raw["wcss_curve"]],
            no_knee=bool(raw["no_knee"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ClusteringError(f"malformed clusters file {path}: {exc}") from exc
    if centroids.shape[0] != k:
        raise ClusteringError(f"clusters file {path}: centroid count != k")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ClusteringError(f"clusters file {path}: label out of range")
    return result
