"""Gradient-boosted regression trees for short-horizon position prediction.

Self-contained implementation: squared-error loss, exact greedy splits on
midpoint thresholds, mean-residual leaves, shrinkage, optional row/feature
subsampling, and early stopping on a held-back chronological validation
slice. Two independent models (one per coordinate) share one feature layout:
the last h positions plus the finite-difference velocity at the newest lag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DatasetError, PredictionError, TrainingError
from .ioutil import atomic_write_json, atomic_write_text, load_json
from .mobility import Trace

MIN_SPLIT_GAIN = 1e-12


@dataclass(frozen=True)
class BoostParams:
    max_depth: int = 6
    learning_rate: float = 0.1
    colsample: float = 1.0
    subsample: float = 1.0
    num_rounds: int = 100
    early_stop_patience: int = 10
    min_samples_leaf: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.max_depth < 1:
            raise TrainingError(f"max_depth must be >= 1, got {self.max_depth}")
        if not 0 < self.learning_rate <= 1:
            raise TrainingError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if not 0 < self.colsample <= 1:
            raise TrainingError(f"colsample must be in (0, 1], got {self.colsample}")
        if not 0 < self.subsample <= 1:
            raise TrainingError(f"subsample must be in (0, 1], got {self.subsample}")
        if self.num_rounds < 1:
            raise TrainingError(f"num_rounds must be >= 1, got {self.num_rounds}")
        if self.early_stop_patience < 0:
            raise TrainingError(
                f"early_stop_patience must be >= 0, got {self.early_stop_patience}")
        if self.min_samples_leaf < 1:
            raise TrainingError(
                f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        if self.seed < 0:
            raise TrainingError(f"seed must be >= 0, got {self.seed}")


@dataclass(frozen=True)
class FeatureWindow:
    history_length: int = 5
    horizon: int = 1

    def __post_init__(self):
        if self.history_length < 1:
            raise DatasetError(f"history_length must be >= 1, got {self.history_length}")
        if self.horizon < 1:
            raise DatasetError(f"horizon must be >= 1, got {self.horizon}")

    def feature_names(self) -> list[str]:
        names = []
        for lag in range(1, self.history_length + 1):
            names.append(f"x_lag{lag}")
            names.append(f"y_lag{lag}")
        names.append("vx_lag1")
        names.append("vy_lag1")
        return names


@dataclass
class RegressionTree:
    """Flat node arrays; feature == -1 marks a leaf."""
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict_row(self, x: np.ndarray) -> float:
        node = 0
        while self.feature[node] >= 0:
            if x[self.feature[node]] <= self.threshold[node]:
                node = self.left[node]
            else:
                node = self.right[node]
        return float(self.value[node])

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.intp)
        while True:
            feats = self.feature[node]
            live = np.nonzero(feats >= 0)[0]
            if live.size == 0:
                break
            cur = node[live]
            go_left = X[live, feats[live]] <= self.threshold[cur]
            node[live] = np.where(go_left, self.left[cur], self.right[cur])
        return self.value[node]


@dataclass
class BoostedModel:
    target: str
    params: BoostParams
    base_prediction: float
    feature_schema: list[str]
    trees: list[RegressionTree] = field(default_factory=list)
    window: FeatureWindow | None = None
    train_rmse: list[float] = field(default_factory=list)
    val_rmse: list[float] = field(default_factory=list)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.full(X.shape[0], self.base_prediction)
        for tree in self.trees:
            out += self.params.learning_rate * tree.predict_matrix(X)
        return out


@dataclass
class Dataset:
    """Supervised rows over a trace; `times` is each row's anchor timestamp.

    Features look backward from the anchor; the target sits `horizon` steps
    after it. Row order is (station_id, time) ascending, and the train/test
    masks cut each station's rows chronologically 80/20.
    """
    X: np.ndarray
    target_x: np.ndarray
    target_y: np.ndarray
    station_ids: np.ndarray
    times: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    window: FeatureWindow
    feature_names: list[str]


def _feature_rows(positions: np.ndarray, anchors: np.ndarray,
                  h: int, dt: float) -> np.ndarray:
    cols = []
    for lag in range(1, h + 1):
        cols.append(positions[anchors - lag])
    vel = (positions[anchors - 1] - positions[anchors - 2]) / dt
    cols.append(vel)
    return np.hstack(cols)


def build_dataset(trace: Trace, h: int = 5, horizon: int = 1,
                  train_fraction: float = 0.8) -> Dataset:
    window = FeatureWindow(history_length=h, horizon=horizon)
    if not 0 < train_fraction < 1:
        raise DatasetError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = trace.num_samples
    # Velocity needs two history samples, so the anchor floor is max(h, 2).
    t_first = max(h, 2)
    t_last = n - 1 - horizon
    if t_last < t_first:
        raise DatasetError(
            f"trace too short: {n} samples cannot support h={h}, horizon={horizon}")
    if n >= 2:
        dt = trace.times[1] - trace.times[0]
    else:
        raise DatasetError("trace too short: need at least 2 samples")

    anchors = np.arange(t_first, t_last + 1)
    per_station = anchors.size
    xs, tx, ty, sids, times = [], [], [], [], []
    for sid in trace.station_ids:
        pos = trace.positions[sid]
        xs.append(_feature_rows(pos, anchors, h, dt))
        tx.append(pos[anchors + horizon, 0])
        ty.append(pos[anchors + horizon, 1])
        sids.append(np.full(per_station, sid, dtype=np.intp))
        times.append(trace.times[anchors])

    n_train = int(math.floor(train_fraction * per_station))
    train_local = np.arange(n_train)
    test_local = np.arange(n_train, per_station)
    train_idx = np.concatenate([
        train_local + i * per_station for i in range(len(trace.station_ids))])
    test_idx = np.concatenate([
        test_local + i * per_station for i in range(len(trace.station_ids))])

    return Dataset(
        X=np.vstack(xs), target_x=np.concatenate(tx), target_y=np.concatenate(ty),
        station_ids=np.concatenate(sids), times=np.concatenate(times),
        train_idx=train_idx, test_idx=test_idx, window=window,
        feature_names=window.feature_names())


class _TreeBuilder:
    """Level-wise exact greedy splitter.

    Feature columns are argsorted once at the root; child nodes inherit
    order-preserving partitions of those index arrays, so per level the work
    stays O(rows x features) regardless of depth.
    """

    def __init__(self, X: np.ndarray, residual: np.ndarray, params: BoostParams,
                 feature_ids: np.ndarray, row_ids: np.ndarray):
        self.X = X
        self.residual = residual
        self.params = params
        self.feature_ids = feature_ids
        self.row_ids = row_ids
        self.nodes_feature: list[int] = []
        self.nodes_threshold: list[float] = []
        self.nodes_left: list[int] = []
        self.nodes_right: list[int] = []
        self.nodes_value: list[float] = []
        self.leaf_rows: list[tuple[int, np.ndarray]] = []

    def _new_node(self) -> int:
        self.nodes_feature.append(-1)
        self.nodes_threshold.append(0.0)
        self.nodes_left.append(-1)
        self.nodes_right.append(-1)
        self.nodes_value.append(0.0)
        return len(self.nodes_feature) - 1

    def _best_split(self, order: list[np.ndarray]):
        msl = self.params.min_samples_leaf
        n = order[0].size
        if n < 2 * msl:
            return None
        best_gain = MIN_SPLIT_GAIN
        best = None
        total = float(self.residual[order[0]].sum())
        base = total * total / n
        n_left = np.arange(1, n)
        n_right = n - n_left
        for fi, f in enumerate(self.feature_ids):
            idx = order[fi]
            v = self.X[idx, f]
            g = self.residual[idx]
            cum = np.cumsum(g)[:-1]
            gains = cum * cum / n_left + (total - cum) ** 2 / n_right - base
            valid = v[1:] > v[:-1]
            if msl > 1:
                valid = valid & (n_left >= msl) & (n_right >= msl)
            gains = np.where(valid, gains, -np.inf)
            pos = int(np.argmax(gains))
            if gains[pos] > best_gain:
                best_gain = float(gains[pos])
                best = (fi, f, 0.5 * (v[pos] + v[pos + 1]))
        return best

    def build(self, side_buf: np.ndarray) -> int:
        root = self._new_node()
        frontier = [(root, 0, [self.row_ids[np.argsort(self.X[self.row_ids, f],
                                                       kind="stable")]
                               for f in self.feature_ids])]
        while frontier:
            next_frontier = []
            for node, depth, order in frontier:
                rows = order[0]
                choice = None
                if depth < self.params.max_depth:
                    choice = self._best_split(order)
                if choice is None:
                    value = float(self.residual[rows].mean())
                    self.nodes_value[node] = value
                    self.leaf_rows.append((node, rows))
                    continue
                _, f, thr = choice
                self.nodes_feature[node] = int(f)
                self.nodes_threshold[node] = float(thr)
                side_buf[rows] = self.X[rows, f] <= thr
                left_order, right_order = [], []
                for arr in order:
                    mask = side_buf[arr]
                    left_order.append(arr[mask])
                    right_order.append(arr[~mask])
                left = self._new_node()
                right = self._new_node()
                self.nodes_left[node] = left
                self.nodes_right[node] = right
                next_frontier.append((left, depth + 1, left_order))
                next_frontier.append((right, depth + 1, right_order))
            frontier = next_frontier
        return root

    def to_tree(self) -> RegressionTree:
        return RegressionTree(
            feature=np.array(self.nodes_feature, dtype=np.int32),
            threshold=np.array(self.nodes_threshold, dtype=float),
            left=np.array(self.nodes_left, dtype=np.int32),
            right=np.array(self.nodes_right, dtype=np.int32),
            value=np.array(self.nodes_value, dtype=float))


def train_matrix(X: np.ndarray, y: np.ndarray, params: BoostParams,
                 feature_schema: list[str] | None = None,
                 eval_set: tuple[np.ndarray, np.ndarray] | None = None,
                 target: str = "x",
                 window: FeatureWindow | None = None) -> BoostedModel:
    """Boosting loop over a plain matrix; the eval set drives early stopping."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise TrainingError(f"bad training shapes {X.shape} / {y.shape}")
    n, n_features = X.shape
    if n == 0:
        raise TrainingError("empty training set")
    if n < 2:
        raise TrainingError(f"need >= 2 training rows, got {n}")
    if feature_schema is None:
        feature_schema = [f"f{j}" for j in range(n_features)]
    if len(feature_schema) != n_features:
        raise TrainingError("feature_schema length does not match matrix width")

    rng = np.random.default_rng(params.seed)
    base = float(y.mean())
    pred = np.full(n, base)
    model = BoostedModel(target=target, params=params, base_prediction=base,
                         feature_schema=list(feature_schema), window=window)

    has_eval = eval_set is not None and eval_set[0].shape[0] > 0
    if has_eval:
        Xv = np.asarray(eval_set[0], dtype=float)
        yv = np.asarray(eval_set[1], dtype=float)
        val_pred = np.full(Xv.shape[0], base)
    best_val = math.inf
    best_round = -1
    stall = 0

    side_buf = np.empty(n, dtype=bool)
    all_rows = np.arange(n)
    all_feats = np.arange(n_features)
    for _ in range(params.num_rounds):
        if params.subsample < 1:
            m = max(1, int(math.floor(params.subsample * n)))
            rows = np.sort(rng.choice(n, size=m, replace=False))
        else:
            rows = all_rows
        if params.colsample < 1:
            m = max(1, int(math.floor(params.colsample * n_features)))
            feats = np.sort(rng.choice(n_features, size=m, replace=False))
        else:
            feats = all_feats

        residual = y - pred
        builder = _TreeBuilder(X, residual, params, feats, rows)
        builder.build(side_buf)
        tree = builder.to_tree()
        lr = params.learning_rate
        if params.subsample < 1:
            pred += lr * tree.predict_matrix(X)
        else:
            # Leaf membership is already known for every training row.
            for node, leaf_rows in builder.leaf_rows:
                pred[leaf_rows] += lr * tree.value[node]
        model.trees.append(tree)
        model.train_rmse.append(float(np.sqrt(np.mean((y - pred) ** 2))))

        if has_eval:
            val_pred += lr * tree.predict_matrix(Xv)
            v_rmse = float(np.sqrt(np.mean((yv - val_pred) ** 2)))
            model.val_rmse.append(v_rmse)
            if v_rmse < best_val:
                best_val = v_rmse
                best_round = len(model.trees) - 1
                stall = 0
            else:
                stall += 1
                if params.early_stop_patience and stall >= params.early_stop_patience:
                    break

    if has_eval and params.early_stop_patience and best_round >= 0:
        keep = best_round + 1
        model.trees = model.trees[:keep]
        model.train_rmse = model.train_rmse[:keep]
        model.val_rmse = model.val_rmse[:keep]
    return model


def _validation_slice(dataset: Dataset, fraction: float = 0.1):
    """Last `fraction` of each station's training rows, chronologically."""
    train = dataset.train_idx
    stations = dataset.station_ids[train]
    fit_parts, val_parts = [], []
    for sid in np.unique(stations):
        rows = train[stations == sid]
        n_val = int(math.floor(fraction * rows.size))
        if n_val == 0:
            fit_parts.append(rows)
        else:
            fit_parts.append(rows[:-n_val])
            val_parts.append(rows[-n_val:])
    fit_idx = np.concatenate(fit_parts) if fit_parts else np.empty(0, dtype=np.intp)
    val_idx = np.concatenate(val_parts) if val_parts else np.empty(0, dtype=np.intp)
    return fit_idx, val_idx


def train(dataset: Dataset, params: BoostParams, target: str = "x") -> BoostedModel:
    if target not in ("x", "y"):
        raise TrainingError(f"target must be 'x' or 'y', got {target!r}")
    y_all = dataset.target_x if target == "x" else dataset.target_y
    fit_idx, val_idx = _validation_slice(dataset)
    eval_set = None
    if val_idx.size:
        eval_set = (dataset.X[val_idx], y_all[val_idx])
    return train_matrix(
        dataset.X[fit_idx], y_all[fit_idx], params,
        feature_schema=dataset.feature_names, eval_set=eval_set,
        target=target, window=dataset.window)


def predict(model: BoostedModel, features) -> float | np.ndarray:
    """Pure ensemble evaluation; accepts one row or a matrix."""
    arr = np.asarray(features, dtype=float)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != len(model.feature_schema):
        raise PredictionError(
            f"feature shape {np.asarray(features).shape} does not match schema "
            f"of {len(model.feature_schema)} features")
    out = model.predict(arr)
    return float(out[0]) if single else out


def evaluate_rmse(model: BoostedModel, X: np.ndarray, y: np.ndarray):
    """RMSE of the model and of the persistence baseline on the same rows.

    Persistence predicts the newest lagged position, which by the feature
    layout is column 0 for the x model and column 1 for the y model.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[0] == 0:
        raise PredictionError("empty evaluation split")
    pred = predict(model, X)
    rmse = float(np.sqrt(np.mean((y - pred) ** 2)))
    persist_col = 0 if model.target == "x" else 1
    persist = X[:, persist_col]
    persist_rmse = float(np.sqrt(np.mean((y - persist) ** 2)))
    return rmse, persist_rmse


def predict_positions(model_x: BoostedModel, model_y: BoostedModel,
                      trace: Trace, at_time: float,
                      bounds: tuple[float, float] | None = None) -> dict[int, tuple[float, float]]:
    """One clamped (x, y) per station for the given trace timestamp.

    Features are taken `horizon` steps before at_time, so the prediction uses
    only history strictly older than the timestamp being predicted.
    """
    if model_x.window is None or model_y.window is None:
        raise PredictionError("models carry no feature window description")
    if model_x.window != model_y.window:
        raise PredictionError("coordinate models disagree on the feature window")
    if bounds is None:
        if trace.config is not None:
            bounds = (trace.config.width, trace.config.height)
        else:
            bounds = (500.0, 500.0)
    window = model_x.window
    h, horizon = window.history_length, window.horizon

    hits = np.nonzero(np.abs(trace.times - at_time) <= 1e-9)[0]
    if hits.size == 0:
        raise PredictionError(f"timestamp {at_time} not present in trace")
    t = int(hits[0]) - horizon
    if t < max(h, 2):
        raise PredictionError(
            f"insufficient history before t={at_time} for h={h}, horizon={horizon}")
    dt = trace.times[1] - trace.times[0]

    anchors = np.array([t])
    out: dict[int, tuple[float, float]] = {}
    for sid in trace.station_ids:
        row = _feature_rows(trace.positions[sid], anchors, h, dt)
        px = predict(model_x, row[0])
        py = predict(model_y, row[0])
        out[sid] = (min(max(px, 0.0), bounds[0]), min(max(py, 0.0), bounds[1]))
    return out


# --- persistence ----------------------------------------------------------

def save_model(model: BoostedModel, path: str) -> None:
    payload = {
        "target": model.target,
        "base_prediction": model.base_prediction,
        "feature_schema": model.feature_schema,
        "params": {
            "max_depth": model.params.max_depth,
            "learning_rate": model.params.learning_rate,
            "colsample": model.params.colsample,
            "subsample": model.params.subsample,
            "num_rounds": model.params.num_rounds,
            "early_stop_patience": model.params.early_stop_patience,
            "min_samples_leaf": model.params.min_samples_leaf,
            "seed": model.params.seed,
        },
        "window": None if model.window is None else {
            "history_length": model.window.history_length,
            "horizon": model.window.horizon,
        },
        "train_rmse": model.train_rmse,
        "val_rmse": model.val_rmse,
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "value": t.value.tolist(),
            }
            for t in model.trees
        ],
    }
    atomic_write_json(path, payload)


def load_model(path: str) -> BoostedModel:
    raw = load_json(path)
    try:
        params = BoostParams(**raw["params"])
        window = None
        if raw["window"] is not None:
            window = FeatureWindow(**raw["window"])
        trees = [
            RegressionTree(
                feature=np.array(t["feature"], dtype=np.int32),
                threshold=np.array(t["threshold"], dtype=float),
                left=np.array(t["left"], dtype=np.int32),
                right=np.array(t["right"], dtype=np.int32),
                value=np.array(t["value"], dtype=float))
            for t in raw["trees"]
        ]
        return BoostedModel(
            target=str(raw["target"]), params=params,
            base_prediction=float(raw["base_prediction"]),
            feature_schema=[str(s) for s in raw["feature_schema"]],
            trees=trees, window=window,
            train_rmse=[float(v) for v in raw["train_rmse"]],
            val_rmse=[float(v) for v in raw["val_rmse"]])
    except (KeyError, TypeError, ValueError) as exc:
        raise PredictionError(f"malformed model file {path}: {exc}") from exc


def write_predictions(positions: dict[int, tuple[float, float]], path: str) -> None:
    lines = ["station_id,pred_x,pred_y"]
    for sid in sorted(positions):
        x, y = positions[sid]
        lines.append(f"{sid},{x!r},{y!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_predictions(path: str) -> dict[int, tuple[float, float]]:
    out: dict[int, tuple[float, float]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "station_id,pred_x,pred_y":
            raise PredictionError(f"unexpected predictions header: {header!r}")
        for raw in fh:
            raw = raw.strip()
            if not raw:
                continue
            try:
                sid, x, y = raw.split(",")
                out[int(sid)] = (float(x), float(y))
            except ValueError as exc:
                raise PredictionError(f"malformed predictions row {raw!r}") from exc
    return out
