"""Pipeline configuration: one INI file driving every stage.

The [simulation] section is the scenario parameter sheet; the remaining
sections hold the knobs the sheet leaves open (sampling cadence, boosting
hyperparameters, queueing constants, and so on). Defaults reproduce the
stock 25-station scenario end to end. Per-stage seeds derive from the single
master seed through fixed substreams, so one seed pins the whole pipeline.
"""

from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass, replace

from .errors import ConfigError
from .ioutil import (CLUSTER_STREAM, MOBILITY_STREAM, RADIO_STREAM,
                     TRAFFIC_STREAM, atomic_write_text, substream_seed)
from .mobility import ArenaConfig
from .netsim import SimConfig, TopologyConfig
from .predictor import BoostParams
from .traffic import TrafficParams


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    sim: SimConfig = SimConfig()
    pause_time: float = 0.0
    sample_interval: float = 1.0
    duration: float = 3600.0
    max_depth: int = 6
    learning_rate: float = 0.1
    colsample: float = 1.0
    subsample: float = 1.0
    num_rounds: int = 100
    early_stop_patience: int = 10
    min_samples_leaf: int = 2
    history_length: int = 5
    horizon: int = 1
    train_fraction: float = 0.8
    k_max: int | None = None
    restarts: int = 10
    fixed_k: int | None = 3
    sweep_mode: str = "literal"
    sweep_grid: int = 11
    min_size: int = 256
    max_size: int = 2048
    mean_interarrival: float = 0.030
    packets_per_station: int = 100
    link_bitrate: float = 10e6
    backbone_bitrate: float = 50e6
    propagation_speed: float = 3e8
    processing_delay: float = 1e-4
    queue_capacity: int = 3

    def with_seed(self, seed: int) -> "PipelineConfig":
        return replace(self, seed=seed)

    def arena_config(self) -> ArenaConfig:
        return ArenaConfig(
            width=self.sim.area_width, height=self.sim.area_height,
            num_stations=self.sim.num_nodes, min_speed=self.sim.min_speed,
            max_speed=self.sim.max_speed, pause_time=self.pause_time,
            sample_interval=self.sample_interval, duration=self.duration,
            seed=substream_seed(self.seed, MOBILITY_STREAM))

    def boost_params(self) -> BoostParams:
        return BoostParams(
            max_depth=self.max_depth, learning_rate=self.learning_rate,
            colsample=self.colsample, subsample=self.subsample,
            num_rounds=self.num_rounds, early_stop_patience=self.early_stop_patience,
            min_samples_leaf=self.min_samples_leaf, seed=self.seed)

    def traffic_params(self) -> TrafficParams:
        return TrafficParams(
            mean_size=self.sim.packet_size, size_sigma=self.sim.packet_size_sigma,
            min_size=self.min_size, max_size=self.max_size,
            mean_interarrival=self.mean_interarrival,
            packets_per_station=self.packets_per_station,
            seed=substream_seed(self.seed, TRAFFIC_STREAM))

    def topology_config(self, mode: str, clustering: bool) -> TopologyConfig:
        return TopologyConfig(
            mode=mode, clustering=clustering, link_bitrate=self.link_bitrate,
            backbone_bitrate=self.backbone_bitrate,
            propagation_speed=self.propagation_speed,
            processing_delay=self.processing_delay,
            queue_capacity=self.queue_capacity, radio_range=self.sim.radio_range)

    def cluster_seed(self) -> int:
        return substream_seed(self.seed, CLUSTER_STREAM)

    def radio_seed(self) -> int:
        return substream_seed(self.seed, RADIO_STREAM)

    def validate(self) -> "PipelineConfig":
        """Force every derived config through its own checks."""
        self.arena_config()
        self.boost_params()
        self.traffic_params()
        self.topology_config("centralized", True)
        if self.sweep_mode not in ("literal", "convex"):
            raise ConfigError(f"sweep_mode must be literal or convex, got {self.sweep_mode!r}")
        if self.sweep_grid < 2:
            raise ConfigError(f"sweep_grid must be >= 2, got {self.sweep_grid}")
        if self.restarts < 1:
            raise ConfigError(f"restarts must be >= 1, got {self.restarts}")
        if self.k_max is not None and self.k_max < 1:
            raise ConfigError(f"k_max must be >= 1, got {self.k_max}")
        if self.fixed_k is not None and self.fixed_k < 1:
            raise ConfigError(f"fixed_k must be >= 1, got {self.fixed_k}")
        if not 0 < self.train_fraction < 1:
            raise ConfigError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if self.history_length < 1 or self.horizon < 1:
            raise ConfigError("history_length and horizon must be >= 1")
        return self


def _opt_int(text: str) -> int | None:
    return None if text == "" else int(text)


_SIM_TYPES = {
    "area_width": float, "area_height": float, "num_nodes": int,
    "radio_range": float, "interference": str, "modulation": str,
    "mobility_model": str, "antenna": str, "energy_model": str,
    "hello_interval": float, "expire_time": float, "initial_q": float,
    "min_speed": float, "max_speed": float, "min_power": float,
    "max_power": float, "packet_size": float, "packet_size_sigma": float,
    "sinr_weight": float, "latency_threshold": float, "qnoise_lookback": int,
    "w": float, "alpha": float, "epsilon": float,
}

_SCHEMAS: dict[str, dict] = {
    "pipeline": {"seed": int},
    "simulation": _SIM_TYPES,
    "mobility": {"pause_time": float, "sample_interval": float, "duration": float},
    "predictor": {
        "max_depth": int, "learning_rate": float, "colsample": float,
        "subsample": float, "num_rounds": int, "early_stop_patience": int,
        "min_samples_leaf": int, "history_length": int, "horizon": int,
        "train_fraction": float,
    },
    "clustering": {"k_max": _opt_int, "restarts": int, "fixed_k": _opt_int},
    "heads": {"sweep_mode": str, "sweep_grid": int},
    "traffic": {"min_size": int, "max_size": int, "mean_interarrival": float,
                "packets_per_station": int},
    "topology": {"link_bitrate": float, "backbone_bitrate": float,
                 "propagation_speed": float, "processing_delay": float,
                 "queue_capacity": int},
}


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def save_config(cfg: PipelineConfig, path: str) -> None:
    cp = configparser.ConfigParser(interpolation=None)
    cp["pipeline"] = {"seed": _fmt(cfg.seed)}
    cp["simulation"] = {k: _fmt(getattr(cfg.sim, k)) for k in _SIM_TYPES}
    cp["mobility"] = {k: _fmt(getattr(cfg, k)) for k in _SCHEMAS["mobility"]}
    cp["predictor"] = {k: _fmt(getattr(cfg, k)) for k in _SCHEMAS["predictor"]}
    cp["clustering"] = {k: _fmt(getattr(cfg, k)) for k in _SCHEMAS["clustering"]}
    cp["heads"] = {k: _fmt(getattr(cfg, k)) for k in _SCHEMAS["heads"]}
    cp["traffic"] = {k: _fmt(getattr(cfg, k)) for k in _SCHEMAS["traffic"]}
    cp["topology"] = {k: _fmt(getattr(cfg, k)) for k in _SCHEMAS["topology"]}
    buf = io.StringIO()
    cp.write(buf)
    atomic_write_text(path, buf.getvalue())


def load_config(path: str) -> PipelineConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc

    values: dict[str, dict] = {}
    for section in cp.sections():
        if section not in _SCHEMAS:
            raise ConfigError(f"unrecognized config section [{section}]")
        schema = _SCHEMAS[section]
        values[section] = {}
        for key, raw in cp[section].items():
            if key not in schema:
                raise ConfigError(f"unrecognized key {key!r} in section [{section}]")
            try:
                values[section][key] = schema[key](raw)
            except ValueError as exc:
                raise ConfigError(
                    f"bad value for {key!r} in section [{section}]: {raw!r}") from exc

    sim = SimConfig.from_mapping(values.get("simulation", {}))
    kwargs: dict = {"sim": sim}
    kwargs.update(values.get("pipeline", {}))
    for section in ("mobility", "predictor", "clustering", "heads",
                    "traffic", "topology"):
        kwargs.update(values.get(section, {}))
    return PipelineConfig(**kwargs).validate()
