"""Experiment configuration: nested dataclasses backed by a YAML file.

Example::

    dataset:
      kind: synthetic      # or csv
      m: 64                # samples per agent
      D: 3
      noise_sigma: 0.3
      test_size: 2000
    topology: {kind: cycle, n: 16, scheme: lazy_uniform}
    features: {kind: gaussian_rff, M: 64, xi: 0.31622776601683794}
    run: {T: 1024, eta: null, centralized: true}
    evaluation: {metric: excess_risk}
    seeds: [0, 1, 2, 3, 4]
    out: runs/example

Dotted overrides (``topology.n=25``) are parsed as YAML scalars.
"""
from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import yaml

from .analysis import METRICS, config_hash
from .errors import ConfigError
from .features import KINDS

XI_EXPERIMENT = 10 ** -0.5


@dataclass
class DatasetSpec:
    kind: str = "synthetic"
    m: int = 64
    N: int | None = None
    D: int = 3
    target_M: int = 100
    target_xi: float = XI_EXPERIMENT
    noise_sigma: float = 0.3
    test_size: int = 2000
    path: str | None = None
    label_column: int | str = 0
    feature_columns: list | None = None
    delimiter: str = ","
    header: bool = False
    limit: int | None = None
    standardize: bool = True


@dataclass
class TopologySpec:
    kind: str = "cycle"
    n: int = 16
    scheme: str = "lazy_uniform"
    d: int = 6
    toroidal: bool = False


@dataclass
class FeatureSpec:
    kind: str = "gaussian_rff"
    M: int = 64
    xi: float = XI_EXPERIMENT
    legacy_experiment_scaling: bool = False


@dataclass
class RunSpec:
    eta: float | None = None
    T: int = 1024
    checkpoint_every: int | None = None
    centralized: bool = True
    allow_large_step: bool = False
    save_traces: bool = True


@dataclass
class EvalSpec:
    metric: str = "excess_risk"


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    topology: TopologySpec = field(default_factory=TopologySpec)
    features: FeatureSpec = field(default_factory=FeatureSpec)
    run: RunSpec = field(default_factory=RunSpec)
    evaluation: EvalSpec = field(default_factory=EvalSpec)
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    threads: int = 1
    out: str = "runs/default"

    def to_dict(self):
        return asdict(self)

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=False)

    def hash(self):
        return config_hash(self.to_dict())

    def validate(self):
        ds, tp, fs, rs = self.dataset, self.topology, self.features, self.run
        if ds.kind not in ("synthetic", "csv"):
            raise ConfigError(f"unknown dataset kind {ds.kind!r}", "dataset.kind")
        if ds.kind == "csv" and not ds.path:
            raise ConfigError("csv dataset needs a path", "dataset.path")
        if ds.m < 1:
            raise ConfigError("m must be >= 1", "dataset.m")
        if tp.n < 1:
            raise ConfigError("n must be >= 1", "topology.n")
        if ds.N is not None and tp.n * ds.m > ds.N:
            raise ConfigError(f"n*m = {tp.n * ds.m} exceeds N = {ds.N}", "dataset.N")
        if ds.noise_sigma < 0:
            raise ConfigError("noise_sigma must be nonnegative", "dataset.noise_sigma")
        if ds.test_size < 1:
            raise ConfigError("test_size must be >= 1", "dataset.test_size")
        if tp.kind not in ("cycle", "grid", "complete", "expander"):
            raise ConfigError(f"unknown topology {tp.kind!r}", "topology.kind")
        if tp.kind == "grid":
            k = math.isqrt(tp.n)
            if k * k != tp.n or k < 2:
                raise ConfigError(f"grid needs a perfect square n >= 4, got {tp.n}", "topology.n")
        if tp.kind == "expander" and ((tp.d * tp.n) % 2 or not 0 < tp.d < tp.n):
            raise ConfigError(f"no {tp.d}-regular graph on {tp.n} nodes", "topology.d")
        if tp.scheme not in ("lazy_uniform", "metropolis"):
            raise ConfigError(f"unknown scheme {tp.scheme!r}", "topology.scheme")
        if tp.scheme == "lazy_uniform" and tp.kind == "grid" and not tp.toroidal:
            raise ConfigError("non-toroidal grids are not regular; use scheme metropolis", "topology.scheme")
        if fs.kind not in KINDS:
            raise ConfigError(f"unknown feature kind {fs.kind!r}", "features.kind")
        if fs.M < 1:
            raise ConfigError("M must be >= 1", "features.M")
        if not fs.xi > 0:
            raise ConfigError("xi must be positive", "features.xi")
        if rs.T < 0:
            raise ConfigError("T must be >= 0", "run.T")
        if rs.eta is not None:
            if not rs.eta > 0:
                raise ConfigError("eta must be positive", "run.eta")
            if fs.kind == "gaussian_rff":
                k2 = 1.0 if fs.legacy_experiment_scaling else 2.0
                if rs.eta * k2 > 1 + 1e-12 and not rs.allow_large_step:
                    raise ConfigError(
                        f"eta * kappa^2 = {rs.eta * k2:g} > 1; set run.allow_large_step to override", "run.eta"
                    )
        if self.evaluation.metric not in METRICS:
            raise ConfigError(f"unknown metric {self.evaluation.metric!r}", "evaluation.metric")
        if self.evaluation.metric == "excess_risk" and ds.kind != "synthetic":
            raise ConfigError("excess_risk needs planted ground truth (synthetic data)", "evaluation.metric")
        if not self.seeds:
            raise ConfigError("need at least one seed", "seeds")
        return self


_SECTIONS = {
    "dataset": DatasetSpec,
    "topology": TopologySpec,
    "features": FeatureSpec,
    "run": RunSpec,
    "evaluation": EvalSpec,
}


def from_dict(d):
    d = dict(d or {})
    kwargs = {}
    for name, cls in _SECTIONS.items():
        sub = d.pop(name, None) or {}
        if not isinstance(sub, dict):
            raise ConfigError(f"section must be a mapping", name)
        known = {f.name for f in fields(cls)}
        for key in sub:
            if key not in known:
                raise ConfigError(f"unknown key", f"{name}.{key}")
        kwargs[name] = cls(**sub)
    for key in ("seeds", "threads", "out"):
        if key in d:
            kwargs[key] = d.pop(key)
    if d:
        raise ConfigError("unknown top-level key", sorted(d)[0])
    if "seeds" in kwargs:
        s = kwargs["seeds"]
        kwargs["seeds"] = [int(x) for x in (s if isinstance(s, list) else [s])]
    return ExperimentConfig(**kwargs)


def load(path):
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return from_dict(raw)


def apply_overrides(cfg, overrides):
    """Apply ``section.key=value`` strings; returns a new config."""
    d = copy.deepcopy(cfg.to_dict())
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        value = yaml.safe_load(raw)
        node = d
        parts = key.strip().split(".")
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise ConfigError("unknown config section", key)
            node = node[p]
        if parts[-1] not in node:
            raise ConfigError("unknown config key", key)
        node[parts[-1]] = value
    return from_dict(d)


def seed_bundle(seed):
    """Independent integer seeds for each random component of one repetition."""
    names = ("target", "train", "test", "shard", "feature", "graph")
    states = np.random.SeedSequence(int(seed)).generate_state(len(names))
    return {k: int(v) for k, v in zip(names, states)}
