"""Synchronous Distributed Gradient Descent with random features.

Every round each agent takes one full-batch gradient step of the squared loss
on its own m samples, then the agents average with their neighbours through the
mixing matrix P:

    w_{t+1,v} = sum_w P_vw (w_{t,w} - (eta/m) sum_i (<w_{t,w}, phi(x_iw)> - y_iw) phi(x_iw))

Iterates are indexed from t = 1 (all zero) to t = T + 1. The single-machine
baseline is the same recursion with one pseudo-agent holding every sample.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, ParameterError
from .features import FeatureMap, apply
from .topology import MixingMatrix, check_doubly_stochastic

MAX_CHECKPOINTS = 512


@dataclass
class RunConfig:
    """eta=None means 1/kappa^2 (the largest step the theory admits)."""

    eta: float | None = None
    T: int = 100
    checkpoint_every: int | None = None
    seeds: dict = field(default_factory=dict)
    allow_large_step: bool = False
    threads: int = 1

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 0:
            raise ConfigError(f"T must be a nonnegative integer, got {self.T}", "run.T")
        self.T = int(self.T)
        if self.eta is not None and not self.eta > 0:
            raise ConfigError(f"eta must be positive, got {self.eta}", "run.eta")
        if self.checkpoint_every is not None and self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be >= 1", "run.checkpoint_every")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1", "run.threads")


def feature_bound_sq(fmap, features=None):
    """kappa^2 for bounded maps; for linear sketches the largest squared
    feature norm seen in the training features."""
    if fmap.kappa is not None:
        # exact, since sqrt(2)**2 rounds above 2
        return 1.0 if fmap.legacy_experiment_scaling else 2.0
    if features is None:
        raise ParameterError("linear_sketch step-size check needs the training features")
    return float(np.max(np.sum(features**2, axis=-1)))


def resolve_eta(config, fmap, features=None):
    k2 = feature_bound_sq(fmap, features)
    if config.eta is None:
        return 1.0 / k2
    if config.eta * k2 > 1 + 1e-12 and not config.allow_large_step:
        raise ConfigError(
            f"eta * kappa^2 = {config.eta * k2:.6g} > 1; pass allow_large_step to override", "run.eta"
        )
    return float(config.eta)


def checkpoint_schedule(T, stride=None, max_checkpoints=MAX_CHECKPOINTS):
    """Sorted iterate indices in [1, T+1] to store.

    Always includes 1, T+1 and every power of two; the stride fills the rest
    and defaults to the smallest one keeping the total <= max_checkpoints.
    """
    last = T + 1
    pow2 = set()
    p = 1
    while p <= last:
        pow2.add(p)
        p *= 2
    if stride is None:
        budget = max(1, max_checkpoints - len(pow2) - 1)
        stride = max(1, math.ceil(T / budget))
    ts = set(range(1, last + 1, stride)) | pow2 | {1, last}
    return np.array(sorted(ts), dtype=int)


@dataclass(eq=False)
class TrainTrace:
    ts: np.ndarray
    weights: np.ndarray  # (K, n, M)
    eta: float
    config: RunConfig
    fmap: FeatureMap
    P: np.ndarray | None = None
    kind: str = "distributed"

    @property
    def n(self):
        return self.weights.shape[1]

    @property
    def M(self):
        return self.weights.shape[2]

    def index_of(self, t):
        k = int(np.searchsorted(self.ts, t))
        if k >= len(self.ts) or self.ts[k] != t:
            raise ParameterError(f"iterate t={t} was not checkpointed")
        return k

    def at(self, t):
        return self.weights[self.index_of(t)]

    def save(self, path):
        meta = {
            "kind": self.kind,
            "eta": self.eta,
            "config": asdict(self.config),
            "fmap": self.fmap.to_dict(),
            "P": None if self.P is None else np.asarray(self.P).tolist(),
        }
        with open(path, "wb") as fh:
            np.savez_compressed(fh, ts=self.ts, weights=self.weights, meta=np.array(json.dumps(meta)))

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            return cls(
                ts=z["ts"].copy(),
                weights=z["weights"].copy(),
                eta=meta["eta"],
                config=RunConfig(**meta["config"]),
                fmap=FeatureMap.from_dict(meta["fmap"]),
                P=None if meta["P"] is None else np.asarray(meta["P"]),
                kind=meta["kind"],
            )


def _shard_arrays(shards):
    if hasattr(shards, "shards"):
        shards = shards.shards
    shards = list(shards)
    if not shards:
        raise ParameterError("no shards given")
    m = shards[0].X.shape[0]
    if m < 1 or any(s.X.shape[0] != m for s in shards):
        raise ParameterError("all shards must hold the same number m >= 1 of samples")
    X = np.stack([np.asarray(s.X, dtype=np.float64) for s in shards])
    Y = np.stack([np.asarray(s.y, dtype=np.float64) for s in shards])
    return X, Y


def _local_step(Phi, Y, W, eta, out):
    # einsum without BLAS: per-agent sums run in a fixed order regardless of chunking
    m = Phi.shape[1]
    resid = np.einsum("vim,vm->vi", Phi, W) - Y
    grad = np.einsum("vim,vi->vm", Phi, resid)
    out[...] = W - (eta / m) * grad


def _iterate(Phi, Y, P, eta, config, init=None):
    n, m, M = Phi.shape
    ts = checkpoint_schedule(config.T, config.checkpoint_every)
    store = np.zeros((len(ts), n, M))
    W = np.zeros((n, M)) if init is None else np.array(init, dtype=np.float64).reshape(n, M)
    store[0] = W
    k = 1
    A = np.empty_like(W)
    chunks = np.array_split(np.arange(n), min(config.threads, n))
    pool = ThreadPoolExecutor(config.threads) if config.threads > 1 and n > 1 else None
    try:
        for t in range(1, config.T + 1):
            if pool is None:
                _local_step(Phi, Y, W, eta, A)
            else:
                futs = [pool.submit(_local_step, Phi[c[0]:c[-1] + 1], Y[c[0]:c[-1] + 1],
                                    W[c[0]:c[-1] + 1], eta, A[c[0]:c[-1] + 1]) for c in chunks]
                for f in futs:
                    f.result()
            # barrier: mix from the immutable previous-round state
            W = np.einsum("vw,wm->vm", P, A)
            if k < len(ts) and ts[k] == t + 1:
                store[k] = W
                k += 1
    finally:
        if pool is not None:
            pool.shutdown()
    return ts, store


def run_distributed(shards, fmap, P, config, init=None):
    """Run DGD on ``shards`` (a ShardedData or list of shards) over mixing matrix P.

    ``init`` optionally injects starting weights (n x M); the default is zero.
    """
    if isinstance(P, MixingMatrix):
        P = P.P
    P = np.asarray(P, dtype=np.float64)
    check_doubly_stochastic(P, tol=1e-10)
    X, Y = _shard_arrays(shards)
    n = X.shape[0]
    if P.shape[0] != n:
        raise ConfigError(f"{n} shards but P is {P.shape[0]}x{P.shape[1]}", "topology.n")
    Phi = apply(fmap, X.reshape(-1, X.shape[-1])).reshape(n, X.shape[1], fmap.M)
    eta = resolve_eta(config, fmap, Phi)
    ts, store = _iterate(Phi, Y, P, eta, config, init)
    return TrainTrace(ts, store, eta, config, fmap, P, "distributed")


def run_centralized(dataset, fmap, config):
    """Full-batch GD on all samples of ``dataset`` (Dataset or ShardedData, pooled)."""
    if hasattr(dataset, "pooled"):
        dataset = dataset.pooled()
    X = np.asarray(dataset.X, dtype=np.float64)
    if X.shape[0] == 0:
        raise ParameterError("empty dataset")
    Phi = apply(fmap, X)[None]
    Y = np.asarray(dataset.y, dtype=np.float64)[None]
    eta = resolve_eta(config, fmap, Phi)
    ts, store = _iterate(Phi, Y, np.ones((1, 1)), eta, config)
    return TrainTrace(ts, store, eta, config, fmap, None, "centralized")


def predict(weights, fmap, X):
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape[-1] != fmap.M:
        raise ParameterError(f"weights have length {weights.shape[-1]}, map has M={fmap.M}")
    return apply(fmap, X) @ weights.T if weights.ndim > 1 else apply(fmap, X) @ weights


__all__ = [
    "RunConfig",
    "TrainTrace",
    "checkpoint_schedule",
    "predict",
    "resolve_eta",
    "run_centralized",
    "run_distributed",
]
