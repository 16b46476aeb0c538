"""Synthetic planted-truth data, CSV ingestion and i.i.d. sharding across agents."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import IngestionError, ParameterError
from .features import FeatureMap, apply, sample_feature_map


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Planted regression function f(x) = <weights, phi(x)> plus Gaussian noise."""

    fmap: FeatureMap
    weights: np.ndarray
    noise_sigma: float

    def __call__(self, X):
        return apply(self.fmap, X) @ self.weights

    def to_dict(self):
        return {
            "fmap": self.fmap.to_dict(),
            "weights": np.asarray(self.weights).tolist(),
            "noise_sigma": self.noise_sigma,
        }


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    ground_truth: GroundTruth | None = None
    noiseless: np.ndarray | None = None
    name: str = "dataset"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ParameterError(f"X {X.shape} and y {y.shape} do not describe N samples")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ParameterError("dataset contains non-finite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def N(self):
        return self.X.shape[0]

    @property
    def D(self):
        return self.X.shape[1]

    def subset(self, idx, name=None):
        idx = np.asarray(idx, dtype=int)
        return Dataset(
            self.X[idx],
            self.y[idx],
            self.ground_truth,
            None if self.noiseless is None else self.noiseless[idx],
            name or self.name,
            dict(self.meta),
        )

    def is_binary(self):
        return bool(np.all((self.y == 0) | (self.y == 1)))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            cols = ["y"] + [f"x{j}" for j in range(self.D)]
            if self.noiseless is not None:
                cols.append("f")
            wr.writerow(cols)
            for i in range(self.N):
                row = [repr(float(self.y[i]))] + [repr(float(v)) for v in self.X[i]]
                if self.noiseless is not None:
                    row.append(repr(float(self.noiseless[i])))
                wr.writerow(row)


def planted_target(D, M_star=100, xi=10 ** -0.5, seed=0, weight_scale=1.0):
    """Random target in the span of an independent RFF map.

    Weights are N(0, weight_scale^2), so f has unit-order variance.
    """
    fmap = sample_feature_map("gaussian_rff", D, M_star, xi, seed)
    rng = np.random.default_rng([int(seed), 1])
    return fmap, weight_scale * rng.standard_normal(M_star)


def gen_synthetic(N, D, target_map, target_weights, noise_sigma, seed, name="synthetic"):
    """X ~ U[-1,1]^D, y = <w, phi(x)> + N(0, noise_sigma^2)."""
    target_weights = np.asarray(target_weights, dtype=np.float64)
    if target_weights.shape != (target_map.M,):
        raise ParameterError(
            f"target_weights has length {target_weights.shape}, target map has M={target_map.M}"
        )
    if D != target_map.D:
        raise ParameterError(f"D={D} does not match target map input dimension {target_map.D}")
    if noise_sigma < 0:
        raise ParameterError(f"noise_sigma must be nonnegative, got {noise_sigma}")
    if N < 0:
        raise ParameterError(f"N must be nonnegative, got {N}")
    x_seq, e_seq = np.random.SeedSequence(seed).spawn(2)
    X = np.random.default_rng(x_seq).uniform(-1.0, 1.0, (int(N), D))
    truth = GroundTruth(target_map, target_weights, float(noise_sigma))
    f = truth(X) if N else np.zeros(0)
    y = f + noise_sigma * np.random.default_rng(e_seq).standard_normal(int(N))
    return Dataset(X, y, truth, f, name, {"seed": seed})


def load_csv(path, label_column=0, feature_columns=None, limit=None, delimiter=",",
             header=False, classification=False, name=None):
    """Stream a delimited file into a Dataset.

    Columns may be given as indices, or as names when ``header`` is true.
    Reading stops after ``limit`` data rows. Errors name the 1-based file line.
    """
    X, y = [], []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise IngestionError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh, delimiter=delimiter)
        names = None
        if header:
            names = next(reader, None)
            if names is None:
                raise IngestionError("empty file", line=1)
            names = [c.strip() for c in names]

        def resolve(col):
            if isinstance(col, str) and not col.lstrip("-").isdigit():
                if names is None or col not in names:
                    raise IngestionError(f"unknown column {col!r}")
                return names.index(col)
            return int(col)

        label_idx = resolve(label_column)
        feat_idx = None if feature_columns is None else [resolve(c) for c in feature_columns]
        width = None
        for row in reader:
            line = reader.line_num
            if limit is not None and len(y) >= limit:
                break
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
                if feat_idx is None:
                    li = label_idx % width
                    feat_idx = [j for j in range(width) if j != li]
            elif len(row) != width:
                raise IngestionError(f"expected {width} fields, found {len(row)}", line=line)
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise IngestionError(f"cannot parse row as floats ({exc})", line=line) from None
            if not all(math.isfinite(v) for v in vals):
                raise IngestionError("non-finite value", line=line)
            try:
                y.append(vals[label_idx])
                X.append([vals[j] for j in feat_idx])
            except IndexError:
                raise IngestionError("column index out of range", line=line) from None
    if not y:
        raise IngestionError(f"no data rows in {path}")
    ds = Dataset(np.array(X), np.array(y), name=name or str(path), meta={"source": str(path)})
    if classification and not ds.is_binary():
        bad = np.flatnonzero((ds.y != 0) & (ds.y != 1))
        raise IngestionError(f"non-binary label {ds.y[bad[0]]!r} in classification task (data row {bad[0] + 1})")
    return ds


def standardize(train, *others):
    """Per-feature standardization with statistics from the training split.

    Returns (train', others'..., stats) where stats holds mean and scale.
    """
    mu = train.X.mean(axis=0)
    sd = train.X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    out = [Dataset((d.X - mu) / sd, d.y, d.ground_truth, d.noiseless, d.name, dict(d.meta))
           for d in (train, *others)]
    return (*out, {"mean": mu.tolist(), "scale": sd.tolist()})


@dataclass(frozen=True, eq=False)
class AgentShard:
    X: np.ndarray
    y: np.ndarray
    indices: np.ndarray

    @property
    def m(self):
        return self.X.shape[0]


@dataclass(frozen=True, eq=False)
class ShardedData:
    shards: list
    provenance: dict

    @property
    def n(self):
        return len(self.shards)

    @property
    def m(self):
        return self.shards[0].m

    def pooled(self):
        """All sharded samples in agent order, as one Dataset."""
        X = np.concatenate([s.X for s in self.shards])
        y = np.concatenate([s.y for s in self.shards])
        return Dataset(X, y, name=self.provenance.get("dataset", "pooled"))


def shard(dataset, n, m, seed):
    """Random permutation, then the first n*m points split into n blocks of m."""
    if n < 1 or m < 1:
        raise ParameterError(f"need n >= 1 and m >= 1, got n={n}, m={m}")
    if n * m > dataset.N:
        raise ParameterError(f"n*m = {n * m} exceeds the {dataset.N} available samples")
    perm = np.random.default_rng(seed).permutation(dataset.N)[: n * m]
    shards = []
    for v in range(n):
        idx = perm[v * m:(v + 1) * m]
        shards.append(AgentShard(dataset.X[idx], dataset.y[idx], idx))
    return ShardedData(shards, {"dataset": dataset.name, "seed": seed, "n": n, "m": m})
