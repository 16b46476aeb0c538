"""Trace evaluation: test metrics, optimal stopping, network error and speed-up."""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, UnsupportedMetricError
from .features import apply

METRICS = ("excess_risk", "classification_error", "mse")

# test points per evaluation block; bounds memory at K * n * block floats
_BLOCK = 4096


def excess_risk_estimate(weights, fmap, test_set):
    """Monte Carlo estimate of ||f_w - f_H||^2 in L2(rho_X) on noiseless test targets.

    ``weights`` may be one vector (M,) or a stack (..., M); returns matching shape.
    """
    if getattr(test_set, "noiseless", None) is None:
        raise UnsupportedMetricError("excess risk needs a test set with noiseless ground-truth targets")
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape[-1] != fmap.M:
        raise ParameterError(f"weights have length {weights.shape[-1]}, map has M={fmap.M}")
    preds = apply(fmap, test_set.X) @ weights.reshape(-1, fmap.M).T
    err = np.mean((preds - test_set.noiseless[:, None]) ** 2, axis=0)
    return float(err[0]) if weights.ndim == 1 else err.reshape(weights.shape[:-1])


def _check_binary(labels):
    labels = np.asarray(labels, dtype=np.float64)
    if not np.all((labels == 0) | (labels == 1)):
        raise ParameterError("classification labels must be 0 or 1")
    return labels


def classification_error(predictions, labels):
    """Fraction misclassified when predicting 1 iff prediction > 1/2 (ties go to 0)."""
    labels = _check_binary(labels)
    predictions = np.asarray(predictions, dtype=np.float64)
    if predictions.shape != labels.shape:
        raise ParameterError(f"shape mismatch: {predictions.shape} vs {labels.shape}")
    if labels.size == 0:
        raise ParameterError("empty label set")
    return float(np.mean((predictions > 0.5) != (labels == 1)))


def metric_table(trace, test_set, metric="excess_risk"):
    """Metric per checkpoint and agent, shape (K, n)."""
    if metric not in METRICS:
        raise UnsupportedMetricError(f"unknown metric {metric!r}; expected one of {METRICS}")
    if metric == "excess_risk":
        if getattr(test_set, "noiseless", None) is None:
            raise UnsupportedMetricError("excess risk needs a test set with noiseless ground-truth targets")
        target = test_set.noiseless
    else:
        target = test_set.y
        if metric == "classification_error":
            target = _check_binary(target)
    K, n, M = trace.weights.shape
    flat = trace.weights.reshape(K * n, M)
    acc = np.zeros(K * n)
    N = test_set.X.shape[0]
    for a in range(0, N, _BLOCK):
        Phi = apply(trace.fmap, test_set.X[a:a + _BLOCK])
        preds = Phi @ flat.T
        tgt = target[a:a + _BLOCK, None]
        if metric == "classification_error":
            acc += np.sum((preds > 0.5) != (tgt == 1), axis=0)
        else:
            acc += np.sum((preds - tgt) ** 2, axis=0)
    return (acc / N).reshape(K, n)


def stopping_from_table(ts, table):
    """min over t of max over agents; earliest t on ties."""
    table = np.asarray(table, dtype=np.float64)
    if table.ndim == 1:
        table = table[:, None]
    if len(ts) == 0 or table.shape[0] != len(ts):
        raise ParameterError("need one table row per checkpoint")
    worst = table.max(axis=1)
    k = int(np.argmin(worst))
    return int(ts[k]), float(worst[k])


def optimal_stopping(trace, fmap, test_set, metric="excess_risk"):
    if fmap is not None and fmap != trace.fmap:
        raise ParameterError("feature map does not match the one the trace was trained with")
    return stopping_from_table(trace.ts, metric_table(trace, test_set, metric))


def network_error(dist_trace, central_trace, C_hat):
    """sqrt((w_tv - v_t)^T C (w_tv - v_t)) for every checkpoint t and agent v.

    Both traces are compared at the same iterate index t, so the table is zero at t = 1.
    """
    if not np.array_equal(dist_trace.ts, central_trace.ts):
        raise ParameterError("traces have different checkpoints")
    if dist_trace.eta != central_trace.eta:
        raise ParameterError(f"traces use different step sizes ({dist_trace.eta} vs {central_trace.eta})")
    if dist_trace.fmap != central_trace.fmap:
        raise ParameterError("traces use different feature maps")
    C_hat = np.asarray(C_hat, dtype=np.float64)
    M = dist_trace.M
    if C_hat.shape != (M, M):
        raise ParameterError(f"C_hat has shape {C_hat.shape}, expected {(M, M)}")
    diff = dist_trace.weights - central_trace.weights[:, :1, :]
    q = np.einsum("kvi,ij,kvj->kv", diff, C_hat, diff)
    return np.sqrt(np.maximum(q, 0.0))


def speedup_estimate(n, m, M, tau, deg):
    """n m / (m + tau + M deg): single-machine over distributed iteration time."""
    if min(n, m, M, tau, deg) < 0 or m < 1:
        raise ParameterError("speedup_estimate needs nonnegative inputs and m >= 1")
    return n * m / (m + tau + M * deg)


def config_hash(obj):
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class EvalReport:
    ts: np.ndarray
    table: np.ndarray  # (K, n)
    metric: str
    t_star: int
    best: float
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_trace(cls, trace, test_set, metric="excess_risk", meta=None):
        table = metric_table(trace, test_set, metric)
        t_star, best = stopping_from_table(trace.ts, table)
        return cls(trace.ts, table, metric, t_star, best, dict(meta or {}))

    def rows(self):
        for k, t in enumerate(self.ts):
            for v in range(self.table.shape[1]):
                yield int(t), v, self.metric, float(self.table[k, v])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "agent", "metric", "value"])
            for t, v, name, val in self.rows():
                wr.writerow([t, v, name, repr(val)])

    def summary(self):
        return {
            "metric": self.metric,
            "t_star": self.t_star,
            "best": self.best,
            "config_hash": config_hash(self.meta),
            "meta": self.meta,
        }
