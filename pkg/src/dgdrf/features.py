"""Random feature maps approximating positive-definite kernels.

Two kinds are supported:

* ``gaussian_rff``: random Fourier features for the Gaussian kernel,
  ``phi_j(x) = sqrt(2/M) cos(W_j . x + b_j)`` with ``W_j ~ N(0, xi^2 I)`` and
  ``b_j ~ U[0, 2pi)``. The associated kernel is ``exp(-xi^2 |x - x'|^2 / 2)``.
* ``linear_sketch``: ``phi_j(x) = W_j . x / sqrt(M)`` with ``W_j ~ N(0, I)``,
  whose associated kernel is the linear kernel ``x . x'``.

With ``legacy_experiment_scaling`` the cosine features drop the sqrt(2) factor
(``psi = cos(xi w.x + q)``), so the feature bound is 1 and the expected inner
product is half the Gaussian kernel.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

GAUSSIAN_RFF = "gaussian_rff"
LINEAR_SKETCH = "linear_sketch"
KINDS = (GAUSSIAN_RFF, LINEAR_SKETCH)


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FeatureMap:
    kind: str
    M: int
    D: int
    W: np.ndarray
    b: np.ndarray | None
    xi: float
    seed: int
    legacy_experiment_scaling: bool = False
    _scale: float = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown feature kind {self.kind!r}")
        object.__setattr__(self, "W", _frozen(self.W))
        if self.W.shape != (self.M, self.D):
            raise ParameterError(f"W has shape {self.W.shape}, expected {(self.M, self.D)}")
        if self.kind == GAUSSIAN_RFF:
            if self.b is None or np.shape(self.b) != (self.M,):
                raise ParameterError("gaussian_rff needs a length-M offset vector")
            object.__setattr__(self, "b", _frozen(self.b))
            amp = 1.0 if self.legacy_experiment_scaling else np.sqrt(2.0)
        else:
            if self.b is not None:
                raise ParameterError("linear_sketch carries no offsets")
            amp = 1.0
        object.__setattr__(self, "_scale", amp / np.sqrt(self.M))

    @property
    def kappa(self):
        """Uniform bound on |psi(x, omega)|; None when unbounded (linear sketch)."""
        if self.kind == LINEAR_SKETCH:
            return None
        return 1.0 if self.legacy_experiment_scaling else float(np.sqrt(2.0))

    def __call__(self, x):
        return apply(self, x)

    def __eq__(self, other):
        if not isinstance(other, FeatureMap):
            return NotImplemented
        same_b = (self.b is None and other.b is None) or (
            self.b is not None and other.b is not None and np.array_equal(self.b, other.b)
        )
        return (
            self.kind == other.kind
            and self.M == other.M
            and self.D == other.D
            and self.xi == other.xi
            and self.seed == other.seed
            and self.legacy_experiment_scaling == other.legacy_experiment_scaling
            and np.array_equal(self.W, other.W)
            and same_b
        )

    __hash__ = None

    def to_dict(self):
        return {
            "kind": self.kind,
            "M": self.M,
            "D": self.D,
            "xi": self.xi,
            "seed": self.seed,
            "legacy_experiment_scaling": self.legacy_experiment_scaling,
            "W": self.W.tolist(),
            "b": None if self.b is None else self.b.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            kind=d["kind"],
            M=int(d["M"]),
            D=int(d["D"]),
            W=np.asarray(d["W"], dtype=np.float64).reshape(int(d["M"]), int(d["D"])),
            b=None if d.get("b") is None else np.asarray(d["b"], dtype=np.float64),
            xi=float(d["xi"]),
            seed=int(d["seed"]),
            legacy_experiment_scaling=bool(d.get("legacy_experiment_scaling", False)),
        )

    def to_json(self):
        # float repr round-trips exactly, so the blob reproduces W and b bit for bit
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))


def _streams(seed):
    # One Philox stream for frequencies, one for offsets; draws fill sequentially,
    # so feature j depends only on (seed, j) and not on M.
    ss_w, ss_b = np.random.SeedSequence(seed).spawn(2)
    return np.random.Generator(np.random.Philox(ss_w)), np.random.Generator(np.random.Philox(ss_b))


def sample_feature_map(kind, D, M, xi=1.0, seed=0, legacy_experiment_scaling=False):
    if kind not in KINDS:
        raise ParameterError(f"unknown feature kind {kind!r}; expected one of {KINDS}")
    if int(M) != M or M < 1:
        raise ParameterError(f"M must be a positive integer, got {M}")
    if int(D) != D or D < 1:
        raise ParameterError(f"D must be a positive integer, got {D}")
    if not xi > 0:
        raise ParameterError(f"xi must be positive, got {xi}")
    M, D = int(M), int(D)
    rng_w, rng_b = _streams(seed)
    Z = rng_w.standard_normal((M, D))
    if kind == GAUSSIAN_RFF:
        b = rng_b.uniform(0.0, 2 * np.pi, M)
        return FeatureMap(kind, M, D, float(xi) * Z, b, float(xi), int(seed), legacy_experiment_scaling)
    return FeatureMap(kind, M, D, Z, None, float(xi), int(seed), legacy_experiment_scaling)


def _as_inputs(fmap, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != fmap.D:
        raise ParameterError(f"input has shape {x.shape}, expected (..., {fmap.D})")
    return x


def apply(fmap, x):
    """Feature vector(s) for a point of shape (D,) or a batch of shape (N, D)."""
    x = _as_inputs(fmap, x)
    proj = x @ fmap.W.T
    if fmap.kind == GAUSSIAN_RFF:
        return fmap._scale * np.cos(proj + fmap.b)
    return fmap._scale * proj


def kernel_exact(kind, x, x_prime, xi=1.0):
    x = np.asarray(x, dtype=np.float64)
    x_prime = np.asarray(x_prime, dtype=np.float64)
    if x.shape != x_prime.shape:
        raise ParameterError(f"dimension mismatch: {x.shape} vs {x_prime.shape}")
    if kind == GAUSSIAN_RFF:
        z = x - x_prime
        return float(np.exp(-0.5 * xi**2 * np.dot(z, z)))
    if kind == LINEAR_SKETCH:
        return float(np.dot(x, x_prime))
    raise ParameterError(f"unknown kernel kind {kind!r}")


def kernel_approx(fmap, x, x_prime):
    x = _as_inputs(fmap, x)
    x_prime = _as_inputs(fmap, x_prime)
    if x.shape != x_prime.shape:
        raise ParameterError(f"dimension mismatch: {x.shape} vs {x_prime.shape}")
    return np.sum(apply(fmap, x) * apply(fmap, x_prime), axis=-1)


def empirical_covariance(fmap, X=None, features=None):
    """(1/m) sum_i phi(x_i) phi(x_i)^T.

    Pass precomputed ``features`` (m x M) to skip re-evaluating the map.
    """
    if features is None:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[0] == 0:
            raise ParameterError("empirical covariance of an empty sample")
        features = apply(fmap, X)
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] == 0:
        raise ParameterError("empirical covariance of an empty sample")
    C = features.T @ features / features.shape[0]
    return 0.5 * (C + C.T)
