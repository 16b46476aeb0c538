"""Communication graphs, doubly stochastic mixing matrices and spectral quantities."""
from __future__ import annotations

import csv
import math
from collections import namedtuple
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .errors import DivergenceError, ParameterError, SchemeError

GRAPH_KINDS = ("cycle", "grid", "complete", "expander", "custom")
SCHEMES = ("lazy_uniform", "metropolis")

# Expanders are resampled until the lazy walk has sigma2 below this.
EXPANDER_MAX_SIGMA2 = 0.9
_MAX_RESAMPLES = 1000


@dataclass(frozen=True)
class Graph:
    n: int
    edges: frozenset
    kind: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        norm = set()
        for v, w in self.edges:
            v, w = int(v), int(w)
            if v == w:
                raise ParameterError(f"self-loop at node {v}")
            if not (0 <= v < self.n and 0 <= w < self.n):
                raise ParameterError(f"edge ({v},{w}) outside node range [0,{self.n})")
            norm.add((min(v, w), max(v, w)))
        object.__setattr__(self, "edges", frozenset(norm))

    def degrees(self):
        deg = np.zeros(self.n, dtype=int)
        for v, w in self.edges:
            deg[v] += 1
            deg[w] += 1
        return deg

    def neighbors(self):
        nbrs = [[] for _ in range(self.n)]
        for v, w in sorted(self.edges):
            nbrs[v].append(w)
            nbrs[w].append(v)
        return nbrs

    def is_connected(self):
        if self.n <= 1:
            return True
        nbrs = self.neighbors()
        seen = {0}
        stack = [0]
        while stack:
            for w in nbrs[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.n

    def is_regular(self):
        deg = self.degrees()
        return bool(np.all(deg == deg[0])) if self.n else True

    def max_degree(self):
        return int(self.degrees().max()) if self.n else 0

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["v", "w"])
            for v, w in sorted(self.edges):
                wr.writerow([v, w])


def _grid_edges(k, toroidal):
    edges = set()
    for r in range(k):
        for c in range(k):
            v = r * k + c
            if c + 1 < k:
                edges.add((v, v + 1))
            elif toroidal and k > 2:
                edges.add((r * k, v))
            if r + 1 < k:
                edges.add((v, v + k))
            elif toroidal and k > 2:
                edges.add((c, v))
    return edges


def build_graph(kind, n, params=None, seed=None):
    """Build a connected undirected graph.

    params: ``toroidal`` (grid), ``d`` (expander degree), ``edges`` (custom).
    Expanders are random d-regular graphs, resampled until connected and
    until their lazy uniform walk has sigma2 < 0.9; the seed used is recorded
    in ``params``.
    """
    params = dict(params or {})
    if int(n) != n or n < 1:
        raise ParameterError(f"n must be a positive integer, got {n}")
    n = int(n)
    if kind == "cycle":
        if n == 1:
            edges = set()
        elif n == 2:
            edges = {(0, 1)}
        else:
            edges = {(v, (v + 1) % n) for v in range(n)}
    elif kind == "grid":
        k = math.isqrt(n)
        if k * k != n or k < 2:
            raise ParameterError(f"grid needs n = k^2 with k >= 2, got n={n}")
        edges = _grid_edges(k, bool(params.get("toroidal", False)))
    elif kind == "complete":
        edges = {(v, w) for v in range(n) for w in range(v + 1, n)}
    elif kind == "expander":
        if "d" not in params:
            raise ParameterError("expander needs a degree parameter 'd'")
        d = int(params["d"])
        if not 0 < d < n or (d * n) % 2:
            raise ParameterError(f"no {d}-regular graph on {n} nodes (need 0 < d < n, d*n even)")
        seed = 0 if seed is None else int(seed)
        rng = np.random.default_rng(seed)
        for _ in range(_MAX_RESAMPLES):
            g = nx.random_regular_graph(d, n, seed=int(rng.integers(2**31)))
            if not nx.is_connected(g):
                continue
            cand = Graph(n, frozenset(g.edges()), "expander", {"d": d, "seed": seed})
            if sigma2(mixing_matrix(cand, "lazy_uniform").P) < EXPANDER_MAX_SIGMA2:
                return cand
        raise ParameterError(f"could not sample a well-connected {d}-regular graph on {n} nodes")
    elif kind == "custom":
        edges = params.get("edges", ())
    else:
        raise ParameterError(f"unknown graph kind {kind!r}; expected one of {GRAPH_KINDS}")
    g = Graph(n, frozenset(edges), kind, params)
    if not g.is_connected():
        raise ParameterError(f"{kind} graph on {n} nodes is not connected")
    return g


@dataclass(frozen=True, eq=False)
class MixingMatrix:
    P: np.ndarray
    sigma2: float
    graph: Graph | None = None
    scheme: str = "custom"

    @property
    def n(self):
        return self.P.shape[0]

    @property
    def inverse_gap(self):
        if self.sigma2 >= 1:
            return math.inf
        return 1.0 / (1.0 - self.sigma2)

    def to_csv(self, path):
        np.savetxt(path, self.P, delimiter=",", fmt="%.17g")


def uniform_matrix(n):
    """P = J/n, the complete-graph average (a single gossip round reaches consensus)."""
    P = np.full((n, n), 1.0 / n)
    P.setflags(write=False)
    return MixingMatrix(P, 0.0, build_graph("complete", n), "lazy_uniform")


def from_array(P, graph=None):
    P = np.array(P, dtype=np.float64)
    check_doubly_stochastic(P)
    P.setflags(write=False)
    return MixingMatrix(P, sigma2(P), graph, "custom")


def mixing_matrix(graph, scheme="metropolis"):
    n = graph.n
    deg = graph.degrees()
    P = np.zeros((n, n))
    if scheme == "lazy_uniform":
        if not graph.is_regular():
            raise SchemeError(f"lazy_uniform needs a regular graph; {graph.kind} degrees are {sorted(set(deg.tolist()))}")
        d = deg[0] if n else 0
        for v, w in graph.edges:
            P[v, w] = P[w, v] = 1.0 / (d + 1)
        np.fill_diagonal(P, 1.0 / (d + 1))
    elif scheme == "metropolis":
        for v, w in graph.edges:
            P[v, w] = P[w, v] = 1.0 / (1 + max(deg[v], deg[w]))
        # diagonal absorbs the remainder; row sums in fixed index order
        np.fill_diagonal(P, 0.0)
        np.fill_diagonal(P, 1.0 - P.sum(axis=1))
    else:
        raise SchemeError(f"unknown mixing scheme {scheme!r}; expected one of {SCHEMES}")
    P.setflags(write=False)
    return MixingMatrix(P, sigma2(P), graph, scheme)


def check_doubly_stochastic(P, tol=1e-12):
    P = np.asarray(P)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ParameterError(f"P must be square, got shape {P.shape}")
    if np.any(P < -tol):
        raise ParameterError("P has negative entries")
    if np.max(np.abs(P.sum(axis=0) - 1)) > tol or np.max(np.abs(P.sum(axis=1) - 1)) > tol:
        raise ParameterError("P is not doubly stochastic")


def sigma2(P):
    """Second largest eigenvalue of symmetric P in absolute value."""
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ParameterError(f"P must be square, got shape {P.shape}")
    if not np.allclose(P, P.T, atol=1e-12, rtol=0):
        raise ParameterError("sigma2 requires a symmetric matrix")
    n = P.shape[0]
    if n == 1:
        return 0.0
    ev = np.linalg.eigvalsh(0.5 * (P + P.T))
    # drop the Perron eigenvalue (the one closest to 1)
    rest = np.delete(ev, np.argmin(np.abs(ev - 1.0)))
    return float(min(np.max(np.abs(rest)), 1.0))


def deviation_l1(P, s, v):
    """sum_w |(P^s)_{vw} - 1/n|."""
    P = np.asarray(P, dtype=np.float64)
    n = P.shape[0]
    if s < 1:
        raise ParameterError(f"s must be >= 1, got {s}")
    if not 0 <= v < n:
        raise ParameterError(f"agent index {v} outside [0,{n})")
    row = np.zeros(n)
    row[v] = 1.0
    for _ in range(int(s)):
        row = row @ P
    return float(np.abs(row - 1.0 / n).sum())


def deviation_table(P, s_max):
    """Array D[s-1, v] = deviation_l1(P, s, v) for s = 1..s_max."""
    P = np.asarray(P, dtype=np.float64)
    n = P.shape[0]
    out = np.empty((s_max, n))
    Q = np.eye(n)
    for s in range(s_max):
        Q = Q @ P
        out[s] = np.abs(Q - 1.0 / n).sum(axis=1)
    return out


MixingTime = namedtuple("MixingTime", ["steps", "theory_estimate"])


def mixing_time(P, tol):
    """Smallest s with max_v deviation_l1(P, s, v) <= tol.

    Also returns ceil(log(1/tol) / (1 - sigma2)), the spectral-gap estimate.
    """
    P = np.asarray(P, dtype=np.float64)
    if not tol > 0:
        raise ParameterError(f"tol must be positive, got {tol}")
    s2 = sigma2(P)
    if s2 >= 1:
        raise DivergenceError(f"sigma2 = {s2} >= 1: the walk does not mix")
    estimate = max(1, math.ceil(math.log(1.0 / tol) / (1.0 - s2))) if tol < 1 else 1
    n = P.shape[0]
    if s2 > 0:
        s_cap = max(1, math.ceil(math.log(2 * math.sqrt(n) / tol) / -math.log(s2))) + 1
    else:
        s_cap = 1
    Q = np.eye(n)
    for s in range(1, s_cap + 1):
        Q = Q @ P
        if np.abs(Q - 1.0 / n).sum(axis=1).max() <= tol:
            return MixingTime(s, estimate)
    return MixingTime(s_cap, estimate)
