"""Experiment pipelines behind the CLI: single runs and figure sweeps."""
from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__
from .analysis import EvalReport, network_error
from .config import ExperimentConfig, apply_overrides, from_dict, seed_bundle
from .data import gen_synthetic, load_csv, planted_target, shard, standardize
from .engine import RunConfig, run_centralized, run_distributed
from .errors import ConfigError
from .features import empirical_covariance, sample_feature_map
from .theory import prescribe_basic
from .topology import build_graph, mixing_matrix

_csv_cache = {}


def atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_rows(path, rows, columns):
    import io

    buf = io.StringIO()
    wr = csv.writer(buf)
    wr.writerow(columns)
    for r in rows:
        wr.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in columns])
    atomic_write(path, buf.getvalue())


def build_mixing(cfg, seed=0):
    tp = cfg.topology
    params = {"d": tp.d} if tp.kind == "expander" else {"toroidal": tp.toroidal}
    g = build_graph(tp.kind, tp.n, params, seed=seed_bundle(seed)["graph"])
    return mixing_matrix(g, tp.scheme)


def _load_cached(ds):
    key = (ds.path, str(ds.label_column), str(ds.feature_columns), ds.delimiter, ds.header, ds.limit)
    if key not in _csv_cache:
        _csv_cache[key] = load_csv(ds.path, ds.label_column, ds.feature_columns, ds.limit,
                                   ds.delimiter, ds.header)
    return _csv_cache[key]


def build_problem(cfg, seed):
    """Training shards and test set for one repetition."""
    ds, n = cfg.dataset, cfg.topology.n
    sb = seed_bundle(seed)
    if ds.kind == "synthetic":
        fmap_t, w = planted_target(ds.D, ds.target_M, ds.target_xi, sb["target"])
        train = gen_synthetic(ds.N or n * ds.m, ds.D, fmap_t, w, ds.noise_sigma, sb["train"], "train")
        test = gen_synthetic(ds.test_size, ds.D, fmap_t, w, ds.noise_sigma, sb["test"], "test")
        return shard(train, n, ds.m, sb["shard"]), test, {}
    full = _load_cached(ds)
    need = n * ds.m + ds.test_size
    if full.N < need:
        raise ConfigError(f"{full.N} rows available, need n*m + test_size = {need}", "dataset.limit")
    perm = np.random.default_rng(sb["shard"]).permutation(full.N)
    train, test = full.subset(perm[: n * ds.m], "train"), full.subset(perm[n * ds.m: need], "test")
    meta = {}
    if ds.standardize:
        train, test, meta["standardization"] = standardize(train, test)
    return shard(train, n, ds.m, sb["shard"]), test, meta


def feature_map_for(cfg, seed, D):
    fs = cfg.features
    return sample_feature_map(fs.kind, D, fs.M, fs.xi, seed_bundle(seed)["feature"],
                              fs.legacy_experiment_scaling)


def run_config_for(cfg, seed):
    rs = cfg.run
    return RunConfig(eta=rs.eta, T=rs.T, checkpoint_every=rs.checkpoint_every, seeds=seed_bundle(seed),
                     allow_large_step=rs.allow_large_step, threads=max(1, int(cfg.threads)))


def run_once(cfg, seed, mix=None):
    """Train (distributed and optionally pooled) for one seed and evaluate."""
    shards, test, meta = build_problem(cfg, seed)
    fmap = feature_map_for(cfg, seed, shards.shards[0].X.shape[1])
    mix = mix or build_mixing(cfg, seed)
    rc = run_config_for(cfg, seed)
    out = {"seed": seed, "meta": meta, "sigma2": mix.sigma2, "mix": mix}
    out["distributed"] = run_distributed(shards, fmap, mix, rc)
    out["reports"] = {"distributed": EvalReport.from_trace(out["distributed"], test, cfg.evaluation.metric)}
    if cfg.run.centralized:
        out["centralized"] = run_centralized(shards, fmap, rc)
        out["reports"]["centralized"] = EvalReport.from_trace(out["centralized"], test, cfg.evaluation.metric)
        C = empirical_covariance(fmap, test.X)
        out["network_error"] = network_error(out["distributed"], out["centralized"], C)
    return out


def _best_effort(cfg):
    return cfg.dataset.kind == "csv"


def cmd_run(cfg: ExperimentConfig, out_dir=None):
    """Train, evaluate and write a self-contained run directory; returns its path."""
    cfg.validate()
    out_dir = out_dir or cfg.out
    os.makedirs(out_dir, exist_ok=True)
    metric_rows, summary = [], []
    ne_rows = []
    for seed in cfg.seeds:
        res = run_once(cfg, seed)
        for which, rep in res["reports"].items():
            for t, v, name, val in rep.rows():
                metric_rows.append({"seed": seed, "trace": which, "t": t, "agent": v, "metric": name, "value": val})
            summary.append({"seed": seed, "trace": which, "t_star": rep.t_star, "best": rep.best})
        if "network_error" in res:
            ne = res["network_error"]
            for k, t in enumerate(res["distributed"].ts):
                for v in range(ne.shape[1]):
                    ne_rows.append({"seed": seed, "t": int(t), "agent": v, "value": float(ne[k, v])})
        if cfg.run.save_traces:
            tdir = os.path.join(out_dir, "traces")
            os.makedirs(tdir, exist_ok=True)
            res["distributed"].save(os.path.join(tdir, f"distributed_seed{seed}.npz"))
            if "centralized" in res:
                res["centralized"].save(os.path.join(tdir, f"centralized_seed{seed}.npz"))
        sigma2 = res["sigma2"]
    write_rows(os.path.join(out_dir, "metrics.csv"), metric_rows, ["seed", "trace", "t", "agent", "metric", "value"])
    write_rows(os.path.join(out_dir, "summary.csv"), summary, ["seed", "trace", "t_star", "best"])
    if ne_rows:
        write_rows(os.path.join(out_dir, "network_error.csv"), ne_rows, ["seed", "t", "agent", "value"])
    n, m = cfg.topology.n, cfg.dataset.m
    pres = prescribe_basic(n, m, sigma2) if sigma2 < 1 else None
    theory = {"n": n, "m": m, "sigma2": sigma2, "basic": None if pres is None else pres.to_dict()}
    atomic_write(os.path.join(out_dir, "prescription.json"), json.dumps(theory, indent=2, sort_keys=True))
    manifest = {
        "package_version": __version__,
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "seeds": {str(s): seed_bundle(s) for s in cfg.seeds},
        "best_effort": _best_effort(cfg),
        "files": sorted(f for f in os.listdir(out_dir) if not f.startswith(".")) + ["manifest.json"],
    }
    atomic_write(os.path.join(out_dir, "manifest.json"), json.dumps(manifest, indent=2, sort_keys=True))
    return out_dir


# ---------------------------------------------------------------- figures

FIG_COLUMNS = ["figure", "topology", "n", "m", "nm", "M", "seed", "metric", "best", "t_star", "iterations", "T",
               "sqrt_nm"]

DESK_SCALE = {
    "fig1": {"nm": 1000, "ns": [9, 25], "Ms": [8, 16, 32, 64, 128, 256], "T": 1000},
    "fig2": {"nms": [100, 316, 1000, 3162, 10000], "ns": [16], "M": 64, "T": 2048},
    "fig3": {"nms": [100, 316, 1000, 3162, 10000], "ns": [16], "M": 64, "T": 2048},
}
FULL_SCALE = {
    "fig1": {"nm": 1000, "ns": [9, 25, 49], "Ms": [10, 20, 32, 50, 100, 200, 300], "T": 1000},
    "fig2": {"nms": [250, 500, 1000, 2500, 5000, 10000], "ns": [25, 49, 100], "M": 300, "T": 10000},
    "fig3": {"nms": [250, 500, 1000, 2500, 5000, 10000], "ns": [25, 49, 100], "M": 300, "T": 10000},
}


def figure_base_config(scale, data_path=None):
    if scale == "desk":
        return ExperimentConfig()
    if scale not in ("full", "paper"):
        raise ConfigError(f"unknown scale {scale!r}", "scale")
    if not data_path:
        raise ConfigError("full scale needs a CSV dataset path (e.g. SUSY)", "dataset.path")
    cfg = ExperimentConfig()
    cfg.dataset = replace(cfg.dataset, kind="csv", path=data_path, test_size=10000)
    cfg.features = replace(cfg.features, M=300, legacy_experiment_scaling=True)
    cfg.run = replace(cfg.run, eta=1.0)
    cfg.evaluation = replace(cfg.evaluation, metric="classification_error")
    return cfg


def _cell(args):
    """One (topology, n, nm, M, seed) cell; returns CSV rows."""
    figure, base, topo, n, m, M, T, seed = args
    d = base.to_dict()
    d["dataset"]["m"] = m
    d["features"]["M"] = M
    d["run"].update(T=T, centralized=False, save_traces=False)
    if topo == "single":
        d["topology"].update(kind="complete", n=1, scheme="lazy_uniform")
        d["dataset"]["m"] = n * m
    else:
        d["topology"].update(kind=topo, n=n, scheme="metropolis" if topo == "grid" else "lazy_uniform")
    cfg = from_dict(d).validate()
    res = run_once(cfg, seed)
    rep = res["reports"]["distributed"]
    return [{
        "figure": figure, "topology": topo, "n": 1 if topo == "single" else n, "m": cfg.dataset.m,
        "nm": n * m, "M": M, "seed": seed, "metric": rep.metric, "best": rep.best,
        "t_star": rep.t_star, "iterations": rep.t_star - 1, "T": T, "sqrt_nm": math.sqrt(n * m),
    }]


def figure_cells(which, scale, base, T=None):
    spec = dict((DESK_SCALE if scale == "desk" else FULL_SCALE)[which])
    if T is not None:
        spec["T"] = T
    cells = []
    topologies = ["cycle", "grid"]
    if which == "fig1":
        for n in spec["ns"]:
            m = max(1, spec["nm"] // n)
            for M in spec["Ms"]:
                for topo in topologies + ["single"]:
                    if topo == "grid" and math.isqrt(n) ** 2 != n:
                        continue
                    for seed in base.seeds:
                        cells.append((which, base, topo, n, m, M, spec["T"], seed))
    else:
        for nm in spec["nms"]:
            for n in spec["ns"]:
                m = max(1, nm // n)
                for topo in topologies + ["single"]:
                    if topo == "grid" and math.isqrt(n) ** 2 != n:
                        continue
                    for seed in base.seeds:
                        cells.append((which, base, topo, n, m, spec["M"], spec["T"], seed))
    return cells


_GNUPLOT = """# {which}: plot stub for {csv}
set datafile separator ","
set key autotitle columnhead
set logscale x
set xlabel "{xlabel}"
set ylabel "{ylabel}"
# columns: {columns}
plot "{csv}" using {xcol}:{ycol} with points
"""


def cmd_figure(which, scale="desk", out_dir="figures", overrides=(), data_path=None, threads=1):
    """Write <which>.csv plus a gnuplot stub; returns the CSV path."""
    if which not in ("fig1", "fig2", "fig3"):
        raise ConfigError(f"unknown figure {which!r}", "which")
    base = apply_overrides(figure_base_config(scale, data_path), overrides)
    base.threads = 1
    # an explicit run.T override replaces the figure's horizon
    T = base.run.T if any(o.split("=", 1)[0].strip() == "run.T" for o in overrides or ()) else None
    cells = figure_cells(which, scale, base, T)
    if threads > 1:
        with ProcessPoolExecutor(threads) as ex:
            chunks = list(ex.map(_cell, cells))
    else:
        chunks = [_cell(c) for c in cells]
    rows = [r for ch in chunks for r in ch]
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{which}.csv")
    write_rows(path, rows, FIG_COLUMNS)
    x, y = {"fig1": ("M", "best"), "fig2": ("nm", "best"), "fig3": ("nm", "iterations")}[which]
    atomic_write(os.path.join(out_dir, f"{which}.gp"), _GNUPLOT.format(
        which=which, csv=f"{which}.csv", xlabel=x, ylabel=y, columns=",".join(FIG_COLUMNS),
        xcol=FIG_COLUMNS.index(x) + 1, ycol=FIG_COLUMNS.index(y) + 1))
    meta = {"figure": which, "scale": scale, "best_effort": scale != "desk",
            "config": base.to_dict(), "config_hash": base.hash(), "cells": len(cells)}
    atomic_write(os.path.join(out_dir, f"{which}.json"), json.dumps(meta, indent=2, sort_keys=True))
    return path


def cmd_sweep(cfg, param, values, out_dir=None, threads=1):
    """Run ``cmd_run`` once per value of a dotted config key; returns the summary CSV path."""
    out_dir = out_dir or cfg.out
    jobs = []
    for val in values:
        sub = apply_overrides(cfg, [f"{param}={val}"]).validate()
        jobs.append((sub, os.path.join(out_dir, f"{param}={val}")))
    if threads > 1:
        with ProcessPoolExecutor(threads) as ex:
            dirs = list(ex.map(_run_job, jobs))
    else:
        dirs = [_run_job(j) for j in jobs]
    rows = []
    for val, d in zip(values, dirs):
        with open(os.path.join(d, "summary.csv")) as fh:
            for r in csv.DictReader(fh):
                rows.append({"param": param, "value": str(val), **r})
    path = os.path.join(out_dir, "sweep.csv")
    write_rows(path, rows, ["param", "value", "seed", "trace", "t_star", "best"])
    return path


def _run_job(job):
    cfg, d = job
    return cmd_run(cfg, d)


def figure_summary(rows):
    """Mean of ``best`` and ``t_star`` per (topology, n, nm, M) across seeds."""
    groups = {}
    for r in rows:
        key = (r["topology"], int(r["n"]), int(r["nm"]), int(r["M"]))
        groups.setdefault(key, []).append(r)
    return {k: {"best": float(np.mean([float(x["best"]) for x in v])),
                "t_star": float(np.mean([float(x["t_star"]) for x in v])),
                "seeds": len(v)} for k, v in sorted(groups.items())}


__all__ = ["cmd_run", "cmd_figure", "cmd_sweep", "run_once", "build_problem", "build_mixing"]
