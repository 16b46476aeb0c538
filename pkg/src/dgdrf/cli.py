"""Command line entry point: ``dgdrf {run,figure,theory,sweep}``.

Exit codes: 0 ok, 2 configuration error, 3 lemma violation, 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import config as cfgmod
from .errors import ConfigError, DGDError, IngestionError, ParameterError
from .experiments import atomic_write, cmd_figure, cmd_run, cmd_sweep
from .theory import (
    TheoryParams,
    leading_terms,
    prescribe_basic,
    prescribe_refined,
    random_psd,
    verify_contraction,
    verify_spectral_bound,
)
from .topology import build_graph, mixing_matrix

EXIT_OK, EXIT_CONFIG, EXIT_LEMMA, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("dgdrf")

# (kind, n, scheme, params) for the lemma suite
SUITE_TOPOLOGIES = [
    ("cycle", 4, "lazy_uniform", {}),
    ("cycle", 8, "lazy_uniform", {}),
    ("cycle", 16, "lazy_uniform", {}),
    ("grid", 9, "metropolis", {}),
    ("grid", 16, "metropolis", {}),
    ("complete", 4, "lazy_uniform", {}),
    ("complete", 8, "lazy_uniform", {}),
    ("expander", 16, "lazy_uniform", {"d": 6}),
]


class LemmaViolation(DGDError):
    pass


def _load_config(args):
    cfg = cfgmod.load(args.config) if args.config else cfgmod.ExperimentConfig()
    overrides = list(args.set or [])
    if getattr(args, "legacy_experiment_scaling", False):
        overrides.append("features.legacy_experiment_scaling=true")
    cfg = cfgmod.apply_overrides(cfg, overrides)
    if getattr(args, "seed", None) is not None:
        cfg.seeds = [args.seed]
    if getattr(args, "threads", None):
        cfg.threads = args.threads
    if getattr(args, "out", None):
        cfg.out = args.out
    return cfg


def _run(args):
    cfg = _load_config(args)
    if args.print_config:
        sys.stdout.write(cfg.to_yaml())
        return EXIT_OK
    cfg.validate()
    out = cmd_run(cfg)
    print(out)
    return EXIT_OK


def _figure(args):
    overrides = list(args.set or [])
    if args.legacy_experiment_scaling:
        overrides.append("features.legacy_experiment_scaling=true")
    if args.seed is not None:
        overrides.append(f"seeds=[{args.seed}]")
    path = cmd_figure(args.which, args.scale, args.out or "figures", overrides, args.data, args.threads or 1)
    print(path)
    return EXIT_OK


def _sweep(args):
    cfg = _load_config(args)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    print(cmd_sweep(cfg, args.param, values, cfg.out, args.threads or 1))
    return EXIT_OK


def _table(rows, headers):
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) for i, h in enumerate(headers)]
    lines = ["  ".join(str(h).ljust(w) for h, w in zip(headers, widths))]
    lines += ["  ".join(str(c).ljust(w) for c, w in zip(r, widths)) for r in rows]
    return "\n".join(lines)


def lemma_suite(s_max=50, t_max=100, n_random=20, seed=0):
    """Run both lemma verifiers over the standard topology set and random PSD operators."""
    reports = []
    for kind, n, scheme, params in SUITE_TOPOLOGIES:
        P = mixing_matrix(build_graph(kind, n, params, seed=seed), scheme).P
        rep = verify_spectral_bound(P, s_max)
        rep.name = f"spectral_bound[{kind} n={n}]"
        reports.append(rep)
    rng = np.random.default_rng(seed)
    for i in range(n_random):
        L = random_psd(20, rng)
        for a in (0.5, 1.0):
            rep = verify_contraction(L, 1.0, t_max, a)
            rep.name = f"contraction[L{i} a={a}]"
            reports.append(rep)
    return reports


def _theory(args):
    params = TheoryParams(r=args.r, gamma=args.gamma, eta=args.eta)
    if args.sigma2 is None:
        g = build_graph(args.topology, args.n, {"d": 6} if args.topology == "expander" else {}, seed=0)
        scheme = "metropolis" if args.topology == "grid" else "lazy_uniform"
        sigma2 = mixing_matrix(g, scheme).sigma2
    else:
        sigma2 = args.sigma2
    basic = prescribe_basic(args.n, args.m, sigma2)
    refined = prescribe_refined(args.n, args.m, sigma2, params)
    M = args.M or refined.M_star
    t = args.t or refined.t_star_iters
    terms = leading_terms(args.n, args.m, M, sigma2, t, refined.t_mix, params)

    print(f"n={args.n} m={args.m} sigma2={sigma2:.6g} r={params.r} gamma={params.gamma} eta={params.eta}")
    print(f"note: {basic.caveat}\n")
    rows = [[name, p.M_star, p.t_star_iters, p.m_min, p.t_mix, "yes" if p.satisfied else "no: " + "; ".join(p.violated)]
            for name, p in (("basic", basic), ("refined", refined))]
    print(_table(rows, ["prescription", "M", "t", "m_min", "t_mix", "satisfied"]))
    print()
    print(_table([[k, f"{v:.6g}"] for k, v in terms.items()], ["term", "value"]))
    print()

    reports = lemma_suite(args.s_max, args.t_max, args.n_random)
    bad = [r for r in reports if not r.holds]
    print(f"lemma checks: {len(reports)} suites, {sum(r.checks for r in reports)} inequalities, "
          f"{len(bad)} violated suites")
    for r in bad:
        print(f"  VIOLATION {r.name}: worst slack {r.worst_slack:.3g} at {r.worst_at}")
    if args.out:
        doc = {
            "sigma2": sigma2,
            "params": vars(params) if hasattr(params, "__dict__") else {},
            "basic": basic.to_dict(),
            "refined": refined.to_dict(),
            "leading_terms": terms,
            "lemmas": [r.to_dict() for r in reports],
        }
        atomic_write(os.path.join(args.out, "prescription.json"), json.dumps(doc, indent=2, default=float))
    if bad:
        raise LemmaViolation(f"{len(bad)} lemma suites violated")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="dgdrf", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML experiment config")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int, help="run a single seed instead of the config's list")
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted config override")
        sp.add_argument("--legacy-experiment-scaling", action="store_true",
                        help="cosine features without the sqrt(2) factor (kappa = 1)")

    sp = sub.add_parser("run", help="train, evaluate and write a run directory")
    common(sp)
    sp.add_argument("--print-config", action="store_true", help="print the canonical config and exit")
    sp.set_defaults(func=_run)

    sp = sub.add_parser("figure", help="reproduce figure behaviour as tidy CSV")
    sp.add_argument("which", choices=["fig1", "fig2", "fig3"])
    sp.add_argument("--scale", choices=["desk", "full", "paper"], default="desk",
                    help="desk: synthetic, minutes; full (alias paper): CSV data at published sizes")
    sp.add_argument("--data", help="CSV dataset (required at full scale)")
    sp.add_argument("--out")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--set", action="append", metavar="KEY=VALUE")
    sp.add_argument("--legacy-experiment-scaling", action="store_true")
    sp.set_defaults(func=_figure)

    sp = sub.add_parser("theory", help="prescriptions, leading terms and lemma checks")
    sp.add_argument("--n", type=int, default=16)
    sp.add_argument("--m", type=int, default=1000)
    sp.add_argument("--sigma2", type=float, default=None, help="default: from --topology")
    sp.add_argument("--topology", default="cycle", choices=["cycle", "grid", "complete", "expander"])
    sp.add_argument("--r", type=float, default=0.5)
    sp.add_argument("--gamma", type=float, default=1.0)
    sp.add_argument("--eta", type=float, default=1.0)
    sp.add_argument("--M", type=int, default=None)
    sp.add_argument("--t", type=int, default=None)
    sp.add_argument("--s-max", type=int, default=50)
    sp.add_argument("--t-max", type=int, default=100)
    sp.add_argument("--n-random", type=int, default=20)
    sp.add_argument("--out")
    sp.set_defaults(func=_theory)

    sp = sub.add_parser("sweep", help="repeat `run` over values of one config key")
    common(sp)
    sp.add_argument("--param", required=True, help="dotted key, e.g. features.M")
    sp.add_argument("--values", required=True, help="comma-separated values")
    sp.set_defaults(func=_sweep)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except LemmaViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LEMMA
    except IngestionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
