import csv
import json
import subprocess
import sys

import pytest

from dgdrf import config as cfgmod
from dgdrf.cli import main
from dgdrf.errors import ConfigError

MINIMAL = ["--set", "topology.kind=complete", "--set", "topology.n=4", "--set", "dataset.m=25",
           "--set", "features.M=10", "--set", "run.T=50", "--seed", "0"]


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_run_minimal(tmp_path):
    out = tmp_path / "run"
    assert main(["run", "--out", str(out), *MINIMAL]) == 0
    for name in ("manifest.json", "metrics.csv", "summary.csv", "prescription.json", "network_error.csv"):
        assert (out / name).exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["topology"]["n"] == 4
    assert len(manifest["config_hash"]) == 16
    assert "0" in manifest["seeds"]
    rows = read_csv(out / "metrics.csv")
    assert {r["trace"] for r in rows} == {"distributed", "centralized"}
    assert (out / "traces" / "distributed_seed0.npz").exists()


def test_run_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--out", str(a), *MINIMAL, "--threads", "2"]) == 0
    assert main(["run", "--out", str(b), *MINIMAL]) == 0
    for name in ("metrics.csv", "summary.csv", "network_error.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_manifest_regenerates(tmp_path):
    a = tmp_path / "a"
    assert main(["run", "--out", str(a), *MINIMAL]) == 0
    cfg = cfgmod.from_dict(json.loads((a / "manifest.json").read_text())["config"])
    b = tmp_path / "b"
    cfg.out = str(b)
    from dgdrf.experiments import cmd_run

    cmd_run(cfg)
    assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()


def test_invalid_grid_names_field(tmp_path, capsys):
    rc = main(["run", "--out", str(tmp_path), "--set", "topology.kind=grid", "--set", "topology.n=10",
               "--set", "topology.scheme=metropolis"])
    assert rc == 2
    assert "topology.n" in capsys.readouterr().err
    with pytest.raises(ConfigError, match="topology.n"):
        cfgmod.apply_overrides(cfgmod.ExperimentConfig(), ["topology.kind=grid", "topology.n=10"]).validate()


def test_config_errors_name_fields():
    base = cfgmod.ExperimentConfig()
    for override, fld in [("run.eta=1.0", "run.eta"), ("features.M=0", "features.M"),
                          ("topology.kind=grid", "topology.scheme"), ("dataset.N=10", "dataset.N")]:
        with pytest.raises(ConfigError, match=fld.replace(".", r"\.")):
            cfgmod.apply_overrides(base, [override]).validate()
    with pytest.raises(ConfigError, match="run.bogus"):
        cfgmod.apply_overrides(base, ["run.bogus=1"])
    cfgmod.apply_overrides(base, ["run.eta=1.0", "features.legacy_experiment_scaling=true"]).validate()


def test_print_config_roundtrip(tmp_path, capsys):
    assert main(["run", "--print-config", "--set", "topology.n=9"]) == 0
    text = capsys.readouterr().out
    p = tmp_path / "c.yaml"
    p.write_text(text)
    cfg = cfgmod.load(p)
    assert cfg.topology.n == 9
    assert cfg.to_yaml() == text


def test_missing_config_file(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.yaml")]) == 4


def test_theory_examples(capsys):
    assert main(["theory", "--n", "4", "--m", "100", "--sigma2", "0"]) == 0
    out = capsys.readouterr().out
    basic = next(line for line in out.splitlines() if line.startswith("basic"))
    assert basic.split()[1:4] == ["20", "20", "64"]
    assert "0 violated" in out
    assert main(["theory", "--r", "0.5", "--gamma", "0.4"]) == 2


def test_theory_defaults_json(tmp_path):
    assert main(["theory", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "prescription.json").read_text())
    assert all(r["holds"] for r in doc["lemmas"])
    assert "appendix_variant_m_min" in doc["refined"]["notes"]


def test_figure_shapes(tmp_path):
    common = ["--out", str(tmp_path), "--seed", "0", "--set", "run.T=40"]
    assert main(["figure", "fig1", *common]) == 0
    rows = read_csv(tmp_path / "fig1.csv")
    keys = {(r["topology"], r["n"], r["nm"], r["M"], r["seed"]) for r in rows}
    assert len(keys) == len(rows) == 6 * 6
    assert {r["nm"] for r in rows} == {"999", "1000"}
    assert (tmp_path / "fig1.gp").exists()

    assert main(["figure", "fig2", *common]) == 0
    rows = read_csv(tmp_path / "fig2.csv")
    nms = [int(r["nm"]) for r in rows if r["topology"] == "cycle"]
    assert nms == sorted(nms) and nms[0] <= 100 and nms[-1] == 10_000

    assert main(["figure", "fig3", *common, "--threads", "2"]) == 0
    rows = read_csv(tmp_path / "fig3.csv")
    assert all(0 <= int(r["iterations"]) <= int(r["T"]) == 40 for r in rows)


def test_figure_full_scale_needs_data(tmp_path):
    for scale in ("full", "paper"):
        assert main(["figure", "fig1", "--scale", scale, "--out", str(tmp_path)]) == 2


def test_sweep(tmp_path):
    rc = main(["sweep", "--out", str(tmp_path), *MINIMAL, "--param", "features.M", "--values", "4,8"])
    assert rc == 0
    rows = read_csv(tmp_path / "sweep.csv")
    assert {r["value"] for r in rows} == {"4", "8"}


def test_csv_dataset_run(tmp_path):
    import numpy as np

    rng = np.random.default_rng(0)
    X = rng.normal(size=(400, 3))
    y = (X[:, 0] + 0.3 * rng.normal(size=400) > 0).astype(int)
    path = tmp_path / "data.csv"
    path.write_text("".join(f"{y[i]},{X[i, 0]},{X[i, 1]},{X[i, 2]}\n" for i in range(400)))
    out = tmp_path / "run"
    rc = main(["run", "--out", str(out), "--seed", "1", "--set", "dataset.kind=csv", "--set", f"dataset.path={path}",
               "--set", "dataset.m=50", "--set", "dataset.test_size=100", "--set", "topology.n=4",
               "--set", "evaluation.metric=classification_error", "--set", "run.T=30",
               "--legacy-experiment-scaling", "--set", "run.eta=1.0"])
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["best_effort"] is True
    best = [float(r["best"]) for r in read_csv(out / "summary.csv")]
    assert all(0 <= b < 0.5 for b in best)


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "dgdrf", "theory", "--n", "4", "--m", "50", "--sigma2", "0"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "no:" in r.stdout
