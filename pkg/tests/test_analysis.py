import numpy as np
import pytest

from dgdrf.analysis import (
    EvalReport,
    classification_error,
    excess_risk_estimate,
    metric_table,
    network_error,
    optimal_stopping,
    speedup_estimate,
    stopping_from_table,
)
from dgdrf.data import gen_synthetic, planted_target, shard
from dgdrf.engine import RunConfig, run_centralized, run_distributed
from dgdrf.errors import ParameterError, UnsupportedMetricError
from dgdrf.features import apply, empirical_covariance, sample_feature_map
from dgdrf.topology import build_graph, mixing_matrix, uniform_matrix


@pytest.fixture(scope="module")
def setup():
    fm_t, w = planted_target(3, 40, seed=0)
    train = gen_synthetic(4 * 20, 3, fm_t, w, 0.3, seed=1)
    test = gen_synthetic(500, 3, fm_t, w, 0.3, seed=2)
    fm = sample_feature_map("gaussian_rff", 3, 12, 10 ** -0.5, seed=3)
    return fm_t, w, shard(train, 4, 20, seed=4), test, fm


def test_excess_risk_examples(setup):
    fm_t, w, _, test, _ = setup
    assert excess_risk_estimate(w, fm_t, test) <= 1e-20
    assert excess_risk_estimate(np.zeros_like(w), fm_t, test) == pytest.approx(np.mean(test.noiseless**2))
    stacked = excess_risk_estimate(np.stack([w, 0 * w]), fm_t, test)
    assert stacked.shape == (2,)


def test_excess_risk_estimator_variance():
    fm_t, w = planted_target(2, 20, seed=5)
    wrong = np.zeros(20)

    def spread(N):
        return np.std([excess_risk_estimate(wrong, fm_t, gen_synthetic(N, 2, fm_t, w, 0.0, seed=s))
                       for s in range(40)])

    ratio = spread(1000) / spread(100_000)
    assert 6 <= ratio <= 16


def test_excess_risk_needs_truth(setup):
    _, _, sd, _, fm = setup
    with pytest.raises(UnsupportedMetricError):
        excess_risk_estimate(np.zeros(12), fm, sd.pooled())


def test_classification_examples():
    assert classification_error([0.7, 0.2], [1, 0]) == 0.0
    assert classification_error([0.4, 0.6], [1, 0]) == 1.0
    assert classification_error([0.5], [1]) == 1.0
    assert classification_error([0.5], [0]) == 0.0
    with pytest.raises(ParameterError):
        classification_error([0.1, 0.2], [0, 2])


def test_classification_threshold_preserving_transform():
    rng = np.random.default_rng(0)
    s = rng.uniform(-1, 2, 200)
    y = (rng.uniform(size=200) < 0.5).astype(float)
    # monotone, fixes 1/2
    g = 0.5 + np.sign(s - 0.5) * np.abs(s - 0.5) ** 3
    assert classification_error(g, y) == classification_error(s, y)


def test_stopping_examples():
    assert stopping_from_table([1, 2, 3], [0.5, 0.3, 0.4]) == (2, 0.3)
    assert stopping_from_table([1, 2, 4, 8], [0.9, 0.5, 0.2, 0.1]) == (8, 0.1)
    assert stopping_from_table([1, 2], [0.3, 0.3]) == (1, 0.3)
    t, v = stopping_from_table([1, 2], [[0.1, 0.6], [0.4, 0.5]])
    assert (t, v) == (2, 0.5)


def test_optimal_stopping_on_grid(setup):
    _, _, sd, test, fm = setup
    P = mixing_matrix(build_graph("cycle", 4), "lazy_uniform")
    tr = run_distributed(sd, fm, P, RunConfig(T=300))
    t, best = optimal_stopping(tr, fm, test)
    assert t in tr.ts
    table = metric_table(tr, test)
    assert best == table[tr.index_of(t)].max()
    with pytest.raises(ParameterError):
        optimal_stopping(tr, sample_feature_map("gaussian_rff", 3, 12, 1.0, seed=99), test)


def test_metric_table_agent_equivariant(setup):
    _, _, sd, test, fm = setup
    P = mixing_matrix(build_graph("cycle", 4), "lazy_uniform")
    tr = run_distributed(sd, fm, P, RunConfig(T=20))
    table = metric_table(tr, test, "mse")
    tr.weights = tr.weights[:, ::-1]
    np.testing.assert_array_equal(metric_table(tr, test, "mse"), table[:, ::-1])
    with pytest.raises(UnsupportedMetricError):
        metric_table(tr, test, "auc")


def test_network_error_pooled_and_identity(setup):
    _, _, sd, test, fm = setup
    cfg = RunConfig(T=50)
    C = empirical_covariance(fm, test.X)
    cen = run_centralized(sd, fm, cfg)
    same = network_error(cen, cen, C)
    assert np.all(same == 0)
    dist = run_distributed(sd, fm, uniform_matrix(4), cfg)
    assert np.max(network_error(dist, cen, C)) <= 1e-10
    cyc = run_distributed(sd, fm, mixing_matrix(build_graph("cycle", 4), "lazy_uniform"), cfg)
    ne = network_error(cyc, cen, C)
    assert ne.shape == (len(cyc.ts), 4)
    assert np.all(ne[0] == 0)
    # isometry: the quadratic form equals the test-set L2 distance of the predictors
    k = -1
    Phi = apply(fm, test.X)
    direct = np.sqrt(np.mean((Phi @ (cyc.weights[k, 2] - cen.weights[k, 0])) ** 2))
    assert ne[k, 2] == pytest.approx(direct, rel=1e-9)


def test_network_error_mismatch(setup):
    _, _, sd, test, fm = setup
    a = run_centralized(sd, fm, RunConfig(T=10))
    b = run_centralized(sd, fm, RunConfig(T=12))
    c = run_centralized(sd, fm, RunConfig(T=10, eta=0.25))
    C = np.eye(12)
    with pytest.raises(ParameterError):
        network_error(a, b, C)
    with pytest.raises(ParameterError):
        network_error(a, c, C)
    with pytest.raises(ParameterError):
        network_error(a, a, np.eye(3))


def test_speedup():
    assert speedup_estimate(7, 500, 50, 0, 0) == 7
    assert speedup_estimate(10, 1000, 100, 100, 2) == pytest.approx(10000 / 1300)
    assert speedup_estimate(5, 10**12, 100, 10, 4) == pytest.approx(5, rel=1e-8)


def test_eval_report_csv(setup, tmp_path):
    _, _, sd, test, fm = setup
    tr = run_centralized(sd, fm, RunConfig(T=8))
    rep = EvalReport.from_trace(tr, test, meta={"M": 12})
    rep.to_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "t,agent,metric,value"
    assert len(lines) == 1 + len(tr.ts)
    s = rep.summary()
    assert s["t_star"] == rep.t_star and len(s["config_hash"]) == 16
