import numpy as np
import pytest

from dgdrf.data import gen_synthetic, load_csv, planted_target, shard, standardize
from dgdrf.errors import IngestionError, ParameterError
from dgdrf.features import apply


@pytest.fixture
def target():
    return planted_target(3, 50, seed=1)


def test_zero_target_zero_noise(target):
    fm, _ = target
    ds = gen_synthetic(20, 3, fm, np.zeros(50), 0.0, seed=0)
    assert np.all(ds.y == 0)


def test_noiseless_planted_predictor(target):
    fm, w = target
    ds = gen_synthetic(200, 3, fm, w, 0.0, seed=2)
    assert np.array_equal(ds.y, ds.noiseless)
    assert np.max(np.abs(apply(fm, ds.X) @ w - ds.y)) == 0
    assert np.all(np.abs(ds.X) <= 1)


def test_noise_moment(target):
    fm, w = target
    ds = gen_synthetic(10_000, 3, fm, w, 0.1, seed=3)
    assert 0.008 <= np.var(ds.y - ds.noiseless, ddof=1) <= 0.012


def test_ground_truth_regenerates_noiseless(target):
    fm, w = target
    ds = gen_synthetic(50, 3, fm, w, 0.3, seed=4)
    np.testing.assert_array_equal(ds.ground_truth(ds.X), ds.noiseless)


def test_generator_reproducible(target):
    fm, w = target
    a = gen_synthetic(30, 3, fm, w, 0.3, seed=5)
    b = gen_synthetic(30, 3, fm, w, 0.3, seed=5)
    assert a.X.tobytes() == b.X.tobytes() and a.y.tobytes() == b.y.tobytes()


def test_generator_errors(target):
    fm, w = target
    with pytest.raises(ParameterError):
        gen_synthetic(10, 3, fm, w, -0.1, seed=0)
    with pytest.raises(ParameterError):
        gen_synthetic(10, 3, fm, w[:-1], 0.1, seed=0)


def write(path, rows):
    path.write_text("\n".join(rows) + "\n")
    return path


def test_load_small_csv(tmp_path):
    p = write(tmp_path / "a.csv", ["1,0.5,2", "0,1.5,3", "1,-1,4"])
    ds = load_csv(p, label_column=0)
    assert ds.N == 3 and ds.D == 2
    np.testing.assert_array_equal(ds.y, [1, 0, 1])
    np.testing.assert_array_equal(ds.X[:, 0], [0.5, 1.5, -1])
    assert ds.ground_truth is None


def test_load_csv_limit(tmp_path):
    p = write(tmp_path / "b.csv", [f"{i % 2},{i},{i * 0.5}" for i in range(1000)])
    ds = load_csv(p, limit=100)
    assert ds.N == 100
    np.testing.assert_array_equal(ds.X[:, 0], np.arange(100))


def test_load_csv_malformed_row(tmp_path):
    rows = [f"1,{i},{i}" for i in range(10)]
    rows[6] = "1,abc,3"
    p = write(tmp_path / "c.csv", rows)
    with pytest.raises(IngestionError, match="line 7") as exc:
        load_csv(p)
    assert exc.value.line == 7


def test_load_csv_header_named_columns(tmp_path):
    p = write(tmp_path / "d.csv", ["label;a;b", "0;1;2", "1;3;4"])
    ds = load_csv(p, label_column="label", feature_columns=["b"], delimiter=";", header=True)
    np.testing.assert_array_equal(ds.X, [[2], [4]])


def test_load_csv_classification_flag(tmp_path):
    p = write(tmp_path / "e.csv", ["0,1", "2,1"])
    with pytest.raises(IngestionError, match="non-binary"):
        load_csv(p, classification=True)
    with pytest.raises(IngestionError):
        load_csv(tmp_path / "missing.csv")


def test_shard_disjoint_cover():
    X = np.arange(30, dtype=float).reshape(15, 2)
    from dgdrf.data import Dataset

    ds = Dataset(X, np.arange(15.0))
    sd = shard(ds, 3, 5, seed=0)
    idx = np.concatenate([s.indices for s in sd.shards])
    assert sd.n == 3 and sd.m == 5
    assert sorted(idx) == list(range(15))
    for s in sd.shards:
        np.testing.assert_array_equal(s.y, ds.y[s.indices])
    again = shard(ds, 3, 5, seed=0)
    assert all(np.array_equal(a.indices, b.indices) for a, b in zip(sd.shards, again.shards))
    one = shard(ds, 1, 4, seed=0)
    np.testing.assert_array_equal(one.shards[0].indices, np.random.default_rng(0).permutation(15)[:4])
    with pytest.raises(ParameterError):
        shard(ds, 4, 4, seed=0)


def test_shard_measure_preserving(target):
    fm, w = target
    ds = gen_synthetic(100, 3, fm, w, 0.3, seed=0)
    sd = shard(ds, 4, 20, seed=9)
    perm = np.random.default_rng(9).permutation(100)[:80]
    assert sorted(sd.pooled().y) == sorted(ds.y[perm])


def test_standardize_uses_train_stats(target):
    fm, w = target
    tr = gen_synthetic(500, 3, fm, w, 0.3, seed=1)
    te = gen_synthetic(100, 3, fm, w, 0.3, seed=2)
    tr2, te2, stats = standardize(tr, te)
    np.testing.assert_allclose(tr2.X.mean(0), 0, atol=1e-12)
    np.testing.assert_allclose(tr2.X.std(0), 1, atol=1e-12)
    np.testing.assert_allclose(te2.X, (te.X - stats["mean"]) / stats["scale"])
