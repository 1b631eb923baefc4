import numpy as np
import pytest

from brain_decoder import forest
from brain_decoder.errors import CheckpointError, ConfigError, ShapeError
from brain_decoder.forest import (DecisionTree, Forest, RfConfig, fit_forest, grid_search,
                                  predict_forest)
from oracles import exhaustive_tree_predict


def _xor():
    pts = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    X = np.repeat(pts, 10, axis=0)
    y = np.repeat([0, 1, 1, 0], 10)
    return X, y


def _bootstrap(seed, n_trees, n_rows, i):
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(n_trees)[i])
    return rng.integers(0, n_rows, size=n_rows)


def _leaf(cls, n_classes=3):
    counts = np.zeros((1, n_classes), dtype=np.int64)
    counts[0, cls] = 5
    return DecisionTree(np.array([-1]), np.zeros(1), np.array([-1]), np.array([-1]), counts)


def test_pure_labels_give_single_leaves(rng):
    X = rng.normal(size=(30, 4))
    f = fit_forest(X, np.full(30, 2), RfConfig(10, 3, 0), n_classes=3)
    assert all(t.n_nodes == 1 for t in f.trees)
    np.testing.assert_array_equal(f.predict(rng.normal(size=(5, 4))), 2)


def test_xor_training_accuracy_and_exhaustive_oracle():
    X, y = _xor()
    cfg = RfConfig(100, 3, 7)
    f = fit_forest(X, y, cfg)
    assert f.feature_subsample == 2
    np.testing.assert_array_equal(f.predict(X), y)
    # with K = 2 every node considers both features, so each tree must equal
    # an exhaustive CART grown on the same bootstrap sample
    for i, tree in enumerate(f.trees[:25]):
        sample = _bootstrap(cfg.seed, cfg.n_trees, len(X), i)
        oracle = exhaustive_tree_predict(X[sample], y[sample], 3, 2)
        np.testing.assert_array_equal(tree.predict(X), [oracle(r) for r in X])


def test_single_tree_matches_exhaustive_oracle_on_random_data(rng):
    X = rng.integers(0, 6, size=(60, 2)).astype(float)
    y = (X[:, 0] + 2 * X[:, 1] > 6).astype(int) + (X[:, 0] > 4)
    cfg = RfConfig(5, 2, 3)
    f = fit_forest(X, y, cfg)
    grid = np.array([[a, b] for a in np.arange(-0.5, 6.0, 0.5) for b in np.arange(-0.5, 6.0, 0.5)])
    for i, tree in enumerate(f.trees):
        sample = _bootstrap(cfg.seed, cfg.n_trees, len(X), i)
        oracle = exhaustive_tree_predict(X[sample], y[sample], 2, 3)
        np.testing.assert_array_equal(tree.predict(grid), [oracle(r) for r in grid])


def test_default_grid_values_accepted():
    assert forest.DEFAULT_TREES == (100, 200, 500, 1000)
    assert forest.DEFAULT_MIN_LEAF == (3, 5, 10)
    for n in forest.DEFAULT_TREES:
        for m in forest.DEFAULT_MIN_LEAF:
            assert RfConfig(n, m, 0).n_trees == n


@pytest.mark.parametrize("kwargs", [dict(n_trees=0), dict(min_leaf=0), dict(seed=-1)])
def test_config_rejects_invalid(kwargs):
    with pytest.raises(ConfigError):
        RfConfig(**kwargs)


def test_fit_rejects_bad_input():
    with pytest.raises(ShapeError):
        fit_forest(np.zeros((0, 3)), np.zeros(0, dtype=int), RfConfig(1, 1, 0))
    with pytest.raises(ShapeError):
        fit_forest(np.zeros((2, 3)), np.zeros(2, dtype=int), RfConfig(1, 3, 0))
    with pytest.raises(ShapeError):
        fit_forest(np.zeros((4, 3)), np.zeros(3, dtype=int), RfConfig(1, 1, 0))


def test_constant_features_are_degenerate_not_errors():
    f = fit_forest(np.ones((20, 3)), np.arange(20) % 3, RfConfig(5, 2, 0))
    assert all(t.n_nodes == 1 for t in f.trees)


def test_predict_single_leaf_forest():
    f = Forest([_leaf(2)], 3, 4, 2)
    assert predict_forest(f, np.zeros(4)) == 2


def test_predict_majority_vote():
    f = Forest([_leaf(1), _leaf(1), _leaf(2)], 3, 4, 2)
    assert predict_forest(f, np.zeros(4)) == 1


def test_predict_tie_goes_to_low_index():
    f = Forest([_leaf(2), _leaf(0)], 3, 4, 2)
    assert predict_forest(f, np.zeros(4)) == 0


def test_predict_dimension_mismatch():
    with pytest.raises(ShapeError):
        predict_forest(Forest([_leaf(0)], 3, 4, 2), np.zeros(3))


def _structure_checks(f, X, y, min_leaf):
    for i, tree in enumerate(f.trees):
        sample = _bootstrap(f.config.seed, f.config.n_trees, len(X), i)
        leaf_of = tree.apply(X[sample])
        leaves = np.flatnonzero(tree.is_leaf)
        assert set(np.unique(leaf_of)) <= set(leaves)
        assert tree.counts[leaves].sum() == len(sample)
        assert np.all(tree.counts[leaves].sum(axis=1) >= min_leaf)
        for leaf in leaves:
            np.testing.assert_array_equal(
                tree.counts[leaf], np.bincount(y[sample][leaf_of == leaf], minlength=f.n_classes))
        for node in np.flatnonzero(~tree.is_leaf):
            c = tree.counts[node]
            n = c.sum()
            parent = 1 - np.sum((c / n) ** 2)
            child = 0.0
            for k in (tree.left[node], tree.right[node]):
                ck = tree.counts[k]
                child += ck.sum() / n * (1 - np.sum((ck / ck.sum()) ** 2))
            assert child < parent
            assert 0 <= tree.feature[node] < X.shape[1]


def test_tree_structure_invariants(rng):
    X = rng.normal(size=(120, 5))
    y = (X[:, 0] > 0).astype(int) + (X[:, 3] > 0.5)
    for leaf in (1, 3, 7):
        f = fit_forest(X, y, RfConfig(8, leaf, leaf))
        _structure_checks(f, X, y, leaf)


def test_fixed_seed_reproducible(rng):
    X = rng.normal(size=(80, 4))
    y = rng.integers(0, 3, 80)
    a = fit_forest(X, y, RfConfig(6, 3, 9))
    b = fit_forest(X, y, RfConfig(6, 3, 9))
    assert forest.dumps_forest(a) == forest.dumps_forest(b)


def test_monotone_feature_transform_invariance(rng):
    X = rng.normal(size=(100, 3))
    y = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(int) + (X[:, 2] > 1)
    before = fit_forest(X, y, RfConfig(15, 3, 4)).predict(X)
    Z = X.copy()
    Z[:, 1] = np.exp(2.0 * Z[:, 1]) + 3.0
    after = fit_forest(Z, y, RfConfig(15, 3, 4)).predict(Z)
    np.testing.assert_array_equal(before, after)


def test_checkpoint_round_trip(rng, tmp_path):
    X = rng.normal(size=(60, 4))
    y = rng.integers(0, 3, 60)
    f = fit_forest(X, y, RfConfig(5, 2, 1))
    path = tmp_path / "f.rf"
    forest.save_forest(path, f)
    g = forest.load_forest(path)
    np.testing.assert_array_equal(f.votes(X), g.votes(X))
    assert forest.dumps_forest(g) == forest.dumps_forest(f)
    data = path.read_bytes()
    assert data[:6] == b"RFRST1" and data[6] == 1


@pytest.mark.parametrize("mutate", [lambda d: b"XXXXXX" + d[6:], lambda d: d[:6] + b"\x09" + d[7:],
                                    lambda d: d[:-1], lambda d: d + b"\x00"])
def test_checkpoint_corruption(rng, mutate):
    f = fit_forest(rng.normal(size=(20, 2)), rng.integers(0, 2, 20), RfConfig(2, 2, 0))
    with pytest.raises(CheckpointError):
        forest.loads_forest(mutate(forest.dumps_forest(f)))


def _runs(n_runs, run_len, rng):
    x = np.arange(n_runs * run_len, dtype=float)[:, None]
    y = np.repeat(np.arange(n_runs) % 2, run_len)
    return [(x, y)]


def test_grid_singleton_returned(rng):
    data = _runs(6, 8, rng)
    cfg, model, scores = grid_search(data, data, trees=[3], min_leaf=[2])
    assert (cfg.n_trees, cfg.min_leaf) == (3, 2) and len(scores) == 1
    assert len(model.trees) == 3


def test_default_grid_fits_twelve(caplog):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(24, 2))
    y = (X[:, 0] > 0).astype(int)
    with caplog.at_level("INFO", logger="brain_decoder.forest"):
        _, _, scores = grid_search([(X, y)], [(X, y)])
    assert len(scores) == 12
    assert sum("n_trees=" in r.message for r in caplog.records) == 12
    assert sorted({c.n_trees for c, _ in scores}) == [100, 200, 500, 1000]
    assert sorted({c.min_leaf for c, _ in scores}) == [3, 5, 10]


def test_grid_prefers_strictly_better_small_leaves(rng):
    data = _runs(10, 4, rng)
    cfg, _, scores = grid_search(data, data, trees=[20], min_leaf=[3, 10])
    acc = {c.min_leaf: a for c, a in scores}
    assert acc[3] > acc[10]
    assert cfg.min_leaf == 3


def test_grid_ties_prefer_fewer_trees_then_larger_leaf():
    X = np.repeat(np.array([[0.0], [1.0]]), 20, axis=0)
    y = np.repeat([0, 1], 20)
    cfg, _, scores = grid_search([(X, y)], [(X, y)], trees=[10, 5], min_leaf=[3, 5])
    assert all(a == 1.0 for _, a in scores)
    assert (cfg.n_trees, cfg.min_leaf) == (5, 5)


def test_grid_rejects_empty_validation(rng):
    with pytest.raises(ShapeError):
        grid_search(_runs(4, 4, rng), [], trees=[1], min_leaf=[1])
