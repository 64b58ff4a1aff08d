import itertools
import struct

import numpy as np
import pytest

from connlab import forest as fm
from connlab.features import CATEGORICAL, SpeedLabel
from connlab.forest import DecisionTree, ForestParams, ModelFormatError


def toy(n=600, seed=0):
    """Rows that are SLOW iff rssi < -80 or the AP code is 3."""
    rng = np.random.default_rng(seed)
    X = np.column_stack([
        rng.integers(0, 24, n),
        rng.integers(-100, -40, n),
        rng.integers(1, 6, n),
        rng.integers(0, 5, n),
        rng.integers(0, 2, n),
    ])
    y = ((X[:, 1] < -80) | (X[:, 3] == 3)).astype(np.int8)
    return X, y


def noisy(n=3000, seed=1):
    X, _ = toy(n, seed)
    rng = np.random.default_rng(seed + 100)
    p = 1 / (1 + np.exp((X[:, 1] + 75) / 6.0))
    return X, (rng.random(n) < p).astype(np.int8)


def test_separable_set_is_learned():
    X, y = toy()
    model = fm.train(X, y, ForestParams(n_trees=10))
    assert np.array_equal(model.predict_many(X), y)


def test_single_tree_forest_matches_tree():
    X, y = noisy(800)
    p = ForestParams(n_trees=1, bootstrap=False)
    model = fm.train(X, y, p)
    seed, _ = fm.tree_seeds(p)[0]
    assert model.trees[0].same_as(DecisionTree.grow(X, y, p, seed))


def _weighted_gini(w0, w1):
    t = w0 + w1
    return 0.0 if t == 0 else t - (w0 * w0 + w1 * w1) / t


def _best_root_impurity(X, y, cw):
    """Smallest child impurity over every threshold and every category subset."""
    w = np.where(y == 1, 1.0, cw)
    best = np.inf
    for j in range(X.shape[1]):
        vals = np.unique(X[:, j])
        if CATEGORICAL[j]:
            cands = [set(s) for r in range(1, len(vals)) for s in itertools.combinations(vals, r)]
            masks = [np.isin(X[:, j], list(s)) for s in cands]
        else:
            masks = [X[:, j] <= v for v in vals[:-1]]
        for m in masks:
            imp = (_weighted_gini(w[m & (y == 0)].sum(), w[m & (y == 1)].sum())
                   + _weighted_gini(w[~m & (y == 0)].sum(), w[~m & (y == 1)].sum()))
            best = min(best, imp)
    return best


@pytest.mark.parametrize("seed", range(6))
def test_root_split_is_optimal(seed):
    X, y = noisy(300, seed)
    p = ForestParams(n_trees=1, bootstrap=False, features_per_split=5, max_depth=1)
    tree = DecisionTree.grow(X, y, p, seed=seed)
    assert tree.n_nodes == 3
    assert tree.w_fast[1] + tree.w_fast[2] == pytest.approx(tree.w_fast[0])
    got = _weighted_gini(tree.w_fast[1], tree.w_slow[1]) + _weighted_gini(tree.w_fast[2], tree.w_slow[2])
    assert got == pytest.approx(_best_root_impurity(X, y, 0.3), rel=1e-9)


def test_row_order_does_not_matter():
    X, y = noisy(1000)
    p = ForestParams(n_trees=5, bootstrap=False)
    perm = np.random.default_rng(3).permutation(len(y))
    a = fm.train(X, y, p).predict_many(X)
    b = fm.train(X[perm], y[perm], p).predict_many(X)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("depth", [1, 2, 5])
def test_depth_is_bounded(depth):
    X, y = noisy()
    model = fm.train(X, y, ForestParams(n_trees=5, max_depth=depth))
    assert model.max_depth() <= depth


def test_min_leaf_respected():
    X, y = noisy()
    tree = fm.train(X, y, ForestParams(n_trees=1, bootstrap=False, min_samples_leaf=20)).trees[0]
    leaves = tree.feature < 0
    # leaf weight is at least 20 rows of the lighter class
    assert np.all(tree.w_fast[leaves] + tree.w_slow[leaves] >= 20 * 0.3 - 1e-9)


def test_training_is_deterministic():
    X, y = noisy()
    p = ForestParams(n_trees=8, rng_seed=5)
    a, b = fm.train(X, y, p), fm.train(X, y, p)
    assert a.same_as(b)
    assert not a.same_as(fm.train(X, y, ForestParams(n_trees=8, rng_seed=6)))


def test_threads_match_serial():
    X, y = noisy()
    a = fm.train(X, y, ForestParams(n_trees=6, n_jobs=1))
    b = fm.train(X, y, ForestParams(n_trees=6, n_jobs=3))
    assert a.same_as(b)


def test_lower_fast_weight_raises_slow_recall():
    X, y = noisy(4000)
    Xt, yt = noisy(4000, seed=9)
    recalls = []
    for w in (1.0, 0.6, 0.3, 0.1):
        m = fm.train(X, y, ForestParams(n_trees=30, class_weight_fast=w, max_depth=4))
        recalls.append(fm.evaluate(m, Xt, yt).recall["SLOW"])
    assert recalls == sorted(recalls)
    assert recalls[-1] > recalls[0]


def test_scores_and_threshold():
    X, y = noisy()
    m = fm.train(X, y, ForestParams(n_trees=20))
    s = m.scores(X)
    assert np.all((s >= 0) & (s <= 1))
    assert np.all(np.isclose(s * 20, np.round(s * 20)))
    assert np.array_equal(m.predict_many(X, 0.0), np.ones(len(y)))
    lab, score = m.predict(X[0])
    assert lab is (SpeedLabel.SLOW if score >= 0.5 else SpeedLabel.FAST)


def test_unseen_codes_are_accepted():
    X, y = toy()
    m = fm.train(X, y, ForestParams(n_trees=5))
    probe = X[:10].copy()
    probe[:, 2] = 0
    probe[:, 3] = 99
    assert m.predict_many(probe).shape == (10,)


def test_bad_training_input():
    X, y = toy()
    with pytest.raises(ValueError):
        fm.train(X, np.zeros(len(y)))
    with pytest.raises(ValueError):
        fm.train(X[:0], y[:0])
    with pytest.raises(ValueError):
        fm.train(X, y[:-1])


@pytest.mark.parametrize("bad", [{"n_trees": 0}, {"max_depth": 0}, {"class_weight_fast": 0.0},
                                 {"features_per_split": 6}, {"n_jobs": 0}])
def test_param_validation(bad):
    with pytest.raises(ValueError):
        ForestParams(**bad)


# -- persistence ------------------------------------------------------------

@pytest.fixture(scope="module")
def trained():
    X, y = noisy(3000)
    return fm.train(X, y, ForestParams(n_trees=15)), X


def test_save_load_identical(trained, tmp_path):
    model, X = trained
    fm.save(model, tmp_path / "m.bin")
    back = fm.load(tmp_path / "m.bin")
    assert back.same_as(model)
    probe = np.random.default_rng(0).permutation(X)[:1000]
    assert np.array_equal(back.scores(probe), model.scores(probe))
    assert back.params == model.params and back.summary == model.summary
    assert fm.dumps(back) == fm.dumps(model)


def test_truncated_file(trained):
    data = fm.dumps(trained[0])
    for cut in (3, 20, len(data) // 2, len(data) - 1):
        with pytest.raises(ModelFormatError):
            fm.loads(data[:cut])


def test_corrupt_byte(trained):
    data = bytearray(fm.dumps(trained[0]))
    data[len(data) // 2] ^= 0xFF
    with pytest.raises(ModelFormatError, match="checksum"):
        fm.loads(bytes(data))


def test_other_version(trained):
    data = bytearray(fm.dumps(trained[0]))
    struct.pack_into("<H", data, 4, fm.FORMAT_VERSION + 1)
    with pytest.raises(ModelFormatError, match="version"):
        fm.loads(bytes(data))


def test_bad_magic():
    with pytest.raises(ModelFormatError):
        fm.loads(b"NOPE" + bytes(40))


# -- metrics ----------------------------------------------------------------

def test_metrics_counts():
    rep = fm.metrics([0, 0, 1, 1, 1], [0, 1, 1, 1, 0])
    assert rep.confusion == {"FAST": {"FAST": 1, "SLOW": 1}, "SLOW": {"FAST": 1, "SLOW": 2}}
    assert rep.precision == {"FAST": 0.5, "SLOW": 2 / 3}
    assert rep.recall == {"FAST": 0.5, "SLOW": 2 / 3}


def test_metrics_zero_denominators():
    rep = fm.metrics([1, 1], [1, 1])
    assert rep.precision["FAST"] is None and rep.recall["FAST"] is None
    assert rep.recall["SLOW"] == 1.0
    with pytest.raises(ValueError):
        fm.metrics([], [])


def test_evaluate_accepts_callable():
    X, y = toy()
    rep = fm.evaluate(lambda m: ((m[:, 1] < -80) | (m[:, 3] == 3)).astype(np.int8), X, y)
    assert rep.recall == {"FAST": 1.0, "SLOW": 1.0}
