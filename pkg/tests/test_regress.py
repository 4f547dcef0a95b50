import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from bayestof import model as M
from bayestof import regress as rg


def make_set(X, t, pixel_extended=False):
    X = np.asarray(X, dtype=float)
    labels = np.zeros((X.shape[0], len(rg.LABELS)))
    labels[:, 0] = t
    n = X.shape[1] - (2 if pixel_extended else 0)
    return rg.TrainingSet(X, labels, np.zeros((X.shape[0], 3)), n, pixel_extended)


def quadratic(X):
    return 3.0 + X[:, 0] - 2.0 * X[:, 1] + 0.5 * X[:, 0] * X[:, 2] + X[:, 3] ** 2


def test_coefficient_counts():
    assert rg.n_coefficients(4, "quadratic") == 15
    assert rg.n_coefficients(4, "linear") == 5
    assert rg.n_coefficients(4, "constant") == 1
    assert rg.n_coefficients(4, "quadratic", pixel_extended=True) == 17


def test_constant_labels_give_constant_tree():
    X = np.random.default_rng(0).normal(size=(500, 4))
    tree = rg.train_tree(make_set(X, np.full(500, 7.25)), depth=6)
    assert np.allclose(tree.predict(X), 7.25, atol=1e-9)


def test_exact_quadratic_recovered_at_depth_one():
    X = np.random.default_rng(1).normal(size=(800, 4))
    tree = rg.train_tree(make_set(X, quadratic(X)), depth=1)
    Xt = np.random.default_rng(2).normal(size=(200, 4))
    assert np.allclose(tree.predict(Xt), quadratic(Xt), atol=1e-8)


def test_depth_zero_is_global_least_squares():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(300, 4))
    y = rng.normal(size=300)
    tree = rg.train_tree(make_set(X, y), depth=0, leaf_kind="linear")
    A = np.column_stack([np.ones(300), X])
    sol, *_ = np.linalg.lstsq(A, y, rcond=None)
    assert tree.n_leaves == 1
    assert np.allclose(tree.predict(X), A @ sol, atol=1e-10)


def test_leaf_fallback_on_low_occupancy():
    X = np.random.default_rng(4).normal(size=(30, 4))
    tree = rg.train_tree(make_set(X, X[:, 0]), depth=0)
    assert tree.leaf_kind == ["linear"]
    tree = rg.train_tree(make_set(X[:10], X[:10, 0]), depth=0)
    assert tree.leaf_kind == ["constant"]


def test_min_leaf_respected():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(2000, 4))
    tree = rg.train_tree(make_set(X, np.sin(3 * X[:, 0]) + X[:, 1]), depth=10)
    counts = np.bincount(tree.route(X), minlength=tree.n_leaves)
    assert counts.min() >= 4 * rg.n_coefficients(4, "quadratic")


def test_split_thresholds_lie_between_samples():
    X = np.array([[0.0], [1.0], [2.0], [10.0], [11.0], [12.0]])
    data = make_set(X, [0, 0, 0, 5, 5, 5])
    tree = rg.train_tree(data, depth=1, leaf_kind="constant", min_leaf=1)
    assert tree.feature[0] == 0
    assert tree.threshold[0] == pytest.approx(6.0)
    assert np.allclose(tree.predict(X), [0, 0, 0, 5, 5, 5])


def test_serialization_bit_exact():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(3000, 4))
    tree = rg.train_tree(make_set(X, np.tanh(X[:, 0]) * X[:, 2]), depth=5)
    back = rg.loads_tree(rg.dumps_tree(tree))
    Xt = rng.normal(size=(1000, 4))
    assert np.array_equal(back.predict(Xt), tree.predict(Xt))
    assert rg.dumps_tree(back) == rg.dumps_tree(tree)


def test_pixel_extended_tree_needs_coordinates():
    rng = np.random.default_rng(7)
    X = np.column_stack([rng.normal(size=(400, 4)), rng.integers(0, 16, 400),
                         rng.integers(0, 12, 400)])
    tree = rg.train_tree(make_set(X, X[:, 0] + 0.1 * X[:, 4], pixel_extended=True), depth=2)
    assert tree.n_features == 6
    with pytest.raises(ValueError):
        tree(X[0, :4])
    assert tree(X[0, :4], X[0, 4], X[0, 5]) == pytest.approx(tree.predict(X[:1])[0])
    back = rg.loads_tree(rg.dumps_tree(tree))
    assert np.array_equal(back.predict(X), tree.predict(X))


def test_feature_dimension_mismatch():
    X = np.random.default_rng(8).normal(size=(100, 4))
    tree = rg.train_tree(make_set(X, X[:, 0]), depth=1)
    with pytest.raises(ValueError):
        tree.predict(np.zeros((3, 5)))


def test_bad_arguments():
    data = make_set(np.zeros((10, 4)), np.zeros(10))
    with pytest.raises(ValueError):
        rg.train_tree(data, depth=-1)
    with pytest.raises(ValueError):
        rg.train_tree(data, leaf_kind="cubic")
    with pytest.raises(ValueError):
        rg.train_tree(data, rows=np.array([], dtype=int))


def test_training_labels_under_zero_noise(curves, priors, settings):
    noise = M.NoiseParams(0.0, 1e-6)
    data = rg.generate_training_set(curves, noise, priors, 300, np.random.default_rng(9),
                                    settings=settings)
    assert len(data) + data.n_failed == 300
    assert np.max(np.abs(data.label("t") - data.truth[:, 0])) < 0.5


def test_training_generation_reproducible(curves, noise, priors, settings):
    a = rg.generate_training_set(curves, noise, priors, 200, np.random.default_rng(10),
                                 settings=settings)
    b = rg.generate_training_set(curves, noise, priors, 200, np.random.default_rng(10),
                                 settings=settings)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.labels, b.labels)
    assert a.labels.shape[1] == len(rg.LABELS)
    assert np.all((a.label("gamma") >= 0) & (a.label("gamma") <= 1))


def test_tree_tracks_oracle_on_real_data(curves, noise, priors, settings):
    train = rg.generate_training_set(curves, noise, priors, 6000, np.random.default_rng(11),
                                     settings=settings)
    test = rg.generate_training_set(curves, noise, priors, 2000, np.random.default_rng(12),
                                    settings=settings)
    shallow = rg.train_tree(train, depth=2)
    deep = rg.train_tree(train, depth=6)
    a = rg.tree_error_report(shallow, test.label("t"), test.X)
    b = rg.tree_error_report(deep, test.label("t"), test.X)
    assert b.mae < a.mae
    q = b.quantiles
    assert q[0] <= q[1] <= q[2]
    assert len(b.lines()) == 1 + len(b.bin_quantiles)


def test_error_report_quantiles():
    X = np.random.default_rng(13).normal(size=(200, 4))
    tree = rg.train_tree(make_set(X, np.zeros(200)), depth=0)
    oracle = np.arange(200.0)
    rep = rg.tree_error_report(tree, oracle, X, bins=4, bin_range=(0.0, 200.0))
    assert np.allclose(rep.quantiles, np.percentile(oracle, [25, 50, 75]), atol=1e-9)
    assert rep.mae == pytest.approx(99.5, abs=1e-9)
    assert np.allclose(rep.bin_quantiles[:, 1], [24.5, 74.5, 124.5, 174.5], atol=1e-9)
    with pytest.raises(ValueError):
        rg.tree_error_report(tree, [], np.zeros((0, 4)))


def test_forest_averages_trees():
    rng = np.random.default_rng(14)
    X = rng.normal(size=(600, 4))
    forest = rg.train_forest(make_set(X, X[:, 0] ** 3), 3, rng, depth=3)
    want = np.mean([t.predict(X) for t in forest.trees], axis=0)
    assert np.allclose(forest.predict(X), want)


@hsettings(max_examples=20, deadline=None)
@given(st.floats(-100, 100), st.floats(0.1, 10))
def test_affine_label_equivariance(shift, scale):
    X = np.random.default_rng(15).normal(size=(400, 4))
    y = quadratic(X)
    a = rg.train_tree(make_set(X, y), depth=2)
    b = rg.train_tree(make_set(X, scale * y + shift), depth=2)
    assert np.allclose(b.predict(X), scale * a.predict(X) + shift, rtol=1e-7, atol=1e-6 * scale)
