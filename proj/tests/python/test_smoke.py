import math

import numpy as np
import pytest

import simfuse


def test_weights_match_closed_form():
    w = simfuse.compute_weights([1.0, 2.0, 3.0], p=10.0)
    assert w == pytest.approx([1024 / 1025, 1 / 1025, 0.0], abs=1e-12)
    assert w[2] == 0.0
    assert simfuse.compute_weights([5.0, 5.0], p=10.0) == pytest.approx([0.5, 0.5])


def test_silverman_bandwidth():
    expected = 2.0 * (4.0 / 3.0) ** 0.2 * 100.0 ** -0.2
    assert simfuse.silverman_bandwidth(1, 100, 2.0) == pytest.approx(expected, rel=1e-12)


def _blobs(rng, n_per_class, means, spread=0.05):
    feats, labels = [], []
    for c, mu in enumerate(means):
        pts = rng.normal(mu, spread, size=(n_per_class, 2))
        feats.append(pts)
        labels += [c] * n_per_class
    return np.vstack(feats), np.array(labels, dtype=np.int32)


def test_forest_train_predict_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    X, y = _blobs(rng, 80, [0.2, 0.5, 0.8])
    forest = simfuse.train_forest(X, list(y), ["a", "b", "c"], trees=25, seed=7)

    assert forest.class_names == ["a", "b", "c"]
    assert forest.n_features == 2
    post = forest.predict_proba(X)
    assert post.shape == (240, 3)
    assert np.allclose(post.sum(axis=1), 1.0)
    assert (forest.predict(X) == y).mean() > 0.99
    assert forest.importances.sum() == pytest.approx(1.0)

    path = tmp_path / "model.forest"
    forest.save(str(path))
    back = simfuse.Forest.load(str(path))
    assert back.to_text() == forest.to_text()
    assert np.array_equal(back.predict_proba(X), post)

    again = simfuse.Forest.from_text(forest.to_text())
    assert again.to_text() == forest.to_text()


def test_bag_distance_asymmetry():
    cluster = np.array([[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [0.1, 0.1]])
    target = np.vstack([cluster, [[2.0, 2.0]]])
    assert simfuse.bag_distance(cluster, target, "s2t") == 0.0
    assert simfuse.bag_distance(cluster, target, "t2s") > 0.0
    t2s = simfuse.bag_distance(cluster, target, "t2s")
    s2t = simfuse.bag_distance(cluster, target, "s2t")
    avg = simfuse.bag_distance(cluster, target, "avg")
    assert avg == pytest.approx(0.5 * (t2s + s2t))
    assert simfuse.mean_nn_sqdist(target, cluster) == t2s


def test_divergence_and_supervised_distances():
    rng = np.random.default_rng(11)
    near = rng.normal(0.0, 1.0, size=(150, 2))
    far = rng.normal(4.0, 1.0, size=(150, 2))
    ref = rng.normal(0.0, 1.0, size=(150, 2))
    assert simfuse.divergence_distance(near, ref) < simfuse.divergence_distance(far, ref)

    X, y = _blobs(rng, 60, [0.2, 0.8])
    forest = simfuse.train_forest(X, list(y), trees=20, seed=5)
    d_self = simfuse.supervised_distance(forest, X, list(y))
    d_flip = simfuse.supervised_distance(forest, X, list(1 - y))
    assert d_self < 0.05 < d_flip
    d_clu = simfuse.clustering_distance(forest, X, designated_feature_index=0, seed=9)
    assert abs(d_clu - d_self) < 0.05


def test_fusion_and_thresholds():
    a = np.array([[0.9, 0.1], [0.2, 0.8]])
    b = np.array([[0.5, 0.5], [0.6, 0.4]])
    fused = simfuse.fuse_posteriors([a, b], [1.0, 0.0])
    assert np.array_equal(fused, a)
    mixed = simfuse.fuse_posteriors([a, b], [0.5, 0.5])
    assert mixed[0, 0] == pytest.approx(0.7)

    assert list(simfuse.classify_argmax(a)) == [0, 1]
    assert list(simfuse.classify_threshold(a, 1, 0.05)) == [1, 1]

    scores = [0.9, 0.2, 0.8, 0.7, 0.4]
    assert simfuse.informed_threshold(scores, 2) == 0.8
    assert simfuse.informed_threshold(scores, 0) == math.inf


def test_evaluation_helpers():
    assert simfuse.error_rate([0, 1, 1, 0], [0, 1, 0, 0]) == 0.25
    assert simfuse.spearman([1, 2, 3], [1, 3, 2]) == 0.5
    conc = simfuse.weight_concentration([1.0, 2.0, 3.0, 4.0], [1.0, 50.0])
    assert conc[0][1] >= conc[1][1]
    assert conc[1][1] == 0.25
    agg = simfuse.aggregate_importance([[1.0, 0.0], [0.0, 1.0]], [0.75, 0.25])
    assert agg == pytest.approx([0.75, 0.25])


def test_errors_are_typed():
    with pytest.raises(simfuse.InputError):
        simfuse.compute_weights([], 10.0)
    with pytest.raises(simfuse.InputError):
        simfuse.bag_distance(np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(simfuse.InputError):
        simfuse.informed_threshold([0.5], 2)


def test_reproduce_pipeline(tmp_path):
    config = "\n".join(
        [
            "task = bt",
            "studies = 2",
            "images_per_study = 2",
            "dims = 16,16,16",
            "trees = 6",
            "train_count = 150",
            "eval_count = 200",
            "distance_count = 80",
            "measures = sup,bag",
            "directions = t2s",
            "seed = 21",
            "",
        ]
    )
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(config)
    out = tmp_path / "out"

    result = simfuse.reproduce(str(cfg_path), str(out))
    assert result["targets"] == ["study0_img0", "study0_img1"]
    assert set(result["methods"]) == {"all", "uni", "sup_t2s", "bag_t2s"}
    for method, err in result["mean_errors"].items():
        assert 0.0 <= err <= 1.0
    assert (out / "report" / "report.csv").exists()
    assert (out / "models" / "study1_img1.forest").exists()
    assert (out / "weights" / "study0_img0_bag_t2s.csv").exists()
