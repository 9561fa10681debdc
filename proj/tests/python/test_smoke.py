import math

import numpy as np
import pytest

import geometer


def test_distance_helpers():
    assert geometer.squared_euclidean(np.array([1.0, 2.0]), np.array([0.0, 0.0])) == pytest.approx(5.0)
    assert geometer.cosine_sim(np.array([1.0, 0.0]), np.array([0.0, 2.0])) == pytest.approx(0.0)
    rows = geometer.softmax_rows(np.array([[0.0, 0.0], [1.0, 1.0]]))
    assert np.allclose(rows, 0.5)


def test_loss_examples():
    assert geometer.uniformity_loss([0, 1], np.array([[1.0, 0.0], [-1.0, 0.0]])) == pytest.approx(0.0, abs=1e-12)
    same = np.array([[0.3, -1.2]])
    assert geometer.separability_loss(same, same) == pytest.approx(1.0)
    probs = geometer.softmax_rows(np.array([[0.1, 2.0, -0.4]]))
    assert geometer.distillation_loss(probs, probs) == pytest.approx(0.0, abs=1e-12)
    circle = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    queries = {2: np.zeros((3, 2))}
    assert geometer.proximity_loss(queries, [0, 1, 2, 3], circle) == pytest.approx(math.log(4.0))


def test_softened_logits_agree_with_nearest_prototype():
    rng = np.random.default_rng(0)
    for _ in range(200):
        protos = rng.normal(size=(5, 3))
        e = rng.normal(size=3)
        probs = geometer.softened_logits(e, [2, 4, 6, 8, 10], protos, tau=0.5)
        assert sum(probs) == pytest.approx(1.0)
        assert [2, 4, 6, 8, 10][int(np.argmax(probs))] == geometer.nearest_prototype(e, [2, 4, 6, 8, 10], protos)


def test_library_errors_become_python_exceptions():
    with pytest.raises(geometer.GeometerError, match="missing_file|MissingFile|missing"):
        geometer.load_graph("/nonexistent/geometer-dataset")
    with pytest.raises(geometer.GeometerError):
        geometer.separability_loss(np.zeros((1, 2)), np.zeros((1, 3)))


def test_graph_round_trip_and_short_training(tmp_path):
    g = geometer.synthetic_graph(seed=1)
    assert (g.node_count, g.edge_count, g.feature_dim) == (2995, 8158, 2879)
    geometer.save_graph(g, tmp_path / "data")
    back = geometer.load_graph(tmp_path / "data")
    assert back.labels == g.labels

    stream = geometer.build_session_stream(back, [0, 1], [[2]], k_shot=5, seed=0)
    assert stream.stage_count == 2
    assert stream.classes_at(1) == [0, 1, 2]

    base = geometer.pretrain(stream, seed=0, episodes=2, hidden=16, out_dim=8)
    assert base.prototype_classes == [0, 1]
    student = geometer.run_session(base, stream, 1, seed=0, episodes=1)
    assert student.session_index == 1
    assert student.prototype_classes == [0, 1, 2]
    assert student.prototypes.shape == (3, 8)

    result = geometer.evaluate([student], stream, 1)
    assert 0.0 <= result["mean"] <= 1.0
    assert result["std"] == 0.0

    student.save(tmp_path / "model.gfsp")
    loaded = geometer.load_checkpoint(tmp_path / "model.gfsp")
    # Checkpoints store f32.
    assert np.allclose(loaded.prototypes, student.prototypes, rtol=1e-6, atol=1e-7)
    assert np.array_equal(loaded.prototypes, student.prototypes.astype(np.float32).astype(np.float64))
    emb = loaded.encode(back)
    assert emb.shape == (2995, 8)
