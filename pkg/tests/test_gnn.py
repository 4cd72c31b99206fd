import math

import numpy as np
import pytest

from cubegnn import gnn, walks
from cubegnn.cube import apply_moves, random_scramble, solved_state
from cubegnn.gnn import CheckpointError, GraphData, MessageGraph, ShapeError, TrainConfig

FD_STEP = 1e-5
# entries whose true gradient is below this are compared absolutely
REL_FLOOR = 1e-4


def random_graph(rng, n=20, p=0.15, input_dim=15, num_classes=27):
    edges = np.array([(i, j, rng.integers(12)) for i in range(n) for j in range(n)
                      if i != j and rng.random() < p])
    graph = MessageGraph(n, edges[:, 0], edges[:, 1], edges[:, 2])
    x = rng.normal(size=(n, input_dim))
    y = rng.integers(0, num_classes, size=n)
    return GraphData(graph, x, y)


def perturbed_model(rng, input_dim, hidden_dim, scale=2.0):
    m = gnn.init_model(rng, input_dim=input_dim, hidden_dim=hidden_dim, scale=scale)
    for name in ("b1", "b2", "b"):
        m.params[name] = 0.1 * rng.normal(size=m.params[name].shape)
    return m


def max_relative_error(model, data):
    analytic = gnn.backward(model, data)
    worst = {}
    for name, arr in model.params.items():
        fd = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + FD_STEP
            up = gnn.loss(model, data)
            arr[idx] = old - FD_STEP
            down = gnn.loss(model, data)
            arr[idx] = old
            fd[idx] = (up - down) / (2 * FD_STEP)
        a = analytic[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(fd)), REL_FLOOR)
        worst[name] = float(np.max(np.abs(a - fd) / denom))
    return worst


@pytest.mark.parametrize("seed", [0, 1])
def test_gradient_check_dense(seed):
    rng = np.random.default_rng(seed)
    data = random_graph(rng)
    model = perturbed_model(rng, 15, 8)
    errs = max_relative_error(model, data)
    assert max(errs.values()) < 1e-5, errs


def test_gradient_check_cube_features():
    rng = np.random.default_rng(7)
    states = np.stack([apply_moves(solved_state(), random_scramble(rng, 4)).array for _ in range(20)])
    data = random_graph(rng)
    data = GraphData(data.graph, walks.featurize_batch(states), data.labels)
    model = perturbed_model(rng, 324, 8)
    errs = max_relative_error(model, data)
    assert max(errs.values()) < 1e-5, errs


def test_bias_gradient_closed_form():
    rng = np.random.default_rng(2)
    data = random_graph(rng)
    model = perturbed_model(rng, 15, 8)
    probs = gnn.forward_model(model, data)
    onehot = np.eye(27)[data.labels]
    assert np.allclose(gnn.backward(model, data)["b"], (probs - onehot).mean(axis=0), atol=1e-15)


def test_edge_weights_unused_without_edges():
    rng = np.random.default_rng(3)
    empty = np.zeros(0, dtype=np.int64)
    data = GraphData(MessageGraph(6, empty, empty, empty), rng.normal(size=(6, 15)),
                     rng.integers(0, 27, size=6))
    grads = gnn.backward(perturbed_model(rng, 15, 8), data)
    for name in ("We1", "We2", "Wn1", "Wn2"):
        assert not grads[name].any()


def test_isolated_node_layer():
    rng = np.random.default_rng(4)
    model = perturbed_model(rng, 15, 8)
    empty = np.zeros(0, dtype=np.int64)
    x = rng.normal(size=(1, 15))
    h, _ = gnn.forward_layer(model, 1, x, MessageGraph(1, empty, empty, empty))
    assert np.allclose(h[0], np.maximum(model["Ws1"] @ x[0] + model["b1"], 0), atol=1e-14)


def test_layer_matches_literal_sum():
    rng = np.random.default_rng(5)
    data = random_graph(rng)
    model = perturbed_model(rng, 15, 8)
    g = data.graph
    h, _ = gnn.forward_layer(model, 1, data.features, g)
    for node in range(g.num_nodes):
        k = np.flatnonzero(g.receivers == node)
        msg = np.zeros(8)
        for e in k:
            msg += model["Wn1"] @ data.features[g.senders[e]] + model["We1"] @ np.eye(12)[g.moves[e]]
        if len(k):
            msg /= len(k)
        want = np.maximum(model["Ws1"] @ data.features[node] + msg + model["b1"], 0)
        assert np.allclose(h[node], want, atol=1e-12)


def test_neighbour_permutation_invariance():
    rng = np.random.default_rng(6)
    data = random_graph(rng, p=0.3)
    model = perturbed_model(rng, 15, 8)
    base = gnn.forward_model(model, data)
    perm = rng.permutation(len(data.graph.receivers))
    g = data.graph
    shuffled = MessageGraph(g.num_nodes, g.receivers[perm], g.senders[perm], g.moves[perm])
    out = gnn.forward_model(model, GraphData(shuffled, data.features, data.labels))
    assert np.max(np.abs(out - base)) <= 1e-12


def test_zero_weights_give_zero_layer():
    rng = np.random.default_rng(8)
    data = random_graph(rng)
    h, _ = gnn.forward_layer(gnn.zero_model(15, 8), 1, data.features, data.graph)
    assert not h.any()


def test_zero_model_uniform_and_ln27():
    rng = np.random.default_rng(9)
    data = random_graph(rng)
    model = gnn.zero_model(15, 8)
    assert np.allclose(gnn.forward_model(model, data), 1 / 27, atol=1e-15)
    assert abs(gnn.loss(model, data) - math.log(27)) <= 1e-12


def test_softmax_rows_normalised():
    rng = np.random.default_rng(10)
    data = random_graph(rng)
    probs = gnn.forward_model(perturbed_model(rng, 15, 8, scale=20.0), data)
    assert np.all(probs >= 0)
    assert np.max(np.abs(probs.sum(axis=1) - 1)) <= 1e-9


def test_confident_correct_predictions_have_small_loss():
    rng = np.random.default_rng(11)
    data = random_graph(rng)
    model = gnn.zero_model(15, 8)
    model.params["b"] = 50.0 * np.eye(27)[3]
    data.labels[:] = 3
    assert 0 <= gnn.loss(model, data) < 1e-15


def test_shape_errors():
    rng = np.random.default_rng(12)
    data = random_graph(rng)
    model = perturbed_model(rng, 15, 8)
    with pytest.raises(ShapeError, match="layer 2.*dim 8"):
        gnn.forward_layer(model, 2, data.features, data.graph)
    with pytest.raises(ShapeError):
        gnn.GnnModel({**model.params, "W": np.zeros((27, 9))}, 15, 8)


def test_label_range_checked():
    rng = np.random.default_rng(13)
    data = random_graph(rng)
    data.labels[0] = 27
    with pytest.raises(ValueError, match="27"):
        gnn.loss(gnn.zero_model(15, 8), data)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)


def test_divergence_reported():
    rng = np.random.default_rng(14)
    data = random_graph(rng)
    with pytest.raises(gnn.TrainingDivergedError, match="epoch"):
        gnn.train(perturbed_model(rng, 15, 8), data, TrainConfig(learning_rate=1e200, epochs=5))


@pytest.fixture(scope="module")
def toy_graph():
    # about 100 nodes, labels 0..4
    return walks.run_walks(walks.WalkConfig(35, 4, 3))


def test_training_on_toy_graph(toy_graph):
    assert 90 <= toy_graph.num_nodes <= 101
    res = gnn.train(None, toy_graph, TrainConfig(epochs=100, rng_seed=0))
    losses = np.array(res.losses)
    assert np.all(np.isfinite(losses))
    assert np.all(np.diff(losses[:11]) < 0)
    majority = np.bincount(toy_graph.labels).max() / toy_graph.num_nodes
    assert gnn.accuracy(res.model, toy_graph) > majority


def test_training_deterministic(toy_graph):
    cfg = TrainConfig(epochs=20, rng_seed=5)
    a = gnn.train(None, toy_graph, cfg)
    b = gnn.train(None, toy_graph, cfg)
    assert a.losses == b.losses
    for name in gnn.PARAM_NAMES:
        assert np.array_equal(a.model[name], b.model[name])


# recorded run: 3500 walks of length 7 (seed 1, 11262 nodes, majority class
# 0.257) reached 0.291 after 100 epochs; the threshold keeps a 0.02 margin
RECORDED_ACCURACY_THRESHOLD = 0.27


@pytest.mark.slow
def test_training_accuracy_recorded_run():
    gr = walks.run_walks(walks.WalkConfig(3500, 7, 1))
    res = gnn.train(None, gr, TrainConfig(epochs=100, rng_seed=1))
    assert np.all(np.isfinite(res.losses))
    assert gnn.accuracy(res.model, gr) >= RECORDED_ACCURACY_THRESHOLD


def test_checkpoint_roundtrip(tmp_path, toy_graph):
    model = gnn.init_model(np.random.default_rng(0), hidden_dim=6)
    model.params["b"] = np.random.default_rng(1).normal(size=27)
    path = tmp_path / "m.txt"
    gnn.save_model(model, path)
    back = gnn.load_model(path, expected_dims=(324, 6, 27))
    for name in gnn.PARAM_NAMES:
        assert np.array_equal(back[name], model[name])
    assert path.read_text().splitlines()[0] == "gnn-v1 324 6 27"
    assert gnn.loss(back, toy_graph) == gnn.loss(model, toy_graph)


def test_checkpoint_errors(tmp_path):
    path = tmp_path / "m.txt"
    gnn.save_model(gnn.zero_model(hidden_dim=4), path)
    with pytest.raises(CheckpointError, match="hidden expected 128, got 4"):
        gnn.load_model(path, expected_dims=(324, 128, 27))
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-3]) + "\n")
    with pytest.raises(CheckpointError, match="truncated"):
        gnn.load_model(path)
    path.write_text("gnn-v0 324 4 27\n")
    with pytest.raises(CheckpointError, match="header"):
        gnn.load_model(path)


def test_fast_predictor_matches_ego_network():
    rng = np.random.default_rng(15)
    model = perturbed_model(rng, 324, 16, scale=3.0)
    states = [apply_moves(solved_state(), random_scramble(rng, int(k)))
              for k in rng.integers(0, 9, size=12)]
    pred = gnn.ClassPredictor(model)
    fast = pred.logits(np.stack([g.array for g in states]))
    for g, row in zip(states, fast):
        probs = gnn.predict_proba(model, g)
        ref = np.log(probs)
        assert np.allclose(row - row.max(), ref - ref.max(), atol=1e-9)
        assert gnn.predict_class(model, g) == int(np.argmax(row))


def test_predict_class_properties():
    rng = np.random.default_rng(16)
    model = perturbed_model(rng, 324, 8, scale=3.0)
    g = apply_moves(solved_state(), random_scramble(rng, 5))
    c = gnn.predict_class(model, g)
    assert c == gnn.predict_class(model, g) and 0 <= c < 27
    shifted = model.copy()
    shifted.params["b"] = shifted["b"] + 7.0
    assert gnn.predict_class(shifted, g) == c
    # ties go to the smaller index
    assert gnn.predict_class(gnn.zero_model(hidden_dim=4), g) == 0
