"""Two-layer message-passing node classifier over cube states.

Layer t computes, for every node g with neighbours N(g)::

    h_g = relu(Ws h_g + mean_{g' in N(g)} (Wn h_g' + We e_gg') + b)

and the head is ``softmax(W z_g + b)`` over the 27 distance classes 0..26.
All arithmetic is float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import _kernels as K
from .cube import CORNERS, EDGES, INVERSE_PERMS, PERMS, CubeState, neighbor_batch

INPUT_DIM = 324
EDGE_DIM = 12
HIDDEN_DIM = 128
NUM_CLASSES = 27
FORMAT_VERSION = "gnn-v1"
PARAM_NAMES = ("Ws1", "Wn1", "We1", "b1", "Ws2", "Wn2", "We2", "b2", "W", "b")


class ShapeError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


class TrainingDivergedError(FloatingPointError):
    pass


@dataclass
class MessageGraph:
    """Directed message edges: ``senders[k] -> receivers[k]`` tagged with ``moves[k]``."""

    num_nodes: int
    receivers: np.ndarray
    senders: np.ndarray
    moves: np.ndarray

    @cached_property
    def mean_adjacency(self) -> sp.csr_matrix:
        deg = self.degree
        w = 1.0 / deg[self.receivers] if len(self.receivers) else np.zeros(0)
        return sp.csr_matrix(
            (w, (self.receivers, self.senders)), shape=(self.num_nodes, self.num_nodes)
        )

    @cached_property
    def degree(self) -> np.ndarray:
        return np.bincount(self.receivers, minlength=self.num_nodes).astype(float)

    @cached_property
    def mean_edge_features(self) -> np.ndarray:
        e = np.zeros((self.num_nodes, EDGE_DIM))
        np.add.at(e, (self.receivers, self.moves), 1.0)
        deg = np.maximum(self.degree, 1.0)
        return e / deg[:, None]


@dataclass
class GraphData:
    """Node features and labels bound to a message graph."""

    graph: MessageGraph
    features: np.ndarray
    labels: np.ndarray | None = None


def as_graph_data(obj) -> GraphData:
    if isinstance(obj, GraphData):
        return obj
    # a TrainGraph from the walk sampler; one-hot inputs are ~83% zeros
    return GraphData(obj.message_graph(), sp.csr_matrix(obj.features), obj.labels)


@dataclass(eq=False)
class GnnModel:
    """Parameter blocks by name; hashed by identity so heuristics can cache per model."""

    params: dict[str, np.ndarray]
    input_dim: int = INPUT_DIM
    hidden_dim: int = HIDDEN_DIM
    num_classes: int = NUM_CLASSES

    def shapes(self) -> dict[str, tuple[int, int]]:
        return param_shapes(self.input_dim, self.hidden_dim, self.num_classes)

    def __post_init__(self):
        for name, shape in self.shapes().items():
            if name not in self.params:
                raise ShapeError(f"missing parameter {name}")
            arr = self.params[name]
            want = shape if shape[1] != 1 else (shape[0],)
            if arr.shape != want:
                raise ShapeError(f"parameter {name}: expected shape {want}, got {arr.shape}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def copy(self) -> GnnModel:
        return GnnModel({k: v.copy() for k, v in self.params.items()},
                        self.input_dim, self.hidden_dim, self.num_classes)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.params.values())


def param_shapes(input_dim=INPUT_DIM, hidden_dim=HIDDEN_DIM, num_classes=NUM_CLASSES):
    return {
        "Ws1": (hidden_dim, input_dim),
        "Wn1": (hidden_dim, input_dim),
        "We1": (hidden_dim, EDGE_DIM),
        "b1": (hidden_dim, 1),
        "Ws2": (hidden_dim, hidden_dim),
        "Wn2": (hidden_dim, hidden_dim),
        "We2": (hidden_dim, EDGE_DIM),
        "b2": (hidden_dim, 1),
        "W": (num_classes, hidden_dim),
        "b": (num_classes, 1),
    }


def _zeros(shape):
    return np.zeros(shape if shape[1] != 1 else (shape[0],))


def zero_model(input_dim=INPUT_DIM, hidden_dim=HIDDEN_DIM, num_classes=NUM_CLASSES) -> GnnModel:
    shapes = param_shapes(input_dim, hidden_dim, num_classes)
    return GnnModel({k: _zeros(s) for k, s in shapes.items()}, input_dim, hidden_dim, num_classes)


def init_model(rng: np.random.Generator, input_dim=INPUT_DIM, hidden_dim=HIDDEN_DIM,
               num_classes=NUM_CLASSES, scale: float = 1.0) -> GnnModel:
    """Weights uniform in [-s, s] with s = scale / sqrt(fan_in); biases zero."""
    params = {}
    for name, shape in param_shapes(input_dim, hidden_dim, num_classes).items():
        if shape[1] == 1:
            params[name] = np.zeros(shape[0])
        else:
            s = scale / math.sqrt(shape[1])
            params[name] = rng.uniform(-s, s, size=shape)
    return GnnModel(params, input_dim, hidden_dim, num_classes)


# ---------------------------------------------------------------------------
# forward / backward


def _layer_weights(model: GnnModel, t: int):
    if t not in (1, 2):
        raise ShapeError(f"layer index must be 1 or 2, got {t}")
    return model[f"Ws{t}"], model[f"Wn{t}"], model[f"We{t}"], model[f"b{t}"]


def forward_layer(model: GnnModel, t: int, h_prev, graph: MessageGraph):
    """One message-passing layer; returns (h, pre-activation).

    The neighbour mean is taken after the linear map, which is the same sum
    as mean-then-map but touches fewer non-zeros for one-hot inputs.
    """
    Ws, Wn, We, b = _layer_weights(model, t)
    if h_prev.ndim != 2 or h_prev.shape[1] != Ws.shape[1]:
        raise ShapeError(
            f"layer {t}: expected node vectors of dim {Ws.shape[1]}, got shape {h_prev.shape}"
        )
    if h_prev.shape[0] != graph.num_nodes:
        raise ShapeError(f"layer {t}: graph has {graph.num_nodes} nodes, got {h_prev.shape[0]} rows")
    hw = h_prev @ np.concatenate([Ws, Wn]).T
    hdim = Ws.shape[0]
    pre = hw[:, :hdim] + graph.mean_adjacency @ hw[:, hdim:] + graph.mean_edge_features @ We.T + b
    return np.maximum(pre, 0.0), pre


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


@dataclass
class _Cache:
    pre1: np.ndarray
    h1: np.ndarray
    pre2: np.ndarray
    h2: np.ndarray
    probs: np.ndarray


def _forward(model: GnnModel, data: GraphData) -> _Cache:
    h1, pre1 = forward_layer(model, 1, data.features, data.graph)
    h2, pre2 = forward_layer(model, 2, h1, data.graph)
    logits = h2 @ model["W"].T + model["b"]
    return _Cache(pre1, h1, pre2, h2, _softmax(logits))


def forward_model(model: GnnModel, data) -> np.ndarray:
    """Per-node class distributions, shape ``(n, num_classes)``."""
    return _forward(model, as_graph_data(data)).probs


def _check_labels(model: GnnModel, labels: np.ndarray) -> None:
    if labels is None:
        raise ValueError("graph has no labels")
    if np.any(labels < 0) or np.any(labels >= model.num_classes):
        bad = labels[(labels < 0) | (labels >= model.num_classes)][0]
        raise ValueError(f"label {bad} outside [0, {model.num_classes - 1}]")


def _nll(probs: np.ndarray, labels: np.ndarray) -> float:
    p = probs[np.arange(len(labels)), labels]
    with np.errstate(divide="ignore"):
        return float(-np.mean(np.log(p)))


def loss(model: GnnModel, data) -> float:
    data = as_graph_data(data)
    _check_labels(model, data.labels)
    return _nll(forward_model(model, data), data.labels)


def _backward(model: GnnModel, data: GraphData, c: _Cache) -> dict[str, np.ndarray]:
    A = data.graph.mean_adjacency
    E = data.graph.mean_edge_features
    x = data.features
    n = len(data.labels)
    d_logits = c.probs.copy()
    d_logits[np.arange(n), data.labels] -= 1.0
    d_logits /= n

    grads = {"W": d_logits.T @ c.h2, "b": d_logits.sum(axis=0)}
    d_pre2 = (d_logits @ model["W"]) * (c.pre2 > 0)
    # messages flow sender -> receiver, so their gradients flow back through A^T
    d_msg2 = A.T @ d_pre2
    grads["Ws2"] = d_pre2.T @ c.h1
    grads["Wn2"] = d_msg2.T @ c.h1
    grads["We2"] = d_pre2.T @ E
    grads["b2"] = d_pre2.sum(axis=0)
    d_h1 = d_pre2 @ model["Ws2"] + d_msg2 @ model["Wn2"]
    d_pre1 = d_h1 * (c.pre1 > 0)
    d_msg1 = A.T @ d_pre1
    hdim = d_pre1.shape[1]
    both = np.asarray(x.T @ np.concatenate([d_pre1, d_msg1], axis=1)).T
    grads["Ws1"] = both[:hdim]
    grads["Wn1"] = both[hdim:]
    grads["We1"] = d_pre1.T @ E
    grads["b1"] = d_pre1.sum(axis=0)
    return grads


def backward(model: GnnModel, data) -> dict[str, np.ndarray]:
    """Exact gradient of :func:`loss` for every parameter."""
    data = as_graph_data(data)
    _check_labels(model, data.labels)
    return _backward(model, data, _forward(model, data))


def accuracy(model: GnnModel, data) -> float:
    data = as_graph_data(data)
    pred = np.argmax(forward_model(model, data), axis=1)
    return float(np.mean(pred == data.labels))


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 300
    rng_seed: int = 0
    weight_init_scale: float = 1.0
    hidden_dim: int = HIDDEN_DIM

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not self.weight_init_scale > 0:
            raise ValueError(f"weight_init_scale must be > 0, got {self.weight_init_scale}")


@dataclass
class TrainResult:
    model: GnnModel
    losses: list[float] = field(default_factory=list)


def train(model: GnnModel | None, data, cfg: TrainConfig) -> TrainResult:
    """Full-batch gradient descent; ``losses[k]`` is the loss before update k+1.

    With ``model=None`` a fresh model is drawn from ``cfg.rng_seed``.
    """
    data = as_graph_data(data)
    if model is None:
        model = init_model(np.random.default_rng(cfg.rng_seed), hidden_dim=cfg.hidden_dim,
                           scale=cfg.weight_init_scale)
    else:
        model = model.copy()
    _check_labels(model, data.labels)
    losses = []
    for epoch in range(cfg.epochs):
        with np.errstate(over="ignore", invalid="ignore"):
            cache = _forward(model, data)
        value = _nll(cache.probs, data.labels)
        if not math.isfinite(value):
            raise TrainingDivergedError(f"non-finite loss {value} at epoch {epoch}")
        losses.append(value)
        grads = _backward(model, data, cache)
        for name, grad in grads.items():
            model.params[name] -= cfg.learning_rate * grad
    if not model.is_finite():
        raise TrainingDivergedError(f"non-finite parameters after epoch {cfg.epochs - 1}")
    return TrainResult(model, losses)


# ---------------------------------------------------------------------------
# inference on the implicit cube graph


def ego_network(g: CubeState) -> tuple[np.ndarray, MessageGraph]:
    """States within two moves of ``g`` (g first) and their induced edges."""
    from .walks import induced_edges

    one = neighbor_batch(g.array[None, :])[0]
    two = neighbor_batch(one).reshape(-1, 54)
    allstates = np.concatenate([g.array[None, :], one, two])
    _, first = np.unique(allstates, axis=0, return_index=True)
    states = np.ascontiguousarray(allstates[np.sort(first)])
    edges = induced_edges(states)
    return states, MessageGraph(len(states), edges[:, 0], edges[:, 1], edges[:, 2])


def predict_proba(model: GnnModel, g: CubeState) -> np.ndarray:
    from .walks import featurize_batch

    states, graph = ego_network(g)
    return forward_model(model, GraphData(graph, featurize_batch(states)))[0]


def predict_class(model: GnnModel, g: CubeState) -> int:
    """argmax of p(g) on the 2-hop ego network; ties go to the smaller class."""
    return int(np.argmax(predict_proba(model, g)))


class ClassPredictor:
    """Batched predict_class for many states.

    On the full 12-regular graph every first-layer neighbour mean is a fixed
    linear map of the node's own one-hot features, so layer 1 collapses into
    one effective weight matrix, which is tabulated per corner/edge cubie.
    """

    def __init__(self, model: GnnModel):
        if model.input_dim != INPUT_DIM:
            raise ShapeError(f"cube inference needs input dim {INPUT_DIM}, got {model.input_dim}")
        self.model = model
        H = model.hidden_dim
        Ws1 = model["Ws1"].reshape(H, 54, 6)
        Wn1 = model["Wn1"].reshape(H, 54, 6)
        # column (j, c) collects Wn1 from where facelet j travels under each move
        w_eff = Ws1 + Wn1[:, INVERSE_PERMS, :].sum(axis=1) / 12.0
        ebar = np.full(EDGE_DIM, 1.0 / EDGE_DIM)
        bias = model["b1"] + model["We1"] @ ebar
        for face, idx in enumerate((4, 13, 22, 31, 40, 49)):
            bias = bias + w_eff[:, idx, face]
        corners = np.array(CORNERS, dtype=np.int64)
        edges = np.array(EDGES, dtype=np.int64)
        tc = np.zeros((8, 216, H))
        for k, (a, b, c) in enumerate(corners):
            for ca in range(6):
                for cb in range(6):
                    for cc in range(6):
                        tc[k, ca * 36 + cb * 6 + cc] = w_eff[:, a, ca] + w_eff[:, b, cb] + w_eff[:, c, cc]
        te = np.zeros((12, 36, H))
        for k, (a, b) in enumerate(edges):
            for ca in range(6):
                for cb in range(6):
                    te[k, ca * 6 + cb] = w_eff[:, a, ca] + w_eff[:, b, cb]
        self._tables = (np.ascontiguousarray(PERMS, dtype=np.int64), corners, edges, tc, te, bias)
        self._w2 = np.concatenate([model["Ws2"], model["Wn2"]], axis=1)
        self._b2 = model["b2"] + model["We2"] @ ebar

    def logits(self, states: np.ndarray, chunk: int = 8192) -> np.ndarray:
        states = np.ascontiguousarray(states, dtype=np.uint8)
        out = np.empty((len(states), self.model.num_classes))
        for s in range(0, len(states), chunk):
            feats = K.layer1_features(states[s:s + chunk], *self._tables)
            z = np.maximum(feats @ self._w2.T + self._b2, 0.0)
            out[s:s + chunk] = z @ self.model["W"].T + self.model["b"]
        return out

    def classes(self, states: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(states), axis=1)


# ---------------------------------------------------------------------------
# checkpoints


def save_model(model: GnnModel, path) -> None:
    lines = [f"{FORMAT_VERSION} {model.input_dim} {model.hidden_dim} {model.num_classes}"]
    for name in PARAM_NAMES:
        arr = model[name]
        mat = arr.reshape(arr.shape[0], -1)
        lines.append(f"{name} {mat.shape[0]} {mat.shape[1]}")
        lines.extend(" ".join(repr(float(v)) for v in row) for row in mat)
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path, expected_dims: tuple[int, int, int] | None = None) -> GnnModel:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise CheckpointError("empty checkpoint")
    head = lines[0].split()
    if len(head) != 4 or head[0] != FORMAT_VERSION:
        raise CheckpointError(f"expected header '{FORMAT_VERSION} <in> <hidden> <classes>', got {lines[0]!r}")
    dims = tuple(int(v) for v in head[1:])
    if expected_dims is not None and dims != tuple(expected_dims):
        names = ("input", "hidden", "classes")
        diffs = [f"{n} expected {e}, got {a}" for n, e, a in zip(names, expected_dims, dims) if e != a]
        raise CheckpointError(f"{FORMAT_VERSION} dimension mismatch: " + "; ".join(diffs))
    shapes = param_shapes(*dims)
    params = {}
    pos = 1
    for name in PARAM_NAMES:
        if pos >= len(lines):
            raise CheckpointError(f"truncated checkpoint: missing block {name}")
        block = lines[pos].split()
        if len(block) != 3 or block[0] != name:
            raise CheckpointError(f"line {pos + 1}: expected block header for {name}")
        rows, cols = int(block[1]), int(block[2])
        if (rows, cols) != shapes[name]:
            raise CheckpointError(
                f"{FORMAT_VERSION} block {name}: expected {shapes[name][0]}x{shapes[name][1]} "
                f"from header dims, got {rows}x{cols}"
            )
        body = lines[pos + 1:pos + 1 + rows]
        if len(body) != rows:
            raise CheckpointError(f"truncated checkpoint in block {name}")
        try:
            mat = np.array([[float(v) for v in row.split()] for row in body])
        except ValueError as exc:
            raise CheckpointError(f"block {name}: {exc}") from None
        if mat.shape != (rows, cols):
            raise CheckpointError(f"truncated checkpoint in block {name}")
        params[name] = mat if cols != 1 else mat[:, 0].copy()
        pos += 1 + rows
    return GnnModel(params, *dims)
