"""Training subgraph from uniform random walks rooted at the solved state."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _kernels as K
from .cube import COLORS, NUM_FACELETS, PERMS, CubeState, Move, decode_state, solved_state
from .gnn import MessageGraph

FEATURE_DIM = NUM_FACELETS * 6
EDGE_DIM = 12
MAX_WALK_LENGTH = 26
_HEADER = "cubegnn-walks"


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class WalkConfig:
    num_walks: int
    walk_length: int
    rng_seed: int = 0

    def __post_init__(self):
        if self.num_walks < 1:
            raise ValueError(f"num_walks must be >= 1, got {self.num_walks}")
        if not 1 <= self.walk_length <= MAX_WALK_LENGTH:
            raise ValueError(f"walk_length must be in [1, {MAX_WALK_LENGTH}], got {self.walk_length}")


@dataclass
class TrainGraph:
    """Deduplicated walk states with min-step labels; node 0 is the solved state.

    ``edges`` holds one row ``(i, j, m)`` per ordered pair with
    ``state[j] = apply_move(state[i], m)``, so every undirected edge appears
    twice (once per direction, with inverse moves).
    """

    states: np.ndarray  # (n, 54) uint8
    labels: np.ndarray  # (n,) int64
    edges: np.ndarray  # (e, 3) int64
    config: WalkConfig | None = None

    @property
    def num_nodes(self) -> int:
        return len(self.states)

    def state(self, i: int) -> CubeState:
        return CubeState.from_array(self.states[i])

    def keys(self) -> list[str]:
        return [str(self.state(i)) for i in range(self.num_nodes)]

    @cached_property
    def features(self) -> np.ndarray:
        return featurize_batch(self.states)

    def message_graph(self) -> MessageGraph:
        return MessageGraph(
            num_nodes=self.num_nodes,
            receivers=self.edges[:, 0],
            senders=self.edges[:, 1],
            moves=self.edges[:, 2],
        )


def featurize(g: CubeState) -> np.ndarray:
    return featurize_batch(g.array[None, :])[0]


def featurize_batch(states: np.ndarray) -> np.ndarray:
    """One-hot colour block per facelet, colour order U R F D L B."""
    n = len(states)
    x = np.zeros((n, NUM_FACELETS, 6))
    x[np.arange(n)[:, None], np.arange(NUM_FACELETS)[None, :], states] = 1.0
    return x.reshape(n, FEATURE_DIM)


def edge_feature(m: Move) -> np.ndarray:
    e = np.zeros(EDGE_DIM)
    e[int(m)] = 1.0
    return e


def _sorted_keys(states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    hi, lo = K.pack(states)
    order = np.lexsort((lo, hi))
    return order, np.stack([hi[order], lo[order]], axis=1)


def _find_rows(sorted_keys: np.ndarray, hi: np.ndarray, lo: np.ndarray) -> np.ndarray:
    """Row index into ``sorted_keys`` for each (hi, lo), or -1 if absent."""
    view = np.ascontiguousarray(sorted_keys).view([("hi", "<u8"), ("lo", "<u8")]).ravel()
    probe = np.empty(len(hi), dtype=view.dtype)
    probe["hi"], probe["lo"] = hi, lo
    pos = np.searchsorted(view, probe)
    pos_c = np.minimum(pos, len(view) - 1)
    hit = (pos < len(view)) & (view[pos_c] == probe)
    return np.where(hit, pos_c, -1)


def induced_edges(states: np.ndarray) -> np.ndarray:
    """All (i, j, m) with states[j] = move m applied to states[i]."""
    n = len(states)
    order, keys = _sorted_keys(states)
    rank_to_node = order
    children = states[:, PERMS].reshape(-1, NUM_FACELETS)
    hi, lo = K.pack(children)
    pos = _find_rows(keys, hi, lo).reshape(n, 12)
    src, mv = np.nonzero(pos >= 0)
    dst = rank_to_node[pos[src, mv]]
    return np.stack([src, dst, mv], axis=1).astype(np.int64)


def _canonical_order(states: np.ndarray, labels: np.ndarray) -> np.ndarray:
    # label first, then packed key: independent of walk order
    hi, lo = K.pack(states)
    return np.lexsort((lo, hi, labels))


def build_graph(states: np.ndarray, labels: np.ndarray, config: WalkConfig | None = None) -> TrainGraph:
    """Deduplicate (state, label) observations keeping the minimum label."""
    hi, lo = K.pack(states)
    order = np.lexsort((labels, lo, hi))
    hi, lo, labels, states = hi[order], lo[order], labels[order], states[order]
    first = np.ones(len(hi), dtype=bool)
    first[1:] = (hi[1:] != hi[:-1]) | (lo[1:] != lo[:-1])
    states, labels = states[first], labels[first]
    canon = _canonical_order(states, labels)
    states = np.ascontiguousarray(states[canon])
    labels = labels[canon].astype(np.int64)
    return TrainGraph(states, labels, induced_edges(states), config)


def run_walks(cfg: WalkConfig) -> TrainGraph:
    rng = np.random.default_rng(cfg.rng_seed)
    moves = rng.integers(0, 12, size=(cfg.num_walks, cfg.walk_length))
    cur = np.repeat(solved_state().array[None, :], cfg.num_walks, axis=0)
    visited = [cur[:1]]
    labels = [np.zeros(1, dtype=np.int64)]
    rows = np.arange(cfg.num_walks)[:, None]
    for t in range(cfg.walk_length):
        cur = cur[rows, PERMS[moves[:, t]]]
        visited.append(cur)
        labels.append(np.full(cfg.num_walks, t + 1, dtype=np.int64))
    graph = build_graph(np.concatenate(visited), np.concatenate(labels), cfg)
    assert graph.labels[0] == 0 and graph.state(0).is_solved()
    return graph


def save_graph(gr: TrainGraph, path) -> None:
    cfg = gr.config
    header = f"{_HEADER} {cfg.num_walks} {cfg.walk_length} {cfg.rng_seed}" if cfg else f"{_HEADER} - - -"
    chars = np.frombuffer(COLORS.encode(), dtype=np.uint8)[gr.states]
    lines = [header]
    lines += [f"{row.tobytes().decode()} {int(lab)}" for row, lab in zip(chars, gr.labels)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_graph(path) -> TrainGraph:
    text = Path(path).read_text()
    lines = text.splitlines()
    cfg = None
    start = 0
    if lines and lines[0].startswith(_HEADER):
        parts = lines[0].split()
        if len(parts) != 4:
            raise DatasetFormatError("line 1: malformed header")
        if parts[1] != "-":
            cfg = WalkConfig(int(parts[1]), int(parts[2]), int(parts[3]))
        start = 1
    states, labels = [], []
    for lineno, line in enumerate(lines[start:], start=start + 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise DatasetFormatError(f"line {lineno}: expected '<facelets> <label>'")
        try:
            g = decode_state(parts[0])
            lab = int(parts[1])
        except ValueError as exc:
            raise DatasetFormatError(f"line {lineno}: {exc}") from None
        if lab < 0:
            raise DatasetFormatError(f"line {lineno}: negative label {lab}")
        states.append(g.array)
        labels.append(lab)
    if not states:
        raise DatasetFormatError("no nodes")
    states = np.ascontiguousarray(np.stack(states))
    return TrainGraph(states, np.array(labels, dtype=np.int64), induced_edges(states), cfg)
