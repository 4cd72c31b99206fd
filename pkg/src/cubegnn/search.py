"""A* over the implicit cube graph with the learned class heuristic h = lambda * y_hat.

The open list orders nodes by (f, -depth, generation order) with
f = depth + lambda * class. Since ``lambda <= 1/26`` the class never moves a
node past more than one depth layer, so the priority of a (depth, class) pair
is precomputed as an integer rank and the open list is a bucket queue.

Classes are computed lazily: a freshly generated node waits in a per-depth
FIFO until its best possible rank could compete with the current best bucket.
Evaluation order never affects pop order (each depth's nodes enter the buckets
in generation order), only how many classes get computed.
"""

from __future__ import annotations

import time
import weakref
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .cube import PERMS, CubeState, Move, apply_moves, solved_state
from .gnn import ClassPredictor, GnnModel

DIAMETER = 26
NUM_CLASSES = DIAMETER + 1
MAX_DEPTH = 64
DEFAULT_NODE_BUDGET = 1_000_000


@dataclass(frozen=True)
class HeuristicConfig:
    lam: float = 1.0 / DIAMETER
    cache_capacity: int = 0

    def __post_init__(self):
        if not 0.0 < self.lam <= 1.0 / DIAMETER:
            raise ValueError(f"lambda must lie in (0, 1/{DIAMETER}], got {self.lam}")
        if self.cache_capacity < 0:
            raise ValueError("cache_capacity must be >= 0")


@dataclass
class SearchResult:
    path: list[Move]
    expanded_nodes: int
    wall_time: float
    solved: bool
    generated_nodes: int = 0
    heuristic_evals: int = 0
    reopen_attempts: int = 0
    status: str = "solved"

    @property
    def length(self) -> int:
        return len(self.path)


class Heuristic:
    """Maps a batch of states to integer classes in [0, 26]; h = lam * class."""

    lam: float = 1.0 / DIAMETER
    #: classes known to be zero without evaluation (uniform-cost search)
    trivial: bool = False

    def classes(self, states: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def value(self, g: CubeState) -> float:
        if g.is_solved():
            return 0.0
        return self.lam * int(self.classes(g.array[None, :])[0])


class ZeroHeuristic(Heuristic):
    trivial = True

    def classes(self, states):
        return np.zeros(len(states), dtype=np.int64)


class GnnHeuristic(Heuristic):
    """Learned heuristic; per-state values are memoised by state key."""

    def __init__(self, model: GnnModel, cfg: HeuristicConfig | None = None):
        self.cfg = cfg or HeuristicConfig()
        self.lam = self.cfg.lam
        self.model = model
        self._predictor = ClassPredictor(model)
        self._cache: OrderedDict[bytes, float] = OrderedDict()

    def classes(self, states):
        return np.minimum(self._predictor.classes(states), DIAMETER)

    def value(self, g: CubeState) -> float:
        hit = self._cache.get(g.codes)
        if hit is not None:
            self._cache.move_to_end(g.codes)
            return hit
        v = super().value(g)
        self._cache[g.codes] = v
        cap = self.cfg.cache_capacity
        if cap and len(self._cache) > cap:
            self._cache.popitem(last=False)
        return v


class OracleHeuristic(Heuristic):
    """lam * min(d0, cap + 1) from an exact distance table."""

    def __init__(self, table, lam: float = 1.0 / DIAMETER):
        self.table = table
        self.lam = lam

    def classes(self, states):
        d = self.table.lookup_batch(states)
        return np.where(d < 0, self.table.depth_cap + 1, d)


_HEURISTICS: weakref.WeakKeyDictionary = weakref.WeakKeyDictionary()


def heuristic(g: CubeState, model: GnnModel, cfg: HeuristicConfig | None = None) -> float:
    """h(g) = 0 at the solved state, lam * predicted class elsewhere."""
    cfg = cfg or HeuristicConfig()
    per_model = _HEURISTICS.setdefault(model, {})
    h = per_model.get(cfg)
    if h is None:
        h = per_model[cfg] = GnnHeuristic(model, cfg)
    return h.value(g)


def priority_ranks(lam: float, max_depth: int = MAX_DEPTH) -> np.ndarray:
    """rank[g, c]: position of (depth g, class c) in (f, -depth) order."""
    pairs = [(g + lam * c, -g, g, c) for g in range(max_depth) for c in range(NUM_CLASSES)]
    pairs.sort()
    rank = np.empty((max_depth, NUM_CLASSES), dtype=np.int64)
    for r, (_, _, g, c) in enumerate(pairs):
        rank[g, c] = r
    return rank


class _Engine:
    def __init__(self, start: CubeState, h: Heuristic, budget: int, chunk: int):
        self.h = h
        self.chunk = chunk
        self.rank = priority_ranks(h.lam)
        cap = 1 << 14
        self.rec_hi = np.zeros(cap, np.uint64)
        self.rec_lo = np.zeros(cap, np.uint64)
        self.rec_parent = np.full(cap, -1, np.int32)
        self.rec_move = np.zeros(cap, np.int8)
        self.rec_g = np.zeros(cap, np.int16)
        self.rec_cls = np.zeros(cap, np.int8)
        self.rec_flag = np.zeros(cap, np.uint8)
        self.rec_next = np.full(cap, -1, np.int32)
        self.table = np.full(1 << 15, -1, np.int32)
        nr = self.rank.size
        self.bhead = np.full(nr, -1, np.int32)
        self.btail = np.full(nr, -1, np.int32)
        self.phead = np.full(MAX_DEPTH, -1, np.int32)
        self.ptail = np.full(MAX_DEPTH, -1, np.int32)
        self.meta = np.zeros(K.META_SIZE, np.int64)
        self.meta[K.M_BUDGET] = budget
        self.meta[K.M_GOAL_REC] = -1
        self.meta[K.M_GOAL_G] = -1
        self.meta[K.M_PEND_LO] = MAX_DEPTH
        self.meta[K.M_PEND_HI] = -1
        self.meta[K.M_DIRECT] = 1 if h.trivial else 0
        self.evals = 0
        self.goal_hi, self.goal_lo = (v[0] for v in K.pack(solved_state().array[None, :]))
        self.perms = np.ascontiguousarray(PERMS, dtype=np.int64)
        self._seed(start)

    def _seed(self, start):
        hi, lo = K.pack(start.array[None, :])
        self.rec_hi[0], self.rec_lo[0] = hi[0], lo[0]
        self.meta[K.M_NREC] = 1
        K.search_rehash(self.rec_hi, self.rec_lo, 1, self.table)
        if hi[0] == self.goal_hi and lo[0] == self.goal_lo:
            self.meta[K.M_GOAL_G] = 0
        cls = 0 if (self.h.trivial or start.is_solved()) else int(self.h.classes(start.array[None, :])[0])
        self.evals += 0 if (self.h.trivial or start.is_solved()) else 1
        K.search_commit(np.zeros(1, np.int64), np.array([cls], np.int64), self.rank,
                        self.rec_g, self.rec_cls, self.rec_next, self.bhead, self.btail, self.meta)

    def _grow(self):
        n = len(self.rec_hi)
        for name, fill in (("rec_hi", 0), ("rec_lo", 0), ("rec_parent", -1), ("rec_move", 0),
                           ("rec_g", 0), ("rec_cls", 0), ("rec_flag", 0), ("rec_next", -1)):
            old = getattr(self, name)
            new = np.full(2 * n, fill, old.dtype)
            new[:n] = old
            setattr(self, name, new)

    def _rehash(self):
        self.table = np.full(2 * len(self.table), -1, np.int32)
        K.search_rehash(self.rec_hi, self.rec_lo, int(self.meta[K.M_NREC]), self.table)

    def _evaluate(self):
        d = int(self.meta[K.M_EVAL_DEPTH])
        out = np.empty(self.chunk, np.int64)
        k = K.search_take_pending(d, self.chunk, self.rec_flag, self.rec_next,
                                  self.phead, self.ptail, out)
        ids = out[:k]
        states = K.unpack(self.rec_hi[ids], self.rec_lo[ids])
        goal = (self.rec_hi[ids] == self.goal_hi) & (self.rec_lo[ids] == self.goal_lo)
        classes = np.zeros(k, np.int64)
        todo = ~goal
        if todo.any():
            classes[todo] = self.h.classes(states[todo])
            self.evals += int(todo.sum())
        if np.any((classes < 0) | (classes >= NUM_CLASSES)):
            raise ValueError("heuristic returned a class outside [0, 26]")
        K.search_commit(ids, classes, self.rank, self.rec_g, self.rec_cls, self.rec_next,
                        self.bhead, self.btail, self.meta)

    def run(self) -> int:
        while True:
            status = K.search_run(
                self.perms, self.rank, self.rec_hi, self.rec_lo, self.rec_parent, self.rec_move,
                self.rec_g, self.rec_cls, self.rec_flag, self.rec_next, self.table, self.bhead,
                self.btail, self.phead, self.ptail, self.meta, self.goal_hi, self.goal_lo,
                K.NONCENTER, K.CENTER_IDX,
            )
            if status == K.NEED_EVAL:
                self._evaluate()
            elif status == K.NEED_GROW:
                self._grow()
            elif status == K.NEED_REHASH:
                self._rehash()
            else:
                return status

    def path(self) -> list[Move]:
        moves = []
        r = int(self.meta[K.M_GOAL_REC])
        while self.rec_parent[r] >= 0:
            moves.append(Move(int(self.rec_move[r])))
            r = int(self.rec_parent[r])
        return moves[::-1]


_STATUS = {K.SOLVED: "solved", K.BUDGET: "budget", K.EXHAUSTED: "exhausted", K.TOO_DEEP: "too-deep"}


def search(start: CubeState, h: Heuristic, node_budget: int = DEFAULT_NODE_BUDGET,
           chunk: int = 4096) -> SearchResult:
    """Best-first search from ``start`` to the solved state.

    Ties in f go to the deeper node, then to the earlier-generated one
    (children are generated in move order). ``expanded_nodes`` counts nodes
    popped and closed, the goal included.
    """
    t0 = time.perf_counter()
    eng = _Engine(start, h, node_budget, chunk)
    status = eng.run()
    elapsed = time.perf_counter() - t0
    solved = status == K.SOLVED
    return SearchResult(
        path=eng.path() if solved else [],
        expanded_nodes=int(eng.meta[K.M_EXPANDED]),
        wall_time=elapsed,
        solved=solved,
        generated_nodes=int(eng.meta[K.M_GENERATED]),
        heuristic_evals=eng.evals,
        reopen_attempts=int(eng.meta[K.M_REOPEN]),
        status=_STATUS[status],
    )


def astar(start: CubeState, model: GnnModel | Heuristic, cfg: HeuristicConfig | None = None,
          node_budget: int = DEFAULT_NODE_BUDGET) -> SearchResult:
    h = model if isinstance(model, Heuristic) else GnnHeuristic(model, cfg)
    return search(start, h, node_budget)


def zero_heuristic_search(start: CubeState, node_budget: int = DEFAULT_NODE_BUDGET) -> SearchResult:
    return search(start, ZeroHeuristic(), node_budget)


def replays_to_solved(start: CubeState, path) -> bool:
    return apply_moves(start, path).is_solved()
