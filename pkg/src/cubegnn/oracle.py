"""Exact distance-to-solved oracle by breadth-first search from the solved state."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .cube import PERMS, CubeState, solved_state

MAX_DEPTH_CAP = 7


class OracleDepthError(ValueError):
    """Raised when a BFS cap would exceed the memory guard."""


class InsufficientDepthError(LookupError):
    pass


@dataclass
class DistanceTable:
    """Exact d0 for every state within ``depth_cap`` moves of solved."""

    depth_cap: int
    counts: list[int]
    _hi: np.ndarray = field(repr=False)
    _lo: np.ndarray = field(repr=False)
    _depth: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return sum(self.counts)

    def lookup_batch(self, states: np.ndarray) -> np.ndarray:
        """Distances for an ``(n, 54)`` array; -1 marks states beyond the cap."""
        hi, lo = K.pack(states)
        return K.table_lookup(self._hi, self._lo, self._depth, hi, lo).astype(np.int64)

    def lookup(self, g: CubeState) -> int | None:
        d = int(self.lookup_batch(g.array[None, :])[0])
        return None if d < 0 else d

    def dump_counts(self) -> str:
        return "".join(f"{d} {n}\n" for d, n in enumerate(self.counts))


def _capacity_for(n: int) -> int:
    cap = 1024
    while cap < 2 * n:
        cap *= 2
    return cap


def _regrow(hi, lo, depth, need):
    cap = _capacity_for(need)
    if cap <= len(hi):
        return hi, lo, depth
    live = depth >= 0
    nhi = np.zeros(cap, dtype=np.uint64)
    nlo = np.zeros(cap, dtype=np.uint64)
    ndepth = np.full(cap, -1, dtype=np.int8)
    K.table_insert_many(nhi, nlo, ndepth, hi[live], lo[live], depth[live])
    return nhi, nlo, ndepth


def bfs_distances(depth_cap: int) -> DistanceTable:
    if not 0 <= depth_cap <= MAX_DEPTH_CAP:
        raise OracleDepthError(
            f"depth cap {depth_cap} outside [0, {MAX_DEPTH_CAP}]; deeper balls exceed the memory guard"
        )
    perms = np.ascontiguousarray(PERMS, dtype=np.int64)
    f_hi, f_lo = K.pack(solved_state().array[None, :])
    hi = np.zeros(1024, dtype=np.uint64)
    lo = np.zeros(1024, dtype=np.uint64)
    depth = np.full(1024, -1, dtype=np.int8)
    K.table_insert_many(hi, lo, depth, f_hi, f_lo, np.zeros(1, dtype=np.int8))
    counts = [1]
    total = 1
    for d in range(1, depth_cap + 1):
        hi, lo, depth = _regrow(hi, lo, depth, total + 12 * len(f_hi))
        f_hi, f_lo = K.bfs_layer(hi, lo, depth, f_hi, f_lo, d, perms, K.NONCENTER, K.CENTER_IDX)
        counts.append(len(f_hi))
        total += len(f_hi)
    return DistanceTable(depth_cap, counts, hi, lo, depth)


def lookup(table: DistanceTable, g: CubeState) -> int | None:
    return table.lookup(g)


def count_decreasing_edges(table: DistanceTable, g: CubeState) -> int:
    """Number of the 12 moves from ``g`` that bring it one step closer to solved."""
    d = table.lookup(g)
    children = g.array[PERMS]
    nd = table.lookup_batch(children)
    if d is None or np.any(nd < 0):
        raise InsufficientDepthError(
            f"state or one of its neighbours lies beyond depth cap {table.depth_cap}"
        )
    return int(np.sum(nd == d - 1))


def transition_counts(table: DistanceTable, depth: int) -> dict[int, int]:
    """Histogram of neighbour-depth offsets (-1, 0, +1) over one BFS layer.

    Only layers strictly inside the cap are fully resolvable.
    """
    if depth >= table.depth_cap:
        raise InsufficientDepthError(f"layer {depth} needs cap > {depth}")
    live = table._depth == depth
    states = K.unpack(table._hi[live], table._lo[live])
    nd = table.lookup_batch(states[:, PERMS].reshape(-1, 54)) - depth
    values, counts = np.unique(nd, return_counts=True)
    return {int(v): int(c) for v, c in zip(values, counts)}


def decreasing_edge_histogram(table: DistanceTable, depth: int) -> dict[int, int]:
    """Distribution of k (number of distance-decreasing moves) over one layer."""
    if depth >= table.depth_cap:
        raise InsufficientDepthError(f"layer {depth} needs cap > {depth}")
    live = table._depth == depth
    states = K.unpack(table._hi[live], table._lo[live])
    nd = table.lookup_batch(states[:, PERMS].reshape(-1, 54)).reshape(-1, 12)
    k = np.sum(nd == depth - 1, axis=1)
    values, counts = np.unique(k, return_counts=True)
    return {int(v): int(c) for v, c in zip(values, counts)}
