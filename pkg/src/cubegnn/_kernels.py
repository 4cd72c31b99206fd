"""Compiled inner loops for search, BFS and batched inference.

States inside these loops are packed into two uint64 words: the 48 non-centre
facelets as two 24-digit base-6 numbers. The packing is injective on every
facelet colouring with fixed centres, so it doubles as an exact hash key.
"""

import numpy as np
from numba import njit

from .cube import CENTERS, NUM_FACELETS

NONCENTER = np.array([i for i in range(NUM_FACELETS) if i not in CENTERS], dtype=np.int64)
CENTER_IDX = np.array(CENTERS, dtype=np.int64)
_POW6 = np.array([6**k for k in range(24)], dtype=np.uint64)

# search record flags
OPEN, CLOSED, STALE = 0, 1, 2
# run status codes
SOLVED, NEED_EVAL, NEED_GROW, NEED_REHASH, BUDGET, EXHAUSTED, TOO_DEEP = range(7)
# meta slots
(M_NREC, M_CURSOR, M_EXPANDED, M_BUDGET, M_GOAL_REC, M_GOAL_G, M_PEND_LO,
 M_PEND_HI, M_EVAL_DEPTH, M_REOPEN, M_DIRECT, M_GENERATED) = range(12)
META_SIZE = 12


@njit(cache=True, inline="always")
def _mix(hi, lo):
    h = hi * np.uint64(0x9E3779B97F4A7C15)
    h ^= (lo + np.uint64(0x632BE59BD9B4E019)) * np.uint64(0xBF58476D1CE4E5B9)
    h ^= h >> np.uint64(31)
    return h


@njit(cache=True, inline="always")
def _pack_one(state, noncenter):
    hi = np.uint64(0)
    lo = np.uint64(0)
    six = np.uint64(6)
    for k in range(23, -1, -1):
        hi = hi * six + np.uint64(state[noncenter[k]])
        lo = lo * six + np.uint64(state[noncenter[k + 24]])
    return hi, lo


@njit(cache=True, inline="always")
def _unpack_one(hi, lo, noncenter, center_idx, out):
    six = np.uint64(6)
    for k in range(24):
        out[noncenter[k]] = np.uint8(hi % six)
        hi = hi // six
        out[noncenter[k + 24]] = np.uint8(lo % six)
        lo = lo // six
    for f in range(6):
        out[center_idx[f]] = f


@njit(cache=True)
def pack_rows(states, noncenter):
    n = states.shape[0]
    hi = np.empty(n, dtype=np.uint64)
    lo = np.empty(n, dtype=np.uint64)
    for i in range(n):
        hi[i], lo[i] = _pack_one(states[i], noncenter)
    return hi, lo


@njit(cache=True)
def unpack_rows(hi, lo, noncenter, center_idx):
    n = hi.shape[0]
    out = np.empty((n, 54), dtype=np.uint8)
    for i in range(n):
        _unpack_one(hi[i], lo[i], noncenter, center_idx, out[i])
    return out


def pack(states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return pack_rows(np.ascontiguousarray(states, dtype=np.uint8), NONCENTER)


def unpack(hi: np.ndarray, lo: np.ndarray) -> np.ndarray:
    return unpack_rows(np.asarray(hi, np.uint64), np.asarray(lo, np.uint64), NONCENTER, CENTER_IDX)


# ---------------------------------------------------------------------------
# distance table (open addressing, keys + depth per slot)


@njit(cache=True)
def _table_find(t_hi, t_lo, t_depth, hi, lo):
    mask = np.uint64(t_hi.shape[0] - 1)
    s = _mix(hi, lo) & mask
    while True:
        i = np.int64(s)
        if t_depth[i] < 0:
            return i, False
        if t_hi[i] == hi and t_lo[i] == lo:
            return i, True
        s = (s + np.uint64(1)) & mask


@njit(cache=True)
def table_insert_many(t_hi, t_lo, t_depth, hi, lo, depth):
    for k in range(hi.shape[0]):
        i, found = _table_find(t_hi, t_lo, t_depth, hi[k], lo[k])
        if not found:
            t_hi[i] = hi[k]
            t_lo[i] = lo[k]
            t_depth[i] = depth[k]


@njit(cache=True)
def table_lookup(t_hi, t_lo, t_depth, hi, lo):
    out = np.full(hi.shape[0], -1, dtype=np.int8)
    for k in range(hi.shape[0]):
        i, found = _table_find(t_hi, t_lo, t_depth, hi[k], lo[k])
        if found:
            out[k] = t_depth[i]
    return out


@njit(cache=True)
def bfs_layer(t_hi, t_lo, t_depth, f_hi, f_lo, depth, perms, noncenter, center_idx):
    """Expand one frontier; insert unseen children at ``depth`` and return them.

    The caller guarantees the table has room for ``12 * len(frontier)`` more keys
    at load <= 1/2.
    """
    n = f_hi.shape[0]
    out_hi = np.empty(12 * n, dtype=np.uint64)
    out_lo = np.empty(12 * n, dtype=np.uint64)
    state = np.empty(54, dtype=np.uint8)
    child = np.empty(54, dtype=np.uint8)
    k = 0
    for i in range(n):
        _unpack_one(f_hi[i], f_lo[i], noncenter, center_idx, state)
        for m in range(12):
            p = perms[m]
            for j in range(54):
                child[j] = state[p[j]]
            hi, lo = _pack_one(child, noncenter)
            s, found = _table_find(t_hi, t_lo, t_depth, hi, lo)
            if not found:
                t_hi[s] = hi
                t_lo[s] = lo
                t_depth[s] = depth
                out_hi[k] = hi
                out_lo[k] = lo
                k += 1
    return out_hi[:k].copy(), out_lo[:k].copy()


# ---------------------------------------------------------------------------
# A* engine
#
# Records are never moved; a record's id is its generation sequence number.
# The open list is a bucket queue indexed by a precomputed priority rank of
# (depth, class), FIFO within a bucket. Records whose class is still unknown
# wait in a per-depth FIFO and are evaluated (by the Python caller) only when
# their best possible rank could beat the current bucket head.


@njit(cache=True)
def search_rehash(rec_hi, rec_lo, n_rec, table):
    table[:] = -1
    mask = np.uint64(table.shape[0] - 1)
    for r in range(n_rec):
        s = _mix(rec_hi[r], rec_lo[r]) & mask
        while True:
            e = table[np.int64(s)]
            if e == -1 or (rec_hi[e] == rec_hi[r] and rec_lo[e] == rec_lo[r]):
                # later records supersede earlier ones for the same key
                table[np.int64(s)] = r
                break
            s = (s + np.uint64(1)) & mask


@njit(cache=True)
def search_run(perms, rank, rec_hi, rec_lo, rec_parent, rec_move, rec_g, rec_cls,
               rec_flag, rec_next, table, bhead, btail, phead, ptail, meta,
               goal_hi, goal_lo, noncenter, center_idx):
    nranks = bhead.shape[0]
    gmax = rank.shape[0]
    cap = rec_hi.shape[0]
    mask = np.uint64(table.shape[0] - 1)
    state = np.empty(54, dtype=np.uint8)
    child = np.empty(54, dtype=np.uint8)
    direct = meta[M_DIRECT] == 1
    while True:
        cursor = meta[M_CURSOR]
        while cursor < nranks and bhead[cursor] == -1:
            cursor += 1
        meta[M_CURSOR] = cursor

        if not direct:
            d = meta[M_PEND_LO]
            while d <= meta[M_PEND_HI]:
                h = phead[d]
                while h != -1 and rec_flag[h] == STALE:
                    h = rec_next[h]
                phead[d] = h
                if h == -1:
                    ptail[d] = -1
                    if d == meta[M_PEND_LO]:
                        meta[M_PEND_LO] = d + 1
                    d += 1
                    continue
                r = rank[d, 0]
                if cursor == nranks or r < cursor or (r == cursor and h < bhead[cursor]):
                    meta[M_EVAL_DEPTH] = d
                    return NEED_EVAL
                d += 1

        if cursor == nranks:
            return EXHAUSTED
        n_rec = meta[M_NREC]
        if n_rec + 12 > cap:
            return NEED_GROW
        if 2 * (n_rec + 12) > table.shape[0]:
            return NEED_REHASH

        node = bhead[cursor]
        bhead[cursor] = rec_next[node]
        if bhead[cursor] == -1:
            btail[cursor] = -1
        if rec_flag[node] != OPEN:
            continue
        rec_flag[node] = CLOSED
        meta[M_EXPANDED] += 1
        if rec_hi[node] == goal_hi and rec_lo[node] == goal_lo:
            meta[M_GOAL_REC] = node
            return SOLVED
        if meta[M_EXPANDED] >= meta[M_BUDGET]:
            return BUDGET

        g1 = rec_g[node] + 1
        # once a goal record exists at depth G, nothing at depth >= G can be
        # popped ahead of it
        if meta[M_GOAL_G] >= 0 and g1 >= meta[M_GOAL_G]:
            continue
        if g1 >= gmax:
            return TOO_DEEP
        _unpack_one(rec_hi[node], rec_lo[node], noncenter, center_idx, state)
        for m in range(12):
            p = perms[m]
            for j in range(54):
                child[j] = state[p[j]]
            hi, lo = _pack_one(child, noncenter)
            meta[M_GENERATED] += 1
            s = _mix(hi, lo) & mask
            slot = -1
            while True:
                e = table[np.int64(s)]
                if e == -1:
                    slot = np.int64(s)
                    break
                if rec_hi[e] == hi and rec_lo[e] == lo:
                    slot = np.int64(s)
                    break
                s = (s + np.uint64(1)) & mask
            e = table[slot]
            if e != -1:
                if rec_flag[e] == CLOSED:
                    if g1 < rec_g[e]:
                        meta[M_REOPEN] += 1
                    continue
                if rec_g[e] <= g1:
                    continue
                rec_flag[e] = STALE
            r = meta[M_NREC]
            meta[M_NREC] = r + 1
            rec_hi[r] = hi
            rec_lo[r] = lo
            rec_parent[r] = node
            rec_move[r] = m
            rec_g[r] = g1
            rec_flag[r] = OPEN
            rec_next[r] = -1
            table[slot] = r
            is_goal = hi == goal_hi and lo == goal_lo
            if is_goal and (meta[M_GOAL_G] < 0 or g1 < meta[M_GOAL_G]):
                meta[M_GOAL_G] = g1
            if direct:
                rec_cls[r] = 0
                b = rank[g1, 0]
                if btail[b] == -1:
                    bhead[b] = r
                else:
                    rec_next[btail[b]] = r
                btail[b] = r
                if b < meta[M_CURSOR]:
                    meta[M_CURSOR] = b
            else:
                rec_cls[r] = -1
                if ptail[g1] == -1:
                    phead[g1] = r
                else:
                    rec_next[ptail[g1]] = r
                ptail[g1] = r
                if g1 < meta[M_PEND_LO]:
                    meta[M_PEND_LO] = g1
                if g1 > meta[M_PEND_HI]:
                    meta[M_PEND_HI] = g1


@njit(cache=True)
def search_take_pending(d, maxn, rec_flag, rec_next, phead, ptail, out):
    k = 0
    h = phead[d]
    while h != -1 and k < maxn:
        nxt = rec_next[h]
        if rec_flag[h] != STALE:
            out[k] = h
            k += 1
        rec_next[h] = -1
        h = nxt
    phead[d] = h
    if h == -1:
        ptail[d] = -1
    return k


@njit(cache=True)
def search_commit(ids, classes, rank, rec_g, rec_cls, rec_next, bhead, btail, meta):
    for k in range(ids.shape[0]):
        r = ids[k]
        c = classes[k]
        rec_cls[r] = c
        b = rank[rec_g[r], c]
        rec_next[r] = -1
        if btail[b] == -1:
            bhead[b] = r
        else:
            rec_next[btail[b]] = r
        btail[b] = r
        if b < meta[M_CURSOR]:
            meta[M_CURSOR] = b


# ---------------------------------------------------------------------------
# GNN inference on the implicit 12-regular graph


@njit(cache=True, inline="always")
def _hidden1(state, corners, edges, tcorner, tedge, bias, out):
    hdim = bias.shape[0]
    for j in range(hdim):
        out[j] = bias[j]
    for k in range(corners.shape[0]):
        code = state[corners[k, 0]] * 36 + state[corners[k, 1]] * 6 + state[corners[k, 2]]
        row = tcorner[k, code]
        for j in range(hdim):
            out[j] += row[j]
    for k in range(edges.shape[0]):
        code = state[edges[k, 0]] * 6 + state[edges[k, 1]]
        row = tedge[k, code]
        for j in range(hdim):
            out[j] += row[j]
    for j in range(hdim):
        if out[j] <= 0.0:
            out[j] = 0.0


@njit(cache=True)
def layer1_features(states, perms, corners, edges, tcorner, tedge, bias):
    """Per state: [h1(g), mean over the 12 neighbours of h1(g')]."""
    n = states.shape[0]
    hdim = bias.shape[0]
    out = np.zeros((n, 2 * hdim))
    h = np.empty(hdim)
    child = np.empty(54, dtype=np.uint8)
    for i in range(n):
        st = states[i]
        _hidden1(st, corners, edges, tcorner, tedge, bias, h)
        for j in range(hdim):
            out[i, j] = h[j]
        for m in range(12):
            p = perms[m]
            for f in range(54):
                child[f] = st[p[f]]
            _hidden1(child, corners, edges, tcorner, tedge, bias, h)
            for j in range(hdim):
                out[i, hdim + j] += h[j]
        for j in range(hdim):
            out[i, hdim + j] /= 12.0
    return out
