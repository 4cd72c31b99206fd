"""Rubik's cube group: facelet states, the 12 quarter-turn generators, scrambles.

Facelets are indexed in URFDLB face order, nine per face, row-major as seen by
an observer facing that face with the cube held F-front / U-top::

                 U0 U1 U2
                 U3 U4 U5
                 U6 U7 U8
    L36 L37 L38  F18 F19 F20  R9  R10 R11  B45 B46 B47
    L39 L40 L41  F21 F22 F23  R12 R13 R14  B48 B49 B50
    L42 L43 L44  F24 F25 F26  R15 R16 R17  B51 B52 B53
                 D27 D28 D29
                 D30 D31 D32
                 D33 D34 D35

A state stores one colour code per facelet (0..5 for U, R, F, D, L, B).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

COLORS = "URFDLB"
NUM_FACELETS = 54
CENTERS = (4, 13, 22, 31, 40, 49)

# new[i] = old[perm[i]] for a clockwise quarter turn of each face
_CLOCKWISE = {
    "U": [6, 3, 0, 7, 4, 1, 8, 5, 2, 45, 46, 47, 12, 13, 14, 15, 16, 17, 9, 10, 11,
          21, 22, 23, 24, 25, 26, 27, 28, 29, 30, 31, 32, 33, 34, 35, 18, 19, 20,
          39, 40, 41, 42, 43, 44, 36, 37, 38, 48, 49, 50, 51, 52, 53],
    "D": [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 24, 25, 26, 18, 19, 20,
          21, 22, 23, 42, 43, 44, 33, 30, 27, 34, 31, 28, 35, 32, 29, 36, 37, 38,
          39, 40, 41, 51, 52, 53, 45, 46, 47, 48, 49, 50, 15, 16, 17],
    "L": [53, 1, 2, 50, 4, 5, 47, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 0, 19,
          20, 3, 22, 23, 6, 25, 26, 18, 28, 29, 21, 31, 32, 24, 34, 35, 42, 39, 36,
          43, 40, 37, 44, 41, 38, 45, 46, 33, 48, 49, 30, 51, 52, 27],
    "R": [0, 1, 20, 3, 4, 23, 6, 7, 26, 15, 12, 9, 16, 13, 10, 17, 14, 11, 18, 19,
          29, 21, 22, 32, 24, 25, 35, 27, 28, 51, 30, 31, 48, 33, 34, 45, 36, 37,
          38, 39, 40, 41, 42, 43, 44, 8, 46, 47, 5, 49, 50, 2, 52, 53],
    "F": [0, 1, 2, 3, 4, 5, 44, 41, 38, 6, 10, 11, 7, 13, 14, 8, 16, 17, 24, 21, 18,
          25, 22, 19, 26, 23, 20, 15, 12, 9, 30, 31, 32, 33, 34, 35, 36, 37, 27,
          39, 40, 28, 42, 43, 29, 45, 46, 47, 48, 49, 50, 51, 52, 53],
    "B": [11, 14, 17, 3, 4, 5, 6, 7, 8, 9, 10, 35, 12, 13, 34, 15, 16, 33, 18, 19,
          20, 21, 22, 23, 24, 25, 26, 27, 28, 29, 30, 31, 32, 36, 39, 42, 2, 37, 38,
          1, 40, 41, 0, 43, 44, 51, 48, 45, 52, 49, 46, 53, 50, 47],
}

# facelet indices sharing one corner or edge cubie
CORNERS = ((0, 36, 47), (2, 11, 45), (6, 18, 38), (8, 9, 20),
           (15, 26, 29), (17, 35, 51), (24, 27, 44), (33, 42, 53))
EDGES = ((1, 46), (3, 37), (5, 10), (7, 19), (12, 23), (14, 48),
         (16, 32), (21, 41), (25, 28), (30, 43), (34, 52), (39, 50))


class Move(enum.IntEnum):
    """The 12 generators of S and their inverses; the value is the edge colour."""

    U = 0
    Ui = 1
    D = 2
    Di = 3
    L = 4
    Li = 5
    R = 6
    Ri = 7
    F = 8
    Fi = 9
    B = 10
    Bi = 11

    @property
    def face(self) -> str:
        return self.name[0]

    @property
    def clockwise(self) -> bool:
        return self.value % 2 == 0

    @property
    def inverse(self) -> Move:
        return Move(self.value ^ 1)

    @property
    def notation(self) -> str:
        return self.face if self.clockwise else self.face + "'"

    def __str__(self) -> str:
        return self.notation


MOVES = tuple(Move)


def _compose(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    # apply p then q under the pull convention
    return p[q]


def _build_tables() -> np.ndarray:
    perms = np.empty((12, NUM_FACELETS), dtype=np.intp)
    for m in MOVES:
        cw = np.array(_CLOCKWISE[m.face], dtype=np.intp)
        if m.clockwise:
            perms[m] = cw
        else:
            perms[m] = _compose(_compose(cw, cw), cw)
    perms.setflags(write=False)
    return perms


#: PERMS[m][i] is the facelet whose colour lands on facelet i after move m.
PERMS = _build_tables()
#: INVERSE_PERMS[m][j] is where facelet j's colour goes under move m.
INVERSE_PERMS = np.argsort(PERMS, axis=1)
INVERSE_PERMS.setflags(write=False)


class ScrambleError(ValueError):
    pass


class StateKeyError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class CubeState:
    """Immutable 54-facelet cube configuration (colour codes 0..5)."""

    codes: bytes

    @property
    def array(self) -> np.ndarray:
        return np.frombuffer(self.codes, dtype=np.uint8)

    @classmethod
    def from_array(cls, arr) -> CubeState:
        return cls(np.asarray(arr, dtype=np.uint8).tobytes())

    @classmethod
    def from_string(cls, text: str) -> CubeState:
        return decode_state(text)

    def __str__(self) -> str:
        return encode_state(self)

    def is_solved(self) -> bool:
        return self.codes == _SOLVED_CODES


_SOLVED_CODES = bytes(i // 9 for i in range(NUM_FACELETS))


def solved_state() -> CubeState:
    return CubeState(_SOLVED_CODES)


def apply_move(g: CubeState, m: Move) -> CubeState:
    return CubeState(g.array[PERMS[m]].tobytes())


def apply_moves(g: CubeState, moves) -> CubeState:
    arr = g.array
    for m in moves:
        arr = arr[PERMS[m]]
    return CubeState.from_array(arr)


def neighbors(g: CubeState) -> list[tuple[Move, CubeState]]:
    children = g.array[PERMS]
    return [(m, CubeState(children[m].tobytes())) for m in MOVES]


def apply_move_batch(states: np.ndarray, moves: np.ndarray) -> np.ndarray:
    """Apply ``moves[i]`` to row ``i`` of an ``(n, 54)`` uint8 array."""
    rows = np.arange(len(states))[:, None]
    return states[rows, PERMS[moves]]


def neighbor_batch(states: np.ndarray) -> np.ndarray:
    """All 12 children of every row: shape ``(n, 12, 54)`` in move order."""
    return states[:, PERMS]


_TOKENS = {m.notation: m for m in MOVES}


def parse_scramble(text: str) -> list[Move]:
    moves = []
    for pos, tok in enumerate(text.split()):
        try:
            moves.append(_TOKENS[tok])
        except KeyError:
            raise ScrambleError(f"unknown move token {tok!r} at position {pos}") from None
    return moves


def format_moves(moves) -> str:
    return " ".join(Move(m).notation for m in moves)


def invert_moves(moves) -> list[Move]:
    return [Move(m).inverse for m in reversed(list(moves))]


_CODE_OF = {c: i for i, c in enumerate(COLORS)}
_CHAR_TABLE = np.frombuffer(COLORS.encode(), dtype=np.uint8)


def encode_state(g: CubeState) -> str:
    """StateKey: the 54-character URFDLB facelet string."""
    return _CHAR_TABLE[g.array].tobytes().decode()


def decode_state(key: str) -> CubeState:
    """Inverse of :func:`encode_state`.

    Checks length, alphabet, per-colour counts and centres. Group reachability
    (parity/orientation) is not verified.
    """
    if len(key) != NUM_FACELETS:
        raise StateKeyError(f"state key must have {NUM_FACELETS} characters, got {len(key)}")
    try:
        codes = bytes(_CODE_OF[c] for c in key)
    except KeyError as exc:
        raise StateKeyError(f"unknown colour code {exc.args[0]!r}") from None
    counts = np.bincount(np.frombuffer(codes, dtype=np.uint8), minlength=6)
    if not np.all(counts == 9):
        bad = {COLORS[i]: int(n) for i, n in enumerate(counts) if n != 9}
        raise StateKeyError(f"each colour must appear 9 times, got {bad}")
    for face, idx in enumerate(CENTERS):
        if codes[idx] != face:
            raise StateKeyError(f"centre facelet {idx} must be {COLORS[face]}")
    return CubeState(codes)


def random_scramble(rng: np.random.Generator, length: int) -> list[Move]:
    return [MOVES[i] for i in rng.integers(0, 12, size=length)]
