"""Point location and coordinate transport through iterated barycentric subdivisions.

A vertex of ``Sd^k sigma`` is identified by a recursive key.  Base vertices
(level 0) are plain ints ``0..n``.  A level-(k+1) vertex is the barycenter of
a simplex of ``Sd^k sigma`` and is keyed by the sorted tuple of that
simplex's level-k keys.  A singleton tuple ``(w,)`` is the level-(k+1) copy
of ``w`` itself.  Python's native ordering on these tuples is the canonical
order used for sorting children.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from itertools import combinations
from typing import Hashable, Iterable, Sequence, Union

import numpy as np

from .geometry import DEFAULT_TOL, EnclosingSimplex, OutsideSimplexError, barycentric_from_ambient

VertexKey = Union[int, tuple]


def key_level(key: VertexKey) -> int:
    level = 0
    while isinstance(key, tuple):
        key = key[0]
        level += 1
    return level


def key_to_str(key: VertexKey) -> str:
    if isinstance(key, tuple):
        return "(" + ",".join(key_to_str(k) for k in key) + ")"
    return f"b{key}"


_TOKEN = re.compile(r"\(|\)|,|b\d+")


def key_from_str(text: str) -> VertexKey:
    tokens = _TOKEN.findall(text)
    if "".join(tokens) != text:
        raise ValueError(f"malformed vertex key {text!r}")
    pos = 0

    def parse() -> VertexKey:
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        if tok.startswith("b"):
            return int(tok[1:])
        if tok != "(":
            raise ValueError(f"malformed vertex key {text!r}")
        children = [parse()]
        while tokens[pos] == ",":
            pos += 1
            children.append(parse())
        if tokens[pos] != ")":
            raise ValueError(f"malformed vertex key {text!r}")
        pos += 1
        return tuple(children)

    try:
        key = parse()
    except IndexError:
        raise ValueError(f"malformed vertex key {text!r}") from None
    if pos != len(tokens):
        raise ValueError(f"trailing characters in vertex key {text!r}")
    return key


class VertexInterner:
    """Insertion-ordered bijection between vertex keys and dense integer ids."""

    def __init__(self, keys: Iterable[Hashable] = ()):
        self._ids: dict = {}
        self._keys: list = []
        for key in keys:
            self.intern(key)

    def intern(self, key) -> int:
        vid = self._ids.get(key)
        if vid is None:
            vid = len(self._keys)
            self._ids[key] = vid
            self._keys.append(key)
        return vid

    def id_of(self, key):
        """Id of an already interned key, or None."""
        return self._ids.get(key)

    def key_of(self, vid: int):
        return self._keys[vid]

    def keys(self) -> list:
        return list(self._keys)

    def __contains__(self, key) -> bool:
        return key in self._ids

    def __len__(self) -> int:
        return len(self._keys)


@dataclass(frozen=True)
class SparseActivation:
    """Coordinates of a point w.r.t. the maximal simplex of ``Sd^k sigma`` holding it.

    Exactly n+1 entries; zero coefficients are kept.
    """

    level: int
    ids: tuple
    coefs: tuple

    def as_dict(self, drop_zeros: bool = False) -> dict:
        return {v: c for v, c in zip(self.ids, self.coefs) if not (drop_zeros and c == 0.0)}


@dataclass(frozen=True)
class SubdivisionMatrices:
    P: np.ndarray
    Q: np.ndarray


def subdivision_matrices(n: int) -> SubdivisionMatrices:
    """P maps sorted parent coordinates to child coordinates; Q undoes it."""
    P = np.zeros((n + 1, n + 1))
    for j in range(n + 1):
        P[j, j] = j + 1
        if j > 0:
            P[j, j - 1] = -j
    Q = np.zeros((n + 1, n + 1))
    for j in range(n + 1):
        Q[j, : j + 1] = 1.0 / (j + 1)
    return SubdivisionMatrices(P, Q)


def locate_ordering(b, tol: float = DEFAULT_TOL) -> tuple:
    """Ordering (i_0, ..., i_n) with b[i_0] >= ... >= b[i_n]; ties keep ascending index."""
    b = np.asarray(b, dtype=float)
    if np.any(b < -tol):
        raise OutsideSimplexError(f"negative barycentric coordinate in {b.tolist()}")
    return tuple(int(i) for i in np.argsort(-b, kind="stable"))


def subdivide_coords(b, ordering: Sequence[int], tol: float = DEFAULT_TOL) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    sb = b[list(ordering)]
    out = np.empty_like(sb)
    out[:-1] = np.arange(1, len(sb)) * (sb[:-1] - sb[1:])
    out[-1] = len(sb) * sb[-1]
    if np.any(out < -tol):
        raise OutsideSimplexError(f"ordering {tuple(ordering)} does not contain the point")
    return out


def reconstruct_coords(b1, ordering: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`subdivide_coords`: parent coordinates in original index order."""
    n = len(ordering) - 1
    sb = np.asarray(b1, dtype=float) @ subdivision_matrices(n).Q
    b = np.empty_like(sb)
    b[list(ordering)] = sb
    return b


def child_vertex_keys(ordering: Sequence[int], parent_keys: Sequence[VertexKey]) -> list:
    chosen = [parent_keys[i] for i in ordering]
    return [tuple(sorted(chosen[: j + 1])) for j in range(len(chosen))]


def locate(x, level: int, simplex: EnclosingSimplex, tol: float = DEFAULT_TOL):
    """Keys of the containing maximal simplex of ``Sd^level sigma`` and the coordinates in it."""
    if level < 0:
        raise ValueError("level must be >= 0")
    b = barycentric_from_ambient(simplex, x)
    if np.any(b < -tol):
        raise OutsideSimplexError(f"point {np.asarray(x).tolist()} is outside the simplex")
    keys: list = list(range(simplex.dimension + 1))
    for _ in range(level):
        ordering = locate_ordering(b, tol)
        keys = child_vertex_keys(ordering, keys)
        b = subdivide_coords(b, ordering, tol)
    return keys, b


def activation(
    x, level: int, simplex: EnclosingSimplex, interner: VertexInterner, tol: float = DEFAULT_TOL
) -> SparseActivation:
    keys, b = locate(x, level, simplex, tol)
    ids = tuple(interner.intern(k) for k in keys)
    return SparseActivation(level, ids, tuple(float(c) for c in b))


def vertex_ambient_position(key: VertexKey, simplex: EnclosingSimplex) -> np.ndarray:
    if isinstance(key, tuple):
        return np.mean([vertex_ambient_position(k, simplex) for k in key], axis=0)
    return simplex.vertex_matrix[key].copy()


def level_one_vertices(n: int) -> list:
    """All vertices of ``Sd sigma``, ordered by face size then lexicographically."""
    return [c for size in range(1, n + 2) for c in combinations(range(n + 1), size)]


def dense_activation(act: SparseActivation, interner: VertexInterner, order: Sequence) -> np.ndarray:
    """Expand ``act`` into a dense vector indexed by the vertex keys in ``order``."""
    position = {key: i for i, key in enumerate(order)}
    out = np.zeros(len(order))
    for vid, c in zip(act.ids, act.coefs):
        out[position[interner.key_of(vid)]] += c
    return out


def subdivision_census(n: int, k: int) -> tuple:
    """(number of maximal simplices of Sd^k sigma, number of vertices of Sd sigma)."""
    if n < 1 or k < 0:
        raise ValueError("need n >= 1 and k >= 0")
    return math.factorial(n + 1) ** k, 2 ** (n + 1) - 1
