"""The enclosing simplex and closed-form barycentric coordinates.

The simplex has vertex 0 at the origin and vertex i at ``n * e_i``.  It
contains the unit hypercube, so any dataset rescaled into ``[0, 1]^n``
lies inside it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_TOL = 1e-9


class OutsideSimplexError(ValueError):
    """A point (or coordinate vector) does not lie in the enclosing simplex."""


@dataclass(frozen=True)
class EnclosingSimplex:
    dimension: int
    vertex_matrix: np.ndarray  # (n+1, n), rows are vertices
    coord_matrix: np.ndarray  # (n+1, n+1), (1 | x) @ M gives barycentric coords

    @property
    def n(self) -> int:
        return self.dimension

    @property
    def augmented(self) -> np.ndarray:
        """T = (1 | S); b @ T == (1 | x)."""
        return np.hstack([np.ones((self.dimension + 1, 1)), self.vertex_matrix])


def build_simplex(n: int) -> EnclosingSimplex:
    if int(n) != n or n < 1:
        raise ValueError(f"simplex dimension must be a positive integer, got {n!r}")
    n = int(n)
    S = np.zeros((n + 1, n))
    S[1:, :] = n * np.eye(n)
    M = np.zeros((n + 1, n + 1))
    M[0, 0] = 1.0
    M[1:, 0] = -1.0 / n
    M[1:, 1:] = np.eye(n) / n
    S.setflags(write=False)
    M.setflags(write=False)
    return EnclosingSimplex(n, S, M)


def _check_dim(simplex: EnclosingSimplex, x: np.ndarray) -> None:
    if x.shape[-1] != simplex.dimension:
        raise ValueError(
            f"expected points of dimension {simplex.dimension}, got {x.shape[-1]}"
        )


def barycentric_from_ambient(simplex: EnclosingSimplex, x) -> np.ndarray:
    """Barycentric coordinates of ``x`` (a point or an (N, n) array)."""
    x = np.asarray(x, dtype=float)
    _check_dim(simplex, x)
    ones = np.ones(x.shape[:-1] + (1,))
    return np.concatenate([ones, x], axis=-1) @ simplex.coord_matrix


def ambient_from_barycentric(simplex: EnclosingSimplex, b, tol: float = DEFAULT_TOL) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.shape[-1] != simplex.dimension + 1:
        raise ValueError(
            f"expected {simplex.dimension + 1} barycentric coordinates, got {b.shape[-1]}"
        )
    if np.any(np.abs(b.sum(axis=-1) - 1.0) > tol):
        raise ValueError("barycentric coordinates must sum to 1")
    return b @ simplex.vertex_matrix


def contains(simplex: EnclosingSimplex, x, tol: float = DEFAULT_TOL):
    """True where every barycentric coordinate of ``x`` is >= -tol."""
    b = barycentric_from_ambient(simplex, x)
    inside = np.all(b >= -tol, axis=-1)
    return bool(inside) if inside.ndim == 0 else inside
