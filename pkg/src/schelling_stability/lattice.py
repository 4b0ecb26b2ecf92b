"""Torus geometry: vertices, four-point neighborhoods, lattice edges and pair indexing.

Vertices are linearized as ``row * n + col``. Pairs are unordered, distinct and
stored with the smaller vertex first; the pair list is sorted, so a pair's index
is a closed-form function of its endpoints (see :func:`pair_index`).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np


class Vertex(NamedTuple):
    row: int
    col: int


class Pair(NamedTuple):
    a: Vertex
    b: Vertex


def make_pair(u: tuple[int, int], v: tuple[int, int]) -> Pair:
    """Canonical pair from two distinct vertices (smaller vertex first)."""
    u, v = Vertex(*u), Vertex(*v)
    if u == v:
        raise ValueError(f"pair endpoints must differ, got {u} twice")
    return Pair(u, v) if u < v else Pair(v, u)


@dataclass(frozen=True)
class TorusGrid:
    """An n x n torus with periodic boundary; n >= 3."""

    n: int

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 3:
            raise ValueError(f"torus side must be an integer >= 3, got {self.n!r}")

    @property
    def num_vertices(self) -> int:
        return self.n * self.n

    @property
    def num_pairs(self) -> int:
        m = self.num_vertices
        return m * (m - 1) // 2

    def vertex(self, row: int, col: int) -> Vertex:
        return Vertex(row % self.n, col % self.n)

    def index(self, v: tuple[int, int]) -> int:
        return (v[0] % self.n) * self.n + (v[1] % self.n)

    def vertex_at(self, i: int) -> Vertex:
        return Vertex(*divmod(int(i), self.n))

    @cached_property
    def neighbor_table(self) -> np.ndarray:
        """(n*n, 4) int32 array of neighbor indices in (left, right, up, down) order."""
        n = self.n
        rows, cols = np.divmod(np.arange(n * n), n)
        table = np.stack(
            [
                rows * n + (cols - 1) % n,
                rows * n + (cols + 1) % n,
                ((rows - 1) % n) * n + cols,
                ((rows + 1) % n) * n + cols,
            ],
            axis=1,
        )
        table = table.astype(np.int32)
        table.setflags(write=False)
        return table

    @cached_property
    def pair_endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        """Endpoint index arrays ``(a, b)`` with ``a < b`` for every pair, in pair order."""
        a, b = np.triu_indices(self.num_vertices, k=1)
        a = a.astype(np.int32)
        b = b.astype(np.int32)
        a.setflags(write=False)
        b.setflags(write=False)
        return a, b

    @cached_property
    def pair_is_edge(self) -> np.ndarray:
        """Boolean mask over pairs: True where the endpoints are lattice neighbors."""
        a, b = self.pair_endpoints
        return (self.neighbor_table[a] == b[:, None]).any(axis=1)

    def pair_index(self, pair: tuple) -> int:
        i, j = self.index(pair[0]), self.index(pair[1])
        if i == j:
            raise ValueError(f"degenerate pair {pair}")
        return pair_index_from_vertices(self.num_vertices, i, j)

    def pair_at(self, k: int) -> Pair:
        a, b = self.pair_endpoints
        return Pair(self.vertex_at(a[k]), self.vertex_at(b[k]))


def pair_index_from_vertices(num_vertices: int, i: int, j: int) -> int:
    """Index of the pair {i, j} in the sorted list of unordered distinct pairs."""
    if i > j:
        i, j = j, i
    return i * num_vertices - i * (i + 1) // 2 + (j - i - 1)


def neighbors(grid: TorusGrid, v: tuple[int, int]) -> list[Vertex]:
    """Left, right, up, down neighbors of ``v`` with wrap-around."""
    r, c = v[0] % grid.n, v[1] % grid.n
    return [grid.vertex(r, c - 1), grid.vertex(r, c + 1), grid.vertex(r - 1, c), grid.vertex(r + 1, c)]


def all_pairs(grid: TorusGrid) -> list[Pair]:
    a, b = grid.pair_endpoints
    return [Pair(grid.vertex_at(i), grid.vertex_at(j)) for i, j in zip(a.tolist(), b.tolist())]


def edges(grid: TorusGrid) -> list[Pair]:
    """The 2n^2 lattice edges as canonical pairs, sorted."""
    found = set()
    for i in range(grid.num_vertices):
        v = grid.vertex_at(i)
        for u in (grid.vertex(v.row, v.col + 1), grid.vertex(v.row + 1, v.col)):
            found.add(make_pair(v, u))
    return sorted(found)


def edge_endpoints(grid: TorusGrid) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized endpoint arrays of the lattice edges (each edge once)."""
    nbr = grid.neighbor_table
    src = np.arange(grid.num_vertices, dtype=np.int32)
    # right and down neighbors enumerate every edge exactly once
    return np.concatenate([src, src]), np.concatenate([nbr[:, 1], nbr[:, 3]])
