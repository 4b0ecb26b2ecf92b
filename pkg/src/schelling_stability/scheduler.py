"""Markovian pair schedulers: next-pair distributions indexed by the last scheduled pair.

A scheduler never sees the configuration; :func:`next_pair` takes only the
current pair index and a random source.

Built-in families (``uniform`` and ``contagion``) are sampled in closed form, so
they work on tori far too large for their rows to be materialized. Their rows
are built on demand (:meth:`SchedulerSpec.rows`) for validation and for exact
analysis.
"""
from __future__ import annotations

import bisect
import re
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .lattice import TorusGrid, make_pair, pair_index_from_vertices

MODE_UNIFORM = 0
MODE_CONTAGION = 1
MODE_TABLE = 2

ROW_TOL = 1e-12
RENORMALIZE_TOL = 1e-9


@dataclass(frozen=True)
class SchedulerRows:
    """Sparse rows: row ``e`` is ``indices[indptr[e]:indptr[e+1]]`` with ``weights``."""

    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray

    def row(self, e: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[e], self.indptr[e + 1]
        return self.indices[lo:hi], self.weights[lo:hi]

    @property
    def nnz(self) -> int:
        return int(self.indptr[-1])

    def to_csr(self) -> sp.csr_matrix:
        m = len(self.indptr) - 1
        return sp.csr_matrix((self.weights, self.indices, self.indptr), shape=(m, m))


@dataclass(frozen=True)
class SchedulerSpec:
    grid: TorusGrid
    kind: str
    self_weight: float | None = None
    table: SchedulerRows | None = field(default=None, repr=False)

    @property
    def num_pairs(self) -> int:
        return self.grid.num_pairs

    @property
    def mode(self) -> int:
        return {"uniform": MODE_UNIFORM, "contagion": MODE_CONTAGION, "custom": MODE_TABLE}[self.kind]

    @property
    def support_size(self) -> int:
        """Support size of a contagion row (pairs sharing an endpoint, including itself)."""
        return 2 * self.grid.num_vertices - 3

    def effective_self_weight(self) -> float:
        if self.kind != "contagion":
            raise ValueError("self_weight only applies to the contagion scheduler")
        return 1.0 / self.support_size if self.self_weight is None else float(self.self_weight)

    def rows(self) -> SchedulerRows:
        if self.table is not None:
            return self.table
        rows = _materialize(self)
        object.__setattr__(self, "table", rows)
        return rows

    def cumulative(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(indptr, indices, cumulative weights)`` used by the table sampler."""
        cached = self.__dict__.get("_cumulative")
        if cached is not None:
            return cached
        rows = self.rows()
        cum = np.empty_like(rows.weights)
        for e in range(self.num_pairs):
            lo, hi = rows.indptr[e], rows.indptr[e + 1]
            cum[lo:hi] = np.cumsum(rows.weights[lo:hi])
        cached = (rows.indptr.astype(np.int64), rows.indices.astype(np.int32), cum)
        object.__setattr__(self, "_cumulative", cached)
        return cached

    def max_support(self) -> int:
        return int(np.diff(self.rows().indptr).max())


def uniform_scheduler(grid: TorusGrid) -> SchedulerSpec:
    """Every row uniform over all pairs (the random scheduler)."""
    return SchedulerSpec(grid, "uniform")


def contagion_scheduler(grid: TorusGrid, self_weight: float | None = None) -> SchedulerSpec:
    """Next pair shares an endpoint with the last one.

    ``self_weight`` goes to the last pair itself and the rest is spread evenly
    over the other sharing pairs; the default makes the row uniform on its support.
    """
    if self_weight is not None and not 0.0 < self_weight < 1.0:
        raise ValueError(f"self_weight must lie in (0, 1), got {self_weight}")
    return SchedulerSpec(grid, "contagion", self_weight)


def custom_scheduler(grid: TorusGrid, rows: SchedulerRows) -> SchedulerSpec:
    if len(rows.indptr) != grid.num_pairs + 1:
        raise ValueError("row table does not match the pair count of the grid")
    return SchedulerSpec(grid, "custom", table=rows)


def contagion_row(grid: TorusGrid, e: int) -> np.ndarray:
    """Sorted indices of pairs sharing an endpoint with pair ``e`` (``e`` included)."""
    m = grid.num_vertices
    pa, pb = grid.pair_endpoints
    a, b = int(pa[e]), int(pb[e])
    others = np.array([x for x in range(m) if x != a and x != b], dtype=np.int64)
    ia = _pair_index_vec(m, np.full_like(others, a), others)
    ib = _pair_index_vec(m, np.full_like(others, b), others)
    return np.sort(np.concatenate([ia, ib, [e]]))


def _pair_index_vec(m, i, j):
    lo, hi = np.minimum(i, j), np.maximum(i, j)
    return lo * m - lo * (lo + 1) // 2 + (hi - lo - 1)


def _materialize(spec: SchedulerSpec) -> SchedulerRows:
    p = spec.num_pairs
    if spec.kind == "uniform":
        indptr = np.arange(p + 1, dtype=np.int64) * p
        indices = np.tile(np.arange(p, dtype=np.int32), p)
        weights = np.full(p * p, 1.0 / p)
        return SchedulerRows(indptr, indices, weights)
    if spec.kind == "contagion":
        w = spec.effective_self_weight()
        k = spec.support_size
        indptr = np.arange(p + 1, dtype=np.int64) * k
        indices = np.empty(p * k, dtype=np.int32)
        weights = np.full(p * k, (1.0 - w) / (k - 1))
        for e in range(p):
            row = contagion_row(spec.grid, e)
            indices[e * k:(e + 1) * k] = row
            weights[e * k + int(np.searchsorted(row, e))] = w
        return SchedulerRows(indptr, indices, weights)
    raise ValueError(f"scheduler kind {spec.kind!r} has no built-in rows")


# -- sampling -----------------------------------------------------------------


def sample_pair(spec: SchedulerSpec, current: int, u: float) -> int:
    """Map a uniform draw ``u`` in [0, 1) to a draw from the row of ``current``.

    The compiled chain kernel uses the same mapping, so a shared uniform stream
    produces identical pair sequences in both code paths.
    """
    p = spec.num_pairs
    if spec.kind == "uniform":
        return min(int(u * p), p - 1)
    if spec.kind == "contagion":
        m = spec.grid.num_vertices
        w = spec.effective_self_weight()
        if u < w:
            return current
        slots = 2 * m - 4
        k = min(int((u - w) / (1.0 - w) * slots), slots - 1)
        pa, pb = spec.grid.pair_endpoints
        a, b = int(pa[current]), int(pb[current])
        end = a if k < m - 2 else b
        x = k % (m - 2)
        if x >= a:
            x += 1
        if x >= b:
            x += 1
        return pair_index_from_vertices(m, end, x)
    indptr, indices, cum = spec.cumulative()
    lo, hi = int(indptr[current]), int(indptr[current + 1])
    target = u * cum[hi - 1]
    j = bisect.bisect_right(cum, target, lo, hi)
    return int(indices[min(j, hi - 1)])


def next_pair(spec: SchedulerSpec, current: int, rng: np.random.Generator) -> int:
    return sample_pair(spec, current, float(rng.random()))


def pair_walk_matrix(spec: SchedulerSpec) -> sp.csr_matrix:
    return spec.rows().to_csr()


# -- validation ---------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    kind: str  # NonStochasticRow | MissingSelfSupport | AsymmetricSupport | DisconnectedSupport
    pairs: tuple[int, ...]
    detail: str = ""

    def describe(self, grid: TorusGrid) -> str:
        names = ", ".join(format_pair(grid.pair_at(k)) for k in self.pairs)
        return f"{self.kind}({names})" + (f": {self.detail}" if self.detail else "")


def format_pair(pair) -> str:
    (r1, c1), (r2, c2) = pair
    return f"(({r1},{c1}),({r2},{c2}))"


def validate(spec: SchedulerSpec) -> list[Violation]:
    """Every violated scheduler invariant; an empty list means the spec is valid."""
    rows = spec.rows()
    p = spec.num_pairs
    out: list[Violation] = []
    for e in range(p):
        idx, w = rows.row(e)
        total = float(w.sum()) if len(w) else 0.0
        if np.any(w < 0) or abs(total - 1.0) > ROW_TOL:
            out.append(Violation("NonStochasticRow", (e,), f"row sum {total!r}"))
        support = idx[w > 0]
        if e not in set(support.tolist()):
            out.append(Violation("MissingSelfSupport", (e,)))

    mat = sp.csr_matrix(((rows.weights > 0).astype(np.int8), rows.indices, rows.indptr), shape=(p, p))
    mat.sum_duplicates()
    mat.eliminate_zeros()
    mat.data[:] = 1
    forward_only = (mat - mat.T).tocoo()
    for i, j, x in zip(forward_only.row.tolist(), forward_only.col.tolist(), forward_only.data.tolist()):
        if x > 0:
            out.append(Violation("AsymmetricSupport", (i, j), "forward weight positive, reverse weight zero"))

    # support is symmetric when valid, so one undirected search decides connectivity
    seen = np.zeros(p, dtype=bool)
    seen[0] = True
    queue = deque([0])
    both = (mat + mat.T).tocsr()
    while queue:
        e = queue.popleft()
        for f in both.indices[both.indptr[e]:both.indptr[e + 1]]:
            if not seen[f]:
                seen[f] = True
                queue.append(int(f))
    if not seen.all():
        missing = np.flatnonzero(~seen)
        out.append(Violation("DisconnectedSupport", (0, int(missing[0])),
                             f"{len(missing)} pairs unreachable from pair 0"))
    return out


# -- custom scheduler files ---------------------------------------------------

_HEADER = re.compile(r"#\s*n\s*=\s*(\d+)")


class SchedulerFileError(ValueError):
    pass


def load_scheduler_file(path, n: int | None = None) -> SchedulerSpec:
    """Read a sparse row list: ``ar ac br bc ar' ac' br' bc' weight`` per line.

    Pairs are canonicalized. The torus side comes from ``n``, else a ``# n = K``
    header comment, else the largest coordinate + 1. Rows summing to within 1e-9
    of one are renormalized; others are left as written so :func:`validate`
    reports them.
    """
    text = Path(path).read_text(encoding="utf-8")
    entries = []
    header_n = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        m = _HEADER.match(raw.strip())
        if m:
            header_n = int(m.group(1))
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 9:
            raise SchedulerFileError(f"{path}:{lineno}: expected 9 fields, got {len(fields)}")
        try:
            coords = [int(x) for x in fields[:8]]
            weight = float(fields[8])
        except ValueError as exc:
            raise SchedulerFileError(f"{path}:{lineno}: {exc}") from None
        entries.append((lineno, coords, weight))
    if n is None:
        n = header_n
    if n is None:
        n = max([max(c) for _, c, _ in entries], default=2) + 1
    grid = TorusGrid(max(n, 3))
    acc: dict[int, dict[int, float]] = {}
    for lineno, c, weight in entries:
        if any(x < 0 or x >= grid.n for x in c):
            raise SchedulerFileError(f"{path}:{lineno}: coordinate outside the {grid.n}x{grid.n} torus")
        try:
            e = grid.pair_index(make_pair((c[0], c[1]), (c[2], c[3])))
            f = grid.pair_index(make_pair((c[4], c[5]), (c[6], c[7])))
        except ValueError as exc:
            raise SchedulerFileError(f"{path}:{lineno}: {exc}") from None
        row = acc.setdefault(e, {})
        row[f] = row.get(f, 0.0) + weight
    return custom_scheduler(grid, rows_from_dict(grid.num_pairs, acc))


def rows_from_dict(num_pairs: int, acc: dict[int, dict[int, float]]) -> SchedulerRows:
    indptr = [0]
    indices: list[int] = []
    weights: list[float] = []
    for e in range(num_pairs):
        row = acc.get(e, {})
        cols = sorted(row)
        w = np.array([row[f] for f in cols], dtype=float)
        total = w.sum()
        if len(w) and np.all(w >= 0) and abs(total - 1.0) <= RENORMALIZE_TOL:
            w = w / total
        indices.extend(cols)
        weights.extend(w.tolist())
        indptr.append(len(indices))
    return SchedulerRows(np.array(indptr, dtype=np.int64), np.array(indices, dtype=np.int32),
                         np.array(weights, dtype=float))


def write_scheduler_file(spec: SchedulerSpec, path) -> None:
    grid = spec.grid
    rows = spec.rows()
    lines = [f"# n = {grid.n}"]
    for e in range(spec.num_pairs):
        (a, b) = grid.pair_at(e)
        idx, w = rows.row(e)
        for f, x in zip(idx.tolist(), w.tolist()):
            (c, d) = grid.pair_at(f)
            lines.append(f"{a[0]} {a[1]} {b[0]} {b[1]} {c[0]} {c[1]} {d[0]} {d[1]} {x!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
