"""Exhaustive analysis of small instances: states, transition matrix, stationary law.

States are ``(configuration, last pair)`` with the red count fixed. The state
index is ``config_index * num_pairs + pair_index``, where configurations are red
bitmasks sorted ascending. Agent identities and offsets are left out: they never
influence a transition probability.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .lattice import TorusGrid
from .model import ModelParams, config_from_mask, config_to_string, logistic
from .scheduler import SchedulerSpec

DEFAULT_MAX_N = 3
LARGE_STATE_LIMIT = 2_000_000


class TooLarge(ValueError):
    pass


class NoConvergence(RuntimeError):
    def __init__(self, iterations: int, residual: float):
        super().__init__(f"no convergence after {iterations} iterations (residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


def masks_with_popcount(num_vertices: int, k: int, chunk: int = 1 << 22) -> np.ndarray:
    """All ``num_vertices``-bit masks with exactly ``k`` bits set, ascending."""
    if not 0 <= k <= num_vertices:
        raise ValueError(f"red count {k} outside [0, {num_vertices}]")
    if num_vertices > 30:
        raise TooLarge(f"{num_vertices} vertices is beyond exhaustive enumeration")
    total = 1 << num_vertices
    parts = []
    for start in range(0, total, chunk):
        block = np.arange(start, min(start + chunk, total), dtype=np.int64)
        parts.append(block[np.bitwise_count(block) == k])
    return np.concatenate(parts)


def configs_from_masks(masks: np.ndarray, num_vertices: int) -> np.ndarray:
    bits = (masks[:, None] >> np.arange(num_vertices, dtype=np.int64)) & 1
    return np.where(bits == 1, 1, -1).astype(np.int8)


@dataclass(frozen=True)
class StateSpace:
    grid: TorusGrid
    red_count: int
    masks: np.ndarray

    @property
    def num_configs(self) -> int:
        return len(self.masks)

    @property
    def num_pairs(self) -> int:
        return self.grid.num_pairs

    @property
    def size(self) -> int:
        return self.num_configs * self.num_pairs

    def __len__(self) -> int:
        return self.size

    def config_index(self, mask: int) -> int:
        i = int(np.searchsorted(self.masks, mask))
        if i >= len(self.masks) or self.masks[i] != mask:
            raise KeyError(f"mask {mask:#x} is not in the state space")
        return i

    def state_index(self, mask: int, pair: int) -> int:
        return self.config_index(mask) * self.num_pairs + int(pair)

    def split(self, state: int) -> tuple[int, int]:
        """``(config_index, pair_index)`` of a state index."""
        return divmod(int(state), self.num_pairs)

    def config(self, state: int) -> np.ndarray:
        return config_from_mask(int(self.masks[self.split(state)[0]]), self.grid.num_vertices)

    def config_string(self, config_index: int) -> str:
        return config_to_string(config_from_mask(int(self.masks[config_index]), self.grid.num_vertices))

    @cached_property
    def colors(self) -> np.ndarray:
        return configs_from_masks(self.masks, self.grid.num_vertices)

    @cached_property
    def move_table(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per (config, pair): swap gain in units of r, whether colors differ, swap target config.

        Uses the closed form of the gain: with balances w_a, w_b of the two
        endpoints, a swap of opposite colors gains ``-2 (w_a + w_b)``, minus 4
        more when the endpoints are adjacent.
        """
        grid = self.grid
        colors = self.colors.astype(np.int64)
        balances = colors * colors[:, grid.neighbor_table].sum(axis=2)
        a, b = grid.pair_endpoints
        differ = colors[:, a] != colors[:, b]
        gain = -2 * (balances[:, a] + balances[:, b]) - 4 * grid.pair_is_edge.astype(np.int64)
        gain = np.where(differ, gain, 0)
        flip = (np.int64(1) << a.astype(np.int64)) | (np.int64(1) << b.astype(np.int64))
        swapped = np.where(differ, self.masks[:, None] ^ flip[None, :], self.masks[:, None])
        target = np.searchsorted(self.masks, swapped)
        return gain, differ, target


def enumerate_states(grid: TorusGrid, red_count: int, spec: SchedulerSpec | None = None,
                     max_n: int = DEFAULT_MAX_N, allow_large: bool = False) -> StateSpace:
    """Every (configuration, pair) with ``red_count`` red agents.

    Tori beyond ``max_n`` need ``allow_large=True`` and are still refused past
    two million states.
    """
    if spec is not None and spec.grid != grid:
        raise ValueError("scheduler was built for a different grid")
    m = grid.num_vertices
    if not 0 <= red_count <= m:
        raise ValueError(f"red count {red_count} outside [0, {m}]")
    size = math.comb(m, red_count) * grid.num_pairs
    if grid.n > max_n and not allow_large:
        raise TooLarge(f"{grid.n}x{grid.n} exceeds the exact-analysis cap n <= {max_n}; pass allow_large")
    if size > LARGE_STATE_LIMIT:
        raise TooLarge(f"{size} states exceeds the limit of {LARGE_STATE_LIMIT}")
    return StateSpace(grid, red_count, masks_with_popcount(m, red_count))


def _scheduler_coo(spec: SchedulerSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rows = spec.rows()
    src = np.repeat(np.arange(spec.num_pairs, dtype=np.int64), np.diff(rows.indptr))
    keep = rows.weights > 0
    return src[keep], rows.indices.astype(np.int64)[keep], rows.weights[keep]


def build_matrix(space: StateSpace, spec: SchedulerSpec, params: ModelParams) -> sp.csr_matrix:
    """Row-stochastic transition matrix: draw the next pair, then swap or stay."""
    gain, differ, target = space.move_table
    e, f, d = _scheduler_coo(spec)
    p = space.num_pairs
    c = np.arange(space.num_configs, dtype=np.int64)[:, None]
    g = gain[:, f]
    diff = differ[:, f]
    levels, inv = np.unique(g, return_inverse=True)
    x = params.beta * (params.r * levels.astype(float))
    p_swap = np.array([logistic(v) for v in x])[inv].reshape(g.shape)
    p_stay = np.array([logistic(-v) for v in x])[inv].reshape(g.shape)
    p_stay = np.where(diff, p_stay, 1.0)

    row = (c * p + e[None, :])
    rows = [row.ravel(), row[diff]]
    cols = [(c * p + f[None, :]).ravel(), (target[:, f] * p + f[None, :])[diff]]
    vals = [(d[None, :] * p_stay).ravel(), (d[None, :] * p_swap)[diff]]
    n = space.size
    mat = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return mat.tocsr()


# -- stationary distribution --------------------------------------------------


@dataclass(frozen=True)
class StationaryDistribution:
    pi: np.ndarray
    residual: float
    method: str
    iterations: int = 0


def stationary_residual(matrix, pi: np.ndarray) -> float:
    """``||pi P - pi||_1``."""
    return float(np.abs(matrix.T @ pi - pi).sum())


def stationary(matrix, method: str = "direct", tol: float = 1e-10, max_iter: int = 1_000_000,
               rel_change: float = 1e-14) -> StationaryDistribution:
    """Stationary law of an ergodic row-stochastic matrix.

    ``direct`` (sparse LU with one equation replaced by normalization, then
    power polishing), ``power`` or ``gth`` (dense, subtraction-free). The result
    must satisfy ``||pi P - pi||_1 <= tol`` or :class:`NoConvergence` is raised.
    Sums run in index order (numpy/scipy serial kernels), so results are
    deterministic for a fixed matrix.
    """
    matrix = sp.csr_matrix(matrix)
    if method == "gth":
        pi = gth(matrix.toarray())
        res = stationary_residual(matrix, pi)
        if res > tol:
            raise NoConvergence(0, res)
        return StationaryDistribution(pi, res, "gth")
    if method == "direct":
        pi = _direct_solve(matrix)
        return _power(matrix, pi, tol, max_iter, rel_change, "direct")
    if method == "power":
        n = matrix.shape[0]
        return _power(matrix, np.full(n, 1.0 / n), tol, max_iter, rel_change, "power")
    raise ValueError(f"unknown method {method!r}")


def _direct_solve(matrix: sp.csr_matrix) -> np.ndarray:
    n = matrix.shape[0]
    a = (matrix.T - sp.identity(n, format="csr")).tocsr()
    a = sp.vstack([sp.csr_matrix(np.ones((1, n))), a[1:]]).tocsc()
    rhs = np.zeros(n)
    rhs[0] = 1.0
    lu = splu(a)
    x = lu.solve(rhs)
    for _ in range(2):
        x += lu.solve(rhs - a @ x)
    x = np.clip(x, 0.0, None)
    return x / x.sum()


def _power(matrix, x, tol, max_iter, rel_change, method) -> StationaryDistribution:
    pt = matrix.T.tocsr()
    res = stationary_residual(matrix, x)
    it = 0
    while res > tol and it < max_iter:
        new = pt @ x
        it += 1
        if it % 64 == 0:
            new /= new.sum()
        res = float(np.abs(new - x).sum())
        x = new
        if res <= rel_change * x.sum():
            break
    x = x / x.sum()
    res = stationary_residual(matrix, x)
    if res > tol:
        raise NoConvergence(it, res)
    return StationaryDistribution(x, res, method, it)


def gth(p: np.ndarray) -> np.ndarray:
    """Grassmann-Taksar-Heyman elimination for a dense row-stochastic matrix."""
    a = np.array(p, dtype=float, copy=True)
    n = a.shape[0]
    for k in range(n - 1, 0, -1):
        s = a[k, :k].sum()
        a[:k, k] /= s
        a[:k, :k] += np.outer(a[:k, k], a[k, :k])
    pi = np.zeros(n)
    pi[0] = 1.0
    for k in range(1, n):
        pi[k] = pi[:k] @ a[:k, k]
    return pi / pi.sum()


def project_to_configs(space: StateSpace, dist) -> np.ndarray:
    """Configuration marginal, aligned with ``space.masks``."""
    pi = dist.pi if isinstance(dist, StationaryDistribution) else np.asarray(dist)
    return pi.reshape(space.num_configs, space.num_pairs).sum(axis=1)


def pair_marginal(space: StateSpace, dist) -> np.ndarray:
    pi = dist.pi if isinstance(dist, StationaryDistribution) else np.asarray(dist)
    return pi.reshape(space.num_configs, space.num_pairs).sum(axis=0)


# -- beta sweeps --------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    beta: float
    mass_on_q: float
    residual: float
    top: list[tuple[str, float]]


def beta_sweep(grid: TorusGrid, red_count: int, spec: SchedulerSpec, params: ModelParams,
               betas, top: int = 5, space: StateSpace | None = None, method: str = "direct",
               allow_large: bool = False) -> list[SweepRow]:
    """One stationary solve per beta; mass on maximally segregated configurations and the top configurations."""
    from .stability import max_segregated

    if space is None:
        space = enumerate_states(grid, red_count, spec, allow_large=allow_large)
    q = max_segregated(grid, red_count, allow_large=allow_large)
    in_q = np.isin(space.masks, q.masks)
    out = []
    for beta in betas:
        p = ModelParams(r=params.r, beta=float(beta), eps=params.eps)
        dist = stationary(build_matrix(space, spec, p), method=method)
        cm = project_to_configs(space, dist)
        order = np.argsort(-cm, kind="stable")[:top]
        out.append(SweepRow(float(beta), float(cm[in_q].sum()), dist.residual,
                            [(space.config_string(int(i)), float(cm[i])) for i in order]))
    return out
