"""Zero-noise analysis: resistance graph, minimum-resistance rooted trees, stable states.

Resistances are kept as integers in units of ``r`` (a swap gain is always an
integer multiple of ``r``), so minimum trees and ties are compared exactly.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from . import kernels
from .exact import (StateSpace, TooLarge, build_matrix, enumerate_states, masks_with_popcount,
                    project_to_configs, stationary)
from .lattice import TorusGrid, edge_endpoints
from .model import ModelParams, Outcome
from .scheduler import SchedulerSpec


class Unreachable(RuntimeError):
    def __init__(self, node: int):
        super().__init__(f"node {node} has no path to the root")
        self.node = node


# -- maximal segregation ------------------------------------------------------


@dataclass(frozen=True)
class MaxSegregatedSet:
    grid: TorusGrid
    red_count: int
    min_bichromatic: int
    masks: np.ndarray  # sorted red bitmasks attaining the minimum

    def __len__(self) -> int:
        return len(self.masks)

    def __contains__(self, mask) -> bool:
        i = np.searchsorted(self.masks, mask)
        return bool(i < len(self.masks) and self.masks[i] == mask)


def bichromatic_counts(grid: TorusGrid, masks: np.ndarray) -> np.ndarray:
    u, w = edge_endpoints(grid)
    counts = np.zeros(len(masks), dtype=np.int64)
    for a, b in zip(u.tolist(), w.tolist()):
        counts += ((masks >> a) ^ (masks >> b)) & 1
    return counts


def max_segregated(grid: TorusGrid, red_count: int, max_n: int = 4, allow_large: bool = False) -> MaxSegregatedSet:
    """Exhaustive minimum of the red-blue edge count and every configuration attaining it."""
    if grid.n > max_n and not (allow_large and grid.n <= 5):
        raise TooLarge(f"exhaustive segregation search is capped at n <= {max_n} (n = 5 with allow_large)")
    masks = masks_with_popcount(grid.num_vertices, red_count)
    counts = np.empty(len(masks), dtype=np.int64)
    step = 1 << 20
    for lo in range(0, len(masks), step):
        counts[lo:lo + step] = bichromatic_counts(grid, masks[lo:lo + step])
    best = int(counts.min())
    return MaxSegregatedSet(grid, red_count, best, masks[counts == best])


# -- resistance graph ---------------------------------------------------------


@dataclass(frozen=True)
class ResistanceGraph:
    """Edges ``tail -> head`` sorted by (tail, head, outcome); weights in units of ``r``."""

    num_nodes: int
    tail: np.ndarray
    head: np.ndarray
    units: np.ndarray
    outcome: np.ndarray
    r: float = 1.0

    @property
    def num_edges(self) -> int:
        return len(self.units)

    @property
    def resistance(self) -> np.ndarray:
        return self.r * self.units

    def scaled(self, factor: int) -> "ResistanceGraph":
        return ResistanceGraph(self.num_nodes, self.tail, self.head, self.units * int(factor), self.outcome, self.r)


def build_resistance_graph(space: StateSpace, spec: SchedulerSpec, params: ModelParams) -> ResistanceGraph:
    """One edge per feasible move: next pair in the scheduler's support, then swap or stay.

    A scheduled same-colored pair gives a single edge of resistance 0 (both
    outcomes lead to the same state).
    """
    gain, differ, target = space.move_table
    rows = spec.rows()
    src = np.repeat(np.arange(spec.num_pairs, dtype=np.int64), np.diff(rows.indptr))
    keep = rows.weights > 0
    e, f = src[keep], rows.indices.astype(np.int64)[keep]
    p = space.num_pairs
    c = np.arange(space.num_configs, dtype=np.int64)[:, None]
    g = gain[:, f]
    diff = differ[:, f]
    tail_all = c * p + e[None, :]
    tail = np.concatenate([tail_all.ravel(), tail_all[diff]])
    head = np.concatenate([(c * p + f[None, :]).ravel(), (target[:, f] * p + f[None, :])[diff]])
    units = np.concatenate([np.maximum(g, 0).ravel(), np.maximum(-g, 0)[diff]]).astype(np.int64)
    outcome = np.concatenate([np.full(g.size, Outcome.STAY, dtype=np.int8),
                              np.full(int(diff.sum()), Outcome.SWAP, dtype=np.int8)])
    order = np.lexsort((outcome, head, tail))
    return ResistanceGraph(space.size, tail[order], head[order], units[order], outcome[order], params.r)


# -- rooted trees -------------------------------------------------------------


@dataclass(frozen=True)
class ResistanceTree:
    root: int
    parent_edge: np.ndarray  # edge index chosen by each node, -1 at the root
    total_units: int
    r: float = 1.0

    @property
    def total_resistance(self) -> float:
        return self.r * self.total_units

    def parents(self, graph: ResistanceGraph) -> np.ndarray:
        out = np.full(graph.num_nodes, -1, dtype=np.int64)
        mask = self.parent_edge >= 0
        out[mask] = graph.head[self.parent_edge[mask]]
        return out


def min_arborescence(graph: ResistanceGraph, root: int, backend: str | None = None) -> ResistanceTree:
    """Minimum-resistance tree in which every node has a directed path to ``root``.

    Chu-Liu/Edmonds; ties resolve to the lowest edge index.
    """
    impl = kernels.get(backend)
    cost, chosen, bad = impl.dmst(graph.num_nodes, int(root), graph.head, graph.tail, graph.units)
    if cost < 0:
        raise Unreachable(int(bad))
    return ResistanceTree(int(root), np.asarray(chosen, dtype=np.int64), int(cost), graph.r)


def zero_resistance_classes(graph: ResistanceGraph) -> tuple[np.ndarray, np.ndarray]:
    """Strong components of the zero-resistance subgraph and which of them are closed.

    Returns ``(labels, closed)`` where ``closed[k]`` says component ``k`` has no
    zero-resistance edge leaving it.
    """
    zero = graph.units == 0
    n = graph.num_nodes
    adj = sp.csr_matrix((np.ones(int(zero.sum()), dtype=np.int8), (graph.tail[zero], graph.head[zero])), shape=(n, n))
    ncomp, labels = connected_components(adj, directed=True, connection="strong")
    lt, lh = labels[graph.tail[zero]], labels[graph.head[zero]]
    closed = np.ones(ncomp, dtype=bool)
    closed[lt[lt != lh]] = False
    return labels, closed


@dataclass(frozen=True)
class StableStates:
    states: np.ndarray
    min_units: int
    r: float
    roots_solved: int
    root_costs: dict = field(repr=False, default_factory=dict)

    @property
    def min_resistance(self) -> float:
        return self.r * self.min_units

    def config_indices(self, space: StateSpace) -> np.ndarray:
        return np.unique(self.states // space.num_pairs)

    def config_masks(self, space: StateSpace) -> np.ndarray:
        return space.masks[self.config_indices(space)]


def stochastically_stable(space: StateSpace, graph: ResistanceGraph, exhaustive: bool = False,
                          backend: str | None = None, workers: int = 1) -> StableStates:
    """Roots whose minimum-resistance tree is globally minimal.

    With ``exhaustive=True`` every node is solved as a root. Otherwise one root
    per closed class of the zero-resistance subgraph is solved: following a
    zero-resistance path never raises the minimum tree cost, so the minimum is
    attained inside closed classes and is constant on each of them, while a
    node outside every closed class has zero limiting mass and cannot tie it.
    Both modes return the same set.
    """
    if exhaustive:
        roots = np.arange(graph.num_nodes)
    else:
        labels, closed = zero_resistance_classes(graph)
        first = np.full(len(closed), -1, dtype=np.int64)
        nodes = np.arange(graph.num_nodes)
        first[labels[::-1]] = nodes[::-1]
        roots = first[closed]

    def solve(root):
        return int(root), min_arborescence(graph, int(root), backend).total_units

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            costs = dict(pool.map(solve, roots))
    else:
        costs = dict(map(solve, roots))
    best = min(costs.values())
    winners = np.array(sorted(r for r, c in costs.items() if c == best), dtype=np.int64)
    if exhaustive:
        states = winners
    else:
        states = np.flatnonzero(np.isin(labels, labels[winners]))
    return StableStates(states, best, graph.r, len(roots), costs)


# -- consistency with the stationary law -------------------------------------


@dataclass(frozen=True)
class CrossCheckReport:
    beta: float
    residual: float
    stable_states: int
    stable_configs: list[str]
    top_configs: list[str]
    states_agree: bool
    configs_agree: bool
    state_mass_gap: float
    config_mass_gap: float
    stable_mass: float

    @property
    def agrees(self) -> bool:
        return self.states_agree and self.configs_agree

    def check(self) -> "CrossCheckReport":
        if not self.agrees:
            raise CrossCheckMismatch(self)
        return self


class CrossCheckMismatch(AssertionError):
    def __init__(self, report: CrossCheckReport):
        super().__init__(f"stationary ranking disagrees with the stable set at beta={report.beta}: {report}")
        self.report = report


def _gap(mass: np.ndarray, chosen: np.ndarray) -> float:
    inside = np.zeros(len(mass), dtype=bool)
    inside[chosen] = True
    lo = mass[inside].min()
    hi = mass[~inside].max() if (~inside).any() else 0.0
    return float(lo - hi)


def cross_check(space: StateSpace, spec: SchedulerSpec, params: ModelParams, beta_large: float,
                stable: StableStates | None = None, method: str = "direct") -> CrossCheckReport:
    """Compare the largest stationary masses at ``beta_large`` with the tree-stable set.

    Agreement means the ``k`` heaviest states (configurations) are exactly the
    ``k`` stable ones; the mass gap is the lightest stable mass minus the
    heaviest unstable mass, positive exactly when they agree.
    """
    if stable is None:
        stable = stochastically_stable(space, build_resistance_graph(space, spec, params))
    p = ModelParams(r=params.r, beta=float(beta_large), eps=params.eps)
    dist = stationary(build_matrix(space, spec, p), method=method)
    pi = dist.pi
    k = len(stable.states)
    top_states = np.argsort(-pi, kind="stable")[:k]
    cm = project_to_configs(space, dist)
    sc = stable.config_indices(space)
    top_cfg = np.argsort(-cm, kind="stable")[:len(sc)]
    return CrossCheckReport(
        beta=float(beta_large),
        residual=dist.residual,
        stable_states=k,
        stable_configs=[space.config_string(int(i)) for i in sc],
        top_configs=[space.config_string(int(i)) for i in np.sort(top_cfg)],
        states_agree=set(top_states.tolist()) == set(stable.states.tolist()),
        configs_agree=set(top_cfg.tolist()) == set(sc.tolist()),
        state_mass_gap=_gap(pi, stable.states),
        config_mass_gap=_gap(cm, sc),
        stable_mass=float(pi[stable.states].sum()),
    )


def stable_report(space: StateSpace, stable: StableStates, maxseg: MaxSegregatedSet) -> dict:
    """JSON-ready summary of a stable-state computation."""
    p = space.num_pairs
    by_config: dict[int, list[int]] = {}
    for s in stable.states.tolist():
        c, e = divmod(s, p)
        by_config.setdefault(c, []).append(e)
    grid = space.grid
    configs = []
    for c in sorted(by_config):
        pairs = by_config[c]
        configs.append({
            "config": space.config_string(c),
            "maximally_segregated": int(space.masks[c]) in maxseg,
            "num_pairs": len(pairs),
            "pairs": [[list(v) for v in grid.pair_at(e)] for e in pairs],
        })
    return {
        "n": grid.n,
        "red_count": space.red_count,
        "min_resistance": stable.min_resistance,
        "min_resistance_units": stable.min_units,
        "num_stable_states": int(len(stable.states)),
        "roots_solved": stable.roots_solved,
        "subset_of_max_segregated": all(item["maximally_segregated"] for item in configs),
        "max_segregated": {"min_bichromatic_edges": maxseg.min_bichromatic, "argmin_count": len(maxseg)},
        "stable_configurations": configs,
    }


def analyze(grid: TorusGrid, red_count: int, spec: SchedulerSpec, params: ModelParams,
            allow_large: bool = False, exhaustive: bool = False):
    """Enumerate, build the resistance graph and find the stable states in one call."""
    space = enumerate_states(grid, red_count, spec, allow_large=allow_large)
    graph = build_resistance_graph(space, spec, params)
    stable = stochastically_stable(space, graph, exhaustive=exhaustive)
    return space, graph, stable
