"""Configurations, utilities, the potential, swaps, log-linear response and resistances.

A configuration is an int8 numpy array of +1 (red) / -1 (blue), one entry per
vertex in linear order. Every cell is occupied, so swaps conserve color counts.

Utility gaps are integer multiples of ``r``: local balances are integers and the
agent offsets ``eps`` of the two scheduled agents appear on both sides of the
log-linear comparison. The integer multiplier is what the ``*_units`` functions
return; probabilities and resistances are derived from it so that ``eps`` can
never leak into the dynamics through rounding.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import Pair, TorusGrid, edge_endpoints

RED = 1
BLUE = -1


class Outcome(enum.IntEnum):
    STAY = 0
    SWAP = 1


@dataclass(frozen=True)
class MoveOutcome:
    kind: Outcome
    pair: Pair


@dataclass(frozen=True)
class ModelParams:
    """Utility weight ``r``, inverse noise ``beta`` and per-agent offsets ``eps``.

    ``eps=None`` means all offsets are zero.
    """

    r: float = 1.0
    beta: float = 1.0
    eps: tuple[float, ...] | None = field(default=None)

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"r must be positive, got {self.r}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.eps is not None:
            object.__setattr__(self, "eps", tuple(float(x) for x in self.eps))

    def eps_array(self, num_agents: int) -> np.ndarray:
        if self.eps is None:
            return np.zeros(num_agents)
        if len(self.eps) != num_agents:
            raise ValueError(f"eps has {len(self.eps)} entries, expected {num_agents}")
        return np.asarray(self.eps, dtype=float)


# -- configurations -----------------------------------------------------------


def make_config(colors) -> np.ndarray:
    config = np.asarray(colors, dtype=np.int8).ravel().copy()
    if not np.all((config == 1) | (config == -1)):
        raise ValueError("configuration entries must be +1 or -1")
    return config


def config_from_string(s: str) -> np.ndarray:
    """Parse a row-major '+'/'-' string (whitespace and '/' ignored)."""
    chars = [ch for ch in s if not ch.isspace() and ch != "/"]
    table = {"+": 1, "-": -1, "−": -1}
    try:
        return np.array([table[ch] for ch in chars], dtype=np.int8)
    except KeyError as exc:
        raise ValueError(f"bad color character {exc.args[0]!r} in {s!r}") from None


def config_to_string(config) -> str:
    return "".join("+" if c > 0 else "-" for c in np.asarray(config).tolist())


def config_to_mask(config) -> int:
    """Bit i set iff vertex i is red."""
    mask = 0
    for i, c in enumerate(np.asarray(config).tolist()):
        if c > 0:
            mask |= 1 << i
    return mask


def config_from_mask(mask: int, num_vertices: int) -> np.ndarray:
    bits = (int(mask) >> np.arange(num_vertices)) & 1
    return np.where(bits == 1, 1, -1).astype(np.int8)


def identity_placement(num_vertices: int) -> np.ndarray:
    return np.arange(num_vertices, dtype=np.int64)


def red_count(config) -> int:
    return int(np.count_nonzero(np.asarray(config) > 0))


# -- local quantities ---------------------------------------------------------


def local_balance(grid: TorusGrid, config, v) -> int:
    """Same-colored minus opposite-colored neighbors of ``v``; one of -4, -2, 0, 2, 4."""
    i = grid.index(v)
    nbr = grid.neighbor_table[i]
    return int(config[i]) * int(np.sum(config[nbr], dtype=np.int64))


def local_balances(grid: TorusGrid, config) -> np.ndarray:
    config = np.asarray(config, dtype=np.int64)
    return config * config[grid.neighbor_table].sum(axis=1)


def utility(grid: TorusGrid, config, placement, params: ModelParams, v) -> float:
    i = grid.index(v)
    agent = i if placement is None else int(placement[i])
    eps = 0.0 if params.eps is None else params.eps[agent]
    return params.r * local_balance(grid, config, v) + eps


def bichromatic_edges(grid: TorusGrid, config) -> int:
    u, w = edge_endpoints(grid)
    config = np.asarray(config)
    return int(np.count_nonzero(config[u] != config[w]))


def potential(grid: TorusGrid, config, placement, params: ModelParams) -> float:
    """Sum of all agents' utilities.

    Each lattice edge is seen from both endpoints, so this equals
    ``2 r (monochromatic - bichromatic) + sum(eps)``.
    """
    total_balance = int(local_balances(grid, config).sum())
    eps_total = 0.0 if params.eps is None else math.fsum(params.eps)
    return params.r * total_balance + eps_total


# -- swaps --------------------------------------------------------------------


def apply_swap(config, placement, grid: TorusGrid, pair) -> tuple[np.ndarray, np.ndarray | None]:
    """Exchange colors and agents at the endpoints of ``pair``; returns new arrays."""
    i, j = grid.index(pair[0]), grid.index(pair[1])
    new_config = np.array(config, dtype=np.int8, copy=True)
    new_config[i], new_config[j] = config[j], config[i]
    new_placement = None
    if placement is not None:
        new_placement = np.array(placement, copy=True)
        new_placement[i], new_placement[j] = placement[j], placement[i]
    return new_config, new_placement


def pair_delta_units(grid: TorusGrid, config, pair) -> int:
    """Gain of the two scheduled agents' summed balance if they swap.

    Evaluated on the full pre- and post-swap configurations, so an adjacent
    partner counts with its current (resp. swapped) color.
    """
    i, j = grid.index(pair[0]), grid.index(pair[1])
    if config[i] == config[j]:
        return 0
    swapped, _ = apply_swap(config, None, grid, pair)
    before = local_balance(grid, config, pair[0]) + local_balance(grid, config, pair[1])
    after = local_balance(grid, swapped, pair[0]) + local_balance(grid, swapped, pair[1])
    return after - before


def pair_utility_delta(grid: TorusGrid, config, placement, params: ModelParams, pair) -> float:
    """``[u_a(T) + u_b(T)] - [u_a(S) + u_b(S)]`` for the swap ``S -> T`` on ``pair``.

    The two agents keep their offsets across the swap, so the offsets cancel and
    only ``r`` times the balance gain remains.
    """
    return params.r * pair_delta_units(grid, config, pair)


def logistic(x: float) -> float:
    """``e^x / (1 + e^x)`` without overflow."""
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def swap_probability_from_units(units: int, params: ModelParams) -> float:
    return logistic(params.beta * (params.r * units))


def swap_probability(grid: TorusGrid, config, placement, params: ModelParams, pair) -> float:
    """Log-linear probability that the scheduled pair swaps."""
    return swap_probability_from_units(pair_delta_units(grid, config, pair), params)


def resistance_units(units: int, kind: Outcome) -> int:
    """Resistance of a move in units of ``r`` given the swap gain ``units``."""
    if kind == Outcome.SWAP:
        return max(0, -units)
    return max(0, units)


def move_resistance(grid: TorusGrid, config, placement, params: ModelParams, outcome: MoveOutcome) -> float:
    """Exponent of the move probability in ``e^-beta``: the forgone or sacrificed gain."""
    units = pair_delta_units(grid, config, outcome.pair)
    return params.r * resistance_units(units, outcome.kind)
