"""Reference computations from first principles, using coordinates and plain lists.

Nothing here reuses the package's vectorized tables or closed forms: neighbors
come from coordinate arithmetic, utilities from explicit neighbor counting,
trees from exhaustive enumeration.
"""
from __future__ import annotations

import itertools
import math


def nbrs(n, i):
    r, c = divmod(i, n)
    return [r * n + (c - 1) % n, r * n + (c + 1) % n, ((r - 1) % n) * n + c, ((r + 1) % n) * n + c]


def balance(n, colors, i):
    same = sum(1 for j in nbrs(n, i) if colors[j] == colors[i])
    return same - (4 - same)


def utility(n, colors, i, r=1.0, eps=None, agent_at=None):
    agent = i if agent_at is None else agent_at[i]
    return r * balance(n, colors, i) + (0.0 if eps is None else eps[agent])


def potential(n, colors, r=1.0, eps=None, agent_at=None):
    return sum(utility(n, colors, i, r, eps, agent_at) for i in range(n * n))


def lattice_edges(n):
    out = set()
    for i in range(n * n):
        for j in nbrs(n, i):
            out.add((min(i, j), max(i, j)))
    return sorted(out)


def bichromatic(n, colors):
    return sum(1 for i, j in lattice_edges(n) if colors[i] != colors[j])


def swap(colors, i, j):
    out = list(colors)
    out[i], out[j] = out[j], out[i]
    return out


def pair_gain(n, colors, i, j, r=1.0):
    """Summed utility change of the agents at i and j when they swap (agents move with colors)."""
    after = swap(colors, i, j)
    return r * (balance(n, after, i) + balance(n, after, j) - balance(n, colors, i) - balance(n, colors, j))


def logit(beta, gain):
    # plain form; fine for the moderate arguments used in tests
    return math.exp(beta * gain) / (1.0 + math.exp(beta * gain))


def all_configs(n, red):
    m = n * n
    for reds in itertools.combinations(range(m), red):
        colors = [-1] * m
        for i in reds:
            colors[i] = 1
        yield colors


def brute_min_tree(num_nodes, root, edges):
    """Minimum total weight over all in-trees to ``root``; ``edges`` are (tail, head, weight).

    Returns None when no tree exists.
    """
    out = {v: [(h, w) for t, h, w in edges if t == v] for v in range(num_nodes)}
    others = [v for v in range(num_nodes) if v != root]
    best = None
    for choice in itertools.product(*[out[v] for v in others]):
        parent = {v: h for v, (h, _) in zip(others, choice)}
        ok = True
        for v in others:
            seen = set()
            x = v
            while x != root:
                if x in seen:
                    ok = False
                    break
                seen.add(x)
                x = parent[x]
            if not ok:
                break
        if ok:
            cost = sum(w for _, w in choice)
            best = cost if best is None else min(best, cost)
    return best
