"""Pure-Python kernels; reference semantics for the compiled ``_kernels`` extension.

Both modules export ``run_chain`` and ``dmst`` with identical signatures and
identical results (bit for bit, given the same inputs).
"""
from __future__ import annotations

import sys

KOFF = 24  # accept table covers swap gains in [-KOFF, KOFF]


def run_chain(colors, agents, nbr, pair_a, pair_b, adjacent,
              mode, self_weight, indptr, indices, cum,
              accept, uniforms, step0, last_pair, bichrom,
              record_every, rec_step, rec_pair, rec_swap, rec_bichrom,
              counts, mask):
    """Advance the chain ``len(uniforms) // 2`` steps in place.

    ``colors`` and ``agents`` are updated in place. Each step consumes two
    uniforms: one picks the next pair, one decides swap vs stay. Returns
    ``(last_pair, bichrom, bichrom_sum, n_records, mask)`` where ``bichrom_sum``
    sums the bichromatic edge count over the post-step states.
    """
    steps = len(uniforms) // 2
    m = len(colors)
    p = len(pair_a)
    slots = 2 * m - 4
    col = colors.tolist()
    ag = agents.tolist()
    nb = nbr.tolist()
    pa = pair_a.tolist()
    pb = pair_b.tolist()
    adj = adjacent.tolist()
    acc = accept.tolist()
    us = uniforms.tolist()
    track = len(counts) > 0
    e = int(last_pair)
    bsum = 0
    nrec = 0
    for t in range(steps):
        u1 = us[2 * t]
        u2 = us[2 * t + 1]
        if mode == 0:
            e = int(u1 * p)
            if e >= p:
                e = p - 1
        elif mode == 1:
            if u1 >= self_weight:
                k = int((u1 - self_weight) / (1.0 - self_weight) * slots)
                if k >= slots:
                    k = slots - 1
                a = pa[e]
                b = pb[e]
                if k < m - 2:
                    end = a
                    x = k
                else:
                    end = b
                    x = k - (m - 2)
                if x >= a:
                    x += 1
                if x >= b:
                    x += 1
                lo, hi = (end, x) if end < x else (x, end)
                e = lo * m - lo * (lo + 1) // 2 + (hi - lo - 1)
        else:
            lo = indptr[e]
            hi = indptr[e + 1]
            target = u1 * cum[hi - 1]
            j = lo
            # first entry whose cumulative weight exceeds the target
            while j < hi and cum[j] <= target:
                j += 1
            if j >= hi:
                j = hi - 1
            e = int(indices[j])
        a = pa[e]
        b = pb[e]
        ca = col[a]
        cb = col[b]
        if ca == cb:
            k = 0
        else:
            na = nb[a]
            nbb = nb[b]
            wa = ca * (col[na[0]] + col[na[1]] + col[na[2]] + col[na[3]])
            wb = cb * (col[nbb[0]] + col[nbb[1]] + col[nbb[2]] + col[nbb[3]])
            k = -2 * (wa + wb) - (4 if adj[e] else 0)
        swapped = u2 < acc[k + KOFF]
        if swapped:
            ag[a], ag[b] = ag[b], ag[a]
            if ca != cb:
                col[a] = cb
                col[b] = ca
                bichrom -= k // 2
                mask ^= (1 << a) | (1 << b)
        bsum += bichrom
        if track:
            counts[mask * p + e] += 1
        if (step0 + t + 1) % record_every == 0:
            rec_step[nrec] = step0 + t + 1
            rec_pair[nrec] = e
            rec_swap[nrec] = 1 if swapped else 0
            rec_bichrom[nrec] = bichrom
            nrec += 1
    colors[:] = col
    agents[:] = ag
    return e, bichrom, bsum, nrec, mask


# -- minimum-cost arborescence ------------------------------------------------


def dmst(n, root, head, tail, weight):
    """Minimum-cost in-arborescence: every node except ``root`` picks one edge.

    Edge ``i`` leaves ``tail[i]`` toward ``head[i]``; the chosen edges give every
    node a unique path to ``root``. Chu-Liu/Edmonds with mergeable leftist heaps
    (lazy additive keys) and a rollback union-find for cycle expansion. Ties are
    broken by the lower edge index.

    Returns ``(cost, chosen, bad)``: ``chosen[v]`` is the edge picked by ``v``
    (-1 at the root). If some node cannot reach the root, ``cost`` is -1 and
    ``bad`` names a node with no way out.
    """
    sys.setrecursionlimit(max(sys.getrecursionlimit(), 10000))
    head = [int(x) for x in head]
    tail = [int(x) for x in tail]
    key = [int(x) for x in weight]
    m = len(key)
    delta = [0] * m
    left = [-1] * m
    right = [-1] * m
    rank = [1] * m

    def prop(x):
        d = delta[x]
        if d:
            key[x] += d
            if left[x] >= 0:
                delta[left[x]] += d
            if right[x] >= 0:
                delta[right[x]] += d
            delta[x] = 0

    def merge(a, b):
        if a < 0:
            return b
        if b < 0:
            return a
        prop(a)
        prop(b)
        if key[a] > key[b] or (key[a] == key[b] and a > b):
            a, b = b, a
        right[a] = merge(right[a], b)
        lr = rank[left[a]] if left[a] >= 0 else 0
        rr = rank[right[a]] if right[a] >= 0 else 0
        if lr < rr:
            left[a], right[a] = right[a], left[a]
            lr, rr = rr, lr
        rank[a] = rr + 1
        return a

    uf = [-1] * n
    stack = []

    def find(x):
        while uf[x] >= 0:
            x = uf[x]
        return x

    def join(a, b):
        a = find(a)
        b = find(b)
        if a == b:
            return False
        if uf[a] > uf[b]:
            a, b = b, a
        stack.append((a, uf[a]))
        stack.append((b, uf[b]))
        uf[a] += uf[b]
        uf[b] = a
        return True

    heap = [-1] * n
    for i in range(m):
        heap[tail[i]] = merge(heap[tail[i]], i)

    res = 0
    seen = [-1] * n
    path = [0] * n
    q = [0] * n
    chosen = [-1] * n
    seen[root] = root
    cycles = []
    comp = []
    for s in range(n):
        u = s
        qi = 0
        while seen[u] < 0:
            h = heap[u]
            if h < 0:
                return -1, [], u
            prop(h)
            w = key[h]
            delta[h] -= w
            prop(h)
            heap[u] = merge(left[h], right[h])
            q[qi] = h
            path[qi] = u
            qi += 1
            seen[u] = s
            res += w
            u = find(head[h])
            if seen[u] == s:
                cyc = -1
                end = qi
                t = len(stack)
                while True:
                    qi -= 1
                    x = path[qi]
                    cyc = merge(cyc, heap[x])
                    if not join(u, x):
                        break
                u = find(u)
                heap[u] = cyc
                seen[u] = -1
                cycles.append((u, t, len(comp), len(comp) + end - qi))
                comp.extend(q[qi:end])
        for i in range(qi):
            chosen[find(tail[q[i]])] = q[i]
    for u, t, lo, hi in reversed(cycles):
        while len(stack) > t:
            x, old = stack.pop()
            uf[x] = old
        in_edge = chosen[u]
        for i in comp[lo:hi]:
            chosen[find(tail[i])] = i
        chosen[find(tail[in_edge])] = in_edge
    chosen[root] = -1
    return res, chosen, -1
