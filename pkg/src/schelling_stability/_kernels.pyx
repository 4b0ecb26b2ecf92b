# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; same signatures and results as ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free
from libc.stdint cimport int64_t, int32_t, int8_t, uint8_t

cnp.import_array()

cdef enum:
    KOFF = 24


def run_chain(int8_t[::1] colors, int64_t[::1] agents, const int32_t[:, ::1] nbr,
              const int32_t[::1] pair_a, const int32_t[::1] pair_b, const uint8_t[::1] adjacent,
              int mode, double self_weight,
              const int64_t[::1] indptr, const int32_t[::1] indices, const double[::1] cum,
              const double[::1] accept, const double[::1] uniforms,
              int64_t step0, int64_t last_pair, int64_t bichrom,
              int64_t record_every, int64_t[::1] rec_step, int64_t[::1] rec_pair,
              int8_t[::1] rec_swap, int64_t[::1] rec_bichrom,
              int64_t[::1] counts, int64_t mask):
    cdef Py_ssize_t steps = uniforms.shape[0] // 2
    cdef int64_t m = colors.shape[0]
    cdef int64_t p = pair_a.shape[0]
    cdef int64_t slots = 2 * m - 4
    cdef bint track = counts.shape[0] > 0
    cdef int64_t e = last_pair, bsum = 0, nrec = 0
    cdef int64_t k, a, b, end, x, lo, hi, j, jlo, jhi, mid, tmp
    cdef int64_t wa, wb
    cdef int8_t ca, cb
    cdef double u1, u2, target
    cdef bint swapped
    cdef Py_ssize_t t
    with nogil:
        for t in range(steps):
            u1 = uniforms[2 * t]
            u2 = uniforms[2 * t + 1]
            if mode == 0:
                e = <int64_t>(u1 * p)
                if e >= p:
                    e = p - 1
            elif mode == 1:
                if u1 >= self_weight:
                    k = <int64_t>((u1 - self_weight) / (1.0 - self_weight) * slots)
                    if k >= slots:
                        k = slots - 1
                    a = pair_a[e]
                    b = pair_b[e]
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
                    if end < x:
                        lo = end
                        hi = x
                    else:
                        lo = x
                        hi = end
                    e = lo * m - lo * (lo + 1) // 2 + (hi - lo - 1)
            else:
                jlo = indptr[e]
                jhi = indptr[e + 1]
                target = u1 * cum[jhi - 1]
                # first entry whose cumulative weight exceeds the target
                while jlo < jhi:
                    mid = (jlo + jhi) // 2
                    if cum[mid] <= target:
                        jlo = mid + 1
                    else:
                        jhi = mid
                j = jlo
                if j >= indptr[e + 1]:
                    j = indptr[e + 1] - 1
                e = indices[j]
            a = pair_a[e]
            b = pair_b[e]
            ca = colors[a]
            cb = colors[b]
            if ca == cb:
                k = 0
            else:
                wa = ca * (colors[nbr[a, 0]] + colors[nbr[a, 1]] + colors[nbr[a, 2]] + colors[nbr[a, 3]])
                wb = cb * (colors[nbr[b, 0]] + colors[nbr[b, 1]] + colors[nbr[b, 2]] + colors[nbr[b, 3]])
                k = -2 * (wa + wb) - (4 if adjacent[e] else 0)
            swapped = u2 < accept[k + KOFF]
            if swapped:
                tmp = agents[a]
                agents[a] = agents[b]
                agents[b] = tmp
                if ca != cb:
                    colors[a] = cb
                    colors[b] = ca
                    bichrom -= k // 2
                    mask ^= ((<int64_t>1) << a) | ((<int64_t>1) << b)
            bsum += bichrom
            if track:
                counts[mask * p + e] += 1
            if (step0 + t + 1) % record_every == 0:
                rec_step[nrec] = step0 + t + 1
                rec_pair[nrec] = e
                rec_swap[nrec] = 1 if swapped else 0
                rec_bichrom[nrec] = bichrom
                nrec += 1
    return e, bichrom, bsum, nrec, mask


# -- minimum-cost arborescence ------------------------------------------------

cdef struct Heaps:
    int64_t* key
    int64_t* delta
    int64_t* left
    int64_t* right
    int64_t* rank


cdef inline void _prop(Heaps* h, int64_t x) noexcept nogil:
    cdef int64_t d = h.delta[x]
    if d != 0:
        h.key[x] += d
        if h.left[x] >= 0:
            h.delta[h.left[x]] += d
        if h.right[x] >= 0:
            h.delta[h.right[x]] += d
        h.delta[x] = 0


cdef int64_t _merge(Heaps* h, int64_t a, int64_t b) noexcept nogil:
    cdef int64_t t, lr, rr
    if a < 0:
        return b
    if b < 0:
        return a
    _prop(h, a)
    _prop(h, b)
    if h.key[a] > h.key[b] or (h.key[a] == h.key[b] and a > b):
        t = a
        a = b
        b = t
    h.right[a] = _merge(h, h.right[a], b)
    lr = h.rank[h.left[a]] if h.left[a] >= 0 else 0
    rr = h.rank[h.right[a]] if h.right[a] >= 0 else 0
    if lr < rr:
        t = h.left[a]
        h.left[a] = h.right[a]
        h.right[a] = t
        rr = lr
    h.rank[a] = rr + 1
    return a


cdef inline int64_t _find(int64_t* uf, int64_t x) noexcept nogil:
    while uf[x] >= 0:
        x = uf[x]
    return x


def dmst(int64_t n, int64_t root, const int64_t[::1] head, const int64_t[::1] tail,
         const int64_t[::1] weight):
    cdef int64_t m = weight.shape[0]
    cdef int64_t i, s, u, qi, w, hh, x, end, t, cyc, a, b, lo, hi, in_edge
    cdef int64_t res = 0, bad = -1, ncyc = 0, ncomp = 0, nstack = 0
    cdef Heaps h
    key_arr = np.array(weight, dtype=np.int64)
    delta_arr = np.zeros(m, dtype=np.int64)
    left_arr = np.full(m, -1, dtype=np.int64)
    right_arr = np.full(m, -1, dtype=np.int64)
    rank_arr = np.ones(m, dtype=np.int64)
    cdef int64_t[::1] kv = key_arr, dv = delta_arr, lv = left_arr, rv = right_arr, rkv = rank_arr
    if m > 0:
        h.key = &kv[0]
        h.delta = &dv[0]
        h.left = &lv[0]
        h.right = &rv[0]
        h.rank = &rkv[0]

    uf_arr = np.full(n, -1, dtype=np.int64)
    stack_node = np.zeros(2 * n + 2, dtype=np.int64)
    stack_old = np.zeros(2 * n + 2, dtype=np.int64)
    heap_arr = np.full(n, -1, dtype=np.int64)
    seen_arr = np.full(n, -1, dtype=np.int64)
    path_arr = np.zeros(n, dtype=np.int64)
    q_arr = np.zeros(n, dtype=np.int64)
    chosen_arr = np.full(n, -1, dtype=np.int64)
    # an edge whose ends fall in one contracted node pops as a one-node cycle,
    # so cycle records are bounded by n + m rather than n
    cyc_u = np.zeros(n + m + 1, dtype=np.int64)
    cyc_t = np.zeros(n + m + 1, dtype=np.int64)
    cyc_lo = np.zeros(n + m + 1, dtype=np.int64)
    cyc_hi = np.zeros(n + m + 1, dtype=np.int64)
    comp_arr = np.zeros(2 * n + m + 2, dtype=np.int64)
    cdef int64_t[::1] uf = uf_arr, sn = stack_node, so = stack_old, heap = heap_arr
    cdef int64_t[::1] seen = seen_arr, path = path_arr, q = q_arr, chosen = chosen_arr
    cdef int64_t[::1] cu = cyc_u, ct = cyc_t, clo = cyc_lo, chi = cyc_hi, comp = comp_arr

    with nogil:
        for i in range(m):
            heap[tail[i]] = _merge(&h, heap[tail[i]], i)
        seen[root] = root
        for s in range(n):
            u = s
            qi = 0
            while seen[u] < 0:
                hh = heap[u]
                if hh < 0:
                    bad = u
                    break
                _prop(&h, hh)
                w = h.key[hh]
                h.delta[hh] -= w
                _prop(&h, hh)
                heap[u] = _merge(&h, h.left[hh], h.right[hh])
                q[qi] = hh
                path[qi] = u
                qi += 1
                seen[u] = s
                res += w
                u = _find(&uf[0], head[hh])
                if seen[u] == s:
                    cyc = -1
                    end = qi
                    t = nstack
                    while True:
                        qi -= 1
                        x = path[qi]
                        cyc = _merge(&h, cyc, heap[x])
                        a = _find(&uf[0], u)
                        b = _find(&uf[0], x)
                        if a == b:
                            break
                        if uf[a] > uf[b]:
                            a, b = b, a
                        sn[nstack] = a
                        so[nstack] = uf[a]
                        sn[nstack + 1] = b
                        so[nstack + 1] = uf[b]
                        nstack += 2
                        uf[a] += uf[b]
                        uf[b] = a
                    u = _find(&uf[0], u)
                    heap[u] = cyc
                    seen[u] = -1
                    cu[ncyc] = u
                    ct[ncyc] = t
                    clo[ncyc] = ncomp
                    for i in range(qi, end):
                        comp[ncomp] = q[i]
                        ncomp += 1
                    chi[ncyc] = ncomp
                    ncyc += 1
            if bad >= 0:
                break
            for i in range(qi):
                chosen[_find(&uf[0], tail[q[i]])] = q[i]
        if bad < 0:
            while ncyc > 0:
                ncyc -= 1
                while nstack > ct[ncyc]:
                    nstack -= 1
                    uf[sn[nstack]] = so[nstack]
                in_edge = chosen[cu[ncyc]]
                for i in range(clo[ncyc], chi[ncyc]):
                    chosen[_find(&uf[0], tail[comp[i]])] = comp[i]
                chosen[_find(&uf[0], tail[in_edge])] = in_edge
            chosen[root] = -1
    if bad >= 0:
        return -1, [], bad
    return res, chosen_arr, -1
