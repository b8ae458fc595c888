# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled kernels: BPE pair counting / merge passes and the threshold sweep.

Must stay bit-identical to `_fallback.py`; the test suite asserts equivalence
on random inputs.
"""

import numpy as np

cimport cython
from libc.math cimport fabs


def count_pairs(list seqs):
    # pack adjacent pairs into int64 keys, then count via one vectorized sort
    cdef Py_ssize_t total = 0
    cdef int[:] s
    cdef Py_ssize_t i, n, j = 0
    for seq in seqs:
        n = len(seq)
        if n >= 2:
            total += n - 1
    if total == 0:
        return {}
    packed_arr = np.empty(total, dtype=np.int64)
    cdef long long[:] packed = packed_arr
    for seq in seqs:
        s = seq
        n = s.shape[0]
        for i in range(n - 1):
            packed[j] = (<long long>s[i] << 32) | <unsigned int>s[i + 1]
            j += 1
    keys, counts = np.unique(packed_arr, return_counts=True)
    cdef dict out = {}
    for key, count in zip(keys.tolist(), counts.tolist()):
        out[(key >> 32, key & 0xFFFFFFFF)] = count
    return out


def apply_merge(seq, int a, int b, int new_id):
    cdef int[:] s = seq
    cdef Py_ssize_t n = s.shape[0]
    out_arr = np.empty(n, dtype=np.int32)
    cdef int[:] o = out_arr
    cdef Py_ssize_t i = 0, j = 0
    while i < n:
        if i < n - 1 and s[i] == a and s[i + 1] == b:
            o[j] = new_id
            i += 2
        else:
            o[j] = s[i]
            i += 1
        j += 1
    return out_arr[:j].copy()


def encode_ids(ids, merges):
    cdef int[:] s = np.ascontiguousarray(ids, dtype=np.int32)
    cdef int[:, :] m = np.ascontiguousarray(merges, dtype=np.int32).reshape(-1, 3)
    cdef Py_ssize_t n_merges = m.shape[0]
    cdef int vocab = 256 + <int>n_merges
    present_arr = np.zeros(vocab, dtype=np.uint8)
    cdef unsigned char[:] present = present_arr
    cdef Py_ssize_t i, j, k, n
    cdef int a, b, nid
    cdef bint changed

    n = s.shape[0]
    cur_arr = np.ascontiguousarray(ids, dtype=np.int32).copy()
    cdef int[:] cur = cur_arr
    nxt_arr = np.empty(n, dtype=np.int32)
    cdef int[:] nxt = nxt_arr

    for i in range(n):
        present[cur[i]] = 1
    for k in range(n_merges):
        a = m[k, 0]
        b = m[k, 1]
        nid = m[k, 2]
        if a >= vocab or b >= vocab or not present[a] or not present[b]:
            continue
        changed = False
        i = 0
        j = 0
        while i < n:
            if i < n - 1 and cur[i] == a and cur[i + 1] == b:
                nxt[j] = nid
                i += 2
                changed = True
            else:
                nxt[j] = cur[i]
                i += 1
            j += 1
        if changed:
            cur_arr, nxt_arr = nxt_arr, cur_arr
            cur = cur_arr
            nxt = nxt_arr
            n = j
            present_arr[:] = 0
            for i in range(n):
                present[cur[i]] = 1
    return cur_arr[:n].copy()


@cython.cdivision(True)
def threshold_sweep(inputs, tokens, is_second, alphas, double theta):
    """Identical contract to the fallback version; see there for the rules."""
    cdef double[:] L = np.ascontiguousarray(inputs, dtype=np.float64)
    cdef double[:] T = np.ascontiguousarray(tokens, dtype=np.float64)
    cdef unsigned char[:] y = np.ascontiguousarray(is_second, dtype=np.uint8)
    cdef double[:] A = np.ascontiguousarray(alphas, dtype=np.float64)
    cdef Py_ssize_t n = L.shape[0]
    cdef Py_ssize_t n_alpha = A.shape[0]

    v_arr = np.empty(n, dtype=np.float64)
    cdef double[:] v = v_arr
    cdef long long[:] cum2 = np.empty(n + 1, dtype=np.int64)
    cdef double[:] v_sorted = np.empty(n, dtype=np.float64)

    cdef long long total2 = 0
    cdef Py_ssize_t i, k, ai
    for i in range(n):
        total2 += y[i]

    cdef double best_score = -1.0
    cdef double best_alpha = 0.0, best_beta = 0.0, best_p1 = 0.0, best_p2 = 0.0
    cdef double alpha, beta, p1, p2, score
    cdef long long tp1, tp2
    cdef long long[:] order

    for ai in range(n_alpha):
        alpha = A[ai]
        for i in range(n):
            v[i] = T[i] - alpha * L[i]
        order = np.argsort(v_arr, kind="stable")
        cum2[0] = 0
        for i in range(n):
            v_sorted[i] = v[order[i]]
            cum2[i + 1] = cum2[i] + y[order[i]]
        for k in range(n + 1):
            if k == 0:
                beta = v_sorted[0] - 1.0
            elif k == n:
                beta = v_sorted[n - 1]
            else:
                if not v_sorted[k - 1] < v_sorted[k]:
                    continue
                beta = (v_sorted[k - 1] + v_sorted[k]) / 2.0
            tp1 = k - cum2[k]
            tp2 = total2 - cum2[k]
            p1 = (<double>tp1) / (<double>k) if k > 0 else 0.0
            p2 = (<double>tp2) / (<double>(n - k)) if k < n else 0.0
            score = 0.5 * (p1 + p2) - theta * fabs(p1 - p2)
            if score > best_score:
                best_score = score
                best_alpha = alpha
                best_beta = beta
                best_p1 = p1
                best_p2 = p2
    return best_alpha, best_beta, best_p1, best_p2, best_score
