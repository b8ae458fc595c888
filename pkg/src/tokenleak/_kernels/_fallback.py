"""Pure-Python kernels, bit-identical to the compiled versions.

Selected automatically when the extension is unavailable (or when
``TOKENLEAK_NO_EXT=1``). Semantics must match `_speedups.pyx` exactly so
results never depend on which implementation is active.
"""

from __future__ import annotations

from collections import Counter

import numpy as np


def count_pairs(seqs: list[np.ndarray]) -> dict[tuple[int, int], int]:
    """Counts of adjacent token-id pairs over all sequences (overlaps count)."""
    c: Counter = Counter()
    for seq in seqs:
        s = seq.tolist()
        if len(s) >= 2:
            c.update(zip(s, s[1:]))
    return dict(c)


def apply_merge(seq: np.ndarray, a: int, b: int, new_id: int) -> np.ndarray:
    """One left-to-right non-overlapping replacement pass of (a, b) -> new_id."""
    s = seq.tolist()
    out = []
    i, n = 0, len(s)
    while i < n:
        if i < n - 1 and s[i] == a and s[i + 1] == b:
            out.append(new_id)
            i += 2
        else:
            out.append(s[i])
            i += 1
    return np.asarray(out, dtype=np.int32)


def encode_ids(ids: np.ndarray, merges: np.ndarray) -> np.ndarray:
    """Apply merge rules (rows of [a, b, new_id]) in rank order."""
    s = ids.tolist()
    present = set(s)
    for a, b, nid in merges.tolist():
        if a not in present or b not in present:
            continue
        out = []
        i, n = 0, len(s)
        changed = False
        while i < n:
            if i < n - 1 and s[i] == a and s[i + 1] == b:
                out.append(nid)
                i += 2
                changed = True
            else:
                out.append(s[i])
                i += 1
        if changed:
            s = out
            present = set(s)
    return np.asarray(s, dtype=np.int32)


def threshold_sweep(
    inputs: np.ndarray,
    tokens: np.ndarray,
    is_second: np.ndarray,
    alphas: np.ndarray,
    theta: float,
) -> tuple[float, float, float, float, float]:
    """Best (alpha, beta) for the rule `second class iff tokens > alpha*L + beta`.

    `alphas` must arrive deduplicated and sorted by (|alpha|, alpha); within
    one alpha, candidate betas are swept in ascending order, and only strictly
    better scores replace the incumbent, which realizes the tie-break
    "smaller |alpha|, then smaller beta".

    Returns (alpha, beta, prec1, prec2, score).
    """
    n = len(inputs)
    total2 = int(is_second.sum())
    best = (-1.0, 0.0, 0.0, 0.0, 0.0)  # score, alpha, beta, p1, p2
    for alpha in alphas:
        v = tokens - alpha * inputs
        order = np.argsort(v, kind="stable")
        v_sorted = v[order]
        y_sorted = is_second[order].astype(np.int64)
        cum2 = np.concatenate(([0], np.cumsum(y_sorted)))
        for k in range(n + 1):
            if k == 0:
                beta = v_sorted[0] - 1.0
            elif k == n:
                beta = v_sorted[n - 1]
            else:
                if not v_sorted[k - 1] < v_sorted[k]:
                    continue
                beta = (v_sorted[k - 1] + v_sorted[k]) / 2.0
            tp1 = k - int(cum2[k])
            tp2 = total2 - int(cum2[k])
            p1 = tp1 / k if k > 0 else 0.0
            p2 = tp2 / (n - k) if k < n else 0.0
            score = 0.5 * (p1 + p2) - theta * abs(p1 - p2)
            if score > best[0]:
                best = (score, float(alpha), float(beta), p1, p2)
    score, alpha, beta, p1, p2 = best
    return alpha, beta, p1, p2, score
