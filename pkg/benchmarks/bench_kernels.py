"""Benchmark the compiled kernels against the pure-Python fallback.

Covers the three hot loops: BPE training (pair counting + merge passes),
BPE encoding, and the threshold candidate sweep. Both implementations are
bit-identical; this script only measures speed.

Usage:
    python benchmarks/bench_kernels.py [--merges 300] [--docs 800] [--encodes 5000]
"""

import argparse
import time

import numpy as np

from tokenleak._kernels import _fallback
from tokenleak.class_attack import candidate_alphas

try:
    from tokenleak._kernels import _speedups
except ImportError:
    _speedups = None


def timed(fn, *args, repeat=1):
    best = float("inf")
    result = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, result


def make_corpus(rng, docs):
    alphabet = np.frombuffer(b"etaoin shrdlucmfwypvbgkjqxz", dtype=np.uint8)
    words = [bytes(rng.choice(alphabet, size=int(rng.integers(3, 10)))) for _ in range(80)]
    return [
        b" ".join(words[i] for i in rng.choice(len(words), size=10)) for _ in range(docs)
    ]


def bench_train(impl, corpus, merges):
    # mirrors bpe.train_bpe but pinned to one kernel implementation
    seqs = [np.frombuffer(doc, dtype=np.uint8).astype(np.int32) for doc in corpus]
    token_bytes = [bytes([i]) for i in range(256)]
    rules = []
    while len(rules) < merges:
        counts = impl.count_pairs(seqs)
        if not counts:
            break
        top = max(counts.values())
        if top < 2:
            break
        a, b = min(
            (p for p, c in counts.items() if c == top),
            key=lambda p: (token_bytes[p[0]], token_bytes[p[1]]),
        )
        new_id = len(token_bytes)
        token_bytes.append(token_bytes[a] + token_bytes[b])
        rules.append((a, b, new_id))
        seqs = [impl.apply_merge(s, a, b, new_id) for s in seqs]
    return np.asarray(rules, dtype=np.int32)


def bench_encode(impl, table, inputs):
    return [impl.encode_ids(ids, table) for ids in inputs]


def bench_sweep(impl, tasks):
    out = []
    for inputs, tokens, is2, alphas in tasks:
        out.append(impl.threshold_sweep(inputs, tokens, is2, alphas, 0.5))
    return out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--merges", type=int, default=300)
    parser.add_argument("--docs", type=int, default=800)
    parser.add_argument("--encodes", type=int, default=5000)
    parser.add_argument("--sweep-tasks", type=int, default=10)
    parser.add_argument("--sweep-records", type=int, default=120)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    corpus = make_corpus(rng, args.docs)
    encode_inputs = [
        rng.integers(0, 256, size=int(rng.integers(16, 96))).astype(np.int32)
        for _ in range(args.encodes)
    ]
    sweep_tasks = []
    for _ in range(args.sweep_tasks):
        n = args.sweep_records
        inputs = rng.integers(30, 400, n).astype(float)
        is2 = np.zeros(n, dtype=np.uint8)
        is2[n // 2 :] = 1
        tokens = np.floor(0.1 * inputs + np.where(is2, 42.0, 30.0) + rng.normal(0, 6, n))
        alphas = candidate_alphas(inputs, tokens, is2.astype(bool))
        sweep_tasks.append((inputs, tokens, is2, alphas))

    rows = []
    table = None
    for name, fn, prep in (
        ("bpe train", bench_train, lambda impl: (impl, corpus, args.merges)),
        ("bpe encode", bench_encode, lambda impl: (impl, table, encode_inputs)),
        ("threshold sweep", bench_sweep, lambda impl: (impl, sweep_tasks)),
    ):
        t_py, result_py = timed(fn, *prep(_fallback))
        if name == "bpe train":
            table = result_py
        if _speedups is None:
            rows.append((name, t_py, None, None))
            continue
        t_c, result_c = timed(fn, *prep(_speedups))
        if name == "bpe train":
            assert np.array_equal(result_py, result_c), "implementations diverged"
        rows.append((name, t_py, t_c, t_py / t_c))

    print(f"{'kernel':<16} {'pure python':>12} {'compiled':>12} {'speedup':>8}")
    for name, t_py, t_c, ratio in rows:
        if t_c is None:
            print(f"{name:<16} {t_py:>11.3f}s {'n/a':>12} {'n/a':>8}")
        else:
            print(f"{name:<16} {t_py:>11.3f}s {t_c:>11.3f}s {ratio:>7.1f}x")
    if _speedups is None:
        print("\ncompiled extension not available; showing fallback only")


if __name__ == "__main__":
    main()
