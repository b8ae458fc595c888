"""Hot-loop kernels: compiled extension when available, pure Python otherwise.

Both implementations are bit-identical; `TOKENLEAK_NO_EXT=1` forces the
fallback (useful for the benchmark and for debugging).
"""

import os

if os.environ.get("TOKENLEAK_NO_EXT") == "1":
    from tokenleak._kernels import _fallback as impl

    HAVE_COMPILED = False
else:
    try:
        from tokenleak._kernels import _speedups as impl  # type: ignore[attr-defined]

        HAVE_COMPILED = True
    except ImportError:
        from tokenleak._kernels import _fallback as impl

        HAVE_COMPILED = False

count_pairs = impl.count_pairs
apply_merge = impl.apply_merge
encode_ids = impl.encode_ids
threshold_sweep = impl.threshold_sweep

__all__ = [
    "HAVE_COMPILED",
    "count_pairs",
    "apply_merge",
    "encode_ids",
    "threshold_sweep",
]
