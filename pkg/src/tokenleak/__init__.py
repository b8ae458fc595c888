"""Workbench for the output-token-count side channel in LLM serving.

Simulates an autoregressive serving endpoint, recovers token counts from
timing, mounts language- and class-recovery attacks on observable lengths
and timings, and evaluates padding defenses. Everything is seeded and
runs offline on planted distributions.
"""

from tokenleak._kernels import HAVE_COMPILED
from tokenleak.trace import DerivedFeatures, ObservationRecord, Trace, derive_features, load_trace, save_trace

__version__ = "0.1.0"

__all__ = [
    "HAVE_COMPILED",
    "ObservationRecord",
    "DerivedFeatures",
    "Trace",
    "derive_features",
    "load_trace",
    "save_trace",
    "__version__",
]
