"""Kernel backend selection.

Tries the compiled extension first and falls back to the pure-NumPy
implementation when it is unavailable.  ``BACKEND`` records which one won;
``benchmarks/bench_kernels.py`` compares the two head-to-head.
"""

from __future__ import annotations

try:
    from . import _corekernels as _impl

    BACKEND = "compiled"
except ImportError:  # pragma: no cover - depends on the build environment
    from . import _refkernels as _impl

    BACKEND = "fallback"

langevin_chunk = _impl.langevin_chunk
fp_chunk = _impl.fp_chunk
hopfield_seq_sweep = _impl.hopfield_seq_sweep


def backend_name() -> str:
    """Return which kernel backend was selected at import time."""
    return BACKEND
