"""Kernel selection: compiled BM25 extension when built, numpy fallback otherwise.

Set GROUNDCHECK_PURE_PYTHON=1 to force the fallback regardless of what is
installed (used by the benchmark and by tests that compare both paths).
"""

import os

if os.environ.get("GROUNDCHECK_PURE_PYTHON"):
    from groundcheck._bm25_kernel_py import score_postings

    KERNEL_IMPL = "python"
else:
    try:
        from groundcheck._bm25_kernel import score_postings

        KERNEL_IMPL = "cython"
    except ImportError:
        from groundcheck._bm25_kernel_py import score_postings

        KERNEL_IMPL = "python"

__all__ = ["score_postings", "KERNEL_IMPL"]
