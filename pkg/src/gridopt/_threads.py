"""BLAS thread control for the solver loops.

The dense systems here are small (tens to a few hundred rows); threaded BLAS
adds dispatch overhead that dwarfs the arithmetic, so solver entry points
pin BLAS to one thread for their duration.
"""

from __future__ import annotations

from contextlib import nullcontext

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None


def single_threaded_blas():
    if threadpool_limits is None:  # pragma: no cover
        return nullcontext()
    return threadpool_limits(limits=1, user_api="blas")
