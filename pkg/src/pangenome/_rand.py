"""Random-draw helpers for compiled kernels."""
from __future__ import annotations

import numba


@numba.njit(nogil=True, cache=True, inline="always")
def uniform_index(rng, m):
    """Uniform integer in ``0..m-1``.

    Scales one double instead of calling ``Generator.integers``, which is
    about ten times slower inside numba.  The bias is below ``m / 2**53``.
    """
    k = int(rng.random() * m)
    return k if k < m else m - 1
