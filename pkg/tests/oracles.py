"""Independent oracles shared by several test modules."""
from __future__ import annotations

import numpy as np
from scipy.linalg import expm


def exact_increment_moments(N, k0, rho, gamma, dt, pair_rate=0.5):
    """Mean and variance of the tagged carrier-frequency change over ``dt``.

    Without gains the carrier count is a birth-death chain on ``0..N``; the
    matrix exponential of its generator gives the exact increment law.
    """
    k = np.arange(N + 1, dtype=float)
    up = pair_rate * k * (N - k) + 0.5 * gamma * k * (N - k) / N
    down = pair_rate * k * (N - k) + 0.5 * rho * k
    Q = np.diag(up[:-1], 1) + np.diag(down[1:], -1)
    Q -= np.diag(Q.sum(axis=1))
    law = expm(Q * dt)[k0]
    inc = (k - k0) / N
    mean = float(law @ inc)
    return mean, float(law @ inc**2) - mean * mean
