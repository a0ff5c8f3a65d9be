"""Line-count birth-death chain behind the single-gene graph length.

With ``i`` lines the graph gains a line at rate ``i*gamma/2`` and loses one
at rate ``i*(i-1)/2 + i*rho/2``.  Measuring time by accumulated length
divided by two removes the common factor ``i/2`` and leaves births at
``gamma`` and deaths at ``i - 1 + rho``, so the graph length is twice the
hitting time of zero of that chain.
"""
from __future__ import annotations

import dataclasses
import math

import numba
import numpy as np
from scipy import linalg, optimize

from . import montecarlo
from .errors import NonConvergence, RangeError
from .params import ModelParams, RngSpec
from .specialfn import DEFAULT_SERIES_TOL, MAX_SERIES_TERMS


@dataclasses.dataclass(frozen=True)
class BirthDeathSpec:
    rho: float
    gamma: float

    def __post_init__(self):
        if not self.rho > 0:
            raise RangeError("rho", f"rho must be > 0, got {self.rho}")
        if not self.gamma >= 0:
            raise RangeError("gamma", f"gamma must be >= 0, got {self.gamma}")

    @classmethod
    def from_params(cls, params: ModelParams) -> BirthDeathSpec:
        return cls(params.rho, params.gamma)

    absorbing_state = 0

    def birth_rate(self, i: int) -> float:
        return self.gamma

    def death_rate(self, i: int) -> float:
        return i - 1 + self.rho


def _check_start(start: int) -> int:
    if int(start) != start or start < 1:
        raise RangeError("start", f"start must be an integer >= 1, got {start}")
    return int(start)


def _tail_sum(spec: BirthDeathSpec, k: int, tol: float) -> tuple[float, float]:
    """``sum_{m>k} p_m`` as ``(log of its first term, sum relative to that term)``."""
    rho, gamma = spec.rho, spec.gamma
    # p_{k+1} = gamma^k / (rho)_{k+1}
    log_first = k * math.log(gamma) - math.fsum(math.log(rho + i) for i in range(k + 1))
    terms = [1.0]
    term = 1.0
    m = k + 1
    while True:
        r = gamma / (rho + m)  # p_{m+1} / p_m
        if r < 1.0 and term * r / (1.0 - r) <= tol * terms[0]:
            break
        term *= r
        terms.append(term)
        m += 1
        if m - k > MAX_SERIES_TERMS:
            raise NonConvergence("hitting-time tail series did not converge")
    return log_first, math.fsum(terms)


def expected_hitting_time(spec: BirthDeathSpec, start: int, tol: float = DEFAULT_SERIES_TOL) -> float:
    """``E[T | Z_0 = start]`` for the hitting time ``T`` of zero.

    Uses the classical representation
    ``sum_i p_i + sum_{k=1}^{start-1} (prod_{r<=k} mu_r/lambda_r) sum_{m>k} p_m``
    with ``p_i = lambda_1..lambda_{i-1} / (mu_1..mu_i)``.  The product and
    the tail are combined in log space since they are individually huge
    and tiny for small ``gamma``.  Without births the chain only descends
    and the expectation is ``sum_{k<start} 1/(k+rho)``.
    """
    start = _check_start(start)
    rho, gamma = spec.rho, spec.gamma
    if gamma == 0.0:
        return math.fsum(1.0 / (k + rho) for k in range(start))
    parts = []
    log_first, rel = _tail_sum(spec, 0, tol)
    parts.append(math.exp(log_first) * rel)
    log_prod = 0.0
    for k in range(1, start):
        log_prod += math.log(spec.death_rate(k)) - math.log(spec.birth_rate(k))
        log_first, rel = _tail_sum(spec, k, tol)
        parts.append(math.exp(log_prod + log_first) * rel)
    return math.fsum(parts)


@numba.njit(nogil=True, cache=True)
def _hitting_times_kernel(rng, rho, gamma, start, out):
    for r in range(out.shape[0]):
        z = start
        t = 0.0
        comp = 0.0  # Kahan compensation
        while z > 0:
            rate = gamma + z - 1.0 + rho
            y = rng.exponential(1.0 / rate) - comp
            s = t + y
            comp = (s - t) - y
            t = s
            if rng.random() * rate < gamma:
                z += 1
            else:
                z -= 1
        out[r] = t


def simulate_hitting_time(spec: BirthDeathSpec, start: int, rng: RngSpec) -> float:
    """One realisation of the hitting time of zero from ``start``."""
    start = _check_start(start)
    out = np.empty(1)
    _hitting_times_kernel(rng.generator(), spec.rho, spec.gamma, start, out)
    return float(out[0])


def simulate_hitting_times(
    spec: BirthDeathSpec, start: int, reps: int, seed: int, threads: int | None = None
) -> np.ndarray:
    """``reps`` independent hitting times; block ``b`` uses stream ``b`` of the birth-death namespace."""
    start = _check_start(start)

    def worker(gen, b, count):
        out = np.empty(count)
        _hitting_times_kernel(gen, spec.rho, spec.gamma, start, out)
        return out

    parts = montecarlo.run_blocks(
        worker, reps, seed, stream_offset=montecarlo.STREAM_BIRTHDEATH, threads=threads
    )
    return montecarlo.concat(parts)


def _truncated_generator(spec: BirthDeathSpec, size: int) -> np.ndarray:
    """Sub-generator on states ``1..size``; births out of the top state are suppressed."""
    Q = np.zeros((size, size))
    for i in range(1, size + 1):
        mu = spec.death_rate(i)
        lam = spec.gamma if i < size else 0.0
        Q[i - 1, i - 1] = -(mu + lam)
        if i > 1:
            Q[i - 1, i - 2] = mu
        if i < size:
            Q[i - 1, i] = lam
    return Q


def _truncation_size(spec: BirthDeathSpec, start: int) -> int:
    # The chain hovers around gamma lines; the top state is many standard
    # deviations above both gamma and the start.
    return int(start + 40 + 4 * spec.gamma + 8 * math.sqrt(spec.gamma + 1))


def expected_excess(spec: BirthDeathSpec, start: int, s: float) -> float:
    """``E[(T - s)^+]``, the integrated survival function of ``T`` beyond ``s``.

    Computed as ``e_start' exp(Q s) (-Q)^{-1} 1`` on a truncated state space.
    """
    start = _check_start(start)
    size = _truncation_size(spec, start)
    Q = _truncated_generator(spec, size)
    mean_from = np.linalg.solve(-Q, np.ones(size))
    if s <= 0:
        return float(mean_from[start - 1]) - s
    return float(linalg.expm(Q * s)[start - 1] @ mean_from)


def excess_threshold(spec: BirthDeathSpec, start: int, target: float) -> float:
    """Smallest ``s >= 0`` with ``E[(T - s)^+] <= target``."""
    if target <= 0:
        raise RangeError("target", f"target must be > 0, got {target}")
    if expected_excess(spec, start, 0.0) <= target:
        return 0.0
    hi = 1.0
    while expected_excess(spec, start, hi) > target:
        hi *= 2.0
        if hi > 1e6:
            raise NonConvergence("could not bracket the excess threshold")

    def f(s):
        return math.log(max(expected_excess(spec, start, s), 1e-300)) - math.log(target)

    return float(optimize.brentq(f, 0.0, hi, xtol=1e-9, rtol=1e-12))
