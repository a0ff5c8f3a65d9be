"""Large-population expectations and small-gamma variance expansions.

Every series here is summed by hand with an explicit tail bound so that the
Monte Carlo engines and the quadrature oracle have something independent to
be compared against.
"""
from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import NonConvergence, RangeError, SingularSystem
from .params import ModelParams, validate
from .specialfn import (
    DEFAULT_QUAD_TOL,
    DEFAULT_SERIES_TOL,
    MAX_SERIES_TERMS,
    hyp1f1_series,
    integrate_adaptive,
)

# The variance expansions are only evaluated for small transfer rates.
EXACT_VARIANCE_MAX_GAMMA = 0.5
DEFAULT_GAMMA_GRID = tuple(np.linspace(0.001, 0.01, 10))


@dataclasses.dataclass(frozen=True)
class SpectrumExpectation:
    """Expected frequency spectrum; ``values[k - 1]`` is ``E[G_k]``."""

    n: int
    values: np.ndarray

    def __getitem__(self, k: int) -> float:
        if not 1 <= k <= self.n:
            raise IndexError(f"frequency class {k} outside 1..{self.n}")
        return float(self.values[k - 1])

    def total(self) -> float:
        return math.fsum(self.values)


@dataclasses.dataclass(frozen=True)
class DiffusionCoefficients:
    """Single-gene frequency diffusion ``dX = mu(X) dt + sqrt(sigma2(X)) dW``.

    ``psi`` is the scale density and ``phi`` its integral; the Green
    function gives the expected time spent near ``x`` before loss when
    started from ``delta <= x``.
    """

    rho: float
    gamma: float

    def mu(self, x: float) -> float:
        return -0.5 * self.rho * x + 0.5 * self.gamma * x * (1.0 - x)

    def sigma2(self, x: float) -> float:
        return x * (1.0 - x)

    def psi(self, y: float) -> float:
        return (1.0 - y) ** (1.0 - self.rho) * math.exp(-self.gamma * y)

    def phi(self, x: float, tol: float = DEFAULT_QUAD_TOL) -> float:
        if not 0.0 <= x < 1.0:
            raise RangeError("x", f"phi is evaluated on [0, 1), got {x}")
        if x == 0.0:
            return 0.0
        return x * integrate_adaptive(lambda u: self.psi(x * u), tol)

    def green(self, delta: float, x: float) -> float:
        if not 0 < delta <= x < 1:
            raise RangeError("x", "the Green function needs 0 < delta <= x < 1")
        return 2.0 * self.phi(delta) / (self.sigma2(x) * self.psi(x))

    def gene_density(self, theta: float, x: float) -> float:
        """Poisson intensity of genes at frequency ``x`` in equilibrium.

        New genes enter at ``delta`` with rate ``theta / (2 phi(delta))``;
        multiplying by the Green function removes ``delta``.
        """
        return theta / (self.sigma2(x) * self.psi(x))


def _params(params: ModelParams, n: int | None) -> tuple[ModelParams, int]:
    validate(params)
    n = params.n if n is None else n
    if int(n) != n or n < 1:
        raise RangeError("n", f"sample size must be an integer >= 1, got {n}")
    return params, int(n)


def expected_spectrum(
    params: ModelParams, n: int | None = None, tol: float = DEFAULT_SERIES_TOL
) -> SpectrumExpectation:
    """Expected number of genes carried by exactly ``k`` of ``n`` sampled genomes.

    ``E[G_k] = (theta/k) (n)_k / (n-1+rho)_k * 1F1(k; n+rho; gamma)`` with
    falling factorials in the prefactor.
    """
    params, n = _params(params, n)
    theta, rho, gamma = params.theta, params.rho, params.gamma
    values = np.empty(n)
    ratio = 1.0  # (n)_k / (n-1+rho)_k, built up one factor at a time
    for k in range(1, n + 1):
        ratio *= (n - k + 1) / (n - k + rho)
        series = hyp1f1_series(k, n + rho, gamma, tol).value
        values[k - 1] = theta / k * ratio * series
    return SpectrumExpectation(n, values)


def spectrum_quadrature_oracle(
    params: ModelParams, n: int, k: int, tol: float = DEFAULT_QUAD_TOL
) -> float:
    """``E[G_k]`` by integrating the equilibrium gene density against binomial sampling.

    ``tol`` is applied relative to the value of the integral, since the
    comparison against the series is relative.
    """
    params, n = _params(params, n)
    if not 1 <= k <= n:
        raise RangeError("k", f"k must lie in 1..{n}, got {k}")
    theta, rho, gamma = params.theta, params.rho, params.gamma
    if theta == 0:
        return 0.0
    right = n - k - 1 + rho

    # density(x) * x^k (1-x)^(n-k) with the 1/x and (1-x)^(rho-1) factors
    # folded in; 1-x is supplied exactly to keep the right endpoint accurate
    def integrand(x, xc):
        return math.exp(gamma * x) * x ** (k - 1) * xc**right

    integral = integrate_adaptive(
        integrand,
        tol=1e-300,
        rtol=tol,
        left_exponent=k - 1,
        right_exponent=right,
        with_complement=True,
    )
    return math.comb(n, k) * theta * integral


def expected_avg_genes(params: ModelParams, tol: float = DEFAULT_SERIES_TOL) -> float:
    """``E[A] = (theta/rho) 1F1(1; 1+rho; gamma)``; independent of ``n``."""
    validate(params)
    return params.theta / params.rho * hyp1f1_series(1.0, 1.0 + params.rho, params.gamma, tol).value


def expected_pairwise_diff(params: ModelParams, tol: float = DEFAULT_SERIES_TOL) -> float:
    """``E[D] = (theta/(1+rho)) 1F1(1; 2+rho; gamma)``; independent of ``n``."""
    validate(params)
    rho = params.rho
    return params.theta / (1.0 + rho) * hyp1f1_series(1.0, 2.0 + rho, params.gamma, tol).value


def expected_pangenome_size(
    params: ModelParams, n: int | None = None, tol: float = DEFAULT_SERIES_TOL
) -> float:
    """Expected number of distinct genes in a sample of ``n``.

    ``theta sum_{k<n} 1/(k+rho) + theta sum_m gamma^m/m (1/(rho)_m - 1/(n+rho)_m)``.
    """
    params, n = _params(params, n)
    theta, rho, gamma = params.theta, params.rho, params.gamma
    head = math.fsum(1.0 / (k + rho) for k in range(n))
    terms = []
    partial = head
    a = b = 1.0  # gamma^m / (rho)_m and gamma^m / (n+rho)_m
    for m in range(1, MAX_SERIES_TERMS):
        if gamma == 0.0:
            break
        a *= gamma / (rho + m - 1)
        b *= gamma / (n + rho + m - 1)
        term = (a - b) / m
        terms.append(term)
        partial += term
        r = gamma / (rho + m)
        # later terms are bounded by a_j / j, whose ratio is at most r
        if r < 1.0 and term <= tol * partial:
            tail = a / m * r / (1.0 - r)
            if tail <= tol * partial:
                break
    else:
        raise NonConvergence("pangenome-size series did not converge")
    return theta * (head + math.fsum(terms))


def expected_agtg_length(params: ModelParams, n: int | None = None, tol: float = DEFAULT_SERIES_TOL) -> float:
    """Expected total length of the single-gene graph started from ``n`` lines.

    Summed as ``2 sum_{k<n} sum_{j>=1} gamma^(j-1) / (rho+k)_j``: the expected
    hitting time of zero for the line-count chain with births ``gamma`` and
    deaths ``i-1+rho``, reorganised by the state ``k+1`` from which the
    final descent below it starts.  Does not depend on ``theta``.
    """
    params, n = _params(params, n)
    rho, gamma = params.rho, params.gamma
    outer = []
    for k in range(n):
        term = 1.0 / (rho + k)
        inner = [term]
        j = 1
        while gamma > 0.0:
            r = gamma / (rho + k + j)
            if r < 1.0 and term <= tol * inner[0]:
                tail = term * r / (1.0 - r)
                if tail <= tol * inner[0]:
                    break
            term *= r
            inner.append(term)
            j += 1
            if j > MAX_SERIES_TERMS:
                raise NonConvergence("graph-length series did not converge")
        outer.append(math.fsum(inner))
    return 2.0 * math.fsum(outer)


def var_avg_genes_small_gamma(params: ModelParams) -> float:
    """Variance of the gene count of one genome, expanded to second order in gamma."""
    validate(params)
    theta, rho, gamma = params.theta, params.rho, params.gamma
    c2 = 1.0 / ((1 + rho) * (2 + rho)) + theta / (
        (1 + rho) ** 2 * (3 + 2 * rho) * (2 + 7 * rho + 6 * rho**2)
    )
    return theta / rho * (1.0 + gamma / (1 + rho) + c2 * gamma**2)


def var_pairwise_diff_small_gamma(params: ModelParams) -> float:
    """Variance of the pairwise difference of two genomes, expanded to first order in gamma."""
    validate(params)
    theta, rho, gamma = params.theta, params.rho, params.gamma
    numer = 2 * (12 + 110 * rho + 248 * rho**2 + 209 * rho**3 + 60 * rho**4)
    denom = (1 + rho) * (2 + rho) * (1 + 2 * rho) ** 2 * (3 + 2 * rho) * (2 + 3 * rho) * (6 + 5 * rho)
    c1 = 1.0 / (2 * (2 + rho)) + theta * numer / denom
    return theta / (1 + rho) * (0.5 + theta / ((1 + rho) * (1 + 2 * rho)) + c1 * gamma)


def cov_agtg_lengths_small_gamma(rho: float) -> float:
    """Leading ``gamma^2`` coefficient of the covariance of the lengths of two coupled one-line graphs."""
    if not rho > 0:
        raise RangeError("rho", f"rho must be > 0, got {rho}")
    if math.isinf(rho):
        return 0.0
    return 4.0 / (rho * (1 + rho) ** 2 * (3 + 2 * rho) * (2 + 7 * rho + 6 * rho**2))


# Unknowns of the two-gene system, in solve order: states (x, y, z) counting
# lines that carry only gene 1, both genes, only gene 2.
TWO_GENE_STATES = ("010", "110", "210", "111", "101", "201", "020")


def two_gene_system(rho: float, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Assemble ``M e = c`` for ``e[s] = E_s[L1 L2]`` over :data:`TWO_GENE_STATES`.

    Each row is a first-step decomposition of ``E_s[L1 L2]`` for the
    two-gene line process, with ``E_s[L_i]`` taken from the single-gene
    length.  Transitions that leave the listed states only carry
    contributions of order ``gamma^3`` to ``E_010[L1 L2]`` and are dropped.
    """
    if not rho > 0:
        raise RangeError("rho", f"rho must be > 0, got {rho}")
    ell = {m: expected_agtg_length(ModelParams(theta=0.0, rho=rho, gamma=gamma), m) for m in (1, 2, 3)}
    idx = {s: i for i, s in enumerate(TWO_GENE_STATES)}
    g, r = gamma, rho
    rows = {
        "010": ({"010": g + r, "110": -g}, 2 * ell[1]),
        "110": (
            {"110": 1 + 1.5 * r + 1.5 * g, "210": -g, "111": -0.5 * g, "101": -0.5 * r, "010": -(1 + 0.5 * r)},
            ell[2] + 2 * ell[1],
        ),
        "210": ({"210": 3 + 2 * r, "110": -(3 + r), "201": -0.5 * r}, ell[3] + 3 * ell[1]),
        "111": ({"111": 3 + 2 * r, "020": -1.0, "110": -(2 + r), "201": -r}, 4 * ell[2]),
        "101": ({"101": 1 + g + r, "010": -1.0, "201": -g}, 2 * ell[1]),
        "201": ({"201": 3 + 1.5 * r, "101": -(1 + r), "110": -2.0}, ell[2] + 2 * ell[1]),
        "020": ({"020": 1 + 2 * r, "010": -1.0, "110": -2 * r}, 4 * ell[2]),
    }
    M = np.zeros((7, 7))
    c = np.zeros(7)
    for state, (coefs, rhs) in rows.items():
        i = idx[state]
        for other, v in coefs.items():
            M[i, idx[other]] += v
        c[i] = rhs
    return M, c


def two_gene_length_covariance(rho: float, gamma: float) -> float:
    """``E_010[L1 L2] - E[L(one line)]^2`` from the truncated two-gene system."""
    M, c = two_gene_system(rho, gamma)
    if not np.isfinite(M).all() or abs(np.linalg.det(M)) < 1e-300:
        raise SingularSystem(f"two-gene system is singular at rho={rho}, gamma={gamma}")
    try:
        e = np.linalg.solve(M, c)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    ell1 = expected_agtg_length(ModelParams(theta=0.0, rho=rho, gamma=gamma), 1)
    return float(e[0] - ell1**2)


def fit_two_gene_covariance(
    rho: float, gamma_grid=DEFAULT_GAMMA_GRID, degree: int | None = None
) -> np.ndarray:
    """Polynomial coefficients (ascending powers of gamma) of the covariance over ``gamma_grid``."""
    grid = np.asarray(gamma_grid, dtype=float)
    if grid.size < 3:
        raise RangeError("gamma_grid", "need at least 3 grid points")
    if (grid <= 0).any():
        raise RangeError("gamma_grid", "grid values must be positive")
    if degree is None:
        degree = min(4, grid.size - 1)
    covs = np.array([two_gene_length_covariance(rho, g) for g in grid])
    return np.polynomial.polynomial.polyfit(grid, covs, degree)


def solve_two_gene_length_system(rho: float, gamma_grid=DEFAULT_GAMMA_GRID) -> float:
    """Leading ``gamma^2`` coefficient of the two-graph length covariance, fitted over ``gamma_grid``."""
    return float(fit_two_gene_covariance(rho, gamma_grid)[2])


def var_avg_genes_gamma3_coefficient(params: ModelParams, gamma_grid=DEFAULT_GAMMA_GRID) -> float:
    """Estimated ``gamma^3`` coefficient of the one-genome gene-count variance.

    The variance is ``E[A] + theta^2/4 COV[L1, L2]``; the first part
    contributes ``theta / (rho (1+rho)(2+rho)(3+rho))`` exactly and the
    second is read off the polynomial fit of the two-gene system.
    """
    validate(params)
    theta, rho = params.theta, params.rho
    from_mean = theta / (rho * (1 + rho) * (2 + rho) * (3 + rho))
    coefs = fit_two_gene_covariance(rho, gamma_grid)
    return from_mean + theta**2 / 4.0 * float(coefs[3])


def figure2_table(theta: float, rho: float, gammas, n: int) -> list[tuple[int, float, float]]:
    """Rows ``(k, gamma, E[G_k])`` for every ``k`` in ``1..n`` and every ``gamma``."""
    rows = []
    for g in gammas:
        spec = expected_spectrum(ModelParams(theta=theta, rho=rho, gamma=float(g), n=n))
        rows.extend((k, float(g), spec[k]) for k in range(1, n + 1))
    return rows
