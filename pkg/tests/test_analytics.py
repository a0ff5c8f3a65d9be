from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pangenome import analytics
from pangenome.analytics import (
    DiffusionCoefficients,
    cov_agtg_lengths_small_gamma,
    expected_agtg_length,
    expected_avg_genes,
    expected_pairwise_diff,
    expected_pangenome_size,
    expected_spectrum,
    solve_two_gene_length_system,
    spectrum_quadrature_oracle,
    var_avg_genes_small_gamma,
    var_pairwise_diff_small_gamma,
)
from pangenome.errors import RangeError
from pangenome.params import ModelParams
from pangenome.specialfn import falling_factorial


def P(theta=1.0, rho=1.0, gamma=0.0, n=1):
    return ModelParams(theta, rho, gamma, n)


# ---------------------------------------------------------------- spectrum


def test_spectrum_gamma_zero_n2():
    assert list(expected_spectrum(P(2, 1, 0, 2)).values) == [2.0, 1.0]


def test_spectrum_unit_params_n1():
    assert list(expected_spectrum(P(1, 1, 0, 1)).values) == [1.0]


def test_spectrum_mass_moves_to_top_class_with_gamma():
    shares = []
    for g in (0, 2, 6):
        spec = expected_spectrum(P(1, 2, g, 10))
        shares.append(spec[10] / spec.total())
    assert shares[0] < shares[1] < shares[2]


@pytest.mark.parametrize("n", [1, 2, 5, 10, 20])
@pytest.mark.parametrize("rho", [0.5, 1, 2])
def test_gamma_zero_is_single_term_closed_form(n, rho):
    spec = expected_spectrum(P(1.3, rho, 0, n))
    for k in range(1, n + 1):
        closed = 1.3 / k * falling_factorial(n, k) / falling_factorial(n - 1 + rho, k)
        assert spec[k] == pytest.approx(closed, rel=1e-15)


def test_spectrum_indexing_is_one_based():
    spec = expected_spectrum(P(1, 1, 0, 3))
    with pytest.raises(IndexError):
        spec[0]
    with pytest.raises(IndexError):
        spec[4]


@pytest.mark.parametrize("n, k", [(2, 1), (1, 1)])
def test_quadrature_unit_examples(n, k):
    assert spectrum_quadrature_oracle(P(1, 1, 0, n), n, k) == pytest.approx(1.0, rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(
    rho=st.floats(0.3, 4),
    gamma=st.floats(0, 3),
    n=st.integers(1, 12),
    data=st.data(),
)
def test_quadrature_matches_series_off_grid(rho, gamma, n, data):
    k = data.draw(st.integers(1, n))
    p = P(1, rho, gamma, n)
    series = expected_spectrum(p)[k]
    assert spectrum_quadrature_oracle(p, n, k) == pytest.approx(series, rel=1e-8)


def test_quadrature_rejects_bad_class():
    with pytest.raises(RangeError):
        spectrum_quadrature_oracle(P(1, 1, 0, 3), 3, 4)


# ---------------------------------------------------------------- moments


def test_avg_genes_pins():
    assert expected_avg_genes(P(1, 1, 1)) == pytest.approx(math.e - 1, abs=1e-12)
    assert expected_avg_genes(P(3, 2, 0)) == 1.5


def test_avg_genes_matches_spectrum_for_all_n():
    p = P(1, 1, 0.5)
    a = expected_avg_genes(p)
    for n in range(1, 21):
        spec = expected_spectrum(p, n)
        assert math.fsum(k * spec[k] for k in range(1, n + 1)) / n == pytest.approx(a, abs=1e-10)


def test_pairwise_diff_pins():
    assert expected_pairwise_diff(P(1, 1, 1)) == pytest.approx(math.e - 2, abs=1e-12)
    assert expected_pairwise_diff(P(4, 3, 0)) == 1.0


def test_pairwise_diff_is_half_the_two_sample_singletons():
    p = P(1, 1, 0.3)
    assert expected_pairwise_diff(p) == pytest.approx(0.5 * expected_spectrum(p, 2)[1], abs=1e-12)


def test_pangenome_size_pins():
    assert expected_pangenome_size(P(1, 1, 0), 3) == pytest.approx(11 / 6, abs=1e-14)
    assert expected_pangenome_size(P(1, 1, 1), 1) == pytest.approx(math.e - 1, abs=1e-12)


def test_pangenome_size_is_spectrum_total():
    p = P(1, 0.5, 0.7)
    assert expected_pangenome_size(p, 10) == pytest.approx(expected_spectrum(p, 10).total(), abs=1e-10)


@pytest.mark.parametrize("rho, gamma, n, expected", [
    (1, 0, 1, 2.0),
    (1, 1, 1, 2 * (math.e - 1)),
    (2, 0, 3, 2 * (1 / 2 + 1 / 3 + 1 / 4)),
])
def test_graph_length_pins(rho, gamma, n, expected):
    assert expected_agtg_length(P(0, rho, gamma), n) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("rho", [0.5, 1, 2])
@pytest.mark.parametrize("gamma", [0, 0.5, 1, 2])
def test_graph_length_route_equals_pangenome_size(rho, gamma):
    for n in (1, 2, 5, 10, 20):
        p = P(1.7, rho, gamma, n)
        assert 1.7 / 2 * expected_agtg_length(p, n) == pytest.approx(expected_pangenome_size(p, n), abs=1e-10)


def test_monotonicity_on_grid():
    for rho in (0.5, 1, 2):
        for gamma in (0, 0.5, 1, 2):
            sizes = [expected_pangenome_size(P(1, rho, gamma), n) for n in range(1, 21)]
            assert all(a < b for a, b in zip(sizes, sizes[1:]))
        for n in (2, 5, 10):
            tops = [expected_spectrum(P(1, rho, g, n))[n] for g in (0, 0.5, 1, 2)]
            assert all(a < b for a, b in zip(tops, tops[1:]))


def test_theta_zero_gives_zero_everywhere():
    p = P(0, 1, 0.5, 4)
    assert not expected_spectrum(p).values.any()
    assert expected_pangenome_size(p) == 0
    assert spectrum_quadrature_oracle(p, 4, 2) == 0


# ---------------------------------------------------------------- variances


def test_var_avg_genes_leading_term():
    assert var_avg_genes_small_gamma(P(2, 1, 0)) == 2.0


def test_var_avg_genes_regression_pin():
    assert var_avg_genes_small_gamma(P(1, 1, 1)) == pytest.approx(1 + 1 / 2 + 1 / 6 + 1 / (4 * 5 * 15), rel=1e-14)
    assert var_avg_genes_small_gamma(P(1, 1, 1)) == pytest.approx(1.67, rel=1e-14)


def test_var_pairwise_diff_pins():
    assert var_pairwise_diff_small_gamma(P(1, 1, 0)) == pytest.approx(1 / 3, abs=1e-15)
    assert var_pairwise_diff_small_gamma(P(0, 2, 0.3)) == 0.0


@pytest.mark.parametrize("rho, expected", [(1, 1 / 75), (2, 1 / 1260)])
def test_covariance_coefficient_pins(rho, expected):
    assert cov_agtg_lengths_small_gamma(rho) == pytest.approx(expected, rel=1e-14)


def test_covariance_coefficient_vanishes_for_instant_loss():
    assert cov_agtg_lengths_small_gamma(math.inf) == 0.0
    assert cov_agtg_lengths_small_gamma(1e6) < 1e-25


@pytest.mark.parametrize("rho", [0.5, 1, 2])
def test_two_gene_system_reproduces_coefficient(rho):
    assert solve_two_gene_length_system(rho) == pytest.approx(cov_agtg_lengths_small_gamma(rho), rel=1e-4)


def test_two_gene_fit_has_no_constant_or_linear_term():
    coefs = analytics.fit_two_gene_covariance(1.0)
    c2 = cov_agtg_lengths_small_gamma(1.0)
    assert abs(coefs[0]) < 1e-10
    assert abs(coefs[1]) < 1e-4 * c2


def test_two_gene_system_at_gamma_zero_gives_independent_lengths():
    # without transfer the two genes ride one line and only decouple at loss
    assert analytics.two_gene_length_covariance(1.0, 0.0) == pytest.approx(0.0, abs=1e-12)


def test_gamma3_coefficient_is_finite_and_small():
    c3 = analytics.var_avg_genes_gamma3_coefficient(P(1, 1, 0.1))
    assert math.isfinite(c3)
    assert abs(c3) < 1


# ---------------------------------------------------------------- diffusion


def test_diffusion_coefficients():
    d = DiffusionCoefficients(rho=1.5, gamma=0.7)
    assert d.psi(0.0) == 1.0
    assert d.mu(0.5) == pytest.approx(-0.375 + 0.0875)
    assert d.sigma2(0.25) == 0.1875
    xs = np.linspace(0, 0.99, 40)
    phis = [d.phi(x) for x in xs]
    assert phis[0] == 0
    assert all(a <= b for a, b in zip(phis, phis[1:]))


def test_phi_matches_closed_form_without_transfer():
    # with gamma=0 and rho=2, psi(y) = 1/(1-y) and phi(x) = -log(1-x)
    d = DiffusionCoefficients(rho=2.0, gamma=0.0)
    for x in (0.1, 0.5, 0.9):
        assert d.phi(x) == pytest.approx(-math.log1p(-x), rel=1e-10)


def test_green_function_needs_ordered_arguments():
    d = DiffusionCoefficients(1, 0)
    with pytest.raises(RangeError):
        d.green(0.5, 0.4)
    assert d.green(0.1, 0.5) > 0


def test_figure2_table_rows():
    rows = analytics.figure2_table(1, 2, [0, 1], 3)
    assert [r[:2] for r in rows] == [(1, 0.0), (2, 0.0), (3, 0.0), (1, 1.0), (2, 1.0), (3, 1.0)]
    assert rows[0][2] == expected_spectrum(P(1, 2, 0, 3))[1]
