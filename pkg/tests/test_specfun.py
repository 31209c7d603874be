import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zicount.specfun import (
    DomainError,
    log_beta,
    log_bessel_k_half,
    log_gamma,
    log_gamma_ratio,
    std_normal_cdf,
    std_normal_pdf,
    std_normal_quantile,
)

mp.mp.dps = 40


def test_log_gamma_known_values():
    assert log_gamma(1.0) == pytest.approx(0.0, abs=1e-15)
    assert log_gamma(0.5) == pytest.approx(0.5723649429247001, rel=1e-13)
    assert log_gamma(6.0) == pytest.approx(math.log(120.0), rel=1e-14)


def test_log_gamma_against_mpmath_across_range():
    xs = np.geomspace(1e-3, 1e6, 400)
    got = log_gamma(xs)
    for x, g in zip(xs, got):
        ref = float(mp.loggamma(mp.mpf(float(x))))
        assert abs(g - ref) <= 1e-12 * max(abs(ref), 1.0), x


@given(st.floats(0.1, 100.0))
def test_log_gamma_functional_equation(x):
    lhs = log_gamma(x + 1.0)
    rhs = log_gamma(x) + math.log(x)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


@pytest.mark.parametrize("x", [0.0, -1.0, -0.5])
def test_log_gamma_rejects_nonpositive(x):
    with pytest.raises(DomainError):
        log_gamma(x)


@given(st.floats(1e-3, 1e7), st.floats(-0.9, 50.0))
@settings(max_examples=200)
def test_log_gamma_ratio_matches_mpmath(x, r):
    if x + r <= 1e-3:
        return
    ref = float(mp.loggamma(mp.mpf(x) + mp.mpf(r)) - mp.loggamma(mp.mpf(x)))
    assert log_gamma_ratio(x, r) == pytest.approx(ref, rel=1e-10, abs=1e-10)


def test_log_beta_known_values():
    assert log_beta(1.0, 1.0) == pytest.approx(0.0, abs=1e-15)
    assert log_beta(2.0, 3.0) == pytest.approx(math.log(1.0 / 12.0), rel=1e-13)
    assert log_beta(0.5, 0.5) == pytest.approx(math.log(math.pi), rel=1e-13)
    with pytest.raises(DomainError):
        log_beta(0.0, 1.0)


def test_bessel_closed_form_and_symmetry():
    expected = math.log(math.sqrt(math.pi / 2.0) * math.exp(-1.0))
    assert log_bessel_k_half(1, 1.0) == pytest.approx(expected, rel=1e-14)
    assert log_bessel_k_half(0, 1.0) == log_bessel_k_half(1, 1.0)
    assert math.exp(log_bessel_k_half(1, 1.0)) == pytest.approx(float(mp.besselk(0.5, 1)), rel=1e-14)


def _k_quadrature(order, t):
    # K_v(t) = 1/2 int_0^inf x^{v-1} exp(-t/2 (x + 1/x)) dx
    f = lambda x: x ** (order - 1) * mp.exp(-t / 2 * (x + 1 / x))
    return mp.quad(f, [0, 1, mp.inf]) / 2


def test_bessel_k_three_halves_at_two_by_quadrature():
    ref = mp.log(_k_quadrature(mp.mpf(1.5), mp.mpf(2)))
    assert log_bessel_k_half(2, 2.0) == pytest.approx(float(ref), rel=1e-10)


def test_bessel_matches_integral_definition_grid():
    rng = np.random.default_rng(11)
    ts = np.concatenate([[0.1, 50.0], rng.uniform(0.1, 50.0, 8)])
    worst = 0.0
    for t in ts:
        for m in range(0, 31):
            ref = _k_quadrature(mp.mpf(m) - mp.mpf("0.5"), mp.mpf(float(t)))
            got = math.exp(log_bessel_k_half(m, float(t)) - float(mp.log(ref)))
            worst = max(worst, abs(got - 1.0))
    assert worst <= 1e-9


def test_bessel_vectorised_matches_scalar():
    m = np.array([0, 3, 10, 30])
    t = np.array([0.3, 2.0, 7.5, 40.0])
    vec = log_bessel_k_half(m, t)
    for i in range(4):
        assert vec[i] == log_bessel_k_half(int(m[i]), float(t[i]))


def test_bessel_large_order_finite():
    assert math.isfinite(log_bessel_k_half(2000, 0.01))


def test_bessel_domain():
    with pytest.raises(DomainError):
        log_bessel_k_half(1, 0.0)
    with pytest.raises(DomainError):
        log_bessel_k_half(-1, 1.0)


def test_normal_cdf_values():
    assert std_normal_cdf(0.0) == 0.5
    assert std_normal_cdf(1.959964) == pytest.approx(0.975, abs=1e-7)
    assert std_normal_cdf(-40.0) == pytest.approx(0.0, abs=1e-300)
    assert std_normal_cdf(-np.inf) == 0.0


@given(st.floats(-38.0, 38.0))
def test_normal_cdf_against_mpmath_and_symmetry(z):
    ref = float(mp.ncdf(z))
    assert abs(std_normal_cdf(z) - ref) <= 1e-12
    assert std_normal_cdf(-z) == pytest.approx(1.0 - std_normal_cdf(z), abs=1e-15)


def test_normal_pdf():
    assert std_normal_pdf(0.0) == pytest.approx(1.0 / math.sqrt(2.0 * math.pi), rel=1e-15)


def test_normal_quantile_values():
    assert std_normal_quantile(0.5) == pytest.approx(0.0, abs=1e-15)
    assert std_normal_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-12)
    assert std_normal_quantile(0.4) == pytest.approx(-0.2533471031357997, abs=1e-12)


@given(st.floats(1e-8, 1 - 1e-8))
@settings(max_examples=300)
def test_normal_round_trip(p):
    z = std_normal_quantile(p)
    assert abs(std_normal_cdf(z) - p) <= 1e-10
    assert abs(z - float(mp.sqrt(2) * mp.erfinv(2 * mp.mpf(p) - 1))) <= 1e-9 * max(1.0, abs(z))


def test_normal_quantile_monotone_dense():
    p = np.linspace(1e-8, 1 - 1e-8, 20001)
    z = std_normal_quantile(p)
    assert np.all(np.diff(z) > 0)
    assert np.all(np.diff(std_normal_cdf(z)) >= 0)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
def test_normal_quantile_domain(p):
    with pytest.raises(DomainError):
        std_normal_quantile(p)
