import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from ugac.errors import DomainError
from ugac.ggd import (
    GgdParams,
    aleatoric_variance,
    digamma,
    ggd_pdf,
    ggd_sample,
    log_gamma,
    nll_pixel,
)

mpmath.mp.dps = 50


def test_log_gamma_known_values():
    assert log_gamma(1.0) == pytest.approx(0.0, abs=1e-14)
    assert log_gamma(2.0) == pytest.approx(0.0, abs=1e-14)
    assert log_gamma(0.5) == pytest.approx(0.5723649429247001, abs=1e-12)
    assert log_gamma(0.5) == pytest.approx(math.log(math.sqrt(math.pi)), abs=1e-12)


def test_log_gamma_matches_high_precision_reference():
    # 50-digit reference; absolute error budget 1e-10 on [1e-2, 100]
    xs = np.concatenate([np.geomspace(1e-2, 100, 200), [7.3, 0.49999, 0.5, 0.50001]])
    ref = np.array([float(mpmath.loggamma(mpmath.mpf(float(x)))) for x in xs])
    assert np.max(np.abs(log_gamma(xs) - ref)) < 1e-10
    assert log_gamma(7.3) == pytest.approx(float(mpmath.loggamma(mpmath.mpf("7.3"))), abs=1e-10)


def test_digamma_matches_reference():
    xs = np.geomspace(1e-2, 100, 100)
    ref = np.array([float(mpmath.digamma(mpmath.mpf(float(x)))) for x in xs])
    assert np.max(np.abs(digamma(xs) - ref) / np.maximum(1.0, np.abs(ref))) < 1e-9


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan")])
def test_log_gamma_domain(bad):
    with pytest.raises(DomainError):
        log_gamma(bad)


def test_pdf_laplace_and_gaussian_peaks():
    assert ggd_pdf(0.0, GgdParams(0.0, 1.0, 1.0)) == pytest.approx(0.5, abs=1e-14)
    assert ggd_pdf(0.0, GgdParams(0.0, 1.0, 2.0)) == pytest.approx(1 / math.sqrt(math.pi), abs=1e-12)


def _pdf_integral(alpha, beta, lo=-np.inf, hi=np.inf):
    p = GgdParams(0.0, alpha, beta)
    f = lambda x: ggd_pdf(x, p)  # noqa: E731
    left, _ = integrate.quad(f, lo, 0.0, epsabs=1e-13, epsrel=1e-12, limit=500)
    right, _ = integrate.quad(f, 0.0, hi, epsabs=1e-13, epsrel=1e-12, limit=500)
    return left + right


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0, 4.0])
def test_pdf_normalises_over_real_line(alpha, beta):
    assert _pdf_integral(alpha, beta) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0, 4.0])
def test_pdf_mass_on_truncated_interval(alpha, beta):
    # the +-40 alpha window misses tail mass Q(1/beta, 40^beta), which is not negligible for beta=0.5
    expected = 1.0 - special.gammaincc(1.0 / beta, 40.0 ** beta)
    got = _pdf_integral(alpha, beta, -40 * alpha, 40 * alpha)
    assert got == pytest.approx(expected, abs=1e-6)


def test_nll_pixel_term_values():
    assert nll_pixel(0.0, 1.0, 1.0) == pytest.approx(0.0, abs=1e-14)
    assert nll_pixel(1.0, 1.0, 1.0) == pytest.approx(1.0, abs=1e-15)


def test_nll_pixel_consistent_with_pdf():
    expected = -math.log(ggd_pdf(0.7, GgdParams(0.0, 0.9, 1.7))) - math.log(2.0)
    assert abs(nll_pixel(0.7, 0.9, 1.7) - expected) < 1e-12


@settings(max_examples=200, deadline=None)
@given(
    r=st.floats(-5, 5),
    alpha=st.floats(1e-3, 50),
    beta=st.floats(1e-2, 10),
)
def test_nll_pixel_plus_ln2_is_negative_log_pdf(r, alpha, beta):
    pdf = ggd_pdf(r, GgdParams(0.0, alpha, beta))
    if pdf <= 0.0 or not math.isfinite(pdf):
        return  # underflow of the density in the far tail
    lhs = nll_pixel(r, alpha, beta) + math.log(2.0)
    assert abs(lhs + math.log(pdf)) <= 1e-12 * max(1.0, abs(lhs))


@settings(max_examples=100, deadline=None)
@given(r=st.floats(-10, 10))
def test_nll_special_cases(r):
    assert nll_pixel(r, 1.0, 1.0) == pytest.approx(abs(r), abs=1e-12)
    # -log(beta/alpha) contributes -ln 2 at (1, 2); log Gamma(1/2) = ln sqrt(pi)
    expected = r * r - math.log(2.0) + 0.5 * math.log(math.pi)
    assert nll_pixel(r, 1.0, 2.0) == pytest.approx(expected, abs=1e-12)


def test_sample_gaussian_case_variance():
    x = ggd_sample(GgdParams(0.0, 1.0, 2.0), 1_000_000, np.random.default_rng(0))
    assert x.var() == pytest.approx(0.5, rel=0.01)


def test_sample_laplace_mean_abs():
    x = ggd_sample(GgdParams(0.0, 1.0, 1.0), 1_000_000, np.random.default_rng(1))
    assert np.abs(x).mean() == pytest.approx(1.0, rel=0.01)


def test_sample_location_shift():
    x = ggd_sample(GgdParams(5.0, 1.0, 1.5), 200_000, np.random.default_rng(2))
    stderr = x.std() / math.sqrt(x.size)
    assert abs(x.mean() - 5.0) < 3 * stderr


def test_sample_density_matches_pdf():
    p = GgdParams(0.0, 0.8, 1.3)
    x = ggd_sample(p, 400_000, np.random.default_rng(3))
    hist, edges = np.histogram(x, bins=60, range=(-3, 3))
    centres = 0.5 * (edges[1:] + edges[:-1])
    width = edges[1] - edges[0]
    expected = ggd_pdf(centres, p) * width * x.size
    assert np.max(np.abs(hist - expected) / np.sqrt(expected + 1)) < 5


def test_aleatoric_variance_closed_forms():
    assert aleatoric_variance(1.0, 2.0) == pytest.approx(0.5, abs=1e-12)
    assert aleatoric_variance(1.0, 1.0) == pytest.approx(2.0, abs=1e-12)
    assert aleatoric_variance(3.0, 1.0) == pytest.approx(18.0, abs=1e-10)


def test_aleatoric_variance_monte_carlo():
    x = ggd_sample(GgdParams(0.0, 1.3, 0.8), 1_000_000, np.random.default_rng(4))
    assert x.var() == pytest.approx(aleatoric_variance(1.3, 0.8), rel=0.01)


def test_aleatoric_variance_elementwise():
    a = np.array([[1.0, 2.0], [0.5, 1.0]])
    b = np.array([[2.0, 1.0], [1.5, 3.0]])
    expected = [[aleatoric_variance(float(ai), float(bi)) for ai, bi in zip(ra, rb)] for ra, rb in zip(a, b)]
    np.testing.assert_allclose(aleatoric_variance(a, b), expected, rtol=1e-14)


@pytest.mark.parametrize("alpha,beta", [(0.0, 1.0), (1.0, 0.0), (1.0, 11.0), (-1.0, 2.0)])
def test_invalid_params_rejected(alpha, beta):
    with pytest.raises(DomainError):
        GgdParams(0.0, alpha, beta)
    with pytest.raises(DomainError):
        aleatoric_variance(alpha, beta)


def test_clamped_constructor():
    p = GgdParams.clamped(0.0, 0.0, 50.0)
    assert p.alpha == 1e-3 and p.beta == 10.0
