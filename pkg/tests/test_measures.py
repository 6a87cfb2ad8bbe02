import numpy as np
import pytest
from hypothesis import given, strategies as st

from zerorange.errors import FugacityExceedsRadius, FugacityOutOfRange
from zerorange.measures import (escape_rate, fugacity_profile, general_fugacity,
                                hydrostatic_profile, marginal_pmf, sample_invariant,
                                sample_product_measure, sample_slowly_varying,
                                specialized_fugacity, stationary_balance_residual)
from zerorange.process import Configuration, ModelParams
from zerorange.rates import GrandCanonical, capped, constant, linear
from zerorange.rng import stream


def test_fugacity_examples():
    p = ModelParams(10, theta=1, alpha=2.0)
    prof = fugacity_profile(p)
    assert prof(1) == pytest.approx(3.6, rel=1e-14)
    assert prof(9) == pytest.approx(2.0, rel=1e-14)


@given(st.integers(3, 200), st.sampled_from([1.0, 1.3, 2.0, 3.0]), st.floats(0.01, 5.0))
def test_reduction_identity(N, theta, alpha):
    x = np.arange(1, N)
    gen = general_fugacity(N, theta, alpha, 0.0, 0.0, 1.0, x)
    spec = specialized_fugacity(N, theta, alpha, x)
    assert np.allclose(gen, spec, rtol=1e-12, atol=0)
    assert gen[-1] == pytest.approx(alpha, rel=1e-12)


def test_fugacity_affine():
    p = ModelParams(12, theta=1.5, alpha=0.4, beta=0.9, lam=0.3, delta=0.7)
    v = fugacity_profile(p).values
    assert np.allclose(np.diff(v, 2), 0, atol=1e-14)


def test_fugacity_exceeds_radius():
    # constant g has phi* = 1 and phi(1) ~ 2 alpha
    with pytest.raises(FugacityExceedsRadius) as exc:
        fugacity_profile(ModelParams(20, alpha=0.6, g=constant()))
    assert exc.value.site == 1
    fugacity_profile(ModelParams(20, alpha=0.45, g=constant()))


def test_marginal_pmf_examples():
    gc = GrandCanonical(linear())
    assert marginal_pmf(gc, 1.0, 0) == pytest.approx(1 / gc.Z(1.0))
    assert marginal_pmf(gc, 1.0, 3) == pytest.approx(0.06131324019524039, rel=1e-12)
    assert marginal_pmf(GrandCanonical(constant()), 0.5, 2) == pytest.approx(0.125)


def test_balance_examples():
    p = ModelParams(4, theta=1, alpha=1.0)
    eta = Configuration([2, 0, 1])
    assert escape_rate(eta, p) == pytest.approx(3.5)
    assert abs(stationary_balance_residual(eta, p)) <= 1e-10 * 3.5
    phi = fugacity_profile(p).values.copy()
    phi[0] += 0.1
    assert abs(stationary_balance_residual(eta, p, phi)) > 1e-3


@given(st.lists(st.integers(0, 12), min_size=2, max_size=25),
       st.sampled_from([linear(), constant(), capped(3)]),
       st.sampled_from([1.0, 2.0, 1.7]),
       st.floats(0.01, 0.45), st.floats(0.0, 0.45), st.floats(0.0, 2.0), st.floats(0.05, 2.0))
def test_balance_identity_property(occ, g, theta, alpha, beta, lam, delta):
    eta = Configuration(occ)
    p = ModelParams(eta.N, theta, alpha, beta, lam, delta, g=g)
    try:
        fugacity_profile(p)
    except FugacityExceedsRadius:
        return
    lam_eta = escape_rate(eta, p)
    assert abs(stationary_balance_residual(eta, p)) <= 1e-10 * lam_eta


def test_hydrostatic_profile_examples():
    gc = GrandCanonical(linear())
    assert hydrostatic_profile(0.5, ModelParams(10, alpha=1.0), gc) == pytest.approx(1.5)
    gc3 = GrandCanonical(capped(3))
    p2 = ModelParams(10, theta=2, alpha=1.2, g=capped(3))
    vals = hydrostatic_profile(np.linspace(0, 1, 7), p2, gc3)
    assert np.allclose(vals, gc3.R(1.2))
    p1 = ModelParams(10, theta=1, alpha=1.2, g=capped(3))
    assert hydrostatic_profile(1.0, p1, gc3) == pytest.approx(gc3.R(1.2))
    with pytest.raises(FugacityOutOfRange):
        hydrostatic_profile(0.0, ModelParams(10, alpha=0.6, g=constant()), GrandCanonical(constant()))


def test_sample_zero_fugacity():
    gc = GrandCanonical(linear())
    eta = sample_product_measure(gc, np.zeros(9), stream(0))
    assert eta.total == 0


def test_sample_mean_poisson_one():
    gc = GrandCanonical(linear())
    draws = sample_product_measure(gc, [1.0, 1.0], stream(1), size=100_000)[:, 0]
    # sd of the mean is 1/sqrt(1e5) ~ 0.0032
    assert abs(draws.mean() - 1.0) < 0.01


def test_sample_slowly_varying_means():
    gc = GrandCanonical(constant())
    rho0 = lambda u: 0.2 + 0.6 * u
    draws = sample_slowly_varying(gc, 6, rho0, stream(2), size=40_000)
    target = rho0(np.arange(1, 6) / 6)
    # geometric sd is at most ~1.1 here
    assert np.all(np.abs(draws.mean(axis=0) - target) < 4 * 1.1 / np.sqrt(40_000))


def test_sample_reproducible():
    gc = GrandCanonical(capped(3))
    p = ModelParams(15, alpha=1.0, g=capped(3))
    a = sample_invariant(gc, p, stream(5, 3, "init"))
    b = sample_invariant(gc, p, stream(5, 3, "init"))
    assert a == b
