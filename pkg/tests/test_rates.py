import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from zerorange.errors import (DensityUnreachable, FugacityOutOfRange, ModelError,
                              ZeroRateInFactorial)
from zerorange.rates import (GrandCanonical, RateFunction, capped, constant, from_name,
                             from_table, g_factorial, linear)


@pytest.fixture(scope="module")
def gc_lin():
    return GrandCanonical(linear())


@pytest.fixture(scope="module")
def gc_const():
    return GrandCanonical(constant())


# -- rate functions ---------------------------------------------------------

def test_families_values():
    assert [linear()(k) for k in range(5)] == [0, 1, 2, 3, 4]
    assert [constant()(k) for k in range(5)] == [0, 1, 1, 1, 1]
    assert [capped(3)(k) for k in range(6)] == [0, 1, 2, 3, 3, 3]


def test_certificates():
    for g in (linear(), constant(), capped(3)):
        assert g.verify_certificates()
        assert g.non_decreasing
    assert linear().g_star == 1.0
    assert constant().g_star == 1.0
    assert math.isinf(linear().phi_star)
    assert constant().phi_star == 1.0
    assert capped(3).phi_star == 3.0


def test_non_monotone_table():
    g = from_table([0, 2, 1], tail="constant", phi_star=1.0)
    assert not g.non_decreasing
    assert g.g_star == 2.0
    assert g.phi_star == 1.0


def test_g_zero_enforced():
    with pytest.raises(ModelError):
        RateFunction((1.0, 2.0), 0.0)


def test_from_name():
    assert from_name("linear") == linear()
    assert from_name("capped(4)") == capped(4)
    assert from_name({"table": [0, 1, 3], "tail": "linear"})(4) == 7
    with pytest.raises(ModelError):
        from_name("quadratic")


def test_g_factorial_examples():
    assert g_factorial(linear(), 0) == 1
    assert g_factorial(capped(2), 0) == 1
    assert g_factorial(linear(), 4) == pytest.approx(24, rel=1e-14)
    assert g_factorial(constant(), 7) == 1


def test_g_factorial_zero_rate():
    g = from_table([0, 1, 0, 1], tail="constant", phi_star=1.0)
    with pytest.raises(ZeroRateInFactorial):
        g_factorial(g, 3)


# -- partition function and moments -------------------------------------------

def test_Z_examples(gc_lin, gc_const):
    assert gc_lin.Z(1.0) == pytest.approx(math.e, rel=1e-13)
    assert gc_lin.Z(0.0) == 1.0
    assert gc_const.Z(0.0) == 1.0
    assert gc_const.Z(0.5) == pytest.approx(2.0, rel=1e-13)


def test_Z_out_of_range(gc_const):
    with pytest.raises(FugacityOutOfRange):
        gc_const.Z(1.0)
    with pytest.raises(FugacityOutOfRange):
        gc_const.Z(-0.1)


def test_R_examples(gc_lin, gc_const):
    assert gc_lin.R(0.7) == pytest.approx(0.7, rel=1e-13)
    assert gc_lin.R(0.0) == 0.0
    assert gc_const.R(0.5) == pytest.approx(1.0, rel=1e-13)


def test_moments(gc_lin):
    assert gc_lin.moment(1.0, 2) == pytest.approx(2.0, rel=1e-13)
    assert gc_lin.moment(0.3, 1) == pytest.approx(gc_lin.R(0.3), rel=1e-14)
    for ell in range(1, 5):
        assert gc_lin.moment(0.0, ell) == 0.0


def test_moment_range(gc_lin):
    with pytest.raises(ValueError):
        gc_lin.moment(0.5, 5)


def test_capped_series_matches_direct_sum():
    gc = GrandCanonical(capped(3))
    phi = 2.2
    terms = [1.0]
    for k in range(1, 2000):
        terms.append(terms[-1] * phi / min(k, 3))
    Z = math.fsum(terms)
    R = math.fsum(k * t for k, t in enumerate(terms)) / Z
    assert gc.Z(phi) == pytest.approx(Z, rel=1e-12)
    assert gc.R(phi) == pytest.approx(R, rel=1e-12)


# -- pmf -----------------------------------------------------------------------

def test_pmf_examples(gc_lin, gc_const):
    assert gc_lin.pmf(1.0, 0) == pytest.approx(1 / math.e, rel=1e-13)
    assert gc_lin.pmf(1.0, 3) == pytest.approx(math.exp(-1) / 6, rel=1e-13)
    assert gc_const.pmf(0.5, 2) == pytest.approx(0.125, rel=1e-13)


@pytest.mark.parametrize("g,phi", [(linear(), 3.0), (constant(), 0.9), (capped(3), 2.5)])
def test_pmf_normalized(g, phi):
    gc = GrandCanonical(g)
    p = gc.pmf_array(phi, 2000)
    assert abs(p.sum() - 1) < 1e-13


@pytest.mark.parametrize("g,phis", [(linear(), [0.1, 1.0, 4.0]),
                                    (constant(), [0.1, 0.5, 0.95]),
                                    (capped(3), [0.5, 2.0, 2.9])])
def test_second_moment_bound(g, phis):
    # E[g(eta)^2] <= g* phi + phi^2
    gc = GrandCanonical(g)
    for phi in phis:
        p = gc.pmf_array(phi, 5000)
        gk = np.array([g(k) for k in range(p.size)])
        assert (p * gk**2).sum() <= g.g_star * phi + phi**2 + 1e-12


# -- Phi ----------------------------------------------------------------------------

def test_phi_inverse_examples(gc_lin, gc_const):
    assert gc_lin.phi_inverse(1.3) == pytest.approx(1.3, abs=1e-12)
    assert gc_lin.phi_inverse(0.0) == 0.0
    assert gc_const.phi_inverse(0.0) == 0.0
    assert gc_const.phi_inverse(1.0) == pytest.approx(0.5, abs=1e-12)


def test_phi_inverse_unreachable():
    # override phi* = 0.5 below the true radius 1: R is capped at R(0.5) = 1
    gc = GrandCanonical(from_table([0, 1], tail="constant", phi_star=0.5))
    assert gc.phi_inverse(0.5) == pytest.approx(1 / 3, abs=1e-12)
    with pytest.raises(DensityUnreachable):
        gc.phi_inverse(5.0)


def test_closed_forms_agree_with_series():
    plain = GrandCanonical(RateFunction((0.0, 1.0), 0.0, "constant-series"))
    closed = GrandCanonical(constant())
    for rho in (0.01, 0.5, 1.0, 7.0):
        assert plain.phi_inverse(rho) == pytest.approx(closed.phi_inverse(rho), abs=1e-12)
    for phi in (0.1, 0.5, 0.9):
        assert plain.R(phi) == pytest.approx(closed.R(phi), rel=1e-12)


def test_Phi_array_matches_scalar():
    gc = GrandCanonical(capped(3))
    rho = np.array([0.0, 0.3, 1.0, 2.5, 10.0])
    ref = [gc.phi_inverse(r) for r in rho]
    assert np.allclose(gc.Phi_array(rho), ref, rtol=1e-9, atol=1e-12)


@given(st.floats(1e-3, 0.999), st.floats(1e-3, 0.999))
def test_R_strictly_increasing(a, b):
    gc = GrandCanonical(constant())
    if a == b:
        return
    lo, hi = sorted((a, b))
    assert gc.R(lo) < gc.R(hi)


@pytest.mark.parametrize("g", [linear(), constant(), capped(3)], ids=lambda g: g.name)
def test_round_trip_log_grid(g):
    gc = GrandCanonical(g)
    for rho in np.logspace(-4, 2, 40):
        assert gc.R(gc.phi_inverse(rho)) == pytest.approx(rho, abs=1e-10, rel=1e-10)


@given(st.floats(1e-4, 50.0))
def test_round_trip_property(rho):
    gc = GrandCanonical(capped(3))
    assert abs(gc.R(gc.phi_inverse(rho)) - rho) <= 1e-10 * max(1.0, rho)
