import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from zerorange.errors import StabilityFailure
from zerorange.observables import polynomial, time_dependent
from zerorange.pde import (BoundarySpec, DensityField, SolverControls, boundary_fluxes,
                           cfl_step, fluxes, l_inf, midpoints, observed_order, rhs, solve,
                           solve_recorded, step_explicit, weak_form_residual)
from zerorange.process import ModelParams
from zerorange.rates import GrandCanonical, capped, constant, linear

ident = lambda r: np.asarray(r, dtype=float)


def test_density_field():
    f = DensityField.from_profile(lambda u: 1 + u, 4)
    assert f.M == 4 and f.h == 0.25
    assert np.allclose(f.u, [0.125, 0.375, 0.625, 0.875])
    assert f.mass() == pytest.approx(1.5)
    assert DensityField.from_profile(lambda u: 2.0, 3).rho.tolist() == [2.0, 2.0, 2.0]


def test_boundary_spec():
    with pytest.raises(ValueError):
        BoundarySpec(2)
    with pytest.raises(ValueError):
        BoundarySpec(1, alpha=-1)
    bc = BoundarySpec.from_params(ModelParams(10, theta=2, alpha=0.5))
    assert bc.kappa == 0 and bc.alpha == 0.5 and bc.delta == 1.0


def test_boundary_flux_examples():
    f = DensityField(np.array([1.0, 2.0, 3.0]))
    assert boundary_fluxes(f, BoundarySpec(0, alpha=1.0), ident) == (0.0, 0.0)
    gc = GrandCanonical(constant())
    Fl, Fr = boundary_fluxes(f, BoundarySpec(1, alpha=0.3, delta=1.0), gc)
    assert Fl == pytest.approx(0.3)
    assert Fr == pytest.approx(3.0 / 4.0)
    Fl, Fr = boundary_fluxes(f, BoundarySpec(1, 0.3, 0.2, 0.5, 2.0), ident)
    assert Fl == pytest.approx(0.3 - 0.5 * 1.0)
    assert Fr == pytest.approx(-(0.2 - 2.0 * 3.0))


def test_robin_stationary_fluxes():
    alpha, M = 1.3, 200
    f = DensityField.from_profile(lambda u: alpha * (2 - u), M)
    F = fluxes(f, BoundarySpec(1, alpha=alpha, delta=1.0), ident)
    assert np.allclose(F[1:-1], alpha, rtol=1e-12)
    assert F[0] == pytest.approx(alpha)
    # first-order boundary extrapolation: outflux off by alpha h / 2
    assert abs(F[-1] - alpha) <= alpha * f.h
    r = rhs(f, BoundarySpec(1, alpha=alpha, delta=1.0), ident)
    assert np.allclose(r[:-1], 0, atol=1e-9)


def test_rhs_examples():
    f = DensityField(np.full(50, 0.7))
    assert np.all(rhs(f, BoundarySpec(0), GrandCanonical(capped(2))) == 0)
    for M in (100, 200):
        f = DensityField.from_profile(lambda u: np.cos(np.pi * u), M)
        r = rhs(f, BoundarySpec(0), ident)
        err = l_inf(r, -np.pi**2 * np.cos(np.pi * f.u))
        assert err <= 2.0 * math.pi**4 / 12 * f.h**2 * 2


def test_discrete_mass_law():
    gc = GrandCanonical(constant())
    bc = BoundarySpec(1, alpha=0.3, beta=0.1, lam=0.4, delta=1.0)
    f = DensityField.from_profile(lambda u: 0.5 + 0.3 * np.sin(3 * u), 64)
    dt = cfl_step(f, gc)
    g = step_explicit(f, bc, gc, dt)
    Fl, Fr = boundary_fluxes(f, bc, gc)
    assert (g.mass() - f.mass()) / dt == pytest.approx(Fl - Fr, rel=1e-10, abs=1e-12)


def test_neumann_mass_per_step():
    gc = GrandCanonical(capped(3))
    f0 = DensityField.from_profile(lambda u: 1.0 + 0.8 * np.cos(np.pi * u), 100)
    sol = solve_recorded(f0, BoundarySpec(0), gc, [0.05], SolverControls(record_every_step=True))
    mass = sol.rho.sum(axis=1) / 100
    assert np.max(np.abs(np.diff(mass))) <= 1e-12
    assert sol.steps == len(sol.t) - 1


def test_constant_neumann_unchanged():
    gc = GrandCanonical(linear())
    f = solve(DensityField(np.full(40, gc.R(0.8))), BoundarySpec(0, alpha=0.8), gc, 0.3)
    assert np.allclose(f.rho, 0.8, atol=1e-14)


def test_cosine_mode_second_order():
    errs = []
    for M in (50, 100, 200):
        f0 = DensityField.from_profile(lambda u: 1.5 + np.cos(np.pi * u), M)
        f = solve(f0, BoundarySpec(0), ident, 0.05)
        errs.append(l_inf(f.rho, 1.5 + np.cos(np.pi * f.u) * math.exp(-math.pi**2 * 0.05)))
    assert min(observed_order(errs)) >= 1.9


def test_robin_long_time_limit():
    alpha, M = 1.0, 100
    gc = GrandCanonical(linear())
    f = solve(DensityField(np.zeros(M)), BoundarySpec(1, alpha=alpha, delta=1.0), gc, 12.0)
    assert l_inf(gc.Phi_array(f.rho), alpha * (2 - f.u)) <= 2 * alpha / M


def test_robin_steady_state_nonlinear():
    # relaxation is slow where Phi' = 1/(1+rho)^2 is small, so start on the exact profile
    alpha, M = 0.4, 100
    gc = GrandCanonical(constant())
    f0 = DensityField.from_profile(lambda u: gc.R_array(alpha * (2 - u)), M)
    f = solve(f0, BoundarySpec(1, alpha=alpha, delta=1.0), gc, 2.0)
    assert l_inf(gc.Phi_array(f.rho), alpha * (2 - f.u)) <= 2 * alpha / M


def test_lands_on_output_times():
    sol = solve_recorded(DensityField(np.linspace(0, 1, 20)), BoundarySpec(0), ident,
                         [0.0013, 0.01, 0.0271])
    assert sol.t.tolist() == [0.0013, 0.01, 0.0271]
    assert sol.at(0.01).t == 0.01
    with pytest.raises(KeyError):
        sol.at(0.02)


def test_stability_failure():
    f = DensityField(np.array([0.0, 1.0, 0.0, 1.0]))
    with pytest.raises(StabilityFailure):
        step_explicit(f, BoundarySpec(0), ident, 1.0)
    with pytest.raises(StabilityFailure):
        solve(f, BoundarySpec(0), ident, 0.1, SolverControls(cfl=50.0, max_halvings=0))
    # halving recovers from an oversized CFL number
    out = solve(f, BoundarySpec(0), ident, 0.1, SolverControls(cfl=3.0))
    assert np.all(out.rho >= 0)


@given(st.lists(st.floats(0, 3), min_size=8, max_size=8),
       st.lists(st.floats(0, 1), min_size=8, max_size=8))
def test_comparison_principle(base, extra):
    # ordered data stay ordered when both fields take the same CFL-limited steps
    gc = GrandCanonical(capped(2))
    bc = BoundarySpec(1, alpha=0.7, delta=1.0)
    a = DensityField(np.array(base))
    b = DensityField(a.rho + np.array(extra))
    for _ in range(30):
        dt = min(cfl_step(a, gc), cfl_step(b, gc))
        a, b = step_explicit(a, bc, gc, dt), step_explicit(b, bc, gc, dt)
        assert np.all(a.rho <= b.rho + 1e-12)
        assert np.all(a.rho >= 0)


# -- weak form ------------------------------------------------------------------------

def test_weak_residual_zero_G():
    sol = solve_recorded(DensityField(np.linspace(0, 1, 30)), BoundarySpec(1, alpha=1.0, delta=1.0),
                         ident, [0.01], SolverControls(record_every_step=True))
    zero = polynomial([0.0])
    assert weak_form_residual(sol, BoundarySpec(1, alpha=1.0, delta=1.0), ident, zero, 0.01) == 0.0


def test_weak_residual_converges_on_cosine_mode():
    G = polynomial([0, 0, 1])
    res = []
    for M in (40, 80, 160):
        f0 = DensityField.from_profile(lambda u: 1.5 + np.cos(np.pi * u), M)
        sol = solve_recorded(f0, BoundarySpec(0), ident, [0.05], SolverControls(record_every_step=True))
        res.append(abs(weak_form_residual(sol, BoundarySpec(0), ident, G, 0.05)))
    assert res[0] / res[1] > 3 and res[1] / res[2] > 3


def test_weak_residual_time_dependent_G():
    G = time_dependent("e^-s cos", lambda s, u: math.exp(-s) * np.cos(np.pi * u),
                       lambda s, u: -math.pi * math.exp(-s) * np.sin(np.pi * u),
                       lambda s, u: -math.pi**2 * math.exp(-s) * np.cos(np.pi * u),
                       lambda s, u: -math.exp(-s) * np.cos(np.pi * u))
    f0 = DensityField.from_profile(lambda u: 1 + 0.5 * u**2, 100)
    sol = solve_recorded(f0, BoundarySpec(0), ident, [0.05], SolverControls(record_every_step=True))
    assert abs(weak_form_residual(sol, BoundarySpec(0), ident, G, 0.05)) < 1e-4


def test_weak_residual_stationary_robin():
    alpha, M = 1.0, 100
    bc = BoundarySpec(1, alpha=alpha, delta=1.0)
    f0 = solve(DensityField(np.zeros(M)), bc, ident, 15.0)
    sol = solve_recorded(f0, bc, ident, [15.5], SolverControls(record_every_step=True))
    G = polynomial([0.2, 1, -1])
    for t in (sol.t[len(sol.t) // 2], 15.5):
        assert abs(weak_form_residual(sol, bc, ident, G, float(t))) <= 1e-3
