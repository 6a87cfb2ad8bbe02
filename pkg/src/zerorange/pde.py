"""Finite-volume solver for ``d_t rho = Laplacian Phi(rho)`` on [0, 1].

Cells are uniform with midpoints ``u_i = (i - 1/2) h``.  The flux
``J = -d_u Phi(rho)`` is discretized as ``-(Phi_{i+1} - Phi_i)/h`` inside
and taken from the reservoir law at the two ends, using the
boundary-adjacent cell value (first-order extrapolation).  Forward Euler
with a CFL-limited step keeps the discrete maximum principle.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import StabilityFailure
from .process import ModelParams

PHI_PRIME_FLOOR = 1e-12


@dataclass
class DensityField:
    rho: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)

    @property
    def M(self) -> int:
        return self.rho.size

    @property
    def h(self) -> float:
        return 1.0 / self.rho.size

    @property
    def u(self) -> np.ndarray:
        return midpoints(self.M)

    def mass(self) -> float:
        return float(self.rho.sum() * self.h)

    @classmethod
    def from_profile(cls, gamma: Callable, M: int, t: float = 0.0) -> "DensityField":
        """Initial data sampled at cell midpoints."""
        u = midpoints(M)
        vals = np.asarray(gamma(u), dtype=float)
        return cls(np.broadcast_to(vals, u.shape).copy(), t)


def midpoints(M: int) -> np.ndarray:
    return (np.arange(M) + 0.5) / M


@dataclass(frozen=True)
class BoundarySpec:
    kappa: int
    alpha: float = 0.0
    beta: float = 0.0
    lam: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        if self.kappa not in (0, 1):
            raise ValueError("kappa must be 0 or 1")
        for name in ("alpha", "beta", "lam", "delta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @classmethod
    def from_params(cls, params: ModelParams) -> "BoundarySpec":
        return cls(params.kappa, params.alpha, params.beta, params.lam, params.delta)


def phi_map(gc) -> Callable[[np.ndarray], np.ndarray]:
    """Accept a GrandCanonical (uses its vectorized Phi) or a plain callable."""
    f = getattr(gc, "Phi_array", None)
    return f if f is not None else gc


def boundary_fluxes(fld: DensityField, bc: BoundarySpec, gc, phi_vals=None):
    """``(F_left, F_right)``: flux ``-d_u Phi`` through u = 0 and u = 1."""
    if bc.kappa == 0:
        return 0.0, 0.0
    if phi_vals is None:
        Phi = phi_map(gc)
        p1 = float(Phi(fld.rho[:1])[0])
        pM = float(Phi(fld.rho[-1:])[0])
    else:
        p1, pM = float(phi_vals[0]), float(phi_vals[-1])
    return bc.alpha - bc.lam * p1, -(bc.beta - bc.delta * pM)


def fluxes(fld: DensityField, bc: BoundarySpec, gc, phi_vals=None) -> np.ndarray:
    """All ``M + 1`` face fluxes, left boundary first."""
    if phi_vals is None:
        phi_vals = np.asarray(phi_map(gc)(fld.rho), dtype=float)
    F = np.empty(fld.M + 1)
    F[1:-1] = -(phi_vals[1:] - phi_vals[:-1]) / fld.h
    F[0], F[-1] = boundary_fluxes(fld, bc, gc, phi_vals)
    return F


def rhs(fld: DensityField, bc: BoundarySpec, gc) -> np.ndarray:
    F = fluxes(fld, bc, gc)
    return (F[:-1] - F[1:]) / fld.h


def phi_prime_sup(rho: np.ndarray, gc) -> float:
    """Largest centred-difference slope of Phi over the field values."""
    Phi = phi_map(gc)
    d = 1e-6 * np.maximum(1.0, np.abs(rho))
    lo = np.maximum(rho - d, 0.0)
    hi = rho + d
    slope = (np.asarray(Phi(hi)) - np.asarray(Phi(lo))) / (hi - lo)
    return max(float(np.max(slope)), PHI_PRIME_FLOOR)


def cfl_step(fld: DensityField, gc, cfl: float = 0.9) -> float:
    return cfl * fld.h**2 / (2.0 * phi_prime_sup(fld.rho, gc))


def step_explicit(fld: DensityField, bc: BoundarySpec, gc, dt: float) -> DensityField:
    """One forward-Euler step; raises StabilityFailure on negative or non-finite output."""
    new = fld.rho + dt * rhs(fld, bc, gc)
    if not np.all(np.isfinite(new)):
        raise StabilityFailure(f"non-finite density after a step of {dt:g} at t={fld.t:g}")
    if np.any(new < 0):
        raise StabilityFailure(f"negative density {new.min():g} after a step of {dt:g} at t={fld.t:g}")
    return DensityField(new, fld.t + dt)


@dataclass
class SolverControls:
    cfl: float = 0.9
    max_halvings: int = 20
    record_every_step: bool = False
    max_steps: int = 50_000_000


@dataclass
class PDESolution:
    t: np.ndarray
    rho: np.ndarray            # (len(t), M)
    steps: int = 0
    halvings: int = 0

    @property
    def M(self) -> int:
        return self.rho.shape[1]

    @property
    def final(self) -> DensityField:
        return DensityField(self.rho[-1].copy(), float(self.t[-1]))

    def at(self, t: float) -> DensityField:
        k = int(np.argmin(np.abs(self.t - t)))
        if abs(self.t[k] - t) > 1e-12 * max(1.0, abs(t)):
            raise KeyError(f"time {t} was not recorded")
        return DensityField(self.rho[k].copy(), float(self.t[k]))

    def write_csv(self, fh, header: bool = True):
        w = csv.writer(fh)
        if header:
            w.writerow(["t", "u", "rho"])
        u = midpoints(self.M)
        for t, row in zip(self.t, self.rho):
            for ui, r in zip(u, row):
                w.writerow([repr(float(t)), repr(float(ui)), repr(float(r))])


def solve_recorded(field0: DensityField, bc: BoundarySpec, gc, output_times: Sequence[float],
                   controls: Optional[SolverControls] = None) -> PDESolution:
    """Integrate from ``field0.t`` and record the field at every output time
    (and after every step when ``record_every_step``)."""
    c = controls or SolverControls()
    outs = sorted(float(t) for t in output_times)
    if outs and outs[0] < field0.t:
        raise ValueError("output times must not precede the initial time")
    fld = DensityField(field0.rho.copy(), field0.t)
    ts, rows = [], []
    if c.record_every_step or (outs and outs[0] == fld.t):
        ts.append(fld.t)
        rows.append(fld.rho.copy())
    steps = halvings = 0
    for target in outs:
        while fld.t < target:
            dt = min(cfl_step(fld, gc, c.cfl), target - fld.t)
            landing = dt == target - fld.t
            for attempt in range(c.max_halvings + 1):
                try:
                    new = step_explicit(fld, bc, gc, dt)
                    break
                except StabilityFailure:
                    if attempt == c.max_halvings:
                        raise
                    dt /= 2
                    landing = False
                    halvings += 1
            fld = new
            if landing:
                fld.t = target          # no drift off the requested time
            steps += 1
            if steps > c.max_steps:
                raise StabilityFailure(f"step budget {c.max_steps} exhausted at t={fld.t:g}")
            if c.record_every_step:
                ts.append(fld.t)
                rows.append(fld.rho.copy())
        if not c.record_every_step and (not ts or ts[-1] != target):
            ts.append(target)
            rows.append(fld.rho.copy())
    return PDESolution(np.array(ts), np.array(rows).reshape(len(ts), field0.M), steps, halvings)


def solve(field0: DensityField, bc: BoundarySpec, gc, T: float,
          controls: Optional[SolverControls] = None) -> DensityField:
    """Field at time ``T`` (absolute time, not a duration)."""
    return solve_recorded(field0, bc, gc, [T], controls).final


def boundary_phi(rho: np.ndarray, bc: BoundarySpec, gc):
    """``Phi`` at u = 0 and u = 1 by half-cell extrapolation along the boundary flux."""
    fld = DensityField(rho)
    vals = np.asarray(phi_map(gc)(rho), dtype=float)
    Fl, Fr = boundary_fluxes(fld, bc, gc, vals)
    h = fld.h
    return vals[0] + 0.5 * h * Fl, vals[-1] - 0.5 * h * Fr


def weak_form_residual(sol: PDESolution, bc: BoundarySpec, gc, G, t: float,
                       gamma: Optional[np.ndarray] = None) -> float:
    """Defect of the weak formulation at time ``t`` along a recorded solution.

    Space integrals use the cell midpoint rule, time integrals the
    trapezoidal rule over the recorded times in ``[t0, t]``.  ``G`` is a
    TestFunction, time-dependent or not.  ``gamma`` defaults to the first
    recorded field.
    """
    u = midpoints(sol.M)
    h = 1.0 / sol.M
    k_end = int(np.searchsorted(sol.t, t + 1e-12 * max(1.0, t), side="right"))
    if k_end == 0 or abs(sol.t[k_end - 1] - t) > 1e-12 * max(1.0, t):
        raise KeyError(f"time {t} was not recorded")
    ts = sol.t[:k_end]
    rho0 = sol.rho[0] if gamma is None else np.asarray(gamma, float)
    Phi = phi_map(gc)
    integrand = np.empty(ts.size)
    for k, s in enumerate(ts):
        r = sol.rho[k]
        ph = np.asarray(Phi(r), dtype=float)
        p0, p1 = boundary_phi(r, bc, gc)
        val = h * (r @ G.dtime(u, s) + ph @ G.deriv2(u, s))
        val += p0 * G.deriv1(0.0, s) - p1 * G.deriv1(1.0, s)
        val += bc.kappa * ((bc.alpha - bc.lam * p0) * G(0.0, s) + (bc.beta - bc.delta * p1) * G(1.0, s))
        integrand[k] = val
    integral = float(np.trapezoid(integrand, ts)) if ts.size > 1 else 0.0
    lhs = h * (sol.rho[k_end - 1] @ G(u, t)) - h * (rho0 @ G(u, ts[0]))
    return float(lhs - integral)


def l_inf(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def observed_order(errors: Sequence[float]) -> list:
    """``log2`` ratios of successive errors under grid halving."""
    e = list(errors)
    return [math.log2(e[i] / e[i + 1]) for i in range(len(e) - 1)]
