"""Invariant product measures and their fugacity profiles."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import FugacityExceedsRadius, FugacityOutOfRange, ModelError
from .process import Configuration, ModelParams
from .rates import GrandCanonical


@dataclass(frozen=True)
class FugacityProfile:
    N: int
    theta: float
    alpha: float
    beta: float
    lam: float
    delta: float
    values: np.ndarray      # values[x-1] = phi(x), x = 1..N-1

    def __call__(self, x: int) -> float:
        return float(self.values[x - 1])

    @property
    def sites(self) -> np.ndarray:
        return np.arange(1, self.N)


def general_fugacity(N: int, theta: float, alpha: float, beta: float,
                     lam: float, delta: float, x) -> np.ndarray:
    """Linear fugacity of the two-sided reservoir model at sites ``x``."""
    nt = float(N) ** theta
    den = lam * delta * (N - 2) + (lam + delta) * nt
    if den <= 0:
        raise ModelError("no invariant measure: both annihilation rates vanish")
    x = np.asarray(x, dtype=float)
    num = -(alpha * delta - beta * lam) * (x - 1) + alpha * delta * (N - 2) + (alpha + beta) * nt
    return num / den


def specialized_fugacity(N: int, theta: float, alpha: float, x) -> np.ndarray:
    """Fugacity of the one-sided model (``delta = 1``, ``lam = beta = 0``)."""
    x = np.asarray(x, dtype=float)
    N = float(N)
    return -alpha / N**theta * (x + 1) + alpha / N ** (theta - 1) + alpha


def fugacity_profile(params: ModelParams, check: bool = True) -> FugacityProfile:
    """Fugacity of the invariant product measure at every site.

    Raises :class:`FugacityExceedsRadius` naming the first site where the
    value is not below ``phi*`` (the invariant measure does not exist).
    """
    N = params.N
    x = np.arange(1, N)
    vals = general_fugacity(N, params.theta, params.alpha, params.beta,
                            params.lam, params.delta, x)
    if check:
        ps = params.g.phi_star
        bad = np.nonzero(~(vals < ps))[0]
        if bad.size:
            i = int(bad[0])
            raise FugacityExceedsRadius(i + 1, float(vals[i]), ps)
        if np.any(vals < 0):
            raise ModelError("negative fugacity")
    vals.setflags(write=False)
    return FugacityProfile(N, params.theta, params.alpha, params.beta,
                           params.lam, params.delta, vals)


def marginal_pmf(gc: GrandCanonical, phi: float, k: int) -> float:
    return gc.pmf(phi, k)


def site_fugacities(gc: GrandCanonical, N: int, rho0: Callable[[float], float]) -> np.ndarray:
    """``Phi(rho0(x/N))`` at ``x = 1..N-1`` (slowly varying parameter)."""
    u = np.arange(1, N) / N
    dens = np.array([float(rho0(v)) for v in u])
    cache: dict = {}
    out = np.empty_like(dens)
    for i, d in enumerate(dens):
        if d not in cache:
            cache[d] = gc.phi_inverse(d)
        out[i] = cache[d]
    return out


def sample_product_measure(gc: GrandCanonical, fugacities, rng: np.random.Generator,
                           size: Optional[int] = None):
    """Independent draws ``eta(x) ~ pmf(phi(x))`` by inverse CDF.

    One uniform per site, consumed in site order.  With ``size`` given,
    returns an ``(size, n_sites)`` array of occupations instead of a
    single :class:`Configuration`.
    """
    phis = np.asarray(fugacities, dtype=float)
    n = 1 if size is None else int(size)
    u = rng.random((n, phis.size))
    occ = np.empty((n, phis.size), dtype=np.int64)
    for phi in np.unique(phis):
        cols = np.nonzero(phis == phi)[0]
        if phi == 0.0:
            occ[:, cols] = 0
            continue
        mass_tol = 1e-15
        cdf = gc.cdf_table(phi, mass_tol)
        uu = u[:, cols]
        while uu.max() >= cdf[-1]:
            mass_tol *= 1e-3
            cdf = gc.cdf_table(phi, mass_tol)
            if mass_tol < 1e-300:
                break
        occ[:, cols] = np.searchsorted(cdf, uu, side="right")
    if size is None:
        return Configuration(occ[0])
    return occ


def sample_invariant(gc: GrandCanonical, params: ModelParams, rng, size=None):
    return sample_product_measure(gc, fugacity_profile(params).values, rng, size)


def sample_slowly_varying(gc: GrandCanonical, N: int, rho0, rng, size=None):
    return sample_product_measure(gc, site_fugacities(gc, N, rho0), rng, size)


def escape_rate(eta: Configuration, params: ModelParams) -> float:
    """Rate of leaving ``eta`` under ``L_N`` (no diffusive speed-up)."""
    g = params.g(eta.occupancy)
    nt = params.N_theta
    return float(g[0] + 2.0 * g[1:-1].sum() + g[-1]
                 + (params.alpha + params.beta) / nt
                 + (params.lam * g[0] + params.delta * g[-1]) / nt)


def inflow_rate(eta: Configuration, params: ModelParams, phi) -> float:
    """Probability flux into ``eta`` relative to ``nu(eta)``, in collected form.

    ``sum over predecessors nu(eta~)/nu(eta) * rate(eta~ -> eta)`` for the
    product measure with fugacities ``phi`` (length ``N-1``), grouped by
    site as coefficient times ``g(eta(x))`` plus constant boundary terms.
    """
    phi = np.asarray(phi, dtype=float)
    if np.any(phi <= 0):
        raise ModelError("inflow ratio needs strictly positive fugacities")
    g = params.g(eta.occupancy)
    nt = params.N_theta
    inner = ((phi[2:] + phi[:-2]) / phi[1:-1] * g[1:-1]).sum()
    left = (phi[1] + params.alpha / nt) / phi[0] * g[0]
    right = (phi[-2] + params.beta / nt) / phi[-1] * g[-1]
    const = (params.lam * phi[0] + params.delta * phi[-1]) / nt
    return float(inner + left + right + const)


def stationary_balance_residual(eta: Configuration, params: ModelParams,
                                phi=None) -> float:
    """Inflow minus outflow for the product measure; zero iff balanced at ``eta``.

    ``phi`` defaults to the invariant fugacity profile of ``params``.
    """
    if phi is None:
        phi = fugacity_profile(params).values
    return inflow_rate(eta, params, phi) - escape_rate(eta, params)


def hydrostatic_profile(u, params: ModelParams, gc: GrandCanonical):
    """Limit density ``R(alpha (2 - u))`` for theta = 1, ``R(alpha)`` for theta > 1."""
    a = params.alpha
    if params.theta == 1:
        scalar = np.ndim(u) == 0
        uu = np.atleast_1d(np.asarray(u, dtype=float))
        if np.any((uu < 0) | (uu > 1)):
            raise ValueError("u must lie in [0, 1]")
        out = np.array([gc.R(a * (2.0 - v)) for v in uu])
        return float(out[0]) if scalar else out
    r = gc.R(a)
    return r if np.ndim(u) == 0 else np.full(np.shape(u), r)
