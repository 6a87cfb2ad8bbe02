"""Empirical measures, discrete calculus, Dynkin martingales and
replacement residuals.

Every time integral along a trajectory is exact: the integrands are
piecewise constant between events and are accumulated event by event
from the dense log.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline

from . import _kernels as K
from .errors import DenseTrajectoryRequired, WindowOutOfRange, ZeroRangeError
from .process import Configuration, ModelParams, all_events, apply_event, event_rate
from .rates import GrandCanonical, RateFunction

# -- test functions -----------------------------------------------------------


@dataclass(frozen=True)
class TestFunction:
    """A smooth function on [0, 1] with its first two derivatives.

    Time-dependent functions take ``(s, u)`` in every map and also carry
    ``ds``; static ones take ``u`` only.
    """

    __test__ = False        # keep pytest from collecting this class

    name: str
    f: Callable
    d1: Callable
    d2: Callable
    ds: Optional[Callable] = None
    time_dependent: bool = False

    def _call(self, fn, u, s):
        u = np.asarray(u, dtype=float)
        out = fn(s, u) if self.time_dependent else fn(u)
        return np.broadcast_to(np.asarray(out, dtype=float), u.shape).copy() if u.ndim else float(out)

    def __call__(self, u, s: float = 0.0):
        return self._call(self.f, u, s)

    def deriv1(self, u, s: float = 0.0):
        return self._call(self.d1, u, s)

    def deriv2(self, u, s: float = 0.0):
        return self._call(self.d2, u, s)

    def dtime(self, u, s: float = 0.0):
        if self.ds is None:
            return self._call(lambda *a: 0.0, u, s)
        return self._call(self.ds, u, s)

    def check_derivatives(self, tol: float = 1e-6, points: int = 41, s: float = 0.0) -> float:
        """Largest mismatch of ``d1``, ``d2`` against central differences.

        Raises ValueError above ``tol`` (scaled by ``max(1, |derivative|)``).
        """
        h = 1e-4
        u = np.linspace(h, 1 - h, points)
        fd1 = (self(u + h, s) - self(u - h, s)) / (2 * h)
        fd2 = (self(u + h, s) - 2 * self(u, s) + self(u - h, s)) / h**2
        a1, a2 = self.deriv1(u, s), self.deriv2(u, s)
        err = max(np.max(np.abs(fd1 - a1) / np.maximum(1, np.abs(a1))),
                  np.max(np.abs(fd2 - a2) / np.maximum(1, np.abs(a2))))
        if err > tol:
            raise ValueError(f"derivatives of {self.name} disagree with finite differences ({err:.2e})")
        return float(err)


def polynomial(coeffs: Sequence[float], name: Optional[str] = None) -> TestFunction:
    """``sum_k coeffs[k] u^k``."""
    p = np.polynomial.Polynomial(list(coeffs))
    d1, d2 = p.deriv(1), p.deriv(2)
    return TestFunction(name or f"poly{tuple(coeffs)}", p, d1, d2)


def trig(kind: str, k: float = 1.0) -> TestFunction:
    w = k * math.pi
    if kind == "sin":
        return TestFunction(f"sin({k}pi u)", lambda u: np.sin(w * u),
                            lambda u: w * np.cos(w * u), lambda u: -w * w * np.sin(w * u))
    if kind == "cos":
        return TestFunction(f"cos({k}pi u)", lambda u: np.cos(w * u),
                            lambda u: -w * np.sin(w * u), lambda u: -w * w * np.cos(w * u))
    raise ValueError(f"unknown trigonometric kind {kind!r}")


def from_table(u, f, d1, d2, name: str = "table") -> TestFunction:
    """Tabulated function with derivative columns (Hermite interpolation)."""
    u = np.asarray(u, float)
    spl = CubicHermiteSpline(u, np.asarray(f, float), np.asarray(d1, float))
    spl1 = CubicHermiteSpline(u, np.asarray(d1, float), np.asarray(d2, float))
    d2i = lambda x: np.interp(x, u, np.asarray(d2, float))
    return TestFunction(name, spl, spl1, d2i)


def time_dependent(name: str, f, d1, d2, ds) -> TestFunction:
    return TestFunction(name, f, d1, d2, ds, time_dependent=True)


REGISTRY = {
    "one": lambda: polynomial([1.0], "one"),
    "u": lambda: polynomial([0.0, 1.0], "u"),
    "u^2": lambda: polynomial([0.0, 0.0, 1.0], "u^2"),
    "u(1-u)": lambda: polynomial([0.0, 1.0, -1.0], "u(1-u)"),
    "sin": lambda: TestFunction("sin u", np.sin, np.cos, lambda u: -np.sin(u)),
    "sin(pi u)": lambda: trig("sin"),
    "cos(pi u)": lambda: trig("cos"),
}


def test_function(spec) -> TestFunction:
    """Look up a test function by name, ``poly:c0,c1,...`` or ``cos:k`` / ``sin:k``."""
    if isinstance(spec, TestFunction):
        return spec
    if spec in REGISTRY:
        return REGISTRY[spec]()
    if spec.startswith("poly:"):
        return polynomial([float(c) for c in spec[5:].split(",")], spec)
    for kind in ("sin", "cos"):
        if spec.startswith(kind + ":"):
            return trig(kind, float(spec[len(kind) + 1:]))
    raise KeyError(f"unknown test function {spec!r}; known: {sorted(REGISTRY)}")


# -- pairings and discrete operators -------------------------------------------

def _occ(eta) -> np.ndarray:
    return eta.occupancy if isinstance(eta, Configuration) else np.asarray(eta)


def sites(N: int) -> np.ndarray:
    return np.arange(1, N)


def empirical_pairing(eta, G: TestFunction, s: float = 0.0):
    """``(1/N) sum_x G(x/N) eta(x)``; rows of a 2-D array are paired separately."""
    occ = _occ(eta)
    N = occ.shape[-1] + 1
    return (occ @ G(sites(N) / N, s)) / N


@dataclass(frozen=True)
class DiscreteOps:
    x: np.ndarray
    laplacian: np.ndarray
    grad_plus: np.ndarray
    grad_minus: np.ndarray


def discrete_ops(G: TestFunction, N: int, x=None, s: float = 0.0) -> DiscreteOps:
    """Lattice Laplacian and one-sided gradients of ``G`` at sites ``x``."""
    x = sites(N) if x is None else np.atleast_1d(np.asarray(x))
    g0 = G(x / N, s)
    gp = G((x + 1) / N, s)
    gm = G((x - 1) / N, s)
    return DiscreteOps(x, N * N * (gp + gm - 2 * g0), N * (gp - g0), N * (g0 - gm))


# -- generator applied to the pairing -----------------------------------------

def drift_coefficients(G: TestFunction, params: ModelParams, s: float = 0.0):
    """``(c, c0)`` with ``N^2 L_N <pi, G> = sum_x c[x] g(eta(x)) + c0``."""
    N = params.N
    ops = discrete_ops(G, N, s=s)
    c = ops.laplacian / N
    scale = params.N ** (1 - params.theta)
    G1, GN = G(1 / N, s), G((N - 1) / N, s)
    c[0] = ops.grad_plus[0] - scale * params.lam * G1
    c[-1] = -ops.grad_minus[-1] - scale * params.delta * GN
    c0 = scale * (params.alpha * G1 + params.beta * GN)
    f = params.speed / N**2
    return c * f, c0 * f


def qv_coefficients(G: TestFunction, params: ModelParams, s: float = 0.0):
    """``(w, w0)`` with quadratic-variation density ``sum_x w[x] g(eta(x)) + w0``."""
    N = params.N
    Gx = G(sites(N) / N, s)
    w = np.zeros(N - 1)
    w[:-1] += (Gx[1:] - Gx[:-1]) ** 2
    w[1:] += (Gx[:-1] - Gx[1:]) ** 2
    nt = params.N_theta
    w[0] += params.lam * Gx[0] ** 2 / nt
    w[-1] += params.delta * Gx[-1] ** 2 / nt
    w0 = (params.alpha * Gx[0] ** 2 + params.beta * Gx[-1] ** 2) / nt
    f = params.speed / N**2
    return w * f, w0 * f


def dynkin_drift(eta, G: TestFunction, params: ModelParams, s: float = 0.0) -> float:
    """``N^2 L_N <pi^N, G>`` as the closed finite sum."""
    c, c0 = drift_coefficients(G, params, s)
    return float(c @ params.g(_occ(eta)) + c0)


def quadratic_variation_rate(eta, G: TestFunction, params: ModelParams, s: float = 0.0) -> float:
    """Density of the predictable quadratic variation of the Dynkin martingale."""
    w, w0 = qv_coefficients(G, params, s)
    return float(w @ params.g(_occ(eta)) + w0)


def generator_enumeration(eta: Configuration, params: ModelParams,
                          f: Callable[[Configuration], object], power: int = 1):
    """``sum_ev rate(ev) (f(apply(eta, ev)) - f(eta))**power`` over every event.

    ``f`` may return Fractions, in which case the sum is exact up to the
    final rounding of the rates.
    """
    base = f(eta)
    total = 0
    for ev in all_events(params.N):
        r = event_rate(eta, ev, params)
        if r == 0:
            continue
        d = f(apply_event(eta, ev)) - base
        total = total + Fraction(r) * d ** power if isinstance(d, Fraction) else total + r * d ** power
    return total


def exact_pairing(G: TestFunction, N: int, s: float = 0.0):
    """Pairing with the float values of ``G`` converted exactly to rationals."""
    vals = [Fraction(float(v)) for v in G(sites(N) / N, s)]
    def f(eta: Configuration):
        return sum((v * int(k) for v, k in zip(vals, eta.occupancy)), Fraction(0)) / N
    return f


def drift_continuum(eta, G: TestFunction, params: ModelParams, s: float = 0.0) -> float:
    """Drift with lattice derivatives replaced by continuum derivatives."""
    N = params.N
    g = params.g(_occ(eta))
    x = sites(N)
    lap = G.deriv2(x / N, s)
    bulk = (g[1:-1] @ lap[1:-1]) / N
    scale = params.N ** (1 - params.theta)
    G1, GN = G(1 / N, s), G((N - 1) / N, s)
    bnd = g[0] * G.deriv1(1 / N, s) - g[-1] * G.deriv1((N - 1) / N, s)
    res = scale * ((params.alpha - params.lam * g[0]) * G1 + (params.beta - params.delta * g[-1]) * GN)
    return float((bulk + bnd + res) * params.speed / N**2)


def drift_remainder(eta, G: TestFunction, params: ModelParams, s: float = 0.0) -> float:
    """Exact drift minus its continuum-derivative form (the discarded Taylor terms)."""
    return dynkin_drift(eta, G, params, s) - drift_continuum(eta, G, params, s)


# -- martingales along trajectories -------------------------------------------

@dataclass(frozen=True)
class MartingaleRecord:
    t: float
    M: float
    QV_integral: float


@dataclass
class MartingaleTrack:
    t: np.ndarray
    M: np.ndarray
    QV_integral: np.ndarray
    pairing: np.ndarray
    drift: np.ndarray

    def records(self):
        return [MartingaleRecord(float(a), float(b), float(c))
                for a, b, c in zip(self.t, self.M, self.QV_integral)]


def _require_dense(traj):
    if getattr(traj, "log_t", None) is None:
        raise DenseTrajectoryRequired("this statistic needs every event; run with dense=True")


def martingale_track(traj, G: TestFunction, times: Optional[Sequence[float]] = None) -> MartingaleTrack:
    """Dynkin martingale and integrated quadratic variation at ``times``.

    ``times`` default to the trajectory's snapshot times and must lie in
    ``[0, t_final]``.
    """
    _require_dense(traj)
    if G.time_dependent:
        raise ValueError("martingale_track needs a time-independent test function")
    params = traj.params
    q = np.asarray(traj.snapshot_times if times is None else times, dtype=float)
    order = np.argsort(q, kind="stable")
    qs = q[order]
    if qs.size and (qs[0] < 0 or qs[-1] > traj.t_final + 1e-12):
        raise ValueError("query times outside the trajectory")
    N = params.N
    pair_w = G(sites(N) / N) / N
    c, c0 = drift_coefficients(G, params)
    w, w0 = qv_coefficients(G, params)
    gtab, gslope = params.g.arrays()
    out = np.zeros((qs.size, 4))
    K.replay_martingale(traj.initial.occupancy.copy(), traj.log_t, traj.log_s, traj.log_t.size,
                        qs, pair_w, c, c0, w, w0, gtab, gslope, out)
    res = np.empty_like(out)
    res[order] = out
    return MartingaleTrack(q, res[:, 0], res[:, 1], res[:, 2], res[:, 3])


# -- block averages and replacement residuals ----------------------------------

def block_average(eta, x: int, epsN: int, direction: int = 1) -> float:
    """Mean occupation over ``x+1..x+epsN`` (forward) or ``x-epsN..x-1`` (backward)."""
    occ = _occ(eta)
    n = occ.shape[-1]
    if epsN < 1:
        raise WindowOutOfRange("window length must be at least 1")
    lo, hi = (x + 1, x + epsN) if direction > 0 else (x - epsN, x - 1)
    if lo < 1 or hi > n:
        raise WindowOutOfRange(f"window {lo}..{hi} leaves sites 1..{n}")
    return float(occ[..., lo - 1:hi].mean(axis=-1)) if occ.ndim == 1 else occ[..., lo - 1:hi].mean(axis=-1)


def block_profile(eta, epsN: int) -> np.ndarray:
    """Forward block averages at every admissible ``x = 0..N-1-epsN``."""
    occ = _occ(eta).astype(float)
    cs = np.concatenate([np.zeros(occ.shape[:-1] + (1,)), np.cumsum(occ, axis=-1)], axis=-1)
    return (cs[..., epsN:] - cs[..., :-epsN]) / epsN


_GC_CACHE: dict = {}


def grand_canonical(g: RateFunction) -> GrandCanonical:
    gc = _GC_CACHE.get(g)
    if gc is None:
        gc = _GC_CACHE[g] = GrandCanonical(g)
    return gc


@dataclass(frozen=True)
class ReplacementResiduals:
    R4: float
    Rb_left: float
    Rb_right: float
    epsN: int


def window_length(eps: float, N: int) -> int:
    return int(math.floor(eps * N + 1e-9))


def replacement_residuals(traj, G: TestFunction, eps: float, f1: float = 1.0, f2: float = 1.0,
                          laplacian: str = "continuum", t_end: Optional[float] = None
                          ) -> ReplacementResiduals:
    """Time integrals of the bulk and boundary replacement integrands on ``[0, t_end]``.

    ``laplacian`` selects the weight of bulk block ``x``: ``"continuum"``
    uses ``G''(x/N)``, ``"discrete"`` the lattice Laplacian.  The time
    weights ``f1``, ``f2`` are constants.
    """
    _require_dense(traj)
    params = traj.params
    N = params.N
    epsN = window_length(eps, N)
    if epsN < 1:
        raise WindowOutOfRange(f"eps*N = {eps * N} gives an empty window")
    if 1 + epsN > N - 1:
        raise WindowOutOfRange("boundary window does not fit")
    T = traj.t_final if t_end is None else float(t_end)
    xs = np.arange(1 + epsN, N - epsN)           # bulk index set, may be empty
    if laplacian == "continuum":
        lap = G.deriv2(xs / N) if xs.size else np.zeros(0)
    elif laplacian == "discrete":
        lap = discrete_ops(G, N, xs).laplacian if xs.size else np.zeros(0)
    else:
        raise ValueError(f"laplacian must be 'continuum' or 'discrete', not {laplacian!r}")
    lap = np.asarray(lap, dtype=float) / N
    gc = grand_canonical(params.g)
    gtab, gslope = params.g.arrays()
    occ0 = traj.initial.occupancy
    size = int(max(4 * occ0.max(initial=0) * epsN, 64))
    S = np.zeros(xs.size, dtype=np.int64)
    Gs = np.zeros(xs.size)
    out = np.zeros(3)
    while True:
        phi_tab = np.asarray(gc.Phi_array(np.arange(size + 1) / epsN), dtype=float)
        st = K.replay_replacement(occ0.copy(), traj.log_t, traj.log_s, traj.log_t.size, T, epsN,
                                  lap, phi_tab, gtab, gslope, float(f1), float(f2), S, Gs, out)
        if st == K.DONE:
            break
        size *= 4
        if size > 10**8:
            raise ZeroRangeError("block sums too large for the fugacity table")
    return ReplacementResiduals(float(out[0]), float(out[1]), float(out[2]), epsN)


# -- association with a macroscopic profile ------------------------------------

def profile_association_statistic(sampler: Callable[[np.random.Generator], Configuration],
                                  rho0: Callable[[float], float], H: TestFunction,
                                  draws: int, delta: float, rng: np.random.Generator) -> float:
    """Fraction of draws with ``|<pi^N, H> - int H rho0| > delta``."""
    target, _ = integrate.quad(lambda u: float(H(u)) * float(rho0(u)), 0.0, 1.0,
                               epsabs=1e-10, epsrel=1e-10, limit=200)
    hits = 0
    for _ in range(draws):
        if abs(empirical_pairing(sampler(rng), H) - target) > delta:
            hits += 1
    return hits / draws


# -- output ---------------------------------------------------------------------

def write_long_csv(fh, rows: Iterable[tuple], header: bool = True):
    """Rows of ``(replica, t, quantity, value)``."""
    w = csv.writer(fh)
    if header:
        w.writerow(["replica", "t", "quantity", "value"])
    for r in rows:
        w.writerow([r[0], repr(float(r[1])), r[2], repr(float(r[3]))])
