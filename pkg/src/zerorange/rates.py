"""Jump-rate functions and grand-canonical series.

A rate function ``g`` is stored as a finite table ``g(0), ..., g(L-1)``
followed by an affine tail ``g(k) = g(L-1) + slope * (k - L + 1)`` for
``k >= L``.  Every built-in family fits this form, which makes the
structural certificates (``g*``, monotonicity, radius of convergence of
``Z``) exact rather than probed, and lets the numba kernels evaluate
``g`` from two plain arrays.
"""
from __future__ import annotations

import math
import re
import threading
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import (
    DensityUnreachable,
    FugacityOutOfRange,
    ModelError,
    SeriesNotConverged,
    ZeroRateInFactorial,
)

MAX_MOMENT = 4


@dataclass(frozen=True)
class RateFunction:
    """Jump rate ``g: N -> R+`` with ``g(0) = 0``.

    Parameters
    ----------
    table : sequence of float
        ``g(0), ..., g(L-1)``; ``table[0]`` must be 0.
    tail_slope : float
        Increment of ``g`` per particle beyond the table (``>= 0``).
    name : str
        Label used in reports and configs.
    phi_star_override : float, optional
        Replaces the computed radius of convergence of ``Z``.
    k_probe : int
        Range over which :meth:`verify_certificates` re-checks the
        certificates by direct evaluation.
    """

    table: tuple
    tail_slope: float = 0.0
    name: str = "table"
    phi_star_override: Optional[float] = None
    k_probe: int = 1000
    closed_R: Optional[Callable] = field(default=None, compare=False, repr=False)
    closed_Phi: Optional[Callable] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        tab = tuple(float(v) for v in self.table)
        object.__setattr__(self, "table", tab)
        if len(tab) == 0 or tab[0] != 0.0:
            raise ModelError("rate function must satisfy g(0) = 0")
        if any(v < 0 or not math.isfinite(v) for v in tab):
            raise ModelError("rate function values must be finite and nonnegative")
        if not (self.tail_slope >= 0 and math.isfinite(self.tail_slope)):
            raise ModelError("tail slope must be finite and nonnegative")
        if self.phi_star_override is not None and not self.phi_star_override > 0:
            raise ModelError("phi_star override must be positive")

    # -- evaluation ----------------------------------------------------
    def __call__(self, k):
        return self.eval(k)

    def eval(self, k):
        tab = self.table
        last = len(tab) - 1
        if np.ndim(k) == 0:
            k = int(k)
            if k < 0:
                raise ValueError("occupation numbers are nonnegative")
            if k <= last:
                return tab[k]
            return tab[last] + self.tail_slope * (k - last)
        k = np.asarray(k, dtype=np.int64)
        arr = np.asarray(tab)
        inside = np.minimum(k, last)
        out = arr[inside].astype(float)
        beyond = k > last
        if np.any(beyond):
            out[beyond] = tab[last] + self.tail_slope * (k[beyond] - last)
        return out

    def arrays(self):
        """``(table, slope)`` in the form consumed by the compiled kernels."""
        return np.asarray(self.table, dtype=np.float64), float(self.tail_slope)

    # -- certificates ----------------------------------------------------
    @property
    def g_star(self) -> float:
        diffs = np.abs(np.diff(self.table)) if len(self.table) > 1 else np.zeros(1)
        return float(max(diffs.max(initial=0.0), self.tail_slope))

    @property
    def non_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.table) >= 0))

    @property
    def limit(self) -> float:
        return math.inf if self.tail_slope > 0 else self.table[-1]

    @property
    def phi_star(self) -> float:
        # g is eventually affine, so the ratio test gives phi* = lim g exactly
        if self.phi_star_override is not None:
            return float(self.phi_star_override)
        return self.limit

    def verify_certificates(self) -> bool:
        ks = np.arange(self.k_probe + 2)
        vals = self.eval(ks)
        if vals[0] != 0:
            return False
        d = np.diff(vals)
        if np.any(np.abs(d) > self.g_star + 1e-12):
            return False
        if self.non_decreasing and np.any(d < 0):
            return False
        return True

    def describe(self) -> dict:
        return {
            "name": self.name,
            "g_star": self.g_star,
            "non_decreasing": self.non_decreasing,
            "phi_star": self.phi_star,
            "k_probe": self.k_probe,
        }


# -- built-in families ---------------------------------------------------

def linear() -> RateFunction:
    """Independent particles, ``g(k) = k``."""
    return RateFunction(
        (0.0, 1.0), 1.0, "linear",
        closed_R=lambda phi: phi,
        closed_Phi=lambda rho: rho,
    )


def constant() -> RateFunction:
    """``g(k) = 1`` for ``k >= 1``."""
    return RateFunction(
        (0.0, 1.0), 0.0, "constant",
        closed_R=lambda phi: phi / (1.0 - phi),
        closed_Phi=lambda rho: rho / (1.0 + rho),
    )


def capped(c: int) -> RateFunction:
    """``g(k) = min(k, c)``."""
    c = int(c)
    if c < 1:
        raise ModelError("capped(c) needs c >= 1")
    return RateFunction(tuple(float(k) for k in range(c + 1)), 0.0, f"capped({c})")


def from_table(values: Sequence[float], tail: str | float = "constant",
               phi_star: Optional[float] = None) -> RateFunction:
    """Explicit values followed by a tail rule.

    ``tail`` is ``"constant"`` (repeat the last value), ``"linear"``
    (continue with the last increment) or a nonnegative slope.
    """
    values = tuple(float(v) for v in values)
    if tail == "constant":
        slope = 0.0
    elif tail == "linear":
        slope = values[-1] - values[-2] if len(values) > 1 else 0.0
    else:
        slope = float(tail)
    return RateFunction(values, slope, "table", phi_star_override=phi_star)


_CAPPED = re.compile(r"^capped\((\d+)\)$")


def from_name(spec, **kwargs) -> RateFunction:
    """Build a rate function from a config value.

    Accepts ``"linear"``, ``"constant"``, ``"capped(c)"`` or a mapping
    ``{"table": [...], "tail": ..., "phi_star": ...}``.
    """
    if isinstance(spec, RateFunction):
        return spec
    if isinstance(spec, dict):
        if "table" not in spec:
            raise ModelError(f"table rate function needs a 'table' entry: {spec!r}")
        return from_table(spec["table"], spec.get("tail", "constant"), spec.get("phi_star"))
    s = str(spec).strip().replace(" ", "")
    if s == "linear":
        return linear()
    if s == "constant":
        return constant()
    m = _CAPPED.match(s)
    if m:
        return capped(int(m.group(1)))
    raise ModelError(f"unknown rate function {spec!r}")


def g_factorial(g: RateFunction, k: int) -> float:
    """``g(1) g(2) ... g(k)``, with ``g(0)! = 1``."""
    return math.exp(log_g_factorial(g, k))


def log_g_factorial(g: RateFunction, k: int) -> float:
    k = int(k)
    if k < 0:
        raise ValueError("k must be nonnegative")
    total = 0.0
    for j in range(1, k + 1):
        v = g.eval(j)
        if v <= 0:
            raise ZeroRateInFactorial(f"g({j}) = 0 makes g({k})! vanish")
        total += math.log(v)
    return total


# -- grand canonical ensemble --------------------------------------------

# sum_{j>=0} j^m r^j for m = 0..4
def _neg_polylog(m: int, r: float) -> float:
    q = 1.0 - r
    if m == 0:
        return 1.0 / q
    if m == 1:
        return r / q**2
    if m == 2:
        return r * (1 + r) / q**3
    if m == 3:
        return r * (1 + 4 * r + r * r) / q**4
    if m == 4:
        return r * (1 + 11 * r + 11 * r * r + r**3) / q**5
    raise ValueError(m)


@dataclass(frozen=True)
class _Stats:
    log_scale: float       # Z = exp(log_scale) * sums[0]
    sums: tuple            # scaled sum_k k^l phi^k / g(k)!, l = 0..MAX_MOMENT
    n_terms: int


class GrandCanonical:
    """Memoized evaluator of ``Z``, ``R``, ``R_l`` and ``Phi = R^{-1}``.

    Series are summed in log space.  Truncation stops once the current
    term is below ``series_tol`` relative to the partial sum *and* the
    ratio of consecutive terms is certified to stay below one; the
    geometric bound on the remainder is then added.  When the rate has
    a constant tail the remainder is exactly geometric and is summed in
    closed form.
    """

    def __init__(self, g: RateFunction, series_tol: float = 1e-14,
                 max_terms: int = 200_000, phi_grid_points: int = 4001):
        if series_tol <= 0 or max_terms < 1:
            raise ModelError("series_tol and max_terms must be positive")
        self.g = g
        self.series_tol = float(series_tol)
        self.max_terms = int(max_terms)
        self._phi_grid_points = phi_grid_points
        self._stats = lru_cache(maxsize=8192)(self._compute)
        self._cdf_cache: dict = {}
        self._lock = threading.Lock()
        self._interp = None
        self._table, self._slope = g.arrays()
        self._logg = np.full(len(self._table), -np.inf)
        with np.errstate(divide="ignore"):
            self._logg[1:] = np.log(self._table[1:])

    @property
    def phi_star(self) -> float:
        return self.g.phi_star

    def _check(self, phi):
        phi = float(phi)
        if not phi >= 0:
            raise FugacityOutOfRange(f"fugacity must be nonnegative, got {phi}")
        if phi >= self.phi_star:
            raise FugacityOutOfRange(
                f"fugacity {phi} is not below phi* = {self.phi_star}")
        return phi

    def _log_g(self, k: int) -> float:
        if k < len(self._table):
            lg = self._logg[k]
        else:
            lg = math.log(self._table[-1] + self._slope * (k - len(self._table) + 1))
        if lg == -math.inf:
            raise ZeroRateInFactorial(f"g({k}) = 0")
        return lg

    def _compute(self, phi: float) -> _Stats:
        if phi == 0.0:
            return _Stats(0.0, (1.0,) + (0.0,) * MAX_MOMENT, 1)
        lphi = math.log(phi)
        L = len(self._table)
        const_tail = self._slope == 0.0
        # running sums of k^l * exp(log_term - m), rescaled when m grows
        m = 0.0
        sums = [1.0] + [0.0] * MAX_MOMENT
        lt = 0.0
        k = 0
        while True:
            if k + 1 >= self.max_terms:
                raise SeriesNotConverged(
                    f"no tail certificate after {self.max_terms} terms at phi={phi}")
            if const_tail and k >= L - 1:
                # every later term is the previous one times phi / g(L-1)
                r = phi / self._table[-1]
                w0 = math.exp(lt - m) * r
                k0 = float(k + 1)
                for ell in range(MAX_MOMENT + 1):
                    acc = 0.0
                    for mm in range(ell + 1):
                        acc += math.comb(ell, mm) * k0 ** (ell - mm) * _neg_polylog(mm, r)
                    sums[ell] += w0 * acc
                break
            k += 1
            lt += lphi - self._log_g(k)
            if lt > m:
                scale = math.exp(m - lt)
                sums = [v * scale for v in sums]
                m = lt
            w = math.exp(lt - m)
            kp = 1.0
            for ell in range(MAX_MOMENT + 1):
                sums[ell] += w * kp
                kp *= k
            if k >= L:
                # past the table the k^4-weighted term ratio is non-increasing
                r = math.exp(lphi - self._log_g(k + 1)) * ((k + 1) / k) ** MAX_MOMENT
                if (r < 1.0 and w < self.series_tol * sums[0]
                        and w * k**MAX_MOMENT < self.series_tol * sums[MAX_MOMENT]):
                    kp = 1.0
                    for ell in range(MAX_MOMENT + 1):
                        sums[ell] += w * kp * r / (1.0 - r)
                        kp *= k
                    break
        return _Stats(m, tuple(sums), k + 1)

    # -- public evaluators ----------------------------------------------
    def log_Z(self, phi) -> float:
        st = self._stats(self._check(phi))
        return st.log_scale + math.log(st.sums[0])

    def Z(self, phi) -> float:
        return math.exp(self.log_Z(phi))

    def R(self, phi) -> float:
        st = self._stats(self._check(phi))
        return st.sums[1] / st.sums[0]

    def moment(self, phi, ell: int) -> float:
        ell = int(ell)
        if not 1 <= ell <= MAX_MOMENT:
            raise ValueError(f"moments are supported for 1 <= ell <= {MAX_MOMENT}")
        st = self._stats(self._check(phi))
        return st.sums[ell] / st.sums[0]

    def pmf(self, phi, k: int) -> float:
        phi = self._check(phi)
        k = int(k)
        if k < 0:
            return 0.0
        if phi == 0.0:
            return 1.0 if k == 0 else 0.0
        return math.exp(k * math.log(phi) - log_g_factorial(self.g, k) - self.log_Z(phi))

    def pmf_array(self, phi, kmax: int) -> np.ndarray:
        """``P(eta = k)`` for ``k = 0..kmax``."""
        phi = self._check(phi)
        out = np.zeros(kmax + 1)
        if phi == 0.0:
            out[0] = 1.0
            return out
        ks = np.arange(1, kmax + 1)
        gk = self.g.eval(ks)
        if np.any(gk <= 0):
            raise ZeroRateInFactorial("g vanishes inside the requested range")
        lt = np.concatenate([[0.0], np.cumsum(math.log(phi) - np.log(gk))])
        return np.exp(lt - self.log_Z(phi))

    def cdf_table(self, phi, mass_tol: float = 1e-15) -> np.ndarray:
        """Cumulative pmf, extended until the missing mass is below ``mass_tol``.

        Cached per fugacity; safe to call from several threads.
        """
        phi = float(phi)
        with self._lock:
            hit = self._cdf_cache.get((phi, mass_tol))
        if hit is not None:
            return hit
        kmax = max(16, int(2 * self.R(phi) + 10))
        while True:
            cdf = np.cumsum(self.pmf_array(phi, kmax))
            if 1.0 - cdf[-1] < mass_tol:
                break
            kmax *= 2
            if kmax > self.max_terms:
                raise SeriesNotConverged(f"pmf tail too heavy at phi={phi}")
        cdf.setflags(write=False)
        with self._lock:
            self._cdf_cache[(phi, mass_tol)] = cdf
        return cdf

    def phi_inverse(self, rho) -> float:
        """Fugacity with density ``rho``, by bisection.

        The bracket is ``[0, phi* - margin]`` (``margin = 1e-9 phi*``) for
        finite ``phi*``; otherwise it is grown by doubling.  Bisection runs
        to floating-point resolution, well inside the ``1e-12`` target.
        """
        rho = float(rho)
        if not rho >= 0:
            raise DensityUnreachable(f"density must be nonnegative, got {rho}")
        if rho == 0.0:
            return 0.0
        ps = self.phi_star
        if math.isfinite(ps):
            hi = ps * (1.0 - 1e-9)
            if self.R(hi) < rho:
                raise DensityUnreachable(
                    f"R(phi) stays below {rho} on [0, phi*): Z does not blow up at phi*")
        else:
            hi = 1.0
            while self.R(hi) < rho:
                hi *= 2.0
                if hi > 1e12:
                    raise DensityUnreachable(f"cannot bracket density {rho}")
        lo = 0.0
        while True:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if self.R(mid) < rho:
                lo = mid
            else:
                hi = mid
        return hi if abs(self.R(hi) - rho) <= abs(self.R(lo) - rho) else lo

    # -- vectorized Phi for the PDE ----------------------------------------
    def Phi_array(self, rho) -> np.ndarray:
        """``Phi`` applied elementwise; closed form when the family has one,
        otherwise a monotone interpolant of ``(R(phi), phi)`` pairs."""
        rho = np.asarray(rho, dtype=float)
        if self.g.closed_Phi is not None:
            return self.g.closed_Phi(rho)
        interp = self._interpolant()
        top = self._interp_rho_max
        if np.any(rho > top):
            out = np.empty_like(rho)
            big = rho > top
            out[~big] = interp(rho[~big])
            out[big] = [self.phi_inverse(r) for r in rho[big]]
            return out
        return interp(rho)

    def R_array(self, phi) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        if self.g.closed_R is not None:
            return self.g.closed_R(phi)
        return np.vectorize(self.R, otypes=[float])(phi)

    def _interpolant(self):
        with self._lock:
            if self._interp is not None:
                return self._interp
        ps = self.phi_star
        phi_top = ps * (1 - 1e-6) if math.isfinite(ps) else 50.0
        # grid dense near 0 and near a finite phi*
        s = np.linspace(0.0, 1.0, self._phi_grid_points)
        if math.isfinite(ps):
            phis = phi_top * (1 - (1 - s) ** 3)
        else:
            phis = phi_top * s**2
        rhos = np.array([self.R(p) for p in phis])
        keep = np.concatenate([[True], np.diff(rhos) > 0])
        interp = PchipInterpolator(rhos[keep], phis[keep], extrapolate=False)
        with self._lock:
            self._interp = interp
            self._interp_rho_max = float(rhos[keep][-1])
        return interp
