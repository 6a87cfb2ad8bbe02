"""Independent check of the invariant measure on a tiny truncated chain.

The chain lives on ``{0..K}^(N-1)``; any move that would push a site
above ``K`` is suppressed.  Its stationary vector is found by GTH
elimination (Gaussian elimination without subtractions), carried out in
multiprecision so that total-variation distances far below double
roundoff can be compared.
"""
from __future__ import annotations

from dataclasses import dataclass

import gmpy2
import numpy as np

from .errors import StateSpaceTooLarge
from .measures import fugacity_profile
from .process import ModelParams

DEFAULT_STATE_CAP = 20_000


@dataclass
class OracleResult:
    K: int
    n_states: int
    tv: float                 # total variation distance, rounded to float
    tv_exact: object          # the mpfr value
    stationary: np.ndarray    # float copy of the stationary vector
    product: np.ndarray       # float copy of the truncated product measure


def _index(occ, base):
    i = 0
    for k in reversed(occ):
        i = i * base + k
    return i


def _states(n, K):
    base = K + 1
    for idx in range(base**n):
        occ = []
        r = idx
        for _ in range(n):
            occ.append(r % base)
            r //= base
        yield idx, occ


def truncated_generator(params: ModelParams, K: int, state_cap: int = DEFAULT_STATE_CAP):
    """Off-diagonal rates as ``{i: {j: rate}}`` (mpfr), plus the band width.

    States are ordered with site 1 varying fastest, so every transition
    changes the index by at most ``(K+1)^(N-2)``.
    """
    n = params.N - 1
    base = K + 1
    size = base**n
    if size > state_cap:
        raise StateSpaceTooLarge(f"(K+1)^(N-1) = {size} exceeds the cap {state_cap}")
    mp = gmpy2.mpfr
    g = [mp(float(params.g(k))) for k in range(K + 1)]
    nt = mp(params.N) ** mp(params.theta)
    cl, cr = mp(params.alpha) / nt, mp(params.beta) / nt
    al, ar = mp(params.lam) / nt, mp(params.delta) / nt
    rates: dict = {}
    for idx, occ in _states(n, K):
        row: dict = {}

        def add(new, r):
            if r > 0:
                j = _index(new, base)
                row[j] = row.get(j, 0) + r

        for x in range(n):
            if occ[x] == 0:
                continue
            for y in (x - 1, x + 1):
                if 0 <= y < n and occ[y] < K:
                    new = list(occ)
                    new[x] -= 1
                    new[y] += 1
                    add(new, g[occ[x]])
        if occ[0] < K:
            new = list(occ)
            new[0] += 1
            add(new, cl)
        if occ[-1] < K:
            new = list(occ)
            new[-1] += 1
            add(new, cr)
        if occ[0] > 0:
            new = list(occ)
            new[0] -= 1
            add(new, al * g[occ[0]])
        if occ[-1] > 0:
            new = list(occ)
            new[-1] -= 1
            add(new, ar * g[occ[-1]])
        rates[idx] = row
    return rates, size, base ** (n - 1)


def gth_stationary(rates: dict, size: int, band: int):
    """Stationary vector of an irreducible CTMC by GTH state reduction.

    ``rates[i][j]`` is the rate ``i -> j`` (``i != j``), nonzero only for
    ``|i - j| <= band``; elimination keeps fill-in inside the band.
    """
    P = [dict(rates[i]) for i in range(size)]
    for i in range(size):
        P[i].pop(i, None)
    for m in range(size - 1, 0, -1):
        row_m = P[m]
        s = sum((v for j, v in row_m.items() if j < m), gmpy2.mpfr(0))
        if s == 0:
            raise ValueError("generator is reducible")
        lower_m = [(j, v) for j, v in row_m.items() if j < m]
        for i in range(max(0, m - band), m):
            pim = P[i].get(m)
            if pim is None:
                continue
            pim = pim / s
            P[i][m] = pim
            row_i = P[i]
            for j, v in lower_m:
                if j != i:
                    row_i[j] = row_i.get(j, 0) + pim * v
    pi = [gmpy2.mpfr(0)] * size
    pi[0] = gmpy2.mpfr(1)
    for j in range(1, size):
        acc = gmpy2.mpfr(0)
        for i in range(max(0, j - band), j):
            v = P[i].get(j)
            if v is not None:
                acc += pi[i] * v
        pi[j] = acc
    tot = sum(pi, gmpy2.mpfr(0))
    return [p / tot for p in pi]


def exact_fugacities(params: ModelParams):
    """The linear invariant fugacity profile evaluated in multiprecision."""
    mp = gmpy2.mpfr
    N = params.N
    nt = mp(N) ** mp(params.theta)
    a, b, l, d = (mp(params.alpha), mp(params.beta), mp(params.lam), mp(params.delta))
    den = l * d * (N - 2) + (l + d) * nt
    return [(-(a * d - b * l) * (x - 1) + a * d * (N - 2) + (a + b) * nt) / den
            for x in range(1, N)]


def truncated_product_measure(params: ModelParams, K: int):
    """Invariant product measure restricted to ``{0..K}^(N-1)`` and renormalized."""
    n = params.N - 1
    fugacity_profile(params)            # admissibility check
    phis = exact_fugacities(params)
    # marginal weights phi^k / g(k)!, normalized over 0..K
    marg = []
    for phi in phis:
        w = [gmpy2.mpfr(1)]
        for k in range(1, K + 1):
            w.append(w[-1] * phi / gmpy2.mpfr(float(params.g(k))))
        z = sum(w, gmpy2.mpfr(0))
        marg.append([v / z for v in w])
    out = []
    for idx, occ in _states(n, K):
        p = gmpy2.mpfr(1)
        for x in range(n):
            p *= marg[x][occ[x]]
        out.append(p)
    return out


def truncated_chain_tv(params: ModelParams, K: int, precision: int = 256,
                       state_cap: int = DEFAULT_STATE_CAP) -> OracleResult:
    """TV distance between the truncated chain's stationary law and the
    truncated product measure."""
    if K == 0:
        return OracleResult(0, 1, 0.0, gmpy2.mpfr(0), np.ones(1), np.ones(1))
    with gmpy2.context(gmpy2.get_context(), precision=precision):
        rates, size, band = truncated_generator(params, K, state_cap)
        pi = gth_stationary(rates, size, band)
        nu = truncated_product_measure(params, K)
        tv = sum((abs(a - b) for a, b in zip(pi, nu)), gmpy2.mpfr(0)) / 2
        return OracleResult(K, size, float(tv), tv,
                            np.array([float(v) for v in pi]), np.array([float(v) for v in nu]))


def tail_mass_bound(params: ModelParams, K: int) -> float:
    """Largest single-site product-measure mass above ``K``."""
    from .rates import GrandCanonical
    gc = GrandCanonical(params.g)
    worst = 0.0
    for phi in fugacity_profile(params).values:
        tail, k = 0.0, K + 1
        while True:
            term = gc.pmf(float(phi), k)
            tail += term
            if term <= 1e-17 * tail or term == 0.0 or k > K + 100_000:
                break
            k += 1
        worst = max(worst, tail)
    return worst
