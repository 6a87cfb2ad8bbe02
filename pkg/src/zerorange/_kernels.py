"""Compiled inner loops.

All state lives in caller-owned numpy arrays so a kernel can return at
any point (uniform buffer exhausted, log full, horizon reached) and be
re-entered without loss.  Scalars that must persist across calls are
kept in length-1 arrays.

Random numbers are never drawn here: the caller supplies a buffer of
uniforms from a Philox stream, which keeps runs bit-reproducible.
"""
import math

from numba import njit

# return codes of the advance kernels
DONE = 0
NEED_UNIFORMS = 1
ABSORBED = 2
LOG_FULL = 3
MAX_EVENTS = 4
OVERFLOW = 5
ORDER_VIOLATED = 6
TABLE_TOO_SHORT = 7

OCC_LIMIT = 2**31 - 1

# Nothing below allocates, so reference counting is switched off: with it
# on, every helper call taking arrays pays atomic incref/decref pairs,
# which cost several times the arithmetic of an event.
kernel = njit(cache=True, nogil=True, _nrt=False)

# layout of the float parameter vector ``par``
P_SPEED, P_CL, P_CR, P_AL, P_AR = 0, 1, 2, 3, 4
# layout of the integer counter vector
C_EVENTS, C_CREATE, C_ANNIH, C_SINCE_REBUILD, C_NET_MAX, C_NET_MIN = 0, 1, 2, 3, 4, 5


@kernel
def geval(k, gtab, gslope):
    L = gtab.size
    if k < L:
        return gtab[k]
    return gtab[L - 1] + gslope * (k - L + 1)


# -- Fenwick tree over slot rates (tree is 1-based, length n+1) -------------

@kernel
def fw_build(tree, rates):
    n = rates.size
    for i in range(n + 1):
        tree[i] = 0.0
    for i in range(1, n + 1):
        tree[i] += rates[i - 1]
        j = i + (i & (-i))
        if j <= n:
            tree[j] += tree[i]
    total = 0.0
    i = n
    while i > 0:
        total += tree[i]
        i -= i & (-i)
    return total


@kernel
def fw_add(tree, slot, delta):
    n = tree.size - 1
    i = slot + 1
    while i <= n:
        tree[i] += delta
        i += i & (-i)


@kernel
def fw_search(tree, target):
    """Smallest slot whose inclusive prefix sum exceeds ``target``."""
    n = tree.size - 1
    step = 1
    while step * 2 <= n:
        step *= 2
    pos = 0
    while step > 0:
        nxt = pos + step
        if nxt <= n and tree[nxt] <= target:
            pos = nxt
            target -= tree[nxt]
        step //= 2
    if pos >= n:
        pos = n - 1
    return pos


@kernel
def slot_rate(slot, eta, gtab, gslope, par):
    n = eta.size
    nb = 2 * n
    if slot < nb:
        i = slot // 2
        if slot % 2 == 0:
            if i == n - 1:
                return 0.0
        else:
            if i == 0:
                return 0.0
        return par[P_SPEED] * geval(eta[i], gtab, gslope)
    b = slot - nb
    if b == 0:
        return par[P_CL]
    if b == 1:
        return par[P_CR]
    if b == 2:
        return par[P_AL] * geval(eta[0], gtab, gslope)
    return par[P_AR] * geval(eta[n - 1], gtab, gslope)


@kernel
def fill_rates(eta, rates, gtab, gslope, par):
    for s in range(rates.size):
        rates[s] = slot_rate(s, eta, gtab, gslope, par)


@kernel
def _refresh_slot(s, new, rates, tree):
    d = new - rates[s]
    if d != 0.0:
        rates[s] = new
        fw_add(tree, s, d)
    return d


@kernel
def _rebuild(rates, tree, total, diag):
    fresh = fw_build(tree, rates)
    if fresh > 0.0:
        rel = abs(fresh - total[0]) / fresh
        if rel > diag[0]:
            diag[0] = rel
    total[0] = fresh


# -- single copy: one leaf per site plus four boundary leaves ----------------
#
# Left and right jumps of a site share the rate g(eta(x)), so the tree holds
# one leaf per site weighted by (number of neighbours) * g, and the jump
# direction is read off the residual of the search.  Events are still
# reported in the slot layout of ``process``.

@kernel
def leaf_weight(leaf, eta, gtab, gslope, par):
    n = eta.size
    if leaf < n:
        nbrs = 1.0 if (leaf == 0 or leaf == n - 1) else 2.0
        return nbrs * par[P_SPEED] * geval(eta[leaf], gtab, gslope)
    b = leaf - n
    if b == 0:
        return par[P_CL]
    if b == 1:
        return par[P_CR]
    if b == 2:
        return par[P_AL] * geval(eta[0], gtab, gslope)
    return par[P_AR] * geval(eta[n - 1], gtab, gslope)


@kernel
def fill_leaves(eta, w, gtab, gslope, par):
    for k in range(w.size):
        w[k] = leaf_weight(k, eta, gtab, gslope, par)


@kernel
def fw_search_rem(tree, target):
    """Like :func:`fw_search` but also returns the residual inside the leaf."""
    n = tree.size - 1
    step = 1
    while step * 2 <= n:
        step *= 2
    pos = 0
    while step > 0:
        nxt = pos + step
        if nxt <= n and tree[nxt] <= target:
            pos = nxt
            target -= tree[nxt]
        step //= 2
    if pos >= n:
        pos = n - 1
    return pos, target


@kernel
def leaf_to_slot(leaf, rem, w, n):
    if leaf >= n:
        return 2 * n + (leaf - n)
    if leaf == 0:
        return 0
    if leaf == n - 1:
        return 2 * leaf + 1
    return 2 * leaf if rem < 0.5 * w[leaf] else 2 * leaf + 1


@kernel
def _pick(tree, w, target, n):
    leaf, rem = fw_search_rem(tree, target)
    while w[leaf] <= 0.0 and leaf > 0:
        leaf -= 1
        rem = w[leaf]
    return leaf_to_slot(leaf, rem, w, n)


@kernel
def sample_many(tree, w, total, us, n, out):
    for k in range(us.size):
        out[k] = _pick(tree, w, us[k] * total, n)


@kernel
def _refresh_leaf(k, eta, w, tree, gtab, gslope, par):
    new = leaf_weight(k, eta, gtab, gslope, par)
    d = new - w[k]
    if d != 0.0:
        w[k] = new
        fw_add(tree, k, d)
    return d


@kernel
def _refresh_site(i, eta, w, tree, gtab, gslope, par):
    """Re-weight the leaves that depend on site ``i``; returns the change of the total."""
    n = eta.size
    d = _refresh_leaf(i, eta, w, tree, gtab, gslope, par)
    if i == 0:
        d += _refresh_leaf(n + 2, eta, w, tree, gtab, gslope, par)
    if i == n - 1:
        d += _refresh_leaf(n + 3, eta, w, tree, gtab, gslope, par)
    return d


@kernel
def advance(eta, w, tree, total, gtab, gslope, par, clock, t_end,
            unif, upos, snap_times, snap_pos, snaps,
            log_t, log_s, log_pos, dense,
            occ, occ_last, occ_on,
            counters, max_events, rebuild_every, diag, last):
    """Run the exact jump chain until ``t_end``.

    ``clock[0]`` is the current time; ``last`` receives ``(slot, dt)`` of
    the most recent event.  Snapshots follow the cadlag convention: the
    value recorded at time ``s`` is the state after every event ``<= s``.
    """
    n = eta.size
    nb = 2 * n
    nsnap = snap_times.size
    nunif = unif.size
    nlog = log_t.size
    t = clock[0]
    up = upos[0]
    sp = snap_pos[0]
    lp = log_pos[0]
    tot = total[0]
    events = counters[C_EVENTS]
    since = counters[C_SINCE_REBUILD]
    ncreate = counters[C_CREATE]
    nannih = counters[C_ANNIH]
    net_max = counters[C_NET_MAX]
    net_min = counters[C_NET_MIN]
    status = DONE
    while True:
        if events >= max_events:
            status = MAX_EVENTS
            break
        if tot <= 0.0:
            while sp < nsnap and snap_times[sp] <= t_end:
                for q in range(n):
                    snaps[sp, q] = eta[q]
                sp += 1
            status = ABSORBED
            break
        if up + 2 > nunif:
            status = NEED_UNIFORMS
            break
        if dense and lp >= nlog:
            status = LOG_FULL
            break
        u1 = unif[up]
        u2 = unif[up + 1]
        up += 2
        dt = -math.log(1.0 - u1) / tot
        tn = t + dt
        if tn > t_end:
            # memoryless: the pending clock is simply discarded
            while sp < nsnap and snap_times[sp] <= t_end:
                for q in range(n):
                    snaps[sp, q] = eta[q]
                sp += 1
            t = t_end
            status = DONE
            break
        while sp < nsnap and snap_times[sp] < tn:
            for q in range(n):
                snaps[sp, q] = eta[q]
            sp += 1
        leaf, rem = fw_search_rem(tree, u2 * tot)
        if w[leaf] <= 0.0:
            total[0] = tot
            _rebuild(w, tree, total, diag)
            tot = total[0]
            since = 0
            leaf, rem = fw_search_rem(tree, u2 * tot)
            while w[leaf] <= 0.0 and leaf > 0:
                leaf -= 1
                rem = w[leaf]
        s = leaf_to_slot(leaf, rem, w, n)
        t = tn
        if s < nb:
            i = s // 2
            j = i + 1 if s % 2 == 0 else i - 1
            if occ_on:
                occ[i] += eta[i] * (t - occ_last[i])
                occ_last[i] = t
                occ[j] += eta[j] * (t - occ_last[j])
                occ_last[j] = t
            eta[i] -= 1
            eta[j] += 1
            tot += _refresh_site(i, eta, w, tree, gtab, gslope, par)
            tot += _refresh_site(j, eta, w, tree, gtab, gslope, par)
            if eta[j] >= OCC_LIMIT:
                status = OVERFLOW
                break
        else:
            b = s - nb
            i = 0 if (b == 0 or b == 2) else n - 1
            if occ_on:
                occ[i] += eta[i] * (t - occ_last[i])
                occ_last[i] = t
            if b <= 1:
                eta[i] += 1
                ncreate += 1
            else:
                eta[i] -= 1
                nannih += 1
            tot += _refresh_site(i, eta, w, tree, gtab, gslope, par)
            net = ncreate - nannih
            if net > net_max:
                net_max = net
            if net < net_min:
                net_min = net
            if eta[i] >= OCC_LIMIT:
                status = OVERFLOW
                break
        if dense:
            log_t[lp] = t
            log_s[lp] = s
            lp += 1
        last[0] = s
        last[1] = dt
        events += 1
        since += 1
        if since >= rebuild_every:
            total[0] = tot
            _rebuild(w, tree, total, diag)
            tot = total[0]
            since = 0
    clock[0] = t
    upos[0] = up
    snap_pos[0] = sp
    log_pos[0] = lp
    total[0] = tot
    counters[C_EVENTS] = events
    counters[C_SINCE_REBUILD] = since
    counters[C_CREATE] = ncreate
    counters[C_ANNIH] = nannih
    counters[C_NET_MAX] = net_max
    counters[C_NET_MIN] = net_min
    return status


# -- basic coupling ----------------------------------------------------------

@kernel
def fill_coupled_rates(lo, up, rates, gtab, gslope, par):
    for s in range(rates.size):
        a = slot_rate(s, lo, gtab, gslope, par)
        b = slot_rate(s, up, gtab, gslope, par)
        rates[s] = a if a > b else b


@kernel
def _apply_slot(eta, s, n):
    """Apply slot ``s`` to ``eta``; returns the (up to two) touched sites."""
    nb = 2 * n
    if s < nb:
        i = s // 2
        j = i + 1 if s % 2 == 0 else i - 1
        eta[i] -= 1
        eta[j] += 1
        return i, j
    b = s - nb
    i = 0 if (b == 0 or b == 2) else n - 1
    if b <= 1:
        eta[i] += 1
    else:
        eta[i] -= 1
    return i, i


@kernel
def _refresh_coupled_site(i, lo, up, rates, tree, gtab, gslope, par):
    n = lo.size
    d = 0.0
    for s in (2 * i, 2 * i + 1):
        a = slot_rate(s, lo, gtab, gslope, par)
        b = slot_rate(s, up, gtab, gslope, par)
        d += _refresh_slot(s, a if a > b else b, rates, tree)
    if i == 0:
        s = 2 * n + 2
        a = slot_rate(s, lo, gtab, gslope, par)
        b = slot_rate(s, up, gtab, gslope, par)
        d += _refresh_slot(s, a if a > b else b, rates, tree)
    if i == n - 1:
        s = 2 * n + 3
        a = slot_rate(s, lo, gtab, gslope, par)
        b = slot_rate(s, up, gtab, gslope, par)
        d += _refresh_slot(s, a if a > b else b, rates, tree)
    return d


@kernel
def advance_coupled(lo, up, rates, tree, total, gtab, gslope, par, clock, t_end,
                    unif, upos, counters, max_events, rebuild_every, diag, check_order):
    """Basic coupling: in each slot both copies move together at the smaller
    of their two rates and the faster copy alone at the difference.

    counters: [joint events, both moved, lower only, upper only, since rebuild]
    """
    n = lo.size
    t = clock[0]
    while True:
        if counters[0] >= max_events:
            clock[0] = t
            return MAX_EVENTS
        tot = total[0]
        if tot <= 0.0:
            clock[0] = t
            return ABSORBED
        if upos[0] + 3 > unif.size:
            clock[0] = t
            return NEED_UNIFORMS
        u1 = unif[upos[0]]
        u2 = unif[upos[0] + 1]
        u3 = unif[upos[0] + 2]
        upos[0] += 3
        tn = t - math.log(1.0 - u1) / tot
        if tn > t_end:
            clock[0] = t_end
            return DONE
        s = fw_search(tree, u2 * tot)
        if rates[s] <= 0.0:
            _rebuild(rates, tree, total, diag)
            s = fw_search(tree, u2 * total[0])
            while rates[s] <= 0.0 and s > 0:
                s -= 1
        t = tn
        ra = slot_rate(s, lo, gtab, gslope, par)
        rb = slot_rate(s, up, gtab, gslope, par)
        w = rates[s]
        v = u3 * w
        both = v < (ra if ra < rb else rb)
        move_lo = both or ra > rb
        move_up = both or rb > ra
        i1 = -1
        j1 = -1
        i2 = -1
        j2 = -1
        if move_lo:
            i1, j1 = _apply_slot(lo, s, n)
        if move_up:
            i2, j2 = _apply_slot(up, s, n)
        if both:
            counters[1] += 1
        elif move_lo:
            counters[2] += 1
        else:
            counters[3] += 1
        dtot = 0.0
        for k in (i1, j1, i2, j2):
            if k >= 0:
                if check_order and lo[k] > up[k]:
                    clock[0] = t
                    return ORDER_VIOLATED
                if lo[k] >= OCC_LIMIT or up[k] >= OCC_LIMIT:
                    clock[0] = t
                    return OVERFLOW
        # refresh every distinct touched site once
        touched = (i1, j1, i2, j2)
        for a in range(4):
            k = touched[a]
            if k < 0:
                continue
            seen = False
            for b in range(a):
                if touched[b] == k:
                    seen = True
            if not seen:
                dtot += _refresh_coupled_site(k, lo, up, rates, tree, gtab, gslope, par)
        total[0] += dtot
        counters[0] += 1
        counters[4] += 1
        if counters[4] >= rebuild_every:
            _rebuild(rates, tree, total, diag)
            counters[4] = 0


# -- trajectory replays ------------------------------------------------------

@kernel
def replay_martingale(eta, log_t, log_s, n_ev, queries, pair_w, drift_c, drift_0,
                      qv_w, qv_0, gtab, gslope, out):
    """Dynkin martingale and integrated quadratic-variation density.

    ``drift = sum_i drift_c[i] g(eta_i) + drift_0`` and likewise for the
    quadratic variation; both are piecewise constant between events, so
    the time integrals are exact.  ``out[k] = (M, QV, pairing, drift)``
    at ``queries[k]``.  ``eta`` starts as the initial state and is
    advanced in place.
    """
    n = eta.size
    P0 = 0.0
    D = drift_0
    B = qv_0
    for i in range(n):
        P0 += pair_w[i] * eta[i]
        gi = geval(eta[i], gtab, gslope)
        D += drift_c[i] * gi
        B += qv_w[i] * gi
    P = P0
    intD = 0.0
    intB = 0.0
    tprev = 0.0
    q = 0
    nq = queries.size
    for e in range(n_ev):
        te = log_t[e]
        while q < nq and queries[q] < te:
            dq = queries[q] - tprev
            out[q, 0] = P - P0 - (intD + D * dq)
            out[q, 1] = intB + B * dq
            out[q, 2] = P
            out[q, 3] = D
            q += 1
        intD += D * (te - tprev)
        intB += B * (te - tprev)
        tprev = te
        s = log_s[e]
        nb = 2 * n
        if s < nb:
            i = s // 2
            j = i + 1 if s % 2 == 0 else i - 1
            sites = (i, j)
            deltas = (-1, 1)
        else:
            b = s - nb
            i = 0 if (b == 0 or b == 2) else n - 1
            sites = (i, i)
            deltas = (1 if b <= 1 else -1, 0)
        for k in range(2):
            d = deltas[k]
            if d == 0:
                continue
            x = sites[k]
            gold = geval(eta[x], gtab, gslope)
            eta[x] += d
            gnew = geval(eta[x], gtab, gslope)
            P += pair_w[x] * d
            D += drift_c[x] * (gnew - gold)
            B += qv_w[x] * (gnew - gold)
    while q < nq:
        dq = queries[q] - tprev
        out[q, 0] = P - P0 - (intD + D * dq)
        out[q, 1] = intB + B * dq
        out[q, 2] = P
        out[q, 3] = D
        q += 1


@kernel
def replay_replacement(eta, log_t, log_s, n_ev, t_end, epsN, lap, phi_tab,
                       gtab, gslope, f1, f2, S, Gs, out):
    """Time integrals of the bulk and boundary replacement integrands.

    Blocks are ``y = x+1 .. x+epsN`` for ``x`` in ``1+epsN .. N-1-epsN``
    (bulk), ``y = 2 .. 1+epsN`` (left) and ``y = N-1-epsN .. N-2``
    (right).  ``lap[k]`` is the weight of bulk block ``k`` (already
    divided by N).  ``phi_tab[S] = Phi(S / epsN)``.  Returns
    TABLE_TOO_SHORT if a block sum leaves the table.
    ``out = (R4, Rb_left, Rb_right)``.  ``eta`` (advanced in place),
    ``S`` and ``Gs`` (length ``lap.size``) are work buffers.
    """
    n = eta.size              # N - 1 sites
    N = n + 1
    nblk = lap.size
    x_lo = 1 + epsN           # first bulk block anchor (1-based)
    for k in range(nblk):
        S[k] = 0
        Gs[k] = 0.0
        x = x_lo + k
        for y in range(x + 1, x + epsN + 1):
            S[k] += eta[y - 1]
            Gs[k] += geval(eta[y - 1], gtab, gslope)
    # boundary blocks, 1-based site ranges
    l_a, l_b = 2, 1 + epsN
    r_a, r_b = N - 1 - epsN, N - 2
    SL = 0
    GL = 0.0
    for y in range(l_a, l_b + 1):
        SL += eta[y - 1]
        GL += geval(eta[y - 1], gtab, gslope)
    SR = 0
    GR = 0.0
    for y in range(r_a, r_b + 1):
        SR += eta[y - 1]
        GR += geval(eta[y - 1], gtab, gslope)
    ntab = phi_tab.size
    for k in range(nblk):
        if S[k] >= ntab:
            return TABLE_TOO_SHORT
    if SL >= ntab or SR >= ntab:
        return TABLE_TOO_SHORT
    I4 = 0.0
    for k in range(nblk):
        I4 += lap[k] * (Gs[k] / epsN - phi_tab[S[k]])
    IL = GL / epsN - phi_tab[SL]
    IR = GR / epsN - phi_tab[SR]
    acc4 = 0.0
    accL = 0.0
    accR = 0.0
    tprev = 0.0
    nb = 2 * n
    for e in range(n_ev + 1):
        te = log_t[e] if e < n_ev else t_end
        if te > t_end:
            te = t_end
        acc4 += I4 * (te - tprev)
        accL += f1 * IL * (te - tprev)
        accR += f2 * IR * (te - tprev)
        tprev = te
        if e == n_ev or log_t[e] > t_end:
            break
        s = log_s[e]
        if s < nb:
            i = s // 2
            j = i + 1 if s % 2 == 0 else i - 1
            sites = (i, j)
            deltas = (-1, 1)
        else:
            b = s - nb
            i = 0 if (b == 0 or b == 2) else n - 1
            sites = (i, i)
            deltas = (1 if b <= 1 else -1, 0)
        for m in range(2):
            d = deltas[m]
            if d == 0:
                continue
            z = sites[m]
            y = z + 1
            gold = geval(eta[z], gtab, gslope)
            eta[z] += d
            dg = geval(eta[z], gtab, gslope) - gold
            # bulk blocks containing y: x in [y - epsN, y - 1]
            ka = y - epsN - x_lo
            kb = y - 1 - x_lo
            if ka < 0:
                ka = 0
            if kb > nblk - 1:
                kb = nblk - 1
            for k in range(ka, kb + 1):
                old = lap[k] * (Gs[k] / epsN - phi_tab[S[k]])
                S[k] += d
                Gs[k] += dg
                if S[k] >= ntab:
                    return TABLE_TOO_SHORT
                I4 += lap[k] * (Gs[k] / epsN - phi_tab[S[k]]) - old
            if l_a <= y <= l_b:
                SL += d
                GL += dg
                if SL >= ntab:
                    return TABLE_TOO_SHORT
                IL = GL / epsN - phi_tab[SL]
            if r_a <= y <= r_b:
                SR += d
                GR += dg
                if SR >= ntab:
                    return TABLE_TOO_SHORT
                IR = GR / epsN - phi_tab[SR]
    out[0] = acc4
    out[1] = accL
    out[2] = accR
    return DONE
