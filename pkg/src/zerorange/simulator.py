"""Exact continuous-time simulation (Gillespie) of the boundary-driven process.

The hot loop is compiled; this module owns the buffers, the random
streams and the bookkeeping around it.
"""
from __future__ import annotations

import csv
import io
import math
import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels as K
from .errors import (Absorbed, CouplingRefused, ModelError,
                     OccupancyOverflow, OrderingViolated)
from .process import Configuration, Event, ModelParams, event_of_slot
from .rng import stream

log = logging.getLogger(__name__)

UNIFORM_CHUNK = 1 << 17
REBUILD_EVERY = 1_000_000
SNAPSHOT_MAGIC = b"ZRPSNAP1"


def kernel_params(params: ModelParams) -> np.ndarray:
    nt = params.N_theta
    sp = params.speed
    return np.array([sp, sp * params.alpha / nt, sp * params.beta / nt,
                     sp * params.lam / nt, sp * params.delta / nt])


class RateIndex:
    """Event rates in a Fenwick tree: O(log n) sampling and updates.

    Leaves are one per site (weight: number of neighbours times the jump
    rate) followed by the four boundary events; sampled events are
    returned as slots of the layout in :mod:`zerorange.process`.
    """

    def __init__(self, params: ModelParams, eta: Configuration):
        if eta.N != params.N:
            raise ModelError(f"configuration has N={eta.N}, model has N={params.N}")
        self.params = params
        self.gtab, self.gslope = params.g.arrays()
        self.par = kernel_params(params)
        self.eta = eta.occupancy.copy()
        n_leaves = params.n_sites + 4
        self.weights = np.zeros(n_leaves)
        self.tree = np.zeros(n_leaves + 1)
        self.total = np.zeros(1)
        self.diag = np.zeros(1)
        K.fill_leaves(self.eta, self.weights, self.gtab, self.gslope, self.par)
        self.total[0] = K.fw_build(self.tree, self.weights)

    @property
    def grand_total(self) -> float:
        return float(self.total[0])

    def slot_rates(self) -> np.ndarray:
        """Per-slot rates implied by the leaves."""
        n = self.params.n_sites
        w = self.weights
        out = np.zeros(self.params.n_slots)
        half = w[:n] / 2.0
        out[0:2 * n:2] = half
        out[1:2 * n:2] = half
        out[0] = w[0]
        out[1] = 0.0
        out[2 * (n - 1)] = 0.0
        out[2 * (n - 1) + 1] = w[n - 1]
        out[2 * n:] = w[n:]
        return out

    def set_site(self, x: int, value: int):
        """Set the occupation of 1-based site ``x`` and update its rates."""
        self.eta[x - 1] = value
        self.total[0] += K._refresh_site(x - 1, self.eta, self.weights, self.tree,
                                        self.gtab, self.gslope, self.par)

    def rebuild(self) -> float:
        """Rebuild from the leaf weights; returns the relative drift of the total."""
        old = self.total[0]
        self.total[0] = K.fw_build(self.tree, self.weights)
        return abs(self.total[0] - old) / self.total[0] if self.total[0] > 0 else 0.0

    def sample(self, u: float) -> int:
        return int(self.sample_many(np.array([u]))[0])

    def sample_many(self, us) -> np.ndarray:
        us = np.asarray(us, dtype=float)
        out = np.empty(us.size, dtype=np.int64)
        K.sample_many(self.tree, self.weights, self.total[0], us, self.params.n_sites, out)
        return out


@dataclass
class Trajectory:
    params: ModelParams
    initial: Configuration
    snapshot_times: np.ndarray
    snapshots: np.ndarray           # (n_snapshots, N-1)
    t_final: float
    final: Configuration
    events: int
    creations: int
    annihilations: int
    absorbed: bool = False
    log_t: Optional[np.ndarray] = None
    log_s: Optional[np.ndarray] = None
    occupation_time: Optional[np.ndarray] = None
    max_rebuild_drift: float = 0.0
    replica: int = 0
    net_flux_max: int = 0       # running extremes of creations - annihilations
    net_flux_min: int = 0

    @property
    def dense(self) -> bool:
        return self.log_t is not None

    @property
    def n_events_logged(self) -> int:
        return 0 if self.log_t is None else int(self.log_t.size)

    def events_iter(self):
        """Yield ``(time, Event)`` from the dense log."""
        if self.log_t is None:
            raise ModelError("trajectory was recorded without an event log")
        N = self.params.N
        for t, s in zip(self.log_t, self.log_s):
            yield float(t), event_of_slot(int(s), N)

    def write_csv(self, fh, header: bool = True):
        """Long format: ``replica,t,x,eta``."""
        w = csv.writer(fh)
        if header:
            w.writerow(["replica", "t", "x", "eta"])
        xs = np.arange(1, self.params.N)
        for t, row in zip(self.snapshot_times, self.snapshots):
            for x, v in zip(xs, row):
                w.writerow([self.replica, repr(float(t)), int(x), int(v)])

    def to_bytes(self) -> bytes:
        """Magic, u64 N, u64 snapshot count, then per snapshot f64 time and u32 sites."""
        if self.snapshots.size and self.snapshots.max() > 2**32 - 1:
            raise OccupancyOverflow("snapshot occupancy does not fit in u32")
        out = io.BytesIO()
        out.write(SNAPSHOT_MAGIC)
        out.write(struct.pack("<QQ", self.params.N, len(self.snapshot_times)))
        for t, row in zip(self.snapshot_times, self.snapshots):
            out.write(struct.pack("<d", float(t)))
            out.write(row.astype("<u4").tobytes())
        return out.getvalue()


def read_snapshots(data: bytes):
    """Inverse of :meth:`Trajectory.to_bytes`: ``(N, times, snapshots)``."""
    if data[:8] != SNAPSHOT_MAGIC:
        raise ValueError("not a snapshot file")
    N, n = struct.unpack_from("<QQ", data, 8)
    times = np.empty(n)
    snaps = np.empty((n, N - 1), dtype=np.int64)
    off = 24
    for k in range(n):
        (times[k],) = struct.unpack_from("<d", data, off)
        off += 8
        snaps[k] = np.frombuffer(data, dtype="<u4", count=N - 1, offset=off)
        off += 4 * (N - 1)
    return N, times, snaps


class SimState:
    """Mutable simulation state: configuration, clock, rates and random stream."""

    def __init__(self, params: ModelParams, initial: Configuration,
                 rng: np.random.Generator, t0: float = 0.0):
        self.params = params
        self.index = RateIndex(params, initial)
        self.rng = rng
        self.clock = np.array([float(t0)])
        self.counters = np.zeros(6, dtype=np.int64)
        self.last = np.zeros(2)
        self._unif = np.empty(0)
        self._upos = np.zeros(1, dtype=np.int64)

    @property
    def t(self) -> float:
        return float(self.clock[0])

    @property
    def eta(self) -> Configuration:
        return Configuration(self.index.eta)

    @property
    def events(self) -> int:
        return int(self.counters[K.C_EVENTS])

    @property
    def creations(self) -> int:
        return int(self.counters[K.C_CREATE])

    @property
    def annihilations(self) -> int:
        return int(self.counters[K.C_ANNIH])

    def _refill(self):
        rest = self._unif[self._upos[0]:]
        self._unif = np.concatenate([rest, self.rng.random(UNIFORM_CHUNK)])
        self._upos[0] = 0

    def _call(self, t_end, max_events, snap_times, snap_pos, snaps,
              log_t, log_s, log_pos, dense, occ, occ_last, occ_on):
        ix = self.index
        return K.advance(ix.eta, ix.weights, ix.tree, ix.total, ix.gtab, ix.gslope, ix.par,
                         self.clock, float(t_end), self._unif, self._upos,
                         snap_times, snap_pos, snaps, log_t, log_s, log_pos, dense,
                         occ, occ_last, occ_on, self.counters, max_events,
                         REBUILD_EVERY, ix.diag, self.last)

    def step(self):
        """Perform exactly one event; returns ``(Event, dt)``.

        Raises :class:`Absorbed` if the total rate is zero.
        """
        if self.index.total[0] <= 0:
            raise Absorbed(f"no event possible at t={self.t}")
        target = self.events + 1
        st = self._loop(np.inf, target)
        if st == K.ABSORBED:
            raise Absorbed(f"no event possible at t={self.t}")
        return event_of_slot(int(self.last[0]), self.params.N), float(self.last[1])

    def _loop(self, t_end, max_events=np.iinfo(np.int64).max, snap_times=None,
              snaps=None, snap_pos=None, dense_log=None, occ=None):
        if snap_times is None:
            snap_times = np.empty(0)
            snaps = np.empty((0, self.params.n_sites), dtype=np.int64)
            snap_pos = np.zeros(1, dtype=np.int64)
        if dense_log is None:
            log_t = np.empty(0)
            log_s = np.empty(0, dtype=np.int64)
            log_pos = np.zeros(1, dtype=np.int64)
            dense = False
        else:
            log_t, log_s, log_pos = dense_log
            dense = True
        if occ is None:
            occ_arr = np.empty(0)
            occ_last = np.empty(0)
            occ_on = False
        else:
            occ_arr, occ_last = occ
            occ_on = True
        while True:
            st = self._call(t_end, max_events, snap_times, snap_pos, snaps,
                            log_t, log_s, log_pos, dense, occ_arr, occ_last, occ_on)
            if st == K.NEED_UNIFORMS:
                self._refill()
                continue
            if st == K.LOG_FULL:
                n = log_t.size
                grow = max(1024, n)
                new_t = np.empty(n + grow)
                new_s = np.empty(n + grow, dtype=np.int64)
                new_t[:n] = log_t
                new_s[:n] = log_s
                log_t, log_s = new_t, new_s
                dense_log[0], dense_log[1] = log_t, log_s
                continue
            if st == K.OVERFLOW:
                raise OccupancyOverflow(f"a site exceeded {K.OCC_LIMIT} particles at t={self.t}")
            return st

    def advance(self, t_end: float, snapshot_times: Sequence[float] = (),
                dense: bool = False, occupation: bool = False,
                max_events: Optional[int] = None, replica: int = 0) -> Trajectory:
        """Run until ``t_end`` and return the recorded path.

        The dense event log stores ``(time, slot)`` for every event, which
        is enough to reconstruct any path functional exactly.
        """
        if t_end < self.t:
            raise ValueError(f"t_end={t_end} is before the current time {self.t}")
        initial = self.eta
        t0 = self.t
        snap_times = np.asarray(sorted(snapshot_times), dtype=float)
        if snap_times.size and (snap_times[0] < t0 or snap_times[-1] > t_end):
            raise ValueError("snapshot times must lie in [t, t_end]")
        snaps = np.zeros((snap_times.size, self.params.n_sites), dtype=np.int64)
        snap_pos = np.zeros(1, dtype=np.int64)
        dense_log = None
        if dense:
            dense_log = [np.empty(4096), np.empty(4096, dtype=np.int64),
                         np.zeros(1, dtype=np.int64)]
        occ = None
        if occupation:
            occ = (np.zeros(self.params.n_sites), np.full(self.params.n_sites, t0))
        ev0, cr0, an0 = self.events, self.creations, self.annihilations
        base = cr0 - an0
        self.counters[K.C_NET_MAX] = base
        self.counters[K.C_NET_MIN] = base
        cap = np.iinfo(np.int64).max if max_events is None else self.events + int(max_events)
        st = self._loop(t_end, cap, snap_times, snaps, snap_pos, dense_log, occ)
        absorbed = st == K.ABSORBED
        if absorbed:
            self.clock[0] = t_end
        if st == K.MAX_EVENTS:
            log.warning("stopped after %d events at t=%g before t_end=%g",
                        self.events - ev0, self.t, t_end)
        occ_time = None
        if occupation:
            occ_arr, occ_last = occ
            occ_time = occ_arr + self.index.eta * (self.t - occ_last)
        n_log = int(dense_log[2][0]) if dense else 0
        return Trajectory(
            params=self.params, initial=initial, snapshot_times=snap_times,
            snapshots=snaps[:snap_pos[0]], t_final=self.t, final=self.eta,
            events=self.events - ev0, creations=self.creations - cr0,
            annihilations=self.annihilations - an0, absorbed=absorbed,
            log_t=dense_log[0][:n_log].copy() if dense else None,
            log_s=dense_log[1][:n_log].copy() if dense else None,
            occupation_time=occ_time, max_rebuild_drift=float(self.index.diag[0]),
            replica=replica, net_flux_max=int(self.counters[K.C_NET_MAX]) - base,
            net_flux_min=int(self.counters[K.C_NET_MIN]) - base)


def run(params: ModelParams, initial: Configuration, t_end: float,
        snapshot_times: Optional[Sequence[float]] = None, seed: int = 0, replica: int = 0,
        dense: bool = False, occupation: bool = False,
        rng: Optional[np.random.Generator] = None) -> Trajectory:
    """Simulate one replica on ``[0, t_end]``.

    Snapshots default to the two ends of the window (just one when
    ``t_end`` is 0).
    """
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    if snapshot_times is None:
        snapshot_times = sorted({0.0, float(t_end)})
    if rng is None:
        rng = stream(seed, replica, "dynamics")
    return SimState(params, initial, rng).advance(
        t_end, snapshot_times, dense=dense, occupation=occupation, replica=replica)


@dataclass
class EnsembleResult:
    results: list
    errors: dict = field(default_factory=dict)

    @property
    def ok(self) -> list:
        return [r for r in self.results if r is not None]


def map_replicas(fn: Callable[[int], object], replicas: int, workers: int = 1) -> EnsembleResult:
    """Evaluate ``fn(r)`` for every replica index.

    A failing replica is recorded in ``errors`` and leaves ``None`` in
    ``results``; the others still run.
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    results: list = [None] * replicas
    errors: dict = {}

    def guarded(r):
        try:
            results[r] = fn(r)
        except Exception as exc:      # collected per replica, siblings continue
            errors[r] = exc
            log.error("replica %d failed: %s", r, exc)

    if workers <= 1:
        for r in range(replicas):
            guarded(r)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(guarded, range(replicas)))
    return EnsembleResult(results, errors)


def ensemble_run(params: ModelParams, init: Callable[[np.random.Generator], Configuration],
                 t_end: float, replicas: int, seed: int,
                 snapshot_times: Optional[Sequence[float]] = None, dense: bool = False,
                 occupation: bool = False,
                 reduce: Optional[Callable[[Trajectory], object]] = None,
                 workers: int = 1) -> EnsembleResult:
    """Independent replicas with per-replica streams.

    Replica ``r`` draws its initial state from ``stream(seed, r, "init")``
    and its dynamics from ``stream(seed, r, "dynamics")``, so results do
    not depend on ``workers``.
    """
    def one(r):
        eta0 = init(stream(seed, r, "init"))
        tr = run(params, eta0, t_end, snapshot_times, seed=seed, replica=r,
                 dense=dense, occupation=occupation)
        return reduce(tr) if reduce is not None else tr

    return map_replicas(one, replicas, workers)


# -- basic coupling ----------------------------------------------------------

@dataclass
class CoupledResult:
    lower: Configuration
    upper: Configuration
    t_final: float
    events: int
    both: int
    lower_only: int
    upper_only: int
    ordered: bool


class CoupledState:
    """Two copies driven by the basic coupling.

    Requires a non-decreasing jump rate, under which the coupling keeps
    ``lower <= upper`` forever.
    """

    def __init__(self, params: ModelParams, lower: Configuration, upper: Configuration,
                 rng: np.random.Generator):
        if not params.g.non_decreasing:
            raise CouplingRefused(f"jump rate {params.g.describe()} is not non-decreasing")
        if not lower <= upper:
            raise OrderingViolated("initial configurations are not ordered")
        self.params = params
        self.gtab, self.gslope = params.g.arrays()
        self.par = kernel_params(params)
        self.lo = lower.occupancy.copy()
        self.up = upper.occupancy.copy()
        self.rates = np.zeros(params.n_slots)
        self.tree = np.zeros(params.n_slots + 1)
        K.fill_coupled_rates(self.lo, self.up, self.rates, self.gtab, self.gslope, self.par)
        self.total = np.array([K.fw_build(self.tree, self.rates)])
        self.diag = np.zeros(1)
        self.clock = np.zeros(1)
        self.counters = np.zeros(5, dtype=np.int64)
        self.rng = rng
        self._unif = np.empty(0)
        self._upos = np.zeros(1, dtype=np.int64)

    def run(self, t_end: float = np.inf, max_events: Optional[int] = None,
            check_order: bool = True) -> CoupledResult:
        if not np.isfinite(t_end) and max_events is None:
            raise ValueError("need a finite horizon or an event budget")
        cap = np.iinfo(np.int64).max if max_events is None else int(self.counters[0] + max_events)
        while True:
            st = K.advance_coupled(self.lo, self.up, self.rates, self.tree, self.total,
                                   self.gtab, self.gslope, self.par, self.clock, float(t_end),
                                   self._unif, self._upos, self.counters, cap, REBUILD_EVERY,
                                   self.diag, check_order)
            if st == K.NEED_UNIFORMS:
                rest = self._unif[self._upos[0]:]
                self._unif = np.concatenate([rest, self.rng.random(3 * (UNIFORM_CHUNK // 2))])
                self._upos[0] = 0
                continue
            if st == K.ORDER_VIOLATED:
                raise OrderingViolated(f"coupling lost order at t={self.clock[0]}")
            if st == K.OVERFLOW:
                raise OccupancyOverflow("a site exceeded the occupancy limit")
            break
        return CoupledResult(Configuration(self.lo), Configuration(self.up), float(self.clock[0]),
                             int(self.counters[0]), int(self.counters[1]),
                             int(self.counters[2]), int(self.counters[3]),
                             bool(np.all(self.lo <= self.up)))


def run_coupled(params: ModelParams, lower: Configuration, upper: Configuration,
                t_end: float = np.inf, max_events: Optional[int] = None,
                seed: int = 0, replica: int = 0) -> CoupledResult:
    return CoupledState(params, lower, upper, stream(seed, replica, "coupling")).run(
        t_end, max_events)


def reference_step(eta: Configuration, params: ModelParams, rng: np.random.Generator):
    """Pure-Python single step by linear search; used to cross-check the kernel."""
    from .process import apply_event, slot_rates
    rates = slot_rates(eta, params)
    tot = rates.sum()
    if tot <= 0:
        raise Absorbed("no event possible")
    u1, u2 = rng.random(2)
    dt = -math.log(1.0 - u1) / tot
    s = int(np.searchsorted(np.cumsum(rates), u2 * tot, side="right"))
    s = min(s, rates.size - 1)
    ev = event_of_slot(s, params.N)
    return apply_event(eta, ev), ev, dt
