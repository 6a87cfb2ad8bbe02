"""Configurations, events and microscopic rates.

Sites are labelled ``x = 1, ..., N-1`` as in the model; arrays hold site
``x`` at index ``x - 1``.

Event slots (shared with the compiled kernels)::

    2*(x-1)        bulk jump x -> x+1
    2*(x-1) + 1    bulk jump x -> x-1
    2*(N-1) + 0    creation at site 1        (alpha / N^theta)
    2*(N-1) + 1    creation at site N-1      (beta / N^theta)
    2*(N-1) + 2    annihilation at site 1    (lambda g(eta(1)) / N^theta)
    2*(N-1) + 3    annihilation at site N-1  (delta g(eta(N-1)) / N^theta)
"""
from __future__ import annotations

import enum
import json
import math
import struct
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from .errors import ImpossibleEvent, ModelError, OccupancyOverflow
from .rates import RateFunction, linear

U32_MAX = 2**32 - 1


class Configuration:
    """Occupation numbers on ``{1, ..., N-1}`` with a cached particle count."""

    __slots__ = ("occupancy", "total")

    def __init__(self, occupancy):
        occ = np.array(occupancy, dtype=np.int64).reshape(-1)
        if occ.size < 2:
            raise ModelError("a configuration needs at least two sites (N >= 3)")
        if np.any(occ < 0):
            raise ModelError("occupation numbers must be nonnegative")
        self.occupancy = occ
        self.total = int(occ.sum())

    @classmethod
    def empty(cls, N: int) -> "Configuration":
        return cls(np.zeros(N - 1, dtype=np.int64))

    @property
    def N(self) -> int:
        return self.occupancy.size + 1

    def __getitem__(self, x: int) -> int:
        """Occupation of site ``x`` (1-based)."""
        if not 1 <= x <= self.occupancy.size:
            raise IndexError(f"site {x} outside 1..{self.occupancy.size}")
        return int(self.occupancy[x - 1])

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return np.array_equal(self.occupancy, other.occupancy)

    def __repr__(self):
        return f"Configuration({self.occupancy.tolist()})"

    def copy(self) -> "Configuration":
        return Configuration(self.occupancy.copy())

    def __le__(self, other: "Configuration") -> bool:
        return bool(np.all(self.occupancy <= other.occupancy))

    # -- serialization ---------------------------------------------------
    def to_json(self) -> str:
        return json.dumps(self.occupancy.tolist())

    @classmethod
    def from_json(cls, text: str) -> "Configuration":
        return cls(json.loads(text))

    def to_bytes(self) -> bytes:
        """Little-endian u64 site count followed by one u32 per site."""
        if self.occupancy.size and self.occupancy.max() > U32_MAX:
            raise OccupancyOverflow(
                f"occupancy {int(self.occupancy.max())} does not fit in u32")
        return struct.pack("<Q", self.occupancy.size) + self.occupancy.astype("<u4").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Configuration":
        (n,) = struct.unpack_from("<Q", data, 0)
        body = np.frombuffer(data, dtype="<u4", count=n, offset=8)
        return cls(body.astype(np.int64))


@dataclass(frozen=True)
class ModelParams:
    """Lattice size, boundary rates and jump rate.

    The specialized model is ``delta = 1, lam = beta = 0``.  ``lam`` is
    the left annihilation coefficient (``lambda`` is reserved in Python).
    """

    N: int
    theta: float = 1.0
    alpha: float = 1.0
    beta: float = 0.0
    lam: float = 0.0
    delta: float = 1.0
    g: RateFunction = field(default_factory=linear)
    diffusive: bool = True

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 3:
            raise ModelError(f"N must be an integer >= 3, got {self.N}")
        object.__setattr__(self, "N", int(self.N))
        if not self.theta >= 1:
            raise ModelError(f"theta must be >= 1, got {self.theta}")
        for name in ("alpha", "beta", "lam", "delta"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ModelError(f"{name} must be finite and nonnegative, got {v}")

    @property
    def specialized(self) -> bool:
        return self.delta == 1 and self.lam == 0 and self.beta == 0

    @property
    def kappa(self) -> int:
        return 1 if self.theta == 1 else 0

    @property
    def N_theta(self) -> float:
        return float(self.N) ** self.theta

    @property
    def speed(self) -> float:
        """Time acceleration: ``N^2`` under diffusive scaling, else 1."""
        return float(self.N) ** 2 if self.diffusive else 1.0

    @property
    def n_sites(self) -> int:
        return self.N - 1

    @property
    def n_slots(self) -> int:
        return 2 * (self.N - 1) + 4

    def with_(self, **kw) -> "ModelParams":
        return replace(self, **kw)


class EventKind(enum.IntEnum):
    BULK = 0
    CREATE_LEFT = 1
    CREATE_RIGHT = 2
    ANNIHILATE_LEFT = 3
    ANNIHILATE_RIGHT = 4


@dataclass(frozen=True)
class Event:
    kind: EventKind
    x: int = 0
    direction: int = 0

    @classmethod
    def jump(cls, x: int, direction: int) -> "Event":
        if direction not in (-1, 1):
            raise ModelError("jump direction must be +1 or -1")
        return cls(EventKind.BULK, x, direction)

    def validate(self, N: int):
        if self.kind == EventKind.BULK:
            if not (1 <= self.x <= N - 1 and 1 <= self.x + self.direction <= N - 1):
                raise ModelError(f"bulk jump {self.x}->{self.x + self.direction} leaves 1..{N - 1}")

    def __str__(self):
        if self.kind == EventKind.BULK:
            return f"jump({self.x}->{self.x + self.direction})"
        return self.kind.name.lower()


CREATE_LEFT = Event(EventKind.CREATE_LEFT)
CREATE_RIGHT = Event(EventKind.CREATE_RIGHT)
ANNIHILATE_LEFT = Event(EventKind.ANNIHILATE_LEFT)
ANNIHILATE_RIGHT = Event(EventKind.ANNIHILATE_RIGHT)


def slot_of(ev: Event, N: int) -> int:
    if ev.kind == EventKind.BULK:
        return 2 * (ev.x - 1) + (0 if ev.direction == 1 else 1)
    return 2 * (N - 1) + int(ev.kind) - 1


def event_of_slot(slot: int, N: int) -> Event:
    base = 2 * (N - 1)
    if slot < base:
        return Event(EventKind.BULK, slot // 2 + 1, 1 if slot % 2 == 0 else -1)
    return Event(EventKind(slot - base + 1))


def all_events(N: int) -> Iterator[Event]:
    """Every well-formed event on ``{1..N-1}``."""
    for x in range(1, N):
        if x + 1 <= N - 1:
            yield Event.jump(x, 1)
        if x - 1 >= 1:
            yield Event.jump(x, -1)
    yield CREATE_LEFT
    yield CREATE_RIGHT
    yield ANNIHILATE_LEFT
    yield ANNIHILATE_RIGHT


def event_rate(eta: Configuration, ev: Event, params: ModelParams) -> float:
    N = params.N
    ev.validate(N)
    g = params.g
    nt = params.N_theta
    if ev.kind == EventKind.BULK:
        r = g(eta[ev.x])
    elif ev.kind == EventKind.CREATE_LEFT:
        r = params.alpha / nt
    elif ev.kind == EventKind.CREATE_RIGHT:
        r = params.beta / nt
    elif ev.kind == EventKind.ANNIHILATE_LEFT:
        r = params.lam * g(eta[1]) / nt
    else:
        r = params.delta * g(eta[N - 1]) / nt
    return r * params.speed


def apply_event(eta: Configuration, ev: Event) -> Configuration:
    """Configuration after ``ev``; the input is left untouched."""
    N = eta.N
    ev.validate(N)
    occ = eta.occupancy.copy()
    if ev.kind == EventKind.BULK:
        src, dst = ev.x - 1, ev.x + ev.direction - 1
        if occ[src] == 0:
            raise ImpossibleEvent(f"{ev} from an empty site")
        occ[src] -= 1
        occ[dst] += 1
    elif ev.kind == EventKind.CREATE_LEFT:
        occ[0] += 1
    elif ev.kind == EventKind.CREATE_RIGHT:
        occ[-1] += 1
    elif ev.kind == EventKind.ANNIHILATE_LEFT:
        if occ[0] == 0:
            raise ImpossibleEvent("annihilation at an empty site 1")
        occ[0] -= 1
    else:
        if occ[-1] == 0:
            raise ImpossibleEvent(f"annihilation at an empty site {N - 1}")
        occ[-1] -= 1
    out = Configuration.__new__(Configuration)
    out.occupancy = occ
    out.total = eta.total + (ev.kind in (EventKind.CREATE_LEFT, EventKind.CREATE_RIGHT)) \
        - (ev.kind in (EventKind.ANNIHILATE_LEFT, EventKind.ANNIHILATE_RIGHT))
    return out


def total_rate(eta: Configuration, params: ModelParams) -> float:
    """Escape rate of ``eta``: every site but the two ends jumps both ways."""
    g = params.g(eta.occupancy)
    nt = params.N_theta
    bulk = g[0] + g[-1] + 2.0 * g[1:-1].sum()
    boundary = (params.alpha + params.beta + params.lam * g[0] + params.delta * g[-1]) / nt
    return float(bulk + boundary) * params.speed


def slot_rates(eta: Configuration, params: ModelParams) -> np.ndarray:
    """Rate of every event slot, in slot order."""
    N = params.N
    g = params.g(eta.occupancy)
    out = np.zeros(params.n_slots)
    out[0:2 * (N - 1):2] = g
    out[1:2 * (N - 1):2] = g
    out[2 * (N - 2)] = 0.0      # x = N-1 cannot jump right
    out[1] = 0.0                # x = 1 cannot jump left
    nt = params.N_theta
    base = 2 * (N - 1)
    out[base] = params.alpha / nt
    out[base + 1] = params.beta / nt
    out[base + 2] = params.lam * g[0] / nt
    out[base + 3] = params.delta * g[-1] / nt
    return out * params.speed
