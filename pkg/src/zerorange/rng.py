"""Reproducible random streams keyed by (master seed, replica, purpose).

Streams are Philox counter-based generators seeded through
``numpy.random.SeedSequence`` with a spawn key, so any replica's stream
can be rebuilt on its own, in any order, on any thread.
"""
from __future__ import annotations

import zlib

import numpy as np

PURPOSES = {"init": 0, "dynamics": 1, "coupling": 2, "balance": 3, "misc": 4}


def purpose_code(purpose) -> int:
    if isinstance(purpose, int):
        return purpose
    code = PURPOSES.get(purpose)
    if code is None:
        code = zlib.crc32(purpose.encode()) & 0x7FFFFFFF
    return code


def stream(master_seed: int, replica: int = 0, purpose="dynamics") -> np.random.Generator:
    ss = np.random.SeedSequence(int(master_seed),
                                spawn_key=(int(replica), purpose_code(purpose)))
    return np.random.Generator(np.random.Philox(ss))
