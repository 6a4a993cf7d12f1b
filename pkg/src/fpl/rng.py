"""Splittable seeded random streams.

Every stream is derived from ``(seed, role, index)`` through
:class:`numpy.random.SeedSequence` spawn keys, so the stream a client draws from
does not depend on how many other clients exist or in which order they run.
"""

import numpy as np

from fpl.errors import ConfigError

INIT = 0
SERVER = 1
SAMPLE = 2
MASK = 3
RANDOM_REC = 4
EVAL = 5


def stream(seed: int, role: int, index: int = 0) -> np.random.Generator:
    if seed < 0 or seed >= 2**64:
        raise ConfigError(f"seed must be a 64-bit unsigned integer, got {seed}")
    ss = np.random.SeedSequence(int(seed), spawn_key=(role, index))
    return np.random.Generator(np.random.PCG64(ss))


def get_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def from_state(state: dict) -> np.random.Generator:
    if state.get("bit_generator") != "PCG64":
        raise ConfigError(f"unsupported bit generator {state.get('bit_generator')!r}")
    bg = np.random.PCG64()
    bg.state = state
    return np.random.Generator(bg)
