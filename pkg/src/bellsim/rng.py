"""Counter-based random streams.

Every Monte Carlo draw is a pure function of ``(stream key, counter)``, so a
trial's randomness does not depend on which worker produced it or in what
order. The generator is SplitMix64: the counter is scaled by the golden-ratio
increment and passed through the SplitMix64 finalizer. Stream keys are
derived from an experiment seed with :class:`numpy.random.SeedSequence`.
"""
from __future__ import annotations

import numpy as np

GOLDEN = 0x9E3779B97F4A7C15
MASK64 = (1 << 64) - 1

#: Uniforms consumed per trial: one for the branch, one per detector.
DRAWS_PER_TRIAL = 5

# Domain tags keep keys for unrelated purposes from colliding.
DOMAIN_DETECTOR = 1
DOMAIN_TRIALS = 2
DOMAIN_SCAN = 3


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def draw64(key: int, counter: int) -> int:
    """The 64-bit output at position ``counter`` of stream ``key``."""
    return mix64(key + (counter + 1) * GOLDEN)


def to_unit(x: int) -> float:
    """Map a 64-bit integer to a double in [0, 1) using its top 53 bits."""
    return (x >> 11) * (1.0 / 9007199254740992.0)


def derive_key(seed: int, *path: int) -> int:
    """Derive a 64-bit stream key from ``seed`` and an integer path."""
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class CounterRNG:
    """Sequential view on one counter-based stream.

    Only ``random()`` is provided, which is all the samplers need; a
    :class:`numpy.random.Generator` can be passed wherever this is accepted.
    """

    __slots__ = ("key", "counter")

    def __init__(self, key: int, counter: int = 0):
        self.key = key & MASK64
        self.counter = counter

    @classmethod
    def for_trial(cls, key: int, trial_index: int) -> "CounterRNG":
        return cls(key, trial_index * DRAWS_PER_TRIAL)

    def random(self) -> float:
        u = to_unit(draw64(self.key, self.counter))
        self.counter += 1
        return u

    def __repr__(self) -> str:
        return f"CounterRNG(key={self.key:#018x}, counter={self.counter})"
