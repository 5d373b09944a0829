"""Counter-based random streams.

Every stream is a Philox-4x64 generator whose 128-bit key is derived from a
tuple of integers through :class:`numpy.random.SeedSequence`.  Uniform number
``i`` (0-based) of a stream is output word ``i`` of the Philox sequence, so a
single draw can be read back without replaying the stream: word ``i`` lives
in counter block ``i // 4`` at lane ``i % 4``.

Stream purposes used across the package:

``VALUATIONS``  willingness-to-pay draws of an environment
``POLICY``      the algorithm's own randomization (arm draws)
``WAGES``       wage draws of an income-tax environment
"""
from __future__ import annotations

import numpy as np

VALUATIONS = 0
POLICY = 1
WAGES = 2

_WORDS_PER_BLOCK = 4


def stream_key(*words: int) -> np.ndarray:
    """Derive a Philox key from nonnegative integers."""
    return np.random.SeedSequence([int(w) for w in words]).generate_state(2, np.uint64)


def derive_seed(*words: int) -> int:
    """Derive a 64-bit seed from nonnegative integers."""
    return int(np.random.SeedSequence([int(w) for w in words]).generate_state(1, np.uint64)[0])


def generator(seed: int, purpose: int) -> np.random.Generator:
    """Sequential generator positioned at the start of a stream."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, purpose)))


def uniforms(seed: int, purpose: int, start: int, count: int) -> np.ndarray:
    """Uniforms ``start, ..., start + count - 1`` (0-based) of a stream."""
    if start < 0 or count < 0:
        raise ValueError("start and count must be nonnegative")
    block, lane = divmod(start, _WORDS_PER_BLOCK)
    counter = np.array([block, 0, 0, 0], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=stream_key(seed, purpose), counter=counter))
    return gen.random(lane + count)[lane:]


def uniform_at(seed: int, purpose: int, index: int) -> float:
    """Single uniform at 0-based position ``index`` of a stream."""
    return float(uniforms(seed, purpose, index, 1)[0])
