"""Deterministic counter-keyed random streams.

Every source of randomness in the library derives from a master seed plus an
integer key tuple (trial index, iteration index, call counter, ...).  Streams
with the same key are bit-identical; streams with different keys are
statistically independent.  Keying instead of sharing one stateful generator
makes results independent of evaluation order, so probe or ensemble
evaluations may run concurrently without changing any output.
"""

import numpy as np


def seed_sequence(seed, *key):
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))


def stream(seed, *key):
    """Return an independent Generator keyed by ``(seed, *key)``."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *key)))


def derive_seed(seed, *key):
    """Derive a 64-bit child seed, e.g. one per trial."""
    return int(seed_sequence(seed, *key).generate_state(1, np.uint64)[0])
