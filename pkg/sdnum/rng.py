"""
Reproducible random streams.

All randomness flows from one root seed. A stream is addressed by a key
tuple and built as Philox(SeedSequence(root, spawn_key=key)), so any
stream can be recreated independently of the order in which others were
used. This is what lets replicas run on different workers and still
produce identical trajectories.

Key layout (first element is the purpose tag):

    (GRAPH, site)               scenario construction
    (INITIAL, replica)          initial infections / ignitions
    (EPOCH, replica, t)         contagion draws for one epoch
    (POLICY, replica, t)        randomized policy choices
    (ROLLOUT, t, j)             rollout j of a lookahead decision at epoch t
    (GROUND, site, window)      the realized ground-truth trajectory
"""

import numpy as np

GRAPH = 0
INITIAL = 1
EPOCH = 2
POLICY = 3
ROLLOUT = 4
GROUND = 5
SITE = 6

_MASK64 = (1 << 64) - 1


def make_rng(root: int, *key: int) -> np.random.Generator:
    """
    Build the generator for a stream.

    Args:
        root: Root seed (any non-negative integer).
        *key: Stream address, non-negative integers.

    Returns:
        A numpy Generator backed by a counter-based Philox bit generator.
    """
    seq = np.random.SeedSequence(int(root) & _MASK64, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(root: int, *key: int) -> int:
    """Derive a 64-bit child seed for a stream address."""
    seq = np.random.SeedSequence(int(root) & _MASK64, spawn_key=tuple(int(k) for k in key))
    lo, hi = seq.generate_state(2, dtype=np.uint32)
    return (int(hi) << 32) | int(lo)

