"""Reproducible splittable random streams.

Every stochastic quantity in a run is drawn from a Philox counter-based
generator keyed by ``(master_seed, *path)`` where the path is a tuple of
small integers naming the consumer (trajectory id, snapshot id, purpose
tag).  Streams derived from distinct paths are statistically independent,
so results do not depend on the order in which parallel workers consume
them.  Within one stream the Philox counter makes block draws stable:
row ``i`` of :func:`uniform_block` is the same no matter how many rows
are requested.
"""

from __future__ import annotations

import numpy as np

# Purpose tags appended to stream paths so that different consumers of the
# same (trajectory, snapshot) coordinates never share counters.
TAG_EVENTS = 1
TAG_SAMPLER = 2
TAG_RETRY = 3


def philox(master_seed: int, *path: int) -> np.random.Generator:
    """Generator for the stream keyed by ``(master_seed, *path)``."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(key=ss.generate_state(2, dtype=np.uint64)))


def stream_seed(master_seed: int, *path: int) -> int:
    """64-bit integer identifying the derived stream (for manifests/logs)."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def uniform_block(rng: np.random.Generator, n_rows: int, n_cols: int) -> np.ndarray:
    """(n_rows, n_cols) uniforms; row i is independent of n_rows (counter order)."""
    return rng.random((n_rows, n_cols))


def as_generator(rng) -> np.random.Generator:
    """Coerce an int seed or Generator into a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return philox(int(rng))
