"""Deterministic random streams.

Every random quantity in a simulation is drawn from a stream identified by
``(master_seed, path_index, label)``. Streams with different labels are
statistically independent, and a stream is reproduced exactly from its
identity, which is what lets coarse and fine levels share one driver and
lets worker pools split work without changing results.
"""

from __future__ import annotations

import numpy as np

LABELS = {
    "stable": 0,
    "gauss": 1,
    "jump_count": 2,
    "jump_mark": 3,
    "audit": 4,
}


def derive(master_seed: int, index: int = 0, label: str = "stable") -> np.random.Generator:
    """Return the generator for replication ``index`` and sub-stream ``label``."""
    if master_seed < 0 or index < 0:
        raise ValueError("seeds and indices must be nonnegative")
    try:
        code = LABELS[label]
    except KeyError:
        raise ValueError(f"unknown stream label {label!r}") from None
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index), code))
    return np.random.Generator(np.random.PCG64(seq))


def open_unit(rng: np.random.Generator, size=None):
    """Uniform variates on the open interval (0, 1)."""
    # random() returns k / 2**53; the half-ulp shift excludes both endpoints
    return rng.random(size) + 2.0**-54
