"""Deterministic, labelled random streams.

Every source of randomness in the package flows through `seeded_rng`.  A
stream is identified by a base seed plus an arbitrary tuple of labels
(strings/ints), so independent subsystems ("init", "train", ("client", 3))
never share or perturb each other's draws.  Streams are stable across
platforms: labels are hashed with SHA-256 and fed into a PCG64 generator,
so no Python `hash()` randomisation or word-size dependence leaks in.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_words(labels: tuple) -> tuple[int, ...]:
    h = hashlib.sha256()
    for item in labels:
        h.update(repr(item).encode("utf-8"))
        h.update(b"\x1f")  # separator so ("ab",) != ("a","b")
    d = h.digest()
    return tuple(int.from_bytes(d[i : i + 4], "little") for i in range(0, 16, 4))

def seeded_rng(seed: int, *labels) -> np.random.Generator:
    """Return a Generator for the stream identified by (seed, *labels).

    Identical arguments give an identical stream; distinct labels give
    statistically independent streams.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=_label_words(labels))
    return np.random.Generator(np.random.PCG64(ss))
