"""Deterministic random-stream derivation.

All randomness in the package flows through labelled Philox substreams so that
results are reproducible bit-for-bit across runs and across worker counts.
Labels may mix integers and strings; strings are hashed with crc32, which is
stable across platforms and Python versions (unlike ``hash``).
"""

from __future__ import annotations

import zlib

import numpy as np


def _label_ints(labels) -> list[int]:
    out = []
    for lab in labels:
        if isinstance(lab, str):
            out.append(zlib.crc32(lab.encode("utf-8")))
        elif isinstance(lab, (int, np.integer)):
            out.append(int(lab) & 0xFFFFFFFFFFFFFFFF)
        else:
            raise TypeError(f"rng labels must be int or str, got {type(lab)!r}")
    return out


def substream(seed: int, *labels) -> np.random.Generator:
    """Generator for the substream identified by (seed, *labels)."""
    seq = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF,
                                 spawn_key=tuple(_label_ints(labels)))
    return np.random.Generator(np.random.Philox(seq))
