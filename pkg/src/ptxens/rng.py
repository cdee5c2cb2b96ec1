"""Seed derivation and generator construction.

All randomness in the pipeline flows from a single integer run seed.
Sub-streams (pipeline stages, ensemble branches, dataset splits) derive
their own seeds by hashing the parent seed together with string labels,
so any stage can be re-run in isolation and reproduce its draws exactly.
Generators are numpy PCG64, a published, stable algorithm.
"""

import hashlib

import numpy as np


def derive_seed(seed: int, *labels) -> int:
    """Derive a child seed from ``seed`` and a sequence of labels.

    SHA-256 over the decimal seed and the labels joined by ``/``,
    truncated to 63 bits.  Stable across platforms and processes.
    """
    h = hashlib.sha256()
    h.update(str(int(seed)).encode())
    for label in labels:
        h.update(b"/")
        h.update(str(label).encode())
    return int.from_bytes(h.digest()[:8], "little") & (2**63 - 1)


def make_rng(seed: int, *labels) -> np.random.Generator:
    """PCG64 generator for ``seed``, or for ``derive_seed(seed, *labels)``."""
    if labels:
        seed = derive_seed(seed, *labels)
    return np.random.Generator(np.random.PCG64(int(seed)))
