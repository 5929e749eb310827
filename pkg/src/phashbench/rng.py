"""Deterministic random-stream derivation shared by all randomized components.

Every randomized routine in this package draws from a generator obtained via
:func:`substream` so that a single root seed reproduces a whole run while
independent components (attack per image, defense noise, dataset jitter, ...)
never share a stream.
"""

from __future__ import annotations

import hashlib

import numpy as np


def substream(seed: int, *labels: str | int) -> np.random.Generator:
    """Derive an independent PCG64 generator from a root seed and a label path.

    The labels identify the consumer, e.g. ``substream(7, "attack", "img_03")``.
    Equal (seed, labels) pairs always yield identical streams; any change to
    the seed or to one label yields an unrelated stream.
    """
    digest = hashlib.sha256()
    digest.update(str(int(seed)).encode("ascii"))
    for label in labels:
        part = str(label).encode("utf-8")
        # Length-prefix each label so ("ab","c") never collides with ("a","bc").
        digest.update(len(part).to_bytes(4, "little"))
        digest.update(part)
    state = int.from_bytes(digest.digest()[:8], "little")
    return np.random.Generator(np.random.PCG64(state))
