"""Randomized bit-flip defense for hash oracles.

Each query response has exactly ``round(q * n_bits)`` uniformly chosen
distinct bits inverted, with fresh randomness per query.  Matching on the
database side stays usable because the added normalized distance is bounded
by ``round(q * n) / n`` per query, while attackers lose gradient signal.
"""

from __future__ import annotations

import numpy as np

from .hash_core import BitHash, flip_bits


class BitFlipDefense:
    """Wrap a hash oracle so every returned hash carries random bit flips.

    Exposes the same query surface as the wrapped oracle (``query``,
    ``n_bits``, ``query_count``, ``budget``, ``remaining``) so attacks cannot
    tell the difference.
    """

    def __init__(self, inner, q: float, rng: np.random.Generator) -> None:
        if not 0.0 <= float(q) <= 1.0:
            raise ValueError(f"flip fraction q={q} outside [0, 1]")
        self.inner = inner
        self.q = float(q)
        self._rng = rng
        self.n_flips = int(round(self.q * inner.n_bits))

    @property
    def n_bits(self) -> int:
        return self.inner.n_bits

    @property
    def query_count(self) -> int:
        return self.inner.query_count

    @property
    def budget(self) -> int:
        return self.inner.budget

    @property
    def remaining(self) -> int:
        return self.inner.remaining

    def query(self, img: np.ndarray) -> BitHash:
        h = self.inner.query(img)
        if self.n_flips == 0:
            return h
        idx = self._rng.choice(self.n_bits, size=self.n_flips, replace=False)
        return flip_bits(h, idx)


def defended_hash(d: BitFlipDefense, img: np.ndarray) -> BitHash:
    """Hash ``img`` through the defense; one inner query is consumed."""
    return d.query(img)
