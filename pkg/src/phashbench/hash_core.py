"""DCT-family perceptual hashes and the packed bit-hash value type.

All hashes share one pipeline: Rec. 601 luminance, box resample to a working
grid, 2-D orthonormal DCT-II, keep a square block of low-frequency AC
coefficients (DC row and column excluded), threshold each coefficient at the
block median (ties map to 0).  The mean hash thresholds an 8x8 thumbnail at
its mean instead.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np
import scipy.fft

from . import image_ops

MIN_IMAGE_SIDE = 32


class HashError(ValueError):
    """Base class for hash-layer failures."""


class LengthMismatchError(HashError):
    """Two hashes of different bit lengths were combined."""


class BitIndexError(HashError):
    """A bit index is out of range or repeated where it must be unique."""


class FixtureFormatError(HashError):
    """A hash fixture line could not be parsed."""


@dataclass(frozen=True)
class BitHash:
    """Immutable fixed-length bit vector.

    Bits are packed most-significant-bit first: bit 0 is the high bit of
    byte 0.  ``n_bits`` need not be a multiple of 8; pad bits are zero.
    """

    packed: bytes
    n_bits: int

    def __post_init__(self) -> None:
        if self.n_bits < 1:
            raise HashError(f"hash length must be positive, got {self.n_bits}")
        need = (self.n_bits + 7) // 8
        if len(self.packed) != need:
            raise HashError(
                f"packed length {len(self.packed)} != {need} for {self.n_bits} bits"
            )
        pad = 8 * need - self.n_bits
        if pad and (self.packed[-1] & ((1 << pad) - 1)):
            raise HashError("pad bits must be zero")

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> "BitHash":
        arr = np.asarray(list(bits) if not isinstance(bits, np.ndarray) else bits)
        if arr.ndim != 1 or arr.size < 1:
            raise HashError("bits must be a non-empty 1-D sequence")
        if not np.all((arr == 0) | (arr == 1)):
            raise HashError("bits must be 0 or 1")
        packed = np.packbits(arr.astype(np.uint8), bitorder="big").tobytes()
        return cls(packed=packed, n_bits=int(arr.size))

    def bits(self) -> np.ndarray:
        """Unpacked bits as a uint8 array of length ``n_bits``."""
        raw = np.frombuffer(self.packed, dtype=np.uint8)
        return np.unpackbits(raw, bitorder="big")[: self.n_bits]

    def to_hex(self) -> str:
        """Lowercase hex of the packed bytes (bit 0 = high bit of first digit pair)."""
        return self.packed.hex()

    @classmethod
    def from_hex(cls, text: str, n_bits: int | None = None) -> "BitHash":
        try:
            raw = bytes.fromhex(text.strip())
        except ValueError as exc:
            raise FixtureFormatError(f"invalid hex {text!r}") from exc
        if not raw:
            raise FixtureFormatError("empty hex hash")
        if n_bits is None:
            n_bits = 8 * len(raw)
        return cls(packed=raw, n_bits=n_bits)

    def __len__(self) -> int:
        return self.n_bits

    def __iter__(self) -> Iterator[int]:
        return iter(int(b) for b in self.bits())


def hamming_normalized(a: BitHash, b: BitHash) -> float:
    """Fraction of differing bits, in [0, 1]."""
    if a.n_bits != b.n_bits:
        raise LengthMismatchError(f"{a.n_bits} vs {b.n_bits} bits")
    xor = np.bitwise_xor(
        np.frombuffer(a.packed, dtype=np.uint8),
        np.frombuffer(b.packed, dtype=np.uint8),
    )
    # Pad bits are zero on both sides, so they never contribute to the count.
    return float(np.unpackbits(xor).sum()) / a.n_bits


def flip_bits(h: BitHash, indices: Iterable[int]) -> BitHash:
    """Return a copy of ``h`` with the given distinct bit positions inverted."""
    idx = np.asarray(list(indices) if not isinstance(indices, np.ndarray) else indices)
    if idx.size == 0:
        return h
    if idx.ndim != 1 or not np.issubdtype(idx.dtype, np.integer):
        raise BitIndexError("indices must be a 1-D integer sequence")
    if idx.min() < 0 or idx.max() >= h.n_bits:
        raise BitIndexError(f"index outside [0, {h.n_bits})")
    if np.unique(idx).size != idx.size:
        raise BitIndexError("indices must be distinct")
    bits = h.bits().copy()
    bits[idx] ^= 1
    return BitHash.from_bits(bits)


class HashAlgoId(enum.Enum):
    """Deployable hash configurations."""

    DCT64 = "dct64"
    DCT256 = "dct256"
    DCT1024 = "dct1024"
    MEAN64 = "mean64"

    @property
    def n_bits(self) -> int:
        return {"dct64": 64, "dct256": 256, "dct1024": 1024, "mean64": 64}[self.value]

    @property
    def dct_block(self) -> int | None:
        """Side of the retained AC block, or None for the mean hash."""
        return {"dct64": 8, "dct256": 16, "dct1024": 32, "mean64": None}[self.value]


def _dct2(plane: np.ndarray) -> np.ndarray:
    return scipy.fft.dct(scipy.fft.dct(plane, axis=0, norm="ortho"), axis=1, norm="ortho")


def compute_hash(algo: HashAlgoId, img: np.ndarray) -> BitHash:
    """Hash an image; input must be at least 32x32 with values in [0, 1]."""
    arr = image_ops.as_pixel_image(img, min_side=MIN_IMAGE_SIDE)
    lum = image_ops.luminance(arr)
    if algo is HashAlgoId.MEAN64:
        thumb = image_ops.resample_area(lum, 8, 8)[:, :, 0]
        bits = (thumb > thumb.mean()).astype(np.uint8).ravel()
        return BitHash.from_bits(bits)
    block = algo.dct_block
    assert block is not None
    grid = image_ops.resample_area(lum, 64, 64)[:, :, 0]
    coeffs = _dct2(grid)
    # Skip the DC row and column; keep the lowest AC frequencies.
    ac = coeffs[1 : block + 1, 1 : block + 1]
    bits = (ac > np.median(ac)).astype(np.uint8).ravel()
    return BitHash.from_bits(bits)


# ---------------------------------------------------------------------------
# Fixture serialization: one "<name> <hex>" pair per line.


def format_fixture_line(name: str, h: BitHash) -> str:
    if not name or any(ch.isspace() for ch in name):
        raise FixtureFormatError(f"fixture name {name!r} must be non-empty, no spaces")
    return f"{name} {h.to_hex()}"


def parse_fixture_line(line: str, n_bits: int | None = None) -> tuple[str, BitHash]:
    parts = line.split()
    if len(parts) != 2:
        raise FixtureFormatError(f"expected '<name> <hex>', got {line!r}")
    return parts[0], BitHash.from_hex(parts[1], n_bits)


def write_fixture_file(path: str | Path, entries: Iterable[tuple[str, BitHash]]) -> None:
    lines = [format_fixture_line(name, h) for name, h in entries]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_fixture_file(path: str | Path, n_bits: int | None = None) -> list[tuple[str, BitHash]]:
    out = []
    for raw in Path(path).read_text(encoding="ascii").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        out.append(parse_fixture_line(line, n_bits))
    return out
