"""Hash-image datasets: synthetic renderings, image directories, MNIST IDX.

Images are 32x32x1 floats in [0, 1].  Hashing upscales each image 2x (the
hash layer needs a 64-pixel side) and runs the chosen algorithm, optionally
through the bit-flip defense, all precomputed when the dataset is built.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import image_ops
from ..defense import BitFlipDefense
from ..evasion import HashOracle
from ..hash_core import BitHash, HashAlgoId
from ..rng import substream
from .model import bits_to_pm1

SIDE = 32
RECOMMENDED_MIN_IMAGES = 200

# 5x7 bitmap font for the ten digits, scaled up 4x when rendered.
_GLYPHS = {
    0: ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    1: ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    2: ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    3: ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    4: ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    5: ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    6: ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    7: ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    8: ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    9: ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
}
_GLYPH_SCALE = 4


class EmptySourceError(ValueError):
    """Dataset source resolves to zero images."""


class ShapeMismatchError(ValueError):
    """Images in one dataset source disagree in shape."""


@dataclass(frozen=True)
class HashImageDataset:
    """Precomputed (hash, image) pairs with a train/test split."""

    hashes: tuple[BitHash, ...]
    images: np.ndarray
    algo: HashAlgoId
    train_idx: tuple[int, ...]
    test_idx: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.hashes) == 0:
            raise EmptySourceError("dataset has no pairs")
        if self.images.shape != (len(self.hashes), SIDE, SIDE, 1):
            raise ShapeMismatchError(
                f"images shaped {self.images.shape}, need (M, {SIDE}, {SIDE}, 1)"
            )
        n = {h.n_bits for h in self.hashes}
        if len(n) != 1:
            raise ShapeMismatchError(f"mixed hash lengths {sorted(n)}")

    def __len__(self) -> int:
        return len(self.hashes)

    def _pairs(self, idx: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
        x = np.stack([bits_to_pm1(self.hashes[i]) for i in idx])
        y = self.images[list(idx)]
        return x, y

    def train_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        return self._pairs(self.train_idx)

    def test_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        return self._pairs(self.test_idx)


def render_digit(digit: int, jitter_y: int = 0, jitter_x: int = 0) -> np.ndarray:
    """One white-on-black glyph, centered up to a jitter of +-2 pixels."""
    if not -2 <= jitter_y <= 2 or not -2 <= jitter_x <= 2:
        raise ValueError("jitter must be within +-2 pixels")
    rows = _GLYPHS[int(digit) % 10]
    glyph = np.array([[c == "1" for c in row] for row in rows], dtype=np.float64)
    glyph = glyph.repeat(_GLYPH_SCALE, axis=0).repeat(_GLYPH_SCALE, axis=1)
    gh, gw = glyph.shape
    img = np.zeros((SIDE, SIDE, 1))
    y0 = (SIDE - gh) // 2 + jitter_y
    x0 = (SIDE - gw) // 2 + jitter_x
    img[y0 : y0 + gh, x0 : x0 + gw, 0] = glyph
    return img


def _render_diverse_scene(rng: np.random.Generator) -> np.ndarray:
    """2..4 random shapes (rectangle, disc, line) at random intensities."""
    yy, xx = np.meshgrid(np.arange(SIDE), np.arange(SIDE), indexing="ij")
    img = np.zeros((SIDE, SIDE))
    for _ in range(int(rng.integers(2, 5))):
        kind = int(rng.integers(0, 3))
        level = rng.uniform(0.3, 1.0)
        if kind == 0:
            cy, cx = rng.uniform(4, SIDE - 4, size=2)
            hy, hx = rng.uniform(2, 8, size=2)
            mask = (np.abs(yy - cy) <= hy) & (np.abs(xx - cx) <= hx)
        elif kind == 1:
            cy, cx = rng.uniform(4, SIDE - 4, size=2)
            r = rng.uniform(2, 8)
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
        else:
            p0 = rng.uniform(0, SIDE - 1, size=2)
            p1 = rng.uniform(0, SIDE - 1, size=2)
            half_width = rng.uniform(0.5, 1.2)
            d = p1 - p0
            denom = max(float(d @ d), 1e-9)
            t = np.clip(((yy - p0[0]) * d[0] + (xx - p0[1]) * d[1]) / denom, 0, 1)
            dist2 = (yy - p0[0] - t * d[0]) ** 2 + (xx - p0[1] - t * d[1]) ** 2
            mask = dist2 <= half_width**2
        img[mask] = level
    return img[:, :, np.newaxis]


def generate_regular(count: int, seed: int) -> np.ndarray:
    """Digits 0-9 cycled with random +-2 pixel jitter; shape (M, 32, 32, 1)."""
    rng = substream(seed, "dataset", "regular")
    out = np.empty((count, SIDE, SIDE, 1))
    for i in range(count):
        jy, jx = int(rng.integers(-2, 3)), int(rng.integers(-2, 3))
        out[i] = render_digit(i % 10, jy, jx)
    return out


def generate_diverse(count: int, seed: int) -> np.ndarray:
    """Random multi-shape scenes; shape (M, 32, 32, 1)."""
    rng = substream(seed, "dataset", "diverse")
    return np.stack([_render_diverse_scene(rng) for _ in range(count)])


def load_mnist_idx(path: str | Path, count: int | None = None) -> np.ndarray:
    """Parse an IDX3 image file; 28x28 bytes zero-padded to 32x32, /255."""
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise EmptySourceError(f"{path}: too short for an IDX header")
    magic, n, rows, cols = np.frombuffer(raw[:16], dtype=">u4")
    if magic != 2051:
        raise ShapeMismatchError(f"{path}: IDX magic {magic}, expected 2051")
    if count is not None:
        n = min(int(n), count)
    need = 16 + int(n) * int(rows) * int(cols)
    if len(raw) < need:
        raise EmptySourceError(f"{path}: truncated IDX payload")
    data = np.frombuffer(raw[16:need], dtype=np.uint8).reshape(int(n), int(rows), int(cols))
    imgs = data.astype(np.float64) / 255.0
    pad_y = (SIDE - int(rows)) // 2
    pad_x = (SIDE - int(cols)) // 2
    if pad_y < 0 or pad_x < 0:
        raise ShapeMismatchError(f"{path}: images {rows}x{cols} larger than {SIDE}")
    out = np.zeros((int(n), SIDE, SIDE, 1))
    out[:, pad_y : pad_y + int(rows), pad_x : pad_x + int(cols), 0] = imgs
    return out


def _load_directory(path: Path, count: int | None) -> np.ndarray:
    paths = sorted(
        p for p in path.iterdir() if p.suffix.lower() in (".pgm", ".png", ".ppm")
    )
    if count is not None:
        paths = paths[:count]
    if not paths:
        raise EmptySourceError(f"no images in {path}")
    imgs = [image_ops.load_image(p) for p in paths]
    shapes = {im.shape for im in imgs}
    if len(shapes) != 1:
        raise ShapeMismatchError(f"mixed image shapes in {path}: {sorted(shapes)}")
    out = np.empty((len(imgs), SIDE, SIDE, 1))
    for i, im in enumerate(imgs):
        gray = image_ops.luminance(im)[:, :, np.newaxis]
        if gray.shape[0] != SIDE or gray.shape[1] != SIDE:
            gray = image_ops.resample_area(gray, SIDE, SIDE)
        out[i] = gray
    return out


def build_dataset(
    source: str | Path,
    algo: HashAlgoId,
    *,
    count: int = 512,
    seed: int = 0,
    defense_q: float = 0.0,
    train_fraction: float = 0.9,
) -> HashImageDataset:
    """Resolve a source into precomputed pairs.

    ``source`` is ``synthetic:regular``, ``synthetic:diverse``, a directory
    of images, or an MNIST IDX image file.  Hashes are computed from the
    image upscaled to 64x64, through the bit-flip defense when
    ``defense_q`` > 0 (fresh flips per image).
    """
    if not 0.0 < train_fraction <= 1.0:
        raise ValueError("train_fraction must be in (0, 1]")
    if isinstance(source, str) and source.startswith("synthetic:"):
        spec = source.split(":", 1)[1]
        if spec == "regular":
            images = generate_regular(count, seed)
        elif spec == "diverse":
            images = generate_diverse(count, seed)
        else:
            raise EmptySourceError(f"unknown synthetic spec {spec!r}")
    else:
        path = Path(source)
        if path.is_dir():
            images = _load_directory(path, count)
        elif path.is_file():
            images = load_mnist_idx(path, count)
        else:
            raise EmptySourceError(f"{source}: not a directory, file, or spec")
        if len(images) < RECOMMENDED_MIN_IMAGES:
            import warnings

            warnings.warn(
                f"only {len(images)} images from {source}; "
                f"{RECOMMENDED_MIN_IMAGES}+ recommended",
                stacklevel=2,
            )

    m = len(images)
    oracle = HashOracle(algo, budget=m)
    if defense_q > 0.0:
        oracle = BitFlipDefense(oracle, defense_q, substream(seed, "dataset-defense"))
    hashes = []
    for i in range(m):
        big = image_ops.resample_area(images[i], 2 * SIDE, 2 * SIDE)
        hashes.append(oracle.query(big))

    order = substream(seed, "dataset-split").permutation(m)
    n_train = int(round(train_fraction * m))
    if train_fraction < 1.0:
        n_train = min(max(n_train, 1), m - 1)
    return HashImageDataset(
        hashes=tuple(hashes),
        images=images,
        algo=algo,
        train_idx=tuple(int(i) for i in order[:n_train]),
        test_idx=tuple(int(i) for i in order[n_train:]),
    )
