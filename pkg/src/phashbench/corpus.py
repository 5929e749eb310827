"""Procedurally generated photo-like test corpus.

The workbench ships with a small deterministic corpus instead of downloaded
photographs so the repository is self-contained and redistributable.  Images
are built from multi-octave smoothed noise (a natural-looking 1/f-ish
spectrum, which keeps DCT hashes stable under recompression) plus a few soft
geometric objects for distinctive low-frequency structure.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.ndimage

from . import image_ops
from .rng import substream

DEFAULT_COUNT = 20
DEFAULT_SIDE = 128
_FILE_STEM = "corpus"


def generate_photo(rng: np.random.Generator, height: int = DEFAULT_SIDE, width: int = DEFAULT_SIDE) -> np.ndarray:
    """One random photo-like (height, width, 3) image in [0, 1]."""
    yy, xx = np.meshgrid(
        np.linspace(0.0, 1.0, height), np.linspace(0.0, 1.0, width), indexing="ij"
    )

    # Low-frequency base: a handful of oriented cosine waves plus a gradient.
    base = np.zeros((height, width))
    for _ in range(int(rng.integers(3, 6))):
        fy, fx = rng.uniform(-3.0, 3.0, size=2)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        amp = rng.uniform(0.10, 0.30)
        base += amp * np.cos(2.0 * np.pi * (fy * yy + fx * xx) + phase)
    base += rng.uniform(-0.4, 0.4) * (yy - 0.5) + rng.uniform(-0.4, 0.4) * (xx - 0.5)

    img = np.empty((height, width, 3))
    tint = rng.uniform(0.65, 1.0, size=3)
    offset = rng.uniform(0.35, 0.65, size=3)
    for c in range(3):
        img[:, :, c] = offset[c] + base * tint[c]

    # A few soft-edged objects: discs, rectangles, bands.
    for _ in range(int(rng.integers(2, 6))):
        kind = int(rng.integers(0, 3))
        color = rng.uniform(0.0, 1.0, size=3)
        if kind == 0:
            cy, cx = rng.uniform(0.1, 0.9, size=2)
            radius = rng.uniform(0.08, 0.30)
            dist = np.hypot(yy - cy, xx - cx) - radius
        elif kind == 1:
            cy, cx = rng.uniform(0.15, 0.85, size=2)
            hy, hx = rng.uniform(0.06, 0.25, size=2)
            dist = np.maximum(np.abs(yy - cy) - hy, np.abs(xx - cx) - hx)
        else:
            theta = rng.uniform(0.0, np.pi)
            off = rng.uniform(0.2, 0.8)
            half = rng.uniform(0.04, 0.15)
            proj = yy * np.cos(theta) + xx * np.sin(theta)
            dist = np.abs(proj - off) - half
        edge = rng.uniform(0.01, 0.04)
        alpha = rng.uniform(0.5, 0.95) / (1.0 + np.exp(dist / edge))
        img = img * (1.0 - alpha[:, :, None]) + color[None, None, :] * alpha[:, :, None]

    # Multi-octave texture so mid/high frequencies carry real energy.
    scale = min(height, width) / 128.0
    for sigma, amp in ((12.0, 0.12), (6.0, 0.09), (3.0, 0.06), (1.5, 0.035)):
        noise = rng.standard_normal((height, width))
        smooth = scipy.ndimage.gaussian_filter(noise, sigma=sigma * scale)
        std = smooth.std()
        if std > 0:
            img += (amp * smooth / std)[:, :, None]

    # Stretch luminance contrast into a photo-like range.
    lo, hi = np.quantile(img, [0.01, 0.99])
    span = max(hi - lo, 1e-6)
    img = (img - lo) / span * 0.92 + 0.04
    return np.clip(img, 0.0, 1.0)


def generate_corpus(
    count: int = DEFAULT_COUNT,
    seed: int = 0,
    height: int = DEFAULT_SIDE,
    width: int = DEFAULT_SIDE,
) -> list[np.ndarray]:
    """Deterministic list of ``count`` images for the given seed."""
    if count < 1:
        raise ValueError("count must be positive")
    return [
        generate_photo(substream(seed, "corpus", i), height, width)
        for i in range(count)
    ]


def write_corpus(
    directory: str | Path,
    count: int = DEFAULT_COUNT,
    seed: int = 0,
    height: int = DEFAULT_SIDE,
    width: int = DEFAULT_SIDE,
) -> list[Path]:
    """Generate and save the corpus as PNG files; returns the written paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(generate_corpus(count, seed, height, width)):
        path = directory / f"{_FILE_STEM}_{i:02d}.png"
        image_ops.save_image(path, img)
        paths.append(path)
    return paths


def load_corpus(directory: str | Path) -> list[tuple[str, np.ndarray]]:
    """Load every PNG/PPM/PGM in a directory, sorted by filename."""
    directory = Path(directory)
    paths = sorted(
        p for p in directory.iterdir() if p.suffix.lower() in (".png", ".ppm", ".pgm")
    )
    if not paths:
        raise FileNotFoundError(f"no corpus images in {directory}")
    return [(p.name, image_ops.load_image(p)) for p in paths]


def default_corpus_dir() -> Path:
    """Location of the corpus shipped inside the package."""
    return Path(__file__).resolve().parent / "data" / "corpus"
