"""Images as float arrays plus the editing ops and metrics used everywhere else.

An image is a numpy array of shape (H, W, C) with C in {1, 3} and float values
in [0, 1].  All functions validate their inputs through :func:`as_pixel_image`
and never mutate the arrays they are given.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft
from PIL import Image, UnidentifiedImageError

INTENSITY_TOL = 1e-9

# Rec. 601 luma weights, also used by the hash layer.
_LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

# IJG baseline luminance quantization table (row-major, standard Annex K).
_JPEG_LUMA_QUANT = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)


class ImageOpsError(ValueError):
    """Base class for image handling failures."""


class IntensityRangeError(ImageOpsError):
    """Pixel values fall outside [0, 1] beyond tolerance."""


class ShapeError(ImageOpsError):
    """Array is not a valid (H, W, C) image or shapes disagree."""


class ImageTooSmallError(ImageOpsError):
    """Image is smaller than the operation requires."""


class ParameterRangeError(ImageOpsError):
    """Edit parameter outside its documented range."""


class UnsupportedFormatError(ImageOpsError):
    """File format or pixel layout this package does not handle."""


class CorruptFileError(ImageOpsError):
    """File exists but cannot be decoded."""


def as_pixel_image(img: np.ndarray, *, min_side: int | None = None) -> np.ndarray:
    """Validate and normalize an array into float64 (H, W, C), C in {1, 3}.

    2-D input is treated as a single-channel image.  Values may stray from
    [0, 1] by at most ``INTENSITY_TOL`` and are clipped back.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, np.newaxis]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ShapeError(f"expected (H, W, C) with C in {{1, 3}}, got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"empty image {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise IntensityRangeError("image contains non-finite values")
    lo, hi = float(arr.min()), float(arr.max())
    if lo < -INTENSITY_TOL or hi > 1.0 + INTENSITY_TOL:
        raise IntensityRangeError(f"intensities in [{lo:.6g}, {hi:.6g}] exceed [0, 1]")
    if min_side is not None and min(arr.shape[0], arr.shape[1]) < min_side:
        raise ImageTooSmallError(
            f"need min side >= {min_side}, got {arr.shape[0]}x{arr.shape[1]}"
        )
    return np.clip(arr, 0.0, 1.0)


def luminance(img: np.ndarray) -> np.ndarray:
    """Rec. 601 luminance as a 2-D array; single-channel images pass through."""
    arr = as_pixel_image(img)
    if arr.shape[2] == 1:
        return arr[:, :, 0]
    return arr @ _LUMA_WEIGHTS


# ---------------------------------------------------------------------------
# File IO


def load_image(path: str | Path) -> np.ndarray:
    """Load an 8-bit PNG, PPM, or PGM file as a float image in [0, 1]."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            fmt = (im.format or "").upper()
            if fmt not in ("PNG", "PPM"):  # Pillow reports PGM/PPM both as PPM
                raise UnsupportedFormatError(f"{path}: unsupported format {fmt!r}")
            if im.mode == "P":
                im = im.convert("RGB")
            if im.mode not in ("L", "RGB"):
                raise UnsupportedFormatError(
                    f"{path}: unsupported pixel mode {im.mode!r} (8-bit L/RGB only)"
                )
            arr = np.asarray(im, dtype=np.uint8).astype(np.float64) / 255.0
    except FileNotFoundError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        if isinstance(exc, ImageOpsError):
            raise
        raise CorruptFileError(f"{path}: cannot decode ({exc})") from exc
    if arr.ndim == 2:
        arr = arr[:, :, np.newaxis]
    return arr


def save_image(path: str | Path, img: np.ndarray) -> None:
    """Save a float image as 8-bit PNG (.png), PPM (.ppm), or PGM (.pgm)."""
    path = Path(path)
    arr = as_pixel_image(img)
    data = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    channels = data.shape[2]
    suffix = path.suffix.lower()
    if suffix not in (".png", ".ppm", ".pgm"):
        raise UnsupportedFormatError(f"{path}: unsupported output suffix")
    if suffix == ".pgm" and channels != 1:
        raise UnsupportedFormatError(f"{path}: PGM requires a single channel")
    if suffix == ".ppm" and channels != 3:
        raise UnsupportedFormatError(f"{path}: PPM requires three channels")
    if channels == 1:
        im = Image.fromarray(data[:, :, 0], mode="L")
    else:
        im = Image.fromarray(data, mode="RGB")
    im.save(path)


# ---------------------------------------------------------------------------
# Resampling


@functools.lru_cache(maxsize=64)
def _area_weights(n_src: int, n_dst: int) -> np.ndarray:
    """(n_dst, n_src) pixel-mixing matrix: each output cell averages the exact
    fraction of every source pixel its interval overlaps."""
    if n_src < 1 or n_dst < 1:
        raise ShapeError("resample sizes must be positive")
    scale = n_src / n_dst
    weights = np.zeros((n_dst, n_src))
    for i in range(n_dst):
        lo = i * scale
        hi = (i + 1) * scale
        j0 = int(np.floor(lo))
        j1 = min(int(np.ceil(hi)), n_src)
        for j in range(j0, j1):
            overlap = min(hi, j + 1) - max(lo, j)
            if overlap > 0:
                weights[i, j] = overlap / scale
    return weights


def resample_area(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Box (pixel-mixing) resample to (out_h, out_w); exact for any scale."""
    arr = as_pixel_image(img)
    wr = _area_weights(arr.shape[0], out_h)
    wc_t = _area_weights(arr.shape[1], out_w).T
    out = np.empty((out_h, out_w, arr.shape[2]))
    for ch in range(arr.shape[2]):
        out[:, :, ch] = wr @ arr[:, :, ch] @ wc_t
    return np.clip(out, 0.0, 1.0)


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample to (out_h, out_w) using half-pixel centers."""
    arr = as_pixel_image(img)
    h, w = arr.shape[:2]
    if out_h < 1 or out_w < 1:
        raise ShapeError("resize target must be positive")
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    top = arr[y0][:, x0] * (1 - fx) + arr[y0][:, x1] * fx
    bot = arr[y1][:, x0] * (1 - fx) + arr[y1][:, x1] * fx
    out = top * (1 - fy) + bot * fy
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Edit operations


@dataclass(frozen=True)
class Compress:
    """JPEG-style lossy compression at the given quality (1..100)."""

    quality: float

    def __post_init__(self) -> None:
        if not 1.0 <= float(self.quality) <= 100.0:
            raise ParameterRangeError(f"quality {self.quality} outside [1, 100]")


@dataclass(frozen=True)
class Resize:
    """Bilinear scale by ``scale`` then back to the original size."""

    scale: float

    def __post_init__(self) -> None:
        if not 0.0 < float(self.scale) <= 4.0:
            raise ParameterRangeError(f"scale {self.scale} outside (0, 4]")


@dataclass(frozen=True)
class Vignette:
    """Radial darkening: multiply by 1 - strength * (r / r_corner)^2."""

    strength: float

    def __post_init__(self) -> None:
        if not 0.0 <= float(self.strength) <= 1.0:
            raise ParameterRangeError(f"strength {self.strength} outside [0, 1]")


@dataclass(frozen=True)
class Rotate:
    """Rotate content counterclockwise by ``degrees``, black fill, same size."""

    degrees: float

    def __post_init__(self) -> None:
        if not -180.0 <= float(self.degrees) <= 180.0:
            raise ParameterRangeError(f"degrees {self.degrees} outside [-180, 180]")


EditOp = Compress | Resize | Vignette | Rotate


def _jpeg_quant_table(quality: float) -> np.ndarray:
    q = float(min(max(quality, 1.0), 100.0))
    scale = 5000.0 / q if q < 50.0 else 200.0 - 2.0 * q
    table = np.floor((_JPEG_LUMA_QUANT * scale + 50.0) / 100.0)
    return np.clip(table, 1.0, 255.0)


def _blockwise_dct(plane: np.ndarray, inverse: bool = False) -> np.ndarray:
    h, w = plane.shape
    blocks = plane.reshape(h // 8, 8, w // 8, 8)
    kind = scipy.fft.idct if inverse else scipy.fft.dct
    out = kind(kind(blocks, axis=1, norm="ortho"), axis=3, norm="ortho")
    return out.reshape(h, w)


def jpeg_compress_emulate(img: np.ndarray, quality: float) -> np.ndarray:
    """8x8 block DCT quantize/dequantize round trip with the IJG luma table.

    Every channel is treated as luminance (no chroma subsampling), which keeps
    the op deterministic and codec-independent while producing the familiar
    blocking artifacts.
    """
    arr = as_pixel_image(img)
    if not 1.0 <= float(quality) <= 100.0:
        raise ParameterRangeError(f"quality {quality} outside [1, 100]")
    table = _jpeg_quant_table(quality)
    h, w, c = arr.shape
    pad_h = (-h) % 8
    pad_w = (-w) % 8
    out = np.empty_like(arr)
    for ch in range(c):
        plane = arr[:, :, ch] * 255.0 - 128.0
        plane = np.pad(plane, ((0, pad_h), (0, pad_w)), mode="edge")
        coeffs = _blockwise_dct(plane)
        ph, pw = plane.shape
        tiled = np.tile(table, (ph // 8, pw // 8))
        coeffs = np.rint(coeffs / tiled) * tiled
        plane = _blockwise_dct(coeffs, inverse=True)
        out[:, :, ch] = (plane[:h, :w] + 128.0) / 255.0
    return np.clip(out, 0.0, 1.0)


def rotate_bilinear(img: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate about the image center, bilinear sampling, black outside."""
    arr = as_pixel_image(img)
    h, w, c = arr.shape
    rad = np.deg2rad(degrees)
    cos, sin = np.cos(rad), np.sin(rad)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    dr = rows - cy
    dc = cols - cx
    # Inverse map of a counterclockwise content rotation (rows grow downward).
    src_r = cy + dr * cos + dc * sin
    src_c = cx - dr * sin + dc * cos
    r0 = np.floor(src_r).astype(int)
    c0 = np.floor(src_c).astype(int)
    fr = src_r - r0
    fc = src_c - c0
    out = np.zeros_like(arr)
    for dy in (0, 1):
        for dx in (0, 1):
            rr = r0 + dy
            cc = c0 + dx
            weight = (fr if dy else 1 - fr) * (fc if dx else 1 - fc)
            valid = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
            rv = np.where(valid, rr, 0)
            cv = np.where(valid, cc, 0)
            out += arr[rv, cv] * (weight * valid)[:, :, np.newaxis]
    return np.clip(out, 0.0, 1.0)


def apply_vignette(img: np.ndarray, strength: float) -> np.ndarray:
    """Darken radially; the center keeps its value, corners lose ``strength``."""
    arr = as_pixel_image(img)
    if not 0.0 <= float(strength) <= 1.0:
        raise ParameterRangeError(f"strength {strength} outside [0, 1]")
    h, w = arr.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    r2 = (rows - cy) ** 2 + (cols - cx) ** 2
    r2_max = cy**2 + cx**2
    if r2_max == 0:
        return arr.copy()
    mult = 1.0 - strength * (r2 / r2_max)
    return np.clip(arr * mult[:, :, np.newaxis], 0.0, 1.0)


def apply_edit(img: np.ndarray, op: EditOp) -> np.ndarray:
    """Apply one edit; the result keeps the input's shape."""
    arr = as_pixel_image(img)
    if isinstance(op, Compress):
        return jpeg_compress_emulate(arr, op.quality)
    if isinstance(op, Resize):
        h, w = arr.shape[:2]
        mid_h = max(1, int(round(h * op.scale)))
        mid_w = max(1, int(round(w * op.scale)))
        return resize_bilinear(resize_bilinear(arr, mid_h, mid_w), h, w)
    if isinstance(op, Vignette):
        return apply_vignette(arr, op.strength)
    if isinstance(op, Rotate):
        return rotate_bilinear(arr, op.degrees)
    raise TypeError(f"unknown edit op {op!r}")


# ---------------------------------------------------------------------------
# Metrics


def l2_normalized(a: np.ndarray, b: np.ndarray) -> float:
    """Root mean squared per-pixel difference (0 for identical images)."""
    xa = as_pixel_image(a)
    xb = as_pixel_image(b)
    if xa.shape != xb.shape:
        raise ShapeError(f"shape mismatch {xa.shape} vs {xb.shape}")
    return float(np.sqrt(np.mean((xa - xb) ** 2)))


def ssim(a: np.ndarray, b: np.ndarray, *, window: int = 8) -> float:
    """Mean structural similarity over all uniform ``window`` x ``window``
    patches at stride 1 (population statistics, C1=0.01^2, C2=0.03^2).

    Color inputs are converted to luminance first.  Result is in [-1, 1].
    """
    xa = as_pixel_image(a)
    xb = as_pixel_image(b)
    if xa.shape != xb.shape:
        raise ShapeError(f"shape mismatch {xa.shape} vs {xb.shape}")
    ga = luminance(xa)
    gb = luminance(xb)
    h, w = ga.shape
    if h < window or w < window:
        raise ImageTooSmallError(f"need at least {window}x{window}, got {h}x{w}")
    n = window * window
    c1 = 0.01**2
    c2 = 0.03**2

    def _win_mean(x: np.ndarray) -> np.ndarray:
        view = np.lib.stride_tricks.sliding_window_view(x, (window, window))
        return view.sum(axis=(-2, -1)) / n

    mu_a = _win_mean(ga)
    mu_b = _win_mean(gb)
    var_a = _win_mean(ga * ga) - mu_a**2
    var_b = _win_mean(gb * gb) - mu_b**2
    cov = _win_mean(ga * gb) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))
