"""Pixel-level image features: sharpness, noise, recompression error, hashes.

All grayscale operations run on a luma plane computed as
0.299 R + 0.587 G + 0.114 B rounded to the nearest integer. Functions
accept a decoded 2-D numpy array, a PIL image, or a filesystem path.
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image


class ImageFeatureError(ValueError):
    """Undecodable input, too-small image, or bad parameter."""


def to_luma(pixels: np.ndarray) -> np.ndarray:
    """Collapse an RGB(A) array to a uint8 luma plane; 2-D input passes through."""
    arr = np.asarray(pixels)
    if arr.ndim == 2:
        return arr.astype(np.uint8, copy=False)
    if arr.ndim == 3 and arr.shape[2] in (3, 4):
        rgb = arr[:, :, :3].astype(np.float64)
        luma = rgb[:, :, 0] * 0.299 + rgb[:, :, 1] * 0.587 + rgb[:, :, 2] * 0.114
        return np.clip(np.rint(luma), 0, 255).astype(np.uint8)
    raise ImageFeatureError(f"unsupported pixel array shape {arr.shape}")


def _as_image(source) -> Image.Image:
    if isinstance(source, Image.Image):
        return source
    if isinstance(source, np.ndarray):
        return Image.fromarray(source)
    try:
        with Image.open(source) as img:
            img.load()
            return img
    except FileNotFoundError as exc:
        raise ImageFeatureError(f"cannot read image: {source}") from exc
    except Exception as exc:
        raise ImageFeatureError(f"cannot decode image {source}: {exc}") from exc


def load_luma(source) -> np.ndarray:
    """Decode an image and return its uint8 luma plane."""
    if isinstance(source, np.ndarray):
        return to_luma(source)
    img = _as_image(source)
    if img.mode in ("L", "I;16", "I"):
        return np.asarray(img.convert("L"), dtype=np.uint8)
    return to_luma(np.asarray(img.convert("RGB")))


def _require_min_size(gray: np.ndarray, op: str) -> np.ndarray:
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim != 2:
        raise ImageFeatureError(f"{op} expects a 2-D grayscale array")
    if gray.shape[0] < 3 or gray.shape[1] < 3:
        raise ImageFeatureError(f"{op} needs both dimensions >= 3, got {gray.shape}")
    return gray


def laplacian_variance(gray) -> float:
    """Population variance of the 3x3 Laplacian response on interior pixels.

    Kernel [[0,1,0],[1,-4,1],[0,1,0]], no padding: a constant or linear
    ramp image scores exactly 0. Higher values mean sharper detail.
    """
    g = _require_min_size(load_luma(gray) if not isinstance(gray, np.ndarray) else gray,
                          "laplacian_variance")
    c = g[1:-1, 1:-1]
    response = g[:-2, 1:-1] + g[2:, 1:-1] + g[1:-1, :-2] + g[1:-1, 2:] - 4.0 * c
    return float(np.var(response))


def noise_score(gray) -> float:
    """Mean absolute residual against a 3x3 plus-footprint median filter.

    Each interior pixel is compared with the median of the 5-pixel cross
    (itself and its 4-adjacent neighbors); the score is the mean absolute
    difference. Constant images score 0, a 0/255 checkerboard scores 255.
    """
    g = _require_min_size(load_luma(gray) if not isinstance(gray, np.ndarray) else gray,
                          "noise_score")
    stack = np.stack([
        g[1:-1, 1:-1],
        g[:-2, 1:-1],
        g[2:, 1:-1],
        g[1:-1, :-2],
        g[1:-1, 2:],
    ])
    med = np.median(stack, axis=0)
    return float(np.mean(np.abs(g[1:-1, 1:-1] - med)))


def ela_score(source, quality: int = 90) -> float:
    """Mean absolute per-channel difference after one lossy re-encode.

    The image is saved as JPEG at the given quality and compared with the
    original pixel for pixel. Elevated residuals flag regions that were
    edited after the original compression pass.
    """
    if not isinstance(quality, int) or not 1 <= quality <= 100:
        raise ImageFeatureError(f"quality must be an integer in [1,100], got {quality!r}")
    img = _as_image(source).convert("RGB")
    buf = io.BytesIO()
    try:
        img.save(buf, format="JPEG", quality=quality)
    except OSError as exc:
        raise ImageFeatureError(f"re-encode failed: {exc}") from exc
    buf.seek(0)
    with Image.open(buf) as recoded:
        diff = np.asarray(img, dtype=np.float64) - np.asarray(recoded.convert("RGB"),
                                                              dtype=np.float64)
    return float(np.mean(np.abs(diff)))


def dhash64(source) -> int:
    """64-bit difference hash: sign of horizontal gradients on an 8x9 downsample.

    The luma plane is resampled to 9 columns by 8 rows (Lanczos); bit k is 1
    when the left pixel of the k-th horizontal pair is brighter than the
    right. Near-duplicate images land within a small Hamming distance.
    """
    luma = load_luma(source)
    small = np.asarray(Image.fromarray(luma, "L").resize((9, 8), Image.LANCZOS),
                       dtype=np.int16)
    bits = small[:, :-1] > small[:, 1:]
    value = 0
    for bit in bits.flat:
        value = (value << 1) | int(bit)
    return value


def hamming64(a: int, b: int) -> int:
    """Number of differing bits between two 64-bit hashes."""
    return (a ^ b).bit_count()
