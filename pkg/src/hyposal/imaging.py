"""Image containers, sRGB to CIELAB conversion, integral images and map helpers.

Images are plain numpy arrays indexed ``[y, x]``:

* RGB images are ``uint8`` arrays of shape ``(H, W, 3)``.
* Lab images are ``float64`` arrays of shape ``(H, W, 3)``.
* Scalar maps are ``float64`` arrays of shape ``(H, W)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

# D65 reference white, 2 degree observer
WHITE_D65 = np.array([0.95047, 1.0, 1.08883])

SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)

_DELTA = 6.0 / 29.0


def _srgb_linear_lut() -> np.ndarray:
    c = np.arange(256, dtype=np.float64) / 255.0
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


_LINEAR_LUT = _srgb_linear_lut()


def as_rgb(img) -> np.ndarray:
    """Validate and return an ``(H, W, 3)`` uint8 RGB array."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) RGB image, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("image must be at least 1x1")
    if arr.dtype != np.uint8:
        if np.any(arr < 0) or np.any(arr > 255):
            raise ValueError("RGB channel values must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    return arr


def rgb_to_lab(img) -> np.ndarray:
    """Convert an 8-bit sRGB image to CIE 1976 L*a*b* (D65 white).

    Works for any array with a trailing axis of 3 channels.
    """
    rgb = np.asarray(img)
    if rgb.shape[-1] != 3:
        raise ValueError(f"expected trailing channel axis of size 3, got {rgb.shape}")
    linear = _LINEAR_LUT[rgb.astype(np.uint8)]
    xyz = linear @ SRGB_TO_XYZ.T
    t = xyz / WHITE_D65
    f = np.where(t > _DELTA**3, np.cbrt(t), t / (3 * _DELTA**2) + 4.0 / 29.0)
    lab = np.empty_like(f)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


@dataclass(frozen=True)
class IntegralImage:
    """Zero-padded summed-area table of a scalar map.

    ``table[y, x]`` holds the sum of the source over rows ``[0, y)`` and
    columns ``[0, x)``, so the table has shape ``(H + 1, W + 1)``.
    """

    table: np.ndarray

    @property
    def width(self) -> int:
        return self.table.shape[1] - 1

    @property
    def height(self) -> int:
        return self.table.shape[0] - 1

    def rect_sum(self, l, t, r, b):
        """Sum over the inclusive rectangle ``[l..r] x [t..b]``.

        Arguments may be integer arrays of matching shape for batched queries.
        """
        T = self.table
        return T[b + 1, r + 1] - T[t, r + 1] - T[b + 1, l] + T[t, l]

    def row_sums(self) -> np.ndarray:
        """Cumulative row mass: entry ``y`` is the sum over rows ``[0, y)``."""
        return self.table[:, -1]

    def col_sums(self) -> np.ndarray:
        """Cumulative column mass: entry ``x`` is the sum over columns ``[0, x)``."""
        return self.table[-1, :]


def integral_image(m) -> IntegralImage:
    """Build the summed-area table of ``m``.

    Integer input accumulates in int64, real input in float64.
    """
    arr = np.asarray(m)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D map, got shape {arr.shape}")
    dtype = np.int64 if np.issubdtype(arr.dtype, np.integer) or arr.dtype == bool else np.float64
    table = np.zeros((arr.shape[0] + 1, arr.shape[1] + 1), dtype=dtype)
    np.cumsum(arr, axis=0, dtype=dtype, out=table[1:, 1:])
    np.cumsum(table[1:, 1:], axis=1, out=table[1:, 1:])
    return IntegralImage(table)


def normalize01(m) -> np.ndarray:
    """Affinely rescale ``m`` to [0, 1]; a constant map becomes all zeros."""
    arr = np.asarray(m, dtype=np.float64)
    lo = arr.min()
    span = arr.max() - lo
    if span <= 0:
        return np.zeros_like(arr)
    return (arr - lo) / span


def to_uint8(m) -> np.ndarray:
    """Quantize a [0, 1] map to 8 bits as ``round(255 * v)`` (halves round up)."""
    arr = np.clip(np.asarray(m, dtype=np.float64), 0.0, 1.0)
    return np.floor(255.0 * arr + 0.5).astype(np.uint8)


def load_rgb(path) -> np.ndarray:
    """Decode a PNG/JPEG/BMP file into an RGB uint8 array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def load_gray(path) -> np.ndarray:
    """Decode an image file as 8-bit grayscale."""
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8).copy()


def save_rgb(path, img) -> None:
    Image.fromarray(as_rgb(img), mode="RGB").save(Path(path))


def save_map(path, m) -> None:
    """Write a [0, 1] scalar map as an 8-bit grayscale PNG."""
    Image.fromarray(to_uint8(m), mode="L").save(Path(path))


def save_labels16(path, labels) -> None:
    """Write an integer label map as a 16-bit grayscale PNG."""
    arr = np.asarray(labels)
    if arr.min() < 0 or arr.max() > 65535:
        raise ValueError("labels do not fit in 16 bits")
    Image.fromarray(arr.astype(np.uint16)).save(Path(path))
