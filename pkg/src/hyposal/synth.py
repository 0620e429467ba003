"""Synthetic single-object benchmark images with exact masks."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from PIL import Image

from .imaging import rgb_to_lab

NOISE_SIGMA = 5.0  # 8-bit units, i.e. 5/255
AREA_RANGE = (0.05, 0.40)
MIN_CONTRAST = 60.0  # Lab distance between object and background colours


def _convex_polygon(rng, cx, cy, rx, ry, k):
    angles = np.sort(rng.uniform(0, 2 * math.pi, k))
    pts = np.stack([cx + rx * np.cos(angles), cy + ry * np.sin(angles)], axis=1)
    return pts


def _inside_convex(pts, xx, yy):
    # counter-clockwise vertices: inside iff left of every edge
    inside = np.ones(xx.shape, dtype=bool)
    for (x0, y0), (x1, y1) in zip(pts, np.roll(pts, -1, axis=0)):
        inside &= (x1 - x0) * (yy - y0) - (y1 - y0) * (xx - x0) >= 0
    return inside


def _object_mask(rng, w, h):
    yy, xx = np.indices((h, w), dtype=np.float64)
    yy += 0.5
    xx += 0.5
    target = rng.uniform(*AREA_RANGE) * w * h
    aspect = rng.uniform(0.6, 1.6)
    kind = rng.integers(0, 3)
    for _ in range(100):
        if kind == 0:  # ellipse
            base = math.pi
        elif kind == 1:  # axis-aligned rectangle
            base = 4.0
        else:  # convex polygon, area estimated by rasterisation
            base = None
        ry = math.sqrt(target / ((base or 2.6) * aspect))
        rx = ry * aspect
        if 2 * rx > 0.9 * w or 2 * ry > 0.9 * h:
            aspect = 1.0
            target *= 0.9
            continue
        cx = rng.uniform(rx + 0.05 * w, w - rx - 0.05 * w)
        cy = rng.uniform(ry + 0.05 * h, h - ry - 0.05 * h)
        if kind == 0:
            mask = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
        elif kind == 1:
            mask = (np.abs(xx - cx) <= rx) & (np.abs(yy - cy) <= ry)
        else:
            mask = _inside_convex(_convex_polygon(rng, cx, cy, rx * 1.15, ry * 1.15, int(rng.integers(5, 9))), xx, yy)
        frac = mask.mean()
        if AREA_RANGE[0] <= frac <= AREA_RANGE[1]:
            return mask
    raise RuntimeError("could not place an object inside the area bounds")


def _colours(rng):
    while True:
        bg, fg = rng.integers(0, 256, size=(2, 3))
        lab = rgb_to_lab(np.stack([bg, fg]).astype(np.uint8))
        if np.linalg.norm(lab[0] - lab[1]) >= MIN_CONTRAST:
            return bg.astype(np.float64), fg.astype(np.float64)


def synth_image(rng, width: int = 320, height: int = 240) -> tuple[np.ndarray, np.ndarray]:
    """One image with a single convex coloured object; returns (rgb, mask)."""
    mask = _object_mask(rng, width, height)
    bg, fg = _colours(rng)
    img = np.empty((height, width, 3))
    img[...] = bg
    if rng.random() < 0.5:
        # light texture: low-frequency shading of a few grey levels
        yy, xx = np.indices((height, width))
        fx, fy = rng.uniform(0.5, 2.0, size=2) * 2 * math.pi
        phase = rng.uniform(0, 2 * math.pi)
        img += (8.0 * np.sin(fx * xx / width + fy * yy / height + phase))[..., None]
    img[mask] = fg
    img += rng.normal(0.0, NOISE_SIGMA, img.shape)
    rgb = np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)
    return rgb, mask


def write_synthetic_set(out_dir, count: int, seed: int = 42, width: int = 320, height: int = 240) -> list[tuple[Path, Path]]:
    """Write ``count`` pairs under ``out_dir/img`` and ``out_dir/gt``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    out = Path(out_dir)
    (out / "img").mkdir(parents=True, exist_ok=True)
    (out / "gt").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(count):
        rgb, mask = synth_image(rng, width, height)
        ip = out / "img" / f"synth_{i:04d}.png"
        gp = out / "gt" / f"synth_{i:04d}.png"
        Image.fromarray(rgb, mode="RGB").save(ip)
        Image.fromarray(mask.astype(np.uint8) * 255, mode="L").save(gp)
        pairs.append((ip, gp))
    return pairs
