"""Margin estimation and the colour-contrast foreground map."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .imaging import integral_image, normalize01

log = logging.getLogger(__name__)

BAND_NAMES = ("top", "bottom", "left", "right")


@dataclass(frozen=True)
class MarginRect:
    """Inclusive rectangle ``[l..r] x [t..b]`` enclosing the likely object."""

    l: int
    t: int
    r: int
    b: int

    def as_dict(self) -> dict:
        return {"l": self.l, "t": self.t, "r": self.r, "b": self.b}


@dataclass(frozen=True)
class Band:
    name: str
    l: int
    t: int
    r: int
    b: int
    mean: np.ndarray | None  # mean Lab colour, None when degenerate

    @property
    def degenerate(self) -> bool:
        return self.mean is None

    @property
    def area(self) -> int:
        return max(0, self.r - self.l + 1) * max(0, self.b - self.t + 1)


@dataclass(frozen=True)
class BackgroundBands:
    bands: tuple[Band, Band, Band, Band]

    def __iter__(self):
        return iter(self.bands)

    def means(self) -> list[np.ndarray]:
        return [b.mean for b in self.bands if not b.degenerate]


def _first_reaching(cum: np.ndarray, target: float) -> int:
    # cum[k] is the mass strictly before index k; the first k whose inclusive
    # mass cum[k + 1] reaches the target
    return int(np.searchsorted(cum[1:], target, side="left"))


def estimate_margins(ob, theta: float = 0.1) -> MarginRect:
    """Sweep objectness mass inwards from each side until ``theta`` of the total.

    ``t`` is the smallest row whose cumulative mass from the top reaches
    ``theta * total``; ``b``, ``l`` and ``r`` are found the same way from the
    bottom, left and right. One integral image answers all four sweeps.
    """
    if not 0 < theta <= 0.5:
        raise ValueError(f"theta must lie in (0, 0.5], got {theta}")
    arr = np.asarray(ob)
    if np.any(arr < 0):
        raise ValueError("objectness map must be nonnegative")
    ii = integral_image(arr)
    rows = ii.row_sums()
    cols = ii.col_sums()
    total = rows[-1]
    if total <= 0:
        raise ValueError("empty objectness")
    target = theta * total
    h, w = arr.shape
    t = _first_reaching(rows, target)
    l = _first_reaching(cols, target)
    # mass from the bottom through row k is total - rows[k]
    from_bottom = total - rows[:-1]
    b = int(np.nonzero(from_bottom >= target)[0][-1])
    from_right = total - cols[:-1]
    r = int(np.nonzero(from_right >= target)[0][-1])
    return MarginRect(min(l, w - 1), min(t, h - 1), r, b)


def background_bands(lab, m: MarginRect) -> BackgroundBands:
    """Split the area outside the margin into four non-overlapping bands.

    Top and bottom bands span the full width; left and right bands are
    limited to the margin's rows.
    """
    img = np.asarray(lab, dtype=np.float64)
    h, w = img.shape[:2]
    if not (0 <= m.l <= m.r < w and 0 <= m.t <= m.b < h):
        raise ValueError(f"margin {m} does not fit a {w}x{h} image")
    geometry = (
        ("top", 0, 0, w - 1, m.t - 1),
        ("bottom", 0, m.b + 1, w - 1, h - 1),
        ("left", 0, m.t, m.l - 1, m.b),
        ("right", m.r + 1, m.t, w - 1, m.b),
    )
    bands = []
    for name, l, t, r, b in geometry:
        if r < l or b < t:
            bands.append(Band(name, l, t, r, b, None))
        else:
            region = img[t : b + 1, l : r + 1].reshape(-1, img.shape[2])
            bands.append(Band(name, l, t, r, b, region.mean(axis=0)))
    return BackgroundBands(tuple(bands))


def foreground_map(lab, bands: BackgroundBands) -> np.ndarray:
    """Product of Lab distances to each non-degenerate band mean, rescaled to [0, 1]."""
    img = np.asarray(lab, dtype=np.float64)
    means = bands.means()
    if not means:
        log.warning("all background bands are degenerate; foreground map is zero")
        return np.zeros(img.shape[:2])
    fg = np.ones(img.shape[:2])
    for mu in means:
        fg *= np.sqrt(((img - mu) ** 2).sum(axis=2))
    return normalize01(fg)
