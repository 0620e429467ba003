"""Window hypotheses and the objectness map.

The objectness map counts, for every pixel, how many candidate object windows
cover it. Windows either come from :func:`generate_proposals`, an untrained
normed-gradient scorer, or from a CSV file (:func:`load_proposals`).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import ndimage

from .imaging import as_rgb, integral_image, normalize01

log = logging.getLogger(__name__)

#: side length of the downsampled window grid the scorer looks at
CELLS = 8
#: relative window sizes per axis; 6 x 6 = 36 scale/aspect combinations
SIZE_FRACTIONS = tuple(2.0 ** (-0.6 * k) for k in range(6))
#: template weights of the outermost and second cell rings
RING_WEIGHTS = (-1.0, 1.0)
#: NMS neighbourhood radius, in position-grid steps
NMS_RADIUS = 2


@dataclass(frozen=True)
class HypothesisWindow:
    """Inclusive pixel box ``[l..r] x [t..b]`` with an optional score."""

    l: int
    t: int
    r: int
    b: int
    score: float | None = None

    def __post_init__(self):
        if self.l < 0 or self.t < 0:
            raise ValueError(f"negative window coordinate in {self}")
        if self.r < self.l or self.b < self.t:
            raise ValueError(f"window has r < l or b < t: {self}")

    @property
    def area(self) -> int:
        return (self.r - self.l + 1) * (self.b - self.t + 1)

    def shifted(self, dx: int, dy: int) -> "HypothesisWindow":
        return HypothesisWindow(self.l + dx, self.t + dy, self.r + dx, self.b + dy, self.score)

    def iou(self, other: "HypothesisWindow") -> float:
        iw = min(self.r, other.r) - max(self.l, other.l) + 1
        ih = min(self.b, other.b) - max(self.t, other.t) + 1
        if iw <= 0 or ih <= 0:
            return 0.0
        inter = iw * ih
        return inter / (self.area + other.area - inter)


@dataclass(frozen=True)
class ProposalSet:
    windows: tuple[HypothesisWindow, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "windows", tuple(self.windows))

    def __len__(self) -> int:
        return len(self.windows)

    def __iter__(self):
        return iter(self.windows)

    @property
    def count(self) -> int:
        return len(self.windows)

    def as_array(self) -> np.ndarray:
        """``(n, 4)`` int64 array of ``l, t, r, b`` rows."""
        if not self.windows:
            return np.zeros((0, 4), dtype=np.int64)
        return np.array([(w.l, w.t, w.r, w.b) for w in self.windows], dtype=np.int64)

    def shifted(self, dx: int, dy: int) -> "ProposalSet":
        return ProposalSet(w.shifted(dx, dy) for w in self.windows)


def accumulate_hypotheses(props: ProposalSet, width: int, height: int) -> np.ndarray:
    """Count the windows covering each pixel.

    Uses corner increments on a difference grid followed by a 2-D prefix sum,
    so the cost is O(n_p + W*H).
    """
    if len(props) == 0:
        raise ValueError("no hypotheses")
    boxes = props.as_array()
    bad = np.nonzero((boxes[:, 0] < 0) | (boxes[:, 1] < 0) | (boxes[:, 2] >= width) | (boxes[:, 3] >= height))[0]
    if bad.size:
        i = int(bad[0])
        raise ValueError(f"window {i} {tuple(boxes[i])} lies outside the {width}x{height} frame")
    l, t, r, b = boxes.T
    diff = np.zeros((height + 1, width + 1), dtype=np.int64)
    np.add.at(diff, (t, l), 1)
    np.add.at(diff, (t, r + 1), -1)
    np.add.at(diff, (b + 1, l), -1)
    np.add.at(diff, (b + 1, r + 1), 1)
    counts = diff.cumsum(axis=0).cumsum(axis=1)
    return counts[:height, :width].astype(np.float64)


def extend_image(img, ratio: float = 0.1) -> tuple[np.ndarray, tuple[int, int]]:
    """Pad the image with a border filled with its mean sRGB colour.

    The band is ``ceil(ratio * W)`` pixels wide on the left and right and
    ``ceil(ratio * H)`` pixels on the top and bottom. Returns the extended
    image and the ``(x, y)`` offset at which the original was pasted.
    """
    if not 0 < ratio <= 0.5:
        raise ValueError(f"border ratio must lie in (0, 0.5], got {ratio}")
    rgb = as_rgb(img)
    h, w = rgb.shape[:2]
    # tolerance guards products like 0.1 * 30 = 3.0000000000000004
    dx = math.ceil(ratio * w - 1e-9)
    dy = math.ceil(ratio * h - 1e-9)
    mean = np.floor(rgb.reshape(-1, 3).mean(axis=0) + 0.5).astype(np.uint8)
    out = np.empty((h + 2 * dy, w + 2 * dx, 3), dtype=np.uint8)
    out[...] = mean
    out[dy : dy + h, dx : dx + w] = rgb
    return out, (dx, dy)


def normed_gradient(img) -> np.ndarray:
    """Per-pixel ``min(|gx| + |gy|, 255)``, maximised over the colour channels."""
    rgb = as_rgb(img).astype(np.int16)
    gx = np.zeros_like(rgb)
    gy = np.zeros_like(rgb)
    gx[:, 1:-1] = rgb[:, 2:] - rgb[:, :-2]
    gy[1:-1, :] = rgb[2:, :] - rgb[:-2, :]
    if rgb.shape[1] > 1:
        gx[:, 0] = 2 * (rgb[:, 1] - rgb[:, 0])
        gx[:, -1] = 2 * (rgb[:, -1] - rgb[:, -2])
    if rgb.shape[0] > 1:
        gy[0, :] = 2 * (rgb[1, :] - rgb[0, :])
        gy[-1, :] = 2 * (rgb[-1, :] - rgb[-2, :])
    mag = np.minimum(np.abs(gx) + np.abs(gy), 255).max(axis=2)
    return mag.astype(np.float64)


def _window_sizes(extent: int) -> list[int]:
    sizes = []
    for f in SIZE_FRACTIONS:
        cell = max(1, int(f * extent) // CELLS)
        sizes.append(cell)
    return sizes


@lru_cache(maxsize=64)
def _tiebreak(n: int) -> np.ndarray:
    return np.random.default_rng(n).permutation(n)


def _nms_grid(score: np.ndarray, radius: int) -> np.ndarray:
    """Keep positions that rank first within their ``(2r+1)^2`` neighbourhood.

    Ranking is by descending score. Exact ties are broken by a fixed
    pseudo-random permutation of the grid so that a flat plateau still yields
    spread-out survivors instead of a single corner.
    """
    tiebreak = _tiebreak(score.size)
    order = np.lexsort((tiebreak, -score.ravel()))
    rank = np.empty(score.size, dtype=np.int64)
    rank[order] = np.arange(score.size)
    rank = rank.reshape(score.shape)
    best = ndimage.minimum_filter(rank, size=2 * radius + 1, mode="constant", cval=score.size)
    return rank == best


def _score_scale(integral, width: int, height: int, cw: int, ch: int):
    """Score every window of ``8cw x 8ch`` pixels on a half-cell position grid.

    The window is viewed as an 8x8 grid of cells arranged in four concentric
    rings. The template rewards gradient in the second ring and penalises
    gradient in the outermost one, i.e. a closed contour sitting just inside
    the window with quiet surroundings. Ring and side aggregates reduce to
    rectangle sums on the gradient integral image.
    """
    ww, wh = CELLS * cw, CELLS * ch
    sx, sy = max(1, cw // 2), max(1, ch // 2)
    xs = np.arange(0, width - ww + 1, sx)[None, :]
    ys = np.arange(0, height - wh + 1, sy)[:, None]
    if xs.size == 0 or ys.size == 0:
        return None
    rect = integral.rect_sum
    cell_area = float(cw * ch)

    def shrunk(k):
        return xs + k * cw, ys + k * ch, xs + ww - 1 - k * cw, ys + wh - 1 - k * ch

    outer, ring2, core = (rect(*shrunk(k)) for k in range(3))
    response = (
        RING_WEIGHTS[0] * (outer - ring2) / 28.0 + RING_WEIGHTS[1] * (ring2 - core) / 20.0
    ) / cell_area

    # closed-boundary factor on the second ring: geometric over arithmetic
    # mean of its four sides (corner cells excluded)
    x0, y0, x1, y1 = shrunk(1)
    sides = np.stack(
        [
            rect(x0 + cw, y0, x1 - cw, y0 + ch - 1),
            rect(x0 + cw, y1 - ch + 1, x1 - cw, y1),
            rect(x0, y0 + ch, x0 + cw - 1, y1 - ch),
            rect(x1 - cw + 1, y0 + ch, x1, y1 - ch),
        ]
    )
    mean = sides.mean(axis=0)
    geo = np.exp(np.log(np.maximum(sides, 1e-12)).mean(axis=0))
    closure = np.where(mean > 0, geo / np.where(mean > 0, mean, 1.0), 0.0)
    # per-length rather than per-area gradient mass, so a sharp boundary
    # scores the same at every window size
    score = response * closure * math.sqrt(cell_area)
    return xs.ravel(), ys.ravel(), ww, wh, score


def generate_proposals(img, n_p: int = 1000, smooth: float = 1.0) -> ProposalSet:
    """Score windows over a fixed 6 x 6 size grid and return the best ``n_p``.

    Each window is reduced to an 8x8 grid of mean normed-gradient cells and
    scored with a fixed ring template (see :func:`_score_scale`), damped when
    the four sides carry unequal gradient mass so that only closed boundaries
    rank high. Every size runs its own non-maximum suppression; the survivors are
    merged and ordered by descending score, ties kept in grid order. The
    returned box drops the scored window's outermost cell ring, which only
    serves as context.
    """
    rgb = as_rgb(img)
    h, w = rgb.shape[:2]
    if h < 16 or w < 16:
        raise ValueError(f"image too small for proposal generation: {w}x{h} (need 16x16)")
    if n_p < 1:
        raise ValueError("n_p must be positive")
    if smooth > 0:
        rgb = np.clip(ndimage.gaussian_filter(rgb.astype(np.float64), sigma=(smooth, smooth, 0)) + 0.5, 0, 255).astype(np.uint8)
    grad = normed_gradient(rgb)
    integral = integral_image(grad)

    entries = []  # (score, scale index, grid rank, window)
    for si, ch in enumerate(_window_sizes(h)):
        for sj, cw in enumerate(_window_sizes(w)):
            scored = _score_scale(integral, w, h, cw, ch)
            if scored is None:
                continue
            xs, ys, ww, wh, score = scored
            score = np.round(score, 9)  # drop float noise so flat images tie exactly
            keep = _nms_grid(score, NMS_RADIUS)
            iy, ix = np.nonzero(keep)
            scale = si * len(SIZE_FRACTIONS) + sj
            for k, (yy, xx) in enumerate(zip(iy, ix)):
                entries.append((-float(score[yy, xx]), scale, k, int(xs[xx]), int(ys[yy]), ww, wh))
    entries.sort(key=lambda e: e[:3])
    # the template puts the contour in the second ring, so the hypothesis
    # is the scored window minus its outer (context) ring
    windows = []
    for neg, _, _, x, y, ww, wh in entries[:n_p]:
        cw, ch = ww // CELLS, wh // CELLS
        windows.append(HypothesisWindow(x + cw, y + ch, x + ww - 1 - cw, y + wh - 1 - ch, -neg + 0.0))
    return ProposalSet(windows)


def load_proposals(path) -> ProposalSet:
    """Read ``l,t,r,b[,score]`` lines; blank lines and ``#`` comments are skipped."""
    windows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) not in (4, 5):
            raise ValueError(f"{path}:{lineno}: expected l,t,r,b[,score], got {raw!r}")
        try:
            l, t, r, b = (int(p) for p in parts[:4])
            score = float(parts[4]) if len(parts) == 5 else None
            windows.append(HypothesisWindow(l, t, r, b, score))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    return ProposalSet(windows)


def save_proposals(path, props: ProposalSet) -> None:
    lines = ["# l,t,r,b,score"]
    for w in props:
        if w.score is None:
            lines.append(f"{w.l},{w.t},{w.r},{w.b}")
        else:
            lines.append(f"{w.l},{w.t},{w.r},{w.b},{w.score:.6g}")
    Path(path).write_text("\n".join(lines) + "\n")


def compute_objectness_map(
    img,
    proposals: ProposalSet | None = None,
    n_p: int = 1000,
    border_ratio: float = 0.1,
) -> np.ndarray:
    """Objectness map in [0, 1] over the original frame.

    The image is extended with a mean-colour border, windows are generated on
    the extended frame (or the supplied original-frame windows are shifted
    into it), counted, cropped back and normalised.
    """
    rgb = as_rgb(img)
    h, w = rgb.shape[:2]
    ext, (dx, dy) = extend_image(rgb, border_ratio)
    if proposals is None:
        props = generate_proposals(ext, n_p)
    else:
        props = proposals.shifted(dx, dy)
    counts = accumulate_hypotheses(props, ext.shape[1], ext.shape[0])
    return normalize01(counts[dy : dy + h, dx : dx + w])
