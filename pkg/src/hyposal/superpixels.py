"""SLIC superpixels over a Lab image."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

@dataclass(frozen=True)
class Segmentation:
    """Per-pixel superpixel labels plus per-superpixel statistics."""

    labels: np.ndarray  # (H, W) int, values in [0, n)
    mean_lab: np.ndarray  # (n, 3)
    counts: np.ndarray  # (n,)
    centroids: np.ndarray  # (n, 2) as (x, y)

    @property
    def n(self) -> int:
        return len(self.counts)

    @classmethod
    def from_labels(cls, labels, lab) -> "Segmentation":
        labels = np.asarray(labels, dtype=np.int64)
        lab = np.asarray(lab, dtype=np.float64)
        n = int(labels.max()) + 1
        flat = labels.ravel()
        counts = np.bincount(flat, minlength=n)
        if np.any(counts == 0):
            raise ValueError("labels must be contiguous in [0, n)")
        mean_lab = np.stack(
            [np.bincount(flat, lab[..., c].ravel(), minlength=n) / counts for c in range(3)], axis=1
        )
        yy, xx = np.indices(labels.shape)
        centroids = np.stack(
            [np.bincount(flat, xx.ravel(), minlength=n) / counts, np.bincount(flat, yy.ravel(), minlength=n) / counts],
            axis=1,
        )
        return cls(labels, mean_lab, counts, centroids)


def _grid_shape(w: int, h: int, n: int) -> tuple[int, int]:
    nx = max(1, min(w, round(math.sqrt(n * w / h))))
    ny = max(1, min(h, round(n / nx)))
    return nx, ny


def _seed_centers(lab: np.ndarray, n: int) -> np.ndarray:
    h, w = lab.shape[:2]
    nx, ny = _grid_shape(w, h, n)
    xs = (np.arange(nx) + 0.5) * w / nx
    ys = (np.arange(ny) + 0.5) * h / ny
    cy, cx = np.meshgrid(np.floor(ys).astype(int), np.floor(xs).astype(int), indexing="ij")
    cx, cy = cx.ravel(), cy.ravel()

    # nudge seeds to the lowest-gradient pixel of their 3x3 neighbourhood
    if h >= 3 and w >= 3:
        grad = np.zeros((h, w))
        grad[1:-1, 1:-1] = ((lab[1:-1, 2:] - lab[1:-1, :-2]) ** 2).sum(axis=2) + (
            (lab[2:, 1:-1] - lab[:-2, 1:-1]) ** 2
        ).sum(axis=2)
        grad[0, :] = grad[-1, :] = grad[:, 0] = grad[:, -1] = np.inf
        for k in range(cx.size):
            y0, y1 = max(cy[k] - 1, 0), min(cy[k] + 2, h)
            x0, x1 = max(cx[k] - 1, 0), min(cx[k] + 2, w)
            win = grad[y0:y1, x0:x1]
            if np.isfinite(win).any():
                dy, dx = np.unravel_index(np.argmin(win), win.shape)
                cy[k], cx[k] = y0 + dy, x0 + dx

    centers = np.empty((cx.size, 5))
    centers[:, :3] = lab[cy, cx]
    centers[:, 3] = cx
    centers[:, 4] = cy
    return centers


def _assign(lab, centers, step, m, yy, xx):
    h, w = lab.shape[:2]
    labels = np.full((h, w), -1, dtype=np.int64)
    dist = np.full((h, w), np.inf)
    spatial_w = (m / step) ** 2
    reach = int(math.ceil(step))
    for k, (L, a, b, cx, cy) in enumerate(centers):
        x0, x1 = max(int(cx) - reach, 0), min(int(cx) + reach + 1, w)
        y0, y1 = max(int(cy) - reach, 0), min(int(cy) + reach + 1, h)
        if x0 >= x1 or y0 >= y1:
            continue
        patch = lab[y0:y1, x0:x1]
        d = (
            (patch[..., 0] - L) ** 2
            + (patch[..., 1] - a) ** 2
            + (patch[..., 2] - b) ** 2
            + spatial_w * ((xx[y0:y1, x0:x1] - cx) ** 2 + (yy[y0:y1, x0:x1] - cy) ** 2)
        )
        cur = dist[y0:y1, x0:x1]
        better = d < cur
        cur[better] = d[better]
        labels[y0:y1, x0:x1][better] = k
    missing = labels < 0
    if missing.any():
        # pixels outside every search window join the nearest assigned pixel
        idx = ndimage.distance_transform_edt(missing, return_distances=False, return_indices=True)
        labels = labels[idx[0], idx[1]]
    return labels


def _neighbour_pairs(a: np.ndarray) -> np.ndarray:
    """All 4-neighbour value pairs ``(a[p], a[q])`` with differing values, both orders."""
    p = np.concatenate(
        [
            np.stack([a[:, :-1].ravel(), a[:, 1:].ravel()], axis=1),
            np.stack([a[:-1, :].ravel(), a[1:, :].ravel()], axis=1),
        ]
    )
    p = p[p[:, 0] != p[:, 1]]
    return np.concatenate([p, p[:, ::-1]])


def _unique_pairs(pairs: np.ndarray) -> np.ndarray:
    base = int(pairs.max()) + 1 if pairs.size else 1
    code = np.unique(pairs[:, 0] * base + pairs[:, 1])
    return np.stack([code // base, code % base], axis=1)


def _components(labels: np.ndarray) -> tuple[np.ndarray, int]:
    """4-connected components of equal-label pixels, numbered in raster order."""
    h, w = labels.shape
    idx = np.arange(h * w).reshape(h, w)
    right = labels[:, :-1] == labels[:, 1:]
    down = labels[:-1, :] == labels[1:, :]
    rows = np.concatenate([idx[:, :-1][right], idx[:-1, :][down]])
    cols = np.concatenate([idx[:, 1:][right], idx[1:, :][down]])
    graph = coo_matrix((np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(h * w, h * w))
    n, comp = connected_components(graph, directed=False)
    # scipy numbers components by discovery order; make it raster order explicitly
    _, first = np.unique(comp, return_index=True)
    order = np.argsort(first)
    remap = np.empty(n, dtype=np.int64)
    remap[order] = np.arange(n)
    return remap[comp].reshape(h, w), n


def _enforce_connectivity(labels: np.ndarray) -> np.ndarray:
    """Keep each label's largest 4-connected piece and merge the other pieces.

    Each orphan piece joins the adjacent kept region with the most pixels
    (ties go to the lower label). Orphans touching only other orphans wait
    for a later pass. Labels are then renumbered in raster order of first
    appearance.
    """
    comp, n_comp = _components(labels)
    comp_label = np.zeros(n_comp, dtype=np.int64)
    comp_label[comp.ravel()] = labels.ravel()
    comp_size = np.bincount(comp.ravel(), minlength=n_comp)

    # largest component per label; ties to the earliest in raster order
    order = np.lexsort((np.arange(n_comp), -comp_size, comp_label))
    first = np.ones(n_comp, dtype=bool)
    first[1:] = comp_label[order][1:] != comp_label[order][:-1]
    kept = np.zeros(n_comp, dtype=bool)
    kept[order[first]] = True

    region = np.where(kept, comp_label, -1)  # final label of each component
    region_size = np.bincount(comp_label[kept], weights=comp_size[kept], minlength=int(labels.max()) + 1)
    pairs = _unique_pairs(_neighbour_pairs(comp))
    while not kept.all():
        a, b = pairs[:, 0], pairs[:, 1]
        cand = ~kept[a] & kept[b]
        if not cand.any():
            raise RuntimeError("connectivity enforcement made no progress")
        ca, target = a[cand], region[b[cand]]
        # per orphan pick the target with the largest size, then lowest label
        sel = np.lexsort((target, -region_size[target], ca))
        ca, target = ca[sel], target[sel]
        head = np.ones(ca.size, dtype=bool)
        head[1:] = ca[1:] != ca[:-1]
        region[ca[head]] = target[head]
        kept[ca[head]] = True
        np.add.at(region_size, target[head], comp_size[ca[head]])

    out = region[comp]
    _, first_idx = np.unique(out.ravel(), return_index=True)
    old = out.ravel()[np.sort(first_idx)]
    remap = np.zeros(int(out.max()) + 1, dtype=np.int64)
    remap[old] = np.arange(old.size)
    return remap[out]


def slic_superpixels(lab, n: int = 100, compactness: float = 10.0, iterations: int = 10) -> Segmentation:
    """Oversegment a Lab image into roughly ``n`` compact superpixels.

    K-means in (L, a, b, x, y) with grid-seeded centres, each centre searching
    only a 2S x 2S window (S = sqrt(pixels / n)), followed by 4-connectivity
    enforcement.
    """
    lab = np.asarray(lab, dtype=np.float64)
    if lab.ndim != 3 or lab.shape[0] < 1 or lab.shape[1] < 1:
        raise ValueError(f"expected a non-empty (H, W, 3) Lab image, got {lab.shape}")
    h, w = lab.shape[:2]
    if n < 1:
        raise ValueError("n must be at least 1")
    if n > h * w:
        raise ValueError(f"cannot make {n} superpixels from {h * w} pixels")
    step = math.sqrt(h * w / n)
    centers = _seed_centers(lab, n)
    yy, xx = np.indices((h, w), dtype=np.float64)

    labels = None
    for _ in range(iterations):
        labels = _assign(lab, centers, step, compactness, yy, xx)
        flat = labels.ravel()
        counts = np.bincount(flat, minlength=len(centers))
        live = counts > 0
        feats = (lab[..., 0], lab[..., 1], lab[..., 2], xx, yy)
        for c, f in enumerate(feats):
            sums = np.bincount(flat, f.ravel(), minlength=len(centers))
            centers[live, c] = sums[live] / counts[live]

    labels = _enforce_connectivity(labels)
    return Segmentation.from_labels(labels, lab)


def adjacency(labels: np.ndarray) -> list[list[int]]:
    """Sorted neighbour lists of superpixels sharing a 4-connected boundary."""
    labels = np.asarray(labels)
    n = int(labels.max()) + 1
    nbrs: list[list[int]] = [[] for _ in range(n)]
    for a, b in _unique_pairs(_neighbour_pairs(labels)).tolist():
        nbrs[int(a)].append(int(b))
    return nbrs
