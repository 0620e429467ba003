"""Centroid of interest, superpixel graph propagation and the compactness map."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .imaging import normalize01
from .superpixels import Segmentation, adjacency

log = logging.getLogger(__name__)

#: target distance of the relaxed values from the exact fixed point
RELAX_TOL = 1e-9
#: updates smaller than ``tol / STEP_DIVISOR`` are dropped; the leftover gap
#: measures about 1.4x the last dropped step, so this keeps it well inside tol
STEP_DIVISOR = 10.0


@dataclass
class RegionGraph:
    """Undirected superpixel adjacency graph with per-vertex OF values."""

    neighbours: list[list[int]]
    of: np.ndarray
    compactness: np.ndarray | None = field(default=None)
    rounds: int = 0  # worklist rounds used by the last propagation

    def __post_init__(self):
        self.of = np.asarray(self.of, dtype=np.float64)
        if len(self.neighbours) != len(self.of):
            raise ValueError("one OF value per vertex is required")
        for v, nb in enumerate(self.neighbours):
            if v in nb:
                raise ValueError(f"self-loop at vertex {v}")

    @property
    def n(self) -> int:
        return len(self.of)

    @classmethod
    def from_edges(cls, n: int, edges, of) -> "RegionGraph":
        nbrs: list[set[int]] = [set() for _ in range(n)]
        for a, b in edges:
            if a == b:
                raise ValueError(f"self-loop at vertex {a}")
            nbrs[a].add(b)
            nbrs[b].add(a)
        return cls([sorted(s) for s in nbrs], of)

    @classmethod
    def from_segmentation(cls, seg: Segmentation, of_map) -> "RegionGraph":
        """Vertices are superpixels; a vertex's OF is the mean OF of its pixels."""
        flat = seg.labels.ravel()
        of = np.bincount(flat, np.asarray(of_map, dtype=np.float64).ravel(), minlength=seg.n) / seg.counts
        return cls(adjacency(seg.labels), of)


def centroid_of_interest(of) -> tuple[float, float]:
    """OF-weighted mean pixel position ``(x_c, y_c)``.

    An all-zero map carries no evidence; the image centre is returned.
    """
    arr = np.asarray(of, dtype=np.float64)
    h, w = arr.shape
    total = arr.sum()
    if total <= 0:
        log.warning("OF map is all zero; using the image centre as centroid")
        return (w - 1) / 2.0, (h - 1) / 2.0
    xc = float((arr.sum(axis=0) * np.arange(w)).sum() / total)
    yc = float((arr.sum(axis=1) * np.arange(h)).sum() / total)
    return xc, yc


def source_superpixel(labels, centroid) -> int:
    """Superpixel under the rounded centroid (halves round up)."""
    labels = np.asarray(labels)
    h, w = labels.shape
    x = min(max(int(math.floor(centroid[0] + 0.5)), 0), w - 1)
    y = min(max(int(math.floor(centroid[1] + 0.5)), 0), h - 1)
    return int(labels[y, x])


def propagate_compactness(graph: RegionGraph, source: int, tol: float = RELAX_TOL) -> np.ndarray:
    """Worklist relaxation of ``c(v_j) <- sqrt(c(v_i) * OF(v_j))`` from ``source``.

    The source is seeded with its own OF value (a zero seed could never
    propagate). Each round relaxes the edges of vertices whose value rose in
    the previous round; rounds stop once no value would rise by more than
    ``tol / STEP_DIVISOR``. Values creep towards the fixed point geometrically
    (an edge can be crossed back and forth), so the stopping step is kept an
    order of magnitude below the accuracy target ``tol``.
    """
    if not 0 <= source < graph.n:
        raise ValueError(f"source vertex {source} not in graph of {graph.n} vertices")
    of = graph.of
    nbrs = graph.neighbours
    c = [0.0] * graph.n
    c[source] = float(of[source])
    step = tol / STEP_DIVISOR
    frontier = [source]
    rounds = 0
    while frontier:
        rounds += 1
        changed = []
        seen = set()
        for i in frontier:
            ci = c[i]
            for j in nbrs[i]:
                cand = math.sqrt(ci * of[j])
                if cand > c[j] + step:
                    c[j] = cand
                    if j not in seen:
                        seen.add(j)
                        changed.append(j)
        frontier = changed
    log.debug("compactness propagation converged in %d rounds", rounds)
    out = np.array(c)
    graph.compactness = out
    graph.rounds = rounds
    return out


def compactness_map(seg: Segmentation, c) -> np.ndarray:
    """Broadcast per-superpixel compactness to pixels and rescale to [0, 1]."""
    c = np.asarray(c, dtype=np.float64)
    if c.shape != (seg.n,):
        raise ValueError(f"expected {seg.n} compactness values, got shape {c.shape}")
    return normalize01(c[seg.labels])
