"""End-to-end saliency detection: objectness, foreground, compactness, fusion."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import compactness as cn
from .foreground import MarginRect, background_bands, estimate_margins, foreground_map
from .imaging import as_rgb, normalize01, rgb_to_lab, save_labels16, save_map, save_rgb
from .objectness import ProposalSet, compute_objectness_map, load_proposals
from .superpixels import Segmentation, slic_superpixels

log = logging.getLogger(__name__)

#: share of pixels that must reach the mid level after rescaling
SALIENT_SHARE = 0.1
MID_LEVEL = 0.5
GAMMA_RANGE = (0.01, 1.0)


@dataclass(frozen=True)
class PipelineConfig:
    n_p: int = 1000
    theta: float = 0.1
    n_sp: int = 100
    border_ratio: float = 0.1
    proposals: str = "generated"  # "generated" or "file"
    proposal_file: str | None = None
    rescale_percentile: float = 90.0
    rescale_mode: str = "knee"  # "knee" or "power"
    slic_compactness: float = 10.0

    def __post_init__(self):
        if self.n_p < 1:
            raise ValueError("n_p must be >= 1")
        if not 0 < self.theta <= 0.5:
            raise ValueError("theta must lie in (0, 0.5]")
        if self.n_sp < 1:
            raise ValueError("n_sp must be >= 1")
        if not 0 < self.border_ratio <= 0.5:
            raise ValueError("border_ratio must lie in (0, 0.5]")
        if self.proposals not in ("generated", "file"):
            raise ValueError("proposals must be 'generated' or 'file'")
        if self.proposals == "file" and not self.proposal_file:
            raise ValueError("proposal_file is required when proposals='file'")
        if not 0 < self.rescale_percentile < 100:
            raise ValueError("rescale_percentile must lie in (0, 100)")
        if self.rescale_mode not in ("knee", "power"):
            raise ValueError("rescale_mode must be 'knee' or 'power'")
        if self.slic_compactness <= 0:
            raise ValueError("slic_compactness must be positive")

    @classmethod
    def field_types(cls) -> dict[str, type]:
        hints = {"n_p": int, "n_sp": int, "theta": float, "border_ratio": float,
                 "rescale_percentile": float, "slic_compactness": float}
        return {f.name: hints.get(f.name, str) for f in fields(cls)}

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class SaliencyResult:
    saliency: np.ndarray
    objectness: np.ndarray
    foreground: np.ndarray
    of: np.ndarray
    compactness: np.ndarray
    margin: MarginRect | None
    centroid: tuple[float, float]
    segmentation: Segmentation | None = None
    superpixel_of: np.ndarray | None = None
    superpixel_c: np.ndarray | None = None
    timings_ms: dict[str, float] = field(default_factory=dict)
    total_ms: float = 0.0


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage


def _check_same_shape(*maps):
    shapes = {np.shape(m) for m in maps}
    if len(shapes) != 1:
        raise ValueError(f"map dimensions differ: {sorted(shapes)}")


def of_map(ob, fg) -> np.ndarray:
    _check_same_shape(ob, fg)
    return np.asarray(ob, dtype=np.float64) * np.asarray(fg, dtype=np.float64)


def fuse(ob, fg, cn_) -> np.ndarray:
    _check_same_shape(ob, fg, cn_)
    return np.asarray(ob, dtype=np.float64) * np.asarray(fg, dtype=np.float64) * np.asarray(cn_, dtype=np.float64)


def _share_at_mid(v: np.ndarray, gamma: float) -> float:
    return float(np.count_nonzero(v**gamma >= MID_LEVEL)) / v.size


def rescale_saliency(s, percentile: float = 90.0, mode: str = "knee", iterations: int = 60) -> np.ndarray:
    """Normalise to [0, 1] and stretch until enough pixels look salient.

    If fewer than ``100 - percentile`` percent of pixels sit at or above 0.5
    after min-max normalisation, a monotone stretch lifts that share of
    pixels to 0.5:

    * ``"knee"``: piecewise-linear map sending the percentile value ``q`` to
      0.5 (``[0, q] -> [0, 0.5]``, ``[q, 1] -> [0.5, 1]``); low values stay low.
    * ``"power"``: ``v -> v**gamma`` with the largest ``gamma`` in [0.01, 1]
      that satisfies the share, found by bisection.

    Both are monotone, so pixel ranks never change.
    """
    arr = np.asarray(s, dtype=np.float64)
    if np.any(arr < 0):
        raise ValueError("saliency must be nonnegative")
    if mode not in ("knee", "power"):
        raise ValueError(f"unknown rescale mode {mode!r}")
    if arr.max() <= 0:
        log.warning("saliency map is all zero; skipping rescale")
        return arr.copy()
    v = normalize01(arr)
    share = 1.0 - percentile / 100.0
    if _share_at_mid(v, 1.0) >= share:
        return v
    if mode == "knee":
        k = max(1, int(np.ceil(share * v.size)))
        q = float(np.partition(v.ravel(), v.size - k)[v.size - k])
        if q <= 0:
            log.warning("cannot lift %.0f%% of pixels to %.1f; too few nonzero pixels", 100 * share, MID_LEVEL)
            return v
        out = np.where(v <= q, MID_LEVEL * v / q, MID_LEVEL + (1 - MID_LEVEL) * (v - q) / (1 - q))
        # v == q must land on the mid level exactly despite rounding
        out[v == q] = MID_LEVEL
        return out
    lo, hi = GAMMA_RANGE
    if _share_at_mid(v, lo) < share:
        log.warning("cannot lift %.0f%% of pixels to %.1f; too few nonzero pixels", 100 * share, MID_LEVEL)
        return v**lo
    # invariant: lo satisfies the share, hi does not
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if _share_at_mid(v, mid) >= share:
            lo = mid
        else:
            hi = mid
    return v**lo


def _resolve_proposals(cfg: PipelineConfig) -> ProposalSet | None:
    if cfg.proposals == "file":
        return load_proposals(cfg.proposal_file)
    return None


def detect(img, cfg: PipelineConfig | None = None, proposals: ProposalSet | None = None) -> SaliencyResult:
    """Compute the saliency map of an RGB image.

    Stage order: objectness, margins and foreground, OF, centroid, SLIC,
    propagation, compactness map, fusion, rescale. ``proposals`` overrides
    the configured proposal source.
    """
    cfg = cfg or PipelineConfig()
    rgb = as_rgb(img)
    h, w = rgb.shape[:2]
    if h < 16 or w < 16:
        raise ValueError(f"image must be at least 16x16, got {w}x{h}")
    timings: dict[str, float] = {}
    start = time.perf_counter()

    def run(stage, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        except Exception as exc:
            raise StageError(stage, exc) from exc
        finally:
            timings[stage] = timings.get(stage, 0.0) + 1000.0 * (time.perf_counter() - t0)

    if proposals is None:
        proposals = run("objectness", _resolve_proposals, cfg)
    ob = run("objectness", compute_objectness_map, rgb, proposals, n_p=cfg.n_p, border_ratio=cfg.border_ratio)

    lab = run("foreground", rgb_to_lab, rgb)
    margin = None
    if ob.max() > 0:
        margin = run("foreground", estimate_margins, ob, cfg.theta)
        bands = run("foreground", background_bands, lab, margin)
        fg = run("foreground", foreground_map, lab, bands)
    else:
        log.warning("objectness map is empty; foreground map is zero")
        fg = np.zeros((h, w))

    of = run("fusion", of_map, ob, fg)

    def compactness_stage():
        centroid = cn.centroid_of_interest(of)
        seg = slic_superpixels(lab, min(cfg.n_sp, h * w), compactness=cfg.slic_compactness)
        graph = cn.RegionGraph.from_segmentation(seg, of)
        src = cn.source_superpixel(seg.labels, centroid)
        c = cn.propagate_compactness(graph, src)
        return centroid, seg, graph.of, c, cn.compactness_map(seg, c)

    centroid, seg, sp_of, c, cmap = run("compactness", compactness_stage)
    s = run("fusion", fuse, ob, fg, cmap)
    s = run("fusion", rescale_saliency, s, cfg.rescale_percentile, cfg.rescale_mode)
    total = 1000.0 * (time.perf_counter() - start)
    return SaliencyResult(
        saliency=s,
        objectness=ob,
        foreground=fg,
        of=of,
        compactness=cmap,
        margin=margin,
        centroid=centroid,
        segmentation=seg,
        superpixel_of=sp_of,
        superpixel_c=c,
        timings_ms=timings,
        total_ms=total,
    )


def sidecar(result: SaliencyResult, cfg: PipelineConfig) -> dict:
    return {
        "margin": result.margin.as_dict() if result.margin else None,
        "centroid": {"x": result.centroid[0], "y": result.centroid[1]},
        "timings_ms": result.timings_ms,
        "total_ms": result.total_ms,
        "config": cfg.as_dict(),
    }


def margin_overlay(rgb, margin: MarginRect | None) -> np.ndarray:
    """Copy of the image with the margin rectangle drawn in red."""
    out = as_rgb(rgb).copy()
    if margin is None:
        return out
    red = np.array([255, 0, 0], dtype=np.uint8)
    out[margin.t, margin.l : margin.r + 1] = red
    out[margin.b, margin.l : margin.r + 1] = red
    out[margin.t : margin.b + 1, margin.l] = red
    out[margin.t : margin.b + 1, margin.r] = red
    return out


def write_outputs(
    result: SaliencyResult,
    cfg: PipelineConfig,
    out_dir,
    stem: str,
    rgb=None,
    intermediates: bool = False,
    debug: bool = False,
) -> list[Path]:
    """Write the saliency PNG, JSON sidecar and optional extras; return written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    path = out_dir / f"{stem}.png"
    save_map(path, result.saliency)
    written.append(path)
    path = out_dir / f"{stem}.json"
    path.write_text(json.dumps(sidecar(result, cfg), indent=2, sort_keys=True) + "\n")
    written.append(path)
    if intermediates:
        for tag, m in (("ob", result.objectness), ("fg", result.foreground), ("of", result.of), ("cn", result.compactness)):
            path = out_dir / f"{stem}_{tag}.png"
            save_map(path, m)
            written.append(path)
    if debug:
        path = out_dir / f"{stem}_margin.json"
        path.write_text(json.dumps(result.margin.as_dict() if result.margin else None) + "\n")
        written.append(path)
        if rgb is not None:
            path = out_dir / f"{stem}_margin.png"
            save_rgb(path, margin_overlay(rgb, result.margin))
            written.append(path)
        if result.segmentation is not None:
            path = out_dir / f"{stem}_labels.png"
            save_labels16(path, result.segmentation.labels)
            written.append(path)
            path = out_dir / f"{stem}_superpixels.csv"
            rows = ["superpixel,of,c"]
            rows += [f"{i},{o!r},{c!r}" for i, (o, c) in enumerate(zip(result.superpixel_of, result.superpixel_c))]
            path.write_text("\n".join(rows) + "\n")
            written.append(path)
    return written
