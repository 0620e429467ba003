"""Benchmark metrics: fixed-threshold PR curves, adaptive F-measure and MAE."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .imaging import load_gray, to_uint8

log = logging.getLogger(__name__)

BETA2 = 0.3
LEVELS = 256
IMAGE_EXTS = (".jpg", ".jpeg", ".png", ".bmp", ".tif", ".tiff")
MASK_EXTS = (".png", ".bmp", ".jpg", ".jpeg", ".tif", ".tiff")

_LAYOUT_DIRS = {
    "paired-dirs": (("img", "images", "image"), ("gt", "mask", "masks")),
    "msra1000": (("images", "image", "img", "."), ("binarymasks", "gt", "GT", "masks", "ground_truth", ".")),
    "icoseg": (("images", "image", "img"), ("ground_truth", "groundtruth", "gt", "GroundTruth")),
}


def _same_shape(a, b):
    if np.shape(a) != np.shape(b):
        raise ValueError(f"dimension mismatch: {np.shape(a)} vs {np.shape(b)}")


def binarize(s, t: int) -> np.ndarray:
    """Pixels whose 8-bit level ``round(255 * s)`` is at least ``t``."""
    if not 0 <= t <= 255:
        raise ValueError(f"threshold must lie in [0, 255], got {t}")
    return to_uint8(s) >= t


def adaptive_mask(s, t_a: float | None = None) -> np.ndarray:
    """Binarise continuous ``s`` at ``s >= T_a``; an all-zero map yields an empty mask."""
    arr = np.asarray(s, dtype=np.float64)
    if t_a is None:
        t_a = adaptive_threshold(arr)
    return (arr >= t_a) & (arr > 0)


def precision_recall(pred, gt) -> tuple[float, float]:
    """Precision and recall of a binary prediction.

    No predicted positives gives precision 1; no ground-truth positives gives
    recall 1.
    """
    _same_shape(pred, gt)
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    tp = np.count_nonzero(pred & gt)
    n_pred = np.count_nonzero(pred)
    n_gt = np.count_nonzero(gt)
    precision = tp / n_pred if n_pred else 1.0
    recall = tp / n_gt if n_gt else 1.0
    return float(precision), float(recall)


def adaptive_threshold(s) -> float:
    """Twice the mean saliency."""
    return 2.0 * float(np.mean(s))


def f_measure(precision: float, recall: float, beta2: float = BETA2) -> float:
    denom = beta2 * precision + recall
    if denom <= 0:
        return 0.0
    return (1.0 + beta2) * precision * recall / denom


def mae(s, gt) -> float:
    _same_shape(s, gt)
    return float(np.mean(np.abs(np.asarray(s, dtype=np.float64) - np.asarray(gt, dtype=np.float64))))


def pr_curve(s, gt) -> tuple[np.ndarray, np.ndarray]:
    """Precision and recall at every 8-bit threshold 0..255.

    One histogram pass instead of 256 binarisations; equal to calling
    :func:`binarize` and :func:`precision_recall` per level.
    """
    _same_shape(s, gt)
    levels = to_uint8(s).ravel()
    g = np.asarray(gt, dtype=bool).ravel()
    pos = np.bincount(levels[g], minlength=LEVELS)
    neg = np.bincount(levels[~g], minlength=LEVELS)
    # counts at level >= t
    tp = np.cumsum(pos[::-1])[::-1].astype(np.float64)
    fp = np.cumsum(neg[::-1])[::-1].astype(np.float64)
    n_pred = tp + fp
    n_gt = float(g.sum())
    precision = np.divide(tp, n_pred, out=np.ones(LEVELS), where=n_pred > 0)
    recall = tp / n_gt if n_gt else np.ones(LEVELS)
    return precision, recall


def load_mask(path) -> np.ndarray:
    """Read a ground-truth mask, binarised at grey level 128."""
    return load_gray(path) >= 128


def _find_dir(root: Path, names) -> Path | None:
    for name in names:
        p = root / name
        if p.is_dir():
            return p
    return None


def _files(d: Path, exts, recursive: bool) -> dict[str, Path]:
    it = d.rglob("*") if recursive else d.iterdir()
    out = {}
    for p in sorted(it):
        if p.is_file() and p.suffix.lower() in exts:
            key = str(p.relative_to(d).with_suffix("")) if recursive else p.stem
            out.setdefault(key, p)
    return out


def load_dataset(root, layout: str = "paired-dirs") -> list[tuple[Path, Path]]:
    """Pair images with masks by stem.

    * ``paired-dirs``: ``root/img`` (or ``images``) and ``root/gt`` (or ``mask``).
    * ``msra1000``: ``root/images`` and ``root/binarymasks`` (or ``gt``); a flat
      directory holding ``X.jpg`` with ``X.bmp``/``X.png`` also works.
    * ``icoseg``: ``root/images/<class>/`` and ``root/ground_truth/<class>/``,
      paired by class-relative path.

    Images without a mask are skipped with a warning.
    """
    root = Path(root)
    if layout not in _LAYOUT_DIRS:
        raise ValueError(f"unknown layout {layout!r}; choose from {sorted(_LAYOUT_DIRS)}")
    if not root.is_dir():
        raise ValueError(f"dataset root {root} is not a directory")
    img_names, gt_names = _LAYOUT_DIRS[layout]
    img_dir = _find_dir(root, img_names)
    gt_dir = _find_dir(root, gt_names)
    if img_dir is None or gt_dir is None:
        raise ValueError(f"{root} does not match the {layout} layout")
    recursive = layout == "icoseg"
    if img_dir == gt_dir:
        # flat directory: photos are JPEG, masks are PNG/BMP
        images = _files(img_dir, (".jpg", ".jpeg"), recursive)
        masks = _files(gt_dir, (".png", ".bmp"), recursive)
    else:
        images = _files(img_dir, IMAGE_EXTS, recursive)
        masks = _files(gt_dir, MASK_EXTS, recursive)
    pairs = []
    for key, ip in images.items():
        mp = masks.get(key)
        if mp is None:
            log.warning("no ground-truth mask for %s; skipping", ip)
            continue
        with Image.open(ip) as a, Image.open(mp) as b:
            if a.size != b.size:
                log.warning("image %s and mask %s differ in size; skipping", ip, mp)
                continue
        pairs.append((ip, mp))
    if not pairs:
        raise ValueError(f"no image/mask pairs found under {root}")
    return pairs


def pair_names(pairs) -> list[str]:
    """Output names for dataset pairs: the image stem, or ``<dir>_<stem>`` when stems repeat."""
    stems = [ip.stem for ip, _ in pairs]
    dup = {s for s in stems if stems.count(s) > 1}
    return [f"{ip.parent.name}_{ip.stem}" if ip.stem in dup else ip.stem for ip, _ in pairs]


@dataclass
class ImageRecord:
    name: str
    mae: float
    t_a: float
    precision: float
    recall: float
    f_beta: float
    curve_precision: np.ndarray = field(repr=False)
    curve_recall: np.ndarray = field(repr=False)


def evaluate_map(name: str, s, gt, beta2: float = BETA2) -> ImageRecord:
    """Every per-image metric for one saliency map."""
    s = np.asarray(s, dtype=np.float64)
    gt = np.asarray(gt, dtype=bool)
    _same_shape(s, gt)
    t_a = adaptive_threshold(s)
    p, r = precision_recall(adaptive_mask(s, t_a), gt)
    cp, cr = pr_curve(s, gt)
    return ImageRecord(name, mae(s, gt), t_a, p, r, f_measure(p, r, beta2), cp, cr)


@dataclass
class EvalReport:
    records: list[ImageRecord]
    failures: dict[str, str] = field(default_factory=dict)
    beta2: float = BETA2
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.records = sorted(self.records, key=lambda r: r.name)

    @property
    def n(self) -> int:
        return len(self.records)

    def _mean(self, attr: str) -> float:
        return float(np.mean([getattr(r, attr) for r in self.records])) if self.records else float("nan")

    @property
    def mean_mae(self) -> float:
        return self._mean("mae")

    @property
    def mean_precision(self) -> float:
        return self._mean("precision")

    @property
    def mean_recall(self) -> float:
        return self._mean("recall")

    @property
    def mean_f_beta(self) -> float:
        return self._mean("f_beta")

    def curve(self) -> tuple[np.ndarray, np.ndarray]:
        """Mean precision and recall per threshold, averaged over images."""
        if not self.records:
            return np.full(LEVELS, np.nan), np.full(LEVELS, np.nan)
        p = np.mean([r.curve_precision for r in self.records], axis=0)
        r = np.mean([r.curve_recall for r in self.records], axis=0)
        return p, r

    def summary(self) -> dict:
        return {
            "images": self.n,
            "failures": dict(sorted(self.failures.items())),
            "beta2": self.beta2,
            "mean_mae": self.mean_mae,
            "mean_precision": self.mean_precision,
            "mean_recall": self.mean_recall,
            "mean_f_beta": self.mean_f_beta,
            "config": self.config,
        }

    def records_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "mae", "T_a", "precision", "recall", "f_beta"])
        for r in self.records:
            w.writerow([r.name, repr(r.mae), repr(r.t_a), repr(r.precision), repr(r.recall), repr(r.f_beta)])
        return buf.getvalue()

    def curve_csv(self) -> str:
        p, r = self.curve()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["threshold", "mean_precision", "mean_recall"])
        for t in range(LEVELS):
            w.writerow([t, repr(float(p[t])), repr(float(r[t]))])
        return buf.getvalue()

    def write(self, out_dir, prefix: str = "eval") -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / f"{prefix}_images.csv", out / f"{prefix}_curve.csv", out / f"{prefix}_summary.json"]
        paths[0].write_text(self.records_csv())
        paths[1].write_text(self.curve_csv())
        paths[2].write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        return paths


def evaluate(items, beta2: float = BETA2, config: dict | None = None) -> EvalReport:
    """Aggregate per-image metrics.

    ``items`` yields ``(name, saliency, mask)`` triples; a saliency entry may
    be an exception instance, recorded as a failure instead of a record.
    """
    records, failures = [], {}
    for name, s, gt in items:
        if isinstance(s, Exception):
            failures[name] = str(s)
            continue
        try:
            records.append(evaluate_map(name, s, gt, beta2))
        except ValueError as exc:
            log.warning("skipping %s: %s", name, exc)
            failures[name] = str(exc)
    if not records and not failures:
        raise ValueError("nothing to evaluate")
    return EvalReport(records, failures, beta2, config or {})


def evaluate_saved_maps(maps_dir, pairs, beta2: float = BETA2) -> EvalReport:
    """Evaluate saliency PNGs in ``maps_dir`` named after each image stem."""
    maps_dir = Path(maps_dir)
    items = []
    for name, (ip, mp) in zip(pair_names(pairs), pairs):
        sp = maps_dir / f"{name}.png"
        try:
            if not sp.is_file():
                raise FileNotFoundError(f"missing saliency map {sp}")
            s = load_gray(sp).astype(np.float64) / 255.0
            gt = load_mask(mp)
            if s.shape != gt.shape:
                raise ValueError(f"map {s.shape} and mask {gt.shape} differ in size")
            items.append((name, s, gt))
        except (OSError, ValueError) as exc:
            log.warning("skipping %s: %s", name, exc)
            items.append((name, exc, None))
    return evaluate(items, beta2)
