"""Command-line entry point: ``hyposal detect|eval|proposals|synth``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .evaluation import IMAGE_EXTS, evaluate_saved_maps, load_dataset, pair_names
from .imaging import load_rgb
from .objectness import HypothesisWindow, ProposalSet, extend_image, generate_proposals, load_proposals, save_proposals
from .pipeline import PipelineConfig, detect, write_outputs
from .synth import write_synthetic_set

log = logging.getLogger("hyposal")

ENV_PREFIX = "HYPOSAL_"


def read_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


#: batch options that live outside PipelineConfig but share its precedence rules
RUN_KEYS = {"jobs": int, "dump_intermediates": _bool, "debug": _bool}


def _coerce(raw: dict[str, str], source: str) -> dict:
    types = {**PipelineConfig.field_types(), **RUN_KEYS}
    out = {}
    for key, value in raw.items():
        if key not in types:
            raise ValueError(f"unknown config key {key!r} in {source}")
        out[key] = types[key](value)
    return out


def resolve_settings(args) -> tuple[PipelineConfig, dict]:
    """Defaults < config file < ``HYPOSAL_*`` environment < command-line flags.

    Returns the pipeline config and the batch options (jobs, dump_intermediates, debug).
    """
    values: dict = {}
    if getattr(args, "config", None):
        values.update(_coerce(read_config_file(args.config), str(args.config)))
    env = {k[len(ENV_PREFIX):].lower(): v for k, v in os.environ.items() if k.startswith(ENV_PREFIX)}
    values.update(_coerce(env, "environment"))
    for key in (*PipelineConfig.field_types(), *RUN_KEYS):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    run = {"jobs": _default_jobs(), "dump_intermediates": False, "debug": False}
    for key in RUN_KEYS:
        if key in values:
            run[key] = values.pop(key)
    if values.get("proposal_file") and "proposals" not in values:
        values["proposals"] = "file"
    return PipelineConfig(**values), run


def build_config(args) -> PipelineConfig:
    return resolve_settings(args)[0]


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline configuration")
    g.add_argument("--config", type=Path, help="flat key = value config file")
    g.add_argument("--n-p", dest="n_p", type=int, help="number of window hypotheses (default 1000)")
    g.add_argument("--theta", type=float, help="margin mass fraction (default 0.1)")
    g.add_argument("--n-sp", dest="n_sp", type=int, help="target superpixel count (default 100)")
    g.add_argument("--border-ratio", dest="border_ratio", type=float, help="border extension ratio (default 0.1)")
    g.add_argument("--proposals", choices=["generated", "file"])
    g.add_argument(
        "--proposal-file",
        dest="proposal_file",
        help="proposal CSV, or a directory of <stem>.csv files for batch runs",
    )
    g.add_argument("--rescale-percentile", dest="rescale_percentile", type=float)
    g.add_argument("--rescale-mode", dest="rescale_mode", choices=["knee", "power"])
    g.add_argument("--slic-compactness", dest="slic_compactness", type=float)


def _default_jobs() -> int:
    return os.cpu_count() or 1


def _collect_images(inputs) -> list[Path]:
    out = []
    for raw in inputs:
        p = Path(raw)
        if p.is_dir():
            out.extend(sorted(q for q in p.iterdir() if q.is_file() and q.suffix.lower() in IMAGE_EXTS))
        else:
            out.append(p)
    return out


def _proposals_for(cfg: PipelineConfig, image: Path) -> ProposalSet | None:
    if cfg.proposals != "file":
        return None
    src = Path(cfg.proposal_file)
    return load_proposals(src / f"{image.stem}.csv" if src.is_dir() else src)


def _detect_one(task):
    """Worker body; returns a manifest entry and never raises."""
    image, stem, out_dir, cfg, intermediates, debug = task
    t0 = time.perf_counter()
    entry = {"input": str(image), "name": stem}
    try:
        rgb = load_rgb(image)
        result = detect(rgb, cfg, proposals=_proposals_for(cfg, image))
        written = write_outputs(result, cfg, out_dir, stem, rgb=rgb, intermediates=intermediates, debug=debug)
        entry.update(
            status="ok",
            outputs=[str(p) for p in written],
            timings_ms=result.timings_ms,
            detect_ms=result.total_ms,
        )
    except Exception as exc:  # batch keeps going; the error is reported per file
        entry.update(status="error", error=f"{type(exc).__name__}: {exc}")
    entry["wall_ms"] = 1000.0 * (time.perf_counter() - t0)
    return entry


def run_detect_batch(images, stems, out_dir, cfg, jobs=1, intermediates=False, debug=False) -> list[dict]:
    tasks = [(img, stem, Path(out_dir), cfg, intermediates, debug) for img, stem in zip(images, stems)]
    if jobs <= 1 or len(tasks) <= 1:
        return [_detect_one(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_detect_one, tasks))


def write_manifest(path, command: str, cfg: PipelineConfig | None, inputs, outputs_dir, entries, started: float) -> dict:
    manifest = {
        "command": command,
        "tool": "hyposal",
        "version": __version__,
        "config": cfg.as_dict() if cfg else None,
        "inputs": [str(i) for i in inputs],
        "output_dir": str(outputs_dir),
        "entries": entries,
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        "wall_clock_s": time.time() - started,
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def cmd_detect(args) -> int:
    started = time.time()
    cfg, run = resolve_settings(args)
    images = _collect_images(args.inputs)
    if not images:
        log.error("no input images")
        return 2
    entries = run_detect_batch(
        images, [p.stem for p in images], args.out, cfg, run["jobs"], run["dump_intermediates"], run["debug"]
    )
    write_manifest(Path(args.out) / "manifest.json", "detect", cfg, images, args.out, entries, started)
    failed = [e for e in entries if e["status"] != "ok"]
    for e in failed:
        log.error("%s: %s", e["input"], e["error"])
    log.info("detect: %d ok, %d failed", len(entries) - len(failed), len(failed))
    return 1 if failed else 0


def cmd_eval(args) -> int:
    started = time.time()
    try:
        pairs = load_dataset(args.dataset, args.layout)
    except ValueError as exc:
        log.error("%s", exc)
        return 2
    out = Path(args.out)
    cfg = None
    entries = []
    if args.detect:
        cfg, run = resolve_settings(args)
        maps_dir = out / "maps"
        entries = run_detect_batch([ip for ip, _ in pairs], pair_names(pairs), maps_dir, cfg, run["jobs"])
    elif args.maps:
        maps_dir = Path(args.maps)
    else:
        log.error("eval needs --maps DIR or --detect")
        return 2
    report = evaluate_saved_maps(maps_dir, pairs)
    report.config = cfg.as_dict() if cfg else {}
    paths = report.write(out)
    write_manifest(out / "manifest.json", "eval", cfg, [args.dataset], out, entries, started)
    log.info(
        "eval: %d images, MAE %.4f, adaptive F %.4f; reports in %s",
        report.n,
        report.mean_mae,
        report.mean_f_beta,
        ", ".join(str(p) for p in paths),
    )
    for name, err in sorted(report.failures.items()):
        log.error("%s: %s", name, err)
    return 1 if report.failures or report.n == 0 else 0


def cmd_proposals(args) -> int:
    rgb = load_rgb(args.image)
    h, w = rgb.shape[:2]
    if args.no_extend:
        props = generate_proposals(rgb, args.n_p)
    else:
        ext, (dx, dy) = extend_image(rgb, args.border_ratio)
        # back to the original frame, clipped; windows wholly in the border are dropped
        kept = []
        for win in generate_proposals(ext, args.n_p):
            l, t = max(win.l - dx, 0), max(win.t - dy, 0)
            r, b = min(win.r - dx, w - 1), min(win.b - dy, h - 1)
            if l <= r and t <= b:
                kept.append(HypothesisWindow(l, t, r, b, win.score))
        props = ProposalSet(kept)
    save_proposals(args.out, props)
    log.info("wrote %d proposals to %s", len(props), args.out)
    return 0


def cmd_synth(args) -> int:
    pairs = write_synthetic_set(args.out, args.count, args.seed, args.width, args.height)
    log.info("wrote %d synthetic pairs under %s", len(pairs), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hyposal", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="compute saliency maps")
    p.add_argument("inputs", nargs="+", help="image files or directories")
    p.add_argument("-o", "--out", type=Path, required=True, help="output directory")
    p.add_argument("-j", "--jobs", type=int, help="worker processes (default: logical cores)")
    p.add_argument(
        "--dump-intermediates", dest="dump_intermediates", action="store_const", const=True,
        help="also write OB/FG/OF/CN maps",
    )
    p.add_argument(
        "--debug", action="store_const", const=True, help="write margin, label map and superpixel table"
    )
    _add_config_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="benchmark saliency maps against ground truth")
    p.add_argument("dataset", type=Path)
    p.add_argument("--layout", choices=["paired-dirs", "msra1000", "icoseg"], default="paired-dirs")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--maps", type=Path, help="directory of saliency PNGs named <stem>.png")
    src.add_argument("--detect", action="store_true", help="run detection first")
    p.add_argument("-o", "--out", type=Path, required=True)
    p.add_argument("-j", "--jobs", type=int, help="worker processes (default: logical cores)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("proposals", help="dump generated window proposals as CSV")
    p.add_argument("image", type=Path)
    p.add_argument("-o", "--out", type=Path, required=True)
    p.add_argument("--n-p", dest="n_p", type=int, default=1000)
    p.add_argument("--border-ratio", dest="border_ratio", type=float, default=0.1)
    p.add_argument("--no-extend", action="store_true", help="score the original frame without a border")
    p.set_defaults(func=cmd_proposals)

    p = sub.add_parser("synth", help="write a synthetic single-object benchmark")
    p.add_argument("-o", "--out", type=Path, required=True)
    p.add_argument("-n", "--count", type=int, default=50)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=240)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
