"""Batch command-line entry point.

Subcommands: preprocess, label, dataset, eval, sweep, confusion, synth,
serve.  Options can come from a flat key=value config file (--config);
explicit flags win.  Exit codes: 0 success, 1 validation error, 2 runtime
error.  Logs go to stderr; all data outputs are files under --out.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import json
import logging
import os
import sys
import threading
import time
from pathlib import Path

from seeker import evaluate, raster
from seeker.annotations import (BufferConfig, ClassLabel, localize_points, parse_points,
                                write_points, write_yolo_labels)
from seeker.boxgen import buffer_labels_baseline, label_patch
from seeker.dataset import SplitSpec, emit_dataset, split_dataset
from seeker.raster import (PatchRef, StretchParams, convert_depth, default_patch_size,
                           filter_patches, load_patch_pixels, load_scene, patch_filename,
                           read_manifest, tile_scene, write_manifest)
from seeker.segmenter import generate_synthetic_scene, make_backend

log = logging.getLogger("seeker")


class _Parser(argparse.ArgumentParser):
    # Usage problems are validation errors -> exit 1, not argparse's 2.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self.exit_validation(message))

    def exit_validation(self, message) -> int:
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        return 1


def load_config(path) -> dict[str, str]:
    cfg = {}
    for ln, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{ln}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        cfg[key.strip().replace("-", "_")] = value.strip()
    return cfg


def _pick(args, cfg, name, cast=str, default=None, required=False):
    """Flag value if given, else config value, else default."""
    value = getattr(args, name, None)
    if value is None and name in cfg:
        raw = cfg[name]
        value = (raw.lower() in ("1", "true", "yes")) if cast is bool else cast(raw)
    if value is None:
        value = default
    if value is None and required:
        raise ValueError(f"missing required option --{name.replace('_', '-')}")
    return value


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(stream=sys.stderr,
                        level=logging.DEBUG if verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file; flags override")
    p.add_argument("--verbose", action="store_true", default=None)


def _buffer_config(args, cfg) -> BufferConfig:
    whale = _pick(args, cfg, "buffer_whale", float, 4.0)
    seal = _pick(args, cfg, "buffer_seal", float, 2.0)
    full = _pick(args, cfg, "buffer_full_side", bool, False)
    return BufferConfig(certain_whale_m=whale, uncertain_whale_m=whale,
                        harp_seal_m=seal, full_side=full)


# ---------------------------------------------------------------------------
# preprocess

def cmd_preprocess(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    scene_path = Path(_pick(args, cfg, "scene", str, required=True))
    out_dir = Path(_pick(args, cfg, "out", str, required=True))
    meta = _pick(args, cfg, "meta")
    stretch = _pick(args, cfg, "stretch", bool, False)
    p_low = _pick(args, cfg, "p_low", float, 1.0)
    p_high = _pick(args, cfg, "p_high", float, 99.0)

    scene = load_scene(scene_path, Path(meta) if meta else None)
    if stretch:
        scene = convert_depth(scene, StretchParams(p_low, p_high))
    elif scene.bit_depth != 8:
        raise ValueError(f"scene {scene.scene_id!r} is 16-bit; pass --stretch to convert")

    patch_size = _pick(args, cfg, "patch_size", int, default_patch_size(scene.gsd))
    if patch_size is None:
        raise ValueError(f"no default patch size for gsd {scene.gsd}; pass --patch-size")
    patches = tile_scene(scene, patch_size)

    points_path = _pick(args, cfg, "points")
    if points_path:
        points = [p for p in parse_points(points_path) if p.scene_id == scene.scene_id]
        patches = filter_patches(patches, points)
        log.info("retained %d patches containing %d points", len(patches), len(points))
    patches_dir = out_dir / "patches"
    raster.save_patches(patches, patches_dir)
    log.info("wrote %d patches and manifest under %s", len(patches), patches_dir)
    return 0


# ---------------------------------------------------------------------------
# synth

def _parse_class_mix(text: str) -> dict[ClassLabel, float]:
    mix = {}
    for part in text.split(","):
        name, _, weight = part.partition("=")
        mix[ClassLabel.from_name(name)] = float(weight) if weight else 1.0
    return mix


def cmd_synth(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    out_dir = Path(_pick(args, cfg, "out", str, required=True))
    seed = _pick(args, cfg, "seed", int, 0)
    n_patches = _pick(args, cfg, "patches", int, 10)
    size = _pick(args, cfg, "size", int, 320)
    n_objects = _pick(args, cfg, "objects", int, 4)
    touch = _pick(args, cfg, "touch_prob", float, 0.0)
    gsd = _pick(args, cfg, "gsd", float, 0.3)
    mix_text = _pick(args, cfg, "classes")
    mix = _parse_class_mix(mix_text) if mix_text else None

    patches_dir = out_dir / "patches"
    gt_dir = out_dir / "gt"
    patches_dir.mkdir(parents=True, exist_ok=True)
    gt_dir.mkdir(parents=True, exist_ok=True)

    refs, all_points = [], []
    from PIL import Image

    for i in range(n_patches):
        scene_id = f"synth-{seed}-{i:04d}"
        scene = generate_synthetic_scene(seed + i, n_objects, size, mix, touch,
                                         scene_id=scene_id)
        ref = PatchRef(f"{scene_id}_0_0", scene_id, 0, 0, size, gsd)
        refs.append(ref)
        Image.fromarray(scene.image).save(patches_dir / patch_filename(ref))
        all_points.extend(scene.points)
        label_text, ids_text = write_yolo_labels(scene.boxes, size)
        (gt_dir / f"{ref.patch_id}.txt").write_text(label_text)
        (gt_dir / f"{ref.patch_id}.ids").write_text(ids_text)

    write_manifest(refs, patches_dir / "manifest.csv")
    write_points(all_points, out_dir / "points.csv")
    log.info("generated %d synthetic patches (%d points) under %s",
             n_patches, len(all_points), out_dir)
    return 0


# ---------------------------------------------------------------------------
# label

class _WorkerBackends:
    """One backend per worker thread (external children must not be shared)."""

    def __init__(self, factory):
        self._factory = factory
        self._local = threading.local()
        self._all: list = []
        self._lock = threading.Lock()

    def get(self):
        backend = getattr(self._local, "backend", None)
        if backend is None:
            backend = self._factory()
            self._local.backend = backend
            with self._lock:
                self._all.append(backend)
        return backend

    def close(self) -> None:
        for b in self._all:
            if hasattr(b, "close"):
                b.close()


def cmd_label(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    manifest = Path(_pick(args, cfg, "manifest", str, required=True))
    points_path = _pick(args, cfg, "points", str, required=True)
    out_dir = Path(_pick(args, cfg, "out", str, required=True))
    backend_name = _pick(args, cfg, "backend", str, "synthetic")
    backend_cmd = _pick(args, cfg, "backend_cmd")
    fixture = _pick(args, cfg, "fixture")
    baseline = _pick(args, cfg, "baseline_buffer", bool, False)
    jobs = _pick(args, cfg, "jobs", int, os.cpu_count() or 1)
    buffers = _buffer_config(args, cfg)

    refs = read_manifest(manifest)
    patches_dir = manifest.parent
    points = parse_points(points_path)
    localized = localize_points(points, refs)

    labels_dir = out_dir / "labels"
    labels_dir.mkdir(parents=True, exist_ok=True)

    external = backend_name == "external" and not baseline
    backends = _WorkerBackends(lambda: make_backend(
        backend_name, patch_dir=patches_dir,
        command=backend_cmd.split() if backend_cmd else None,
        fixture_path=fixture)) if not baseline else None

    def process(ref: PatchRef) -> tuple[str, dict]:
        pts = localized.get(ref.patch_id, [])
        if baseline:
            boxes = buffer_labels_baseline(pts, buffers, ref.gsd, ref.size)
            fallbacks: list[str] = []
        else:
            image = patch_filename(ref) if external \
                else load_patch_pixels(patches_dir, ref)
            result = label_patch(ref, pts, backends.get(), buffers, image=image)
            boxes, fallbacks = result.boxes, result.fallback_ids
        label_text, ids_text = write_yolo_labels(boxes, ref.size)
        (labels_dir / f"{ref.patch_id}.txt").write_text(label_text)
        (labels_dir / f"{ref.patch_id}.ids").write_text(ids_text)
        per_class = {c.label: sum(1 for b in boxes if b.cls == c) for c in ClassLabel}
        return ref.patch_id, {"boxes": len(boxes), "fallbacks": len(fallbacks),
                              "per_class": per_class}

    started = time.monotonic()
    results: dict[str, dict] = {}
    try:
        if jobs <= 1:
            for ref in refs:
                pid, stats = process(ref)
                results[pid] = stats
        else:
            with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
                for pid, stats in pool.map(process, refs):
                    results[pid] = stats
    finally:
        if backends is not None:
            backends.close()

    report = {
        "mode": "buffer-baseline" if baseline else backend_name,
        "patches": len(refs),
        "boxes": sum(r["boxes"] for r in results.values()),
        "fallbacks": sum(r["fallbacks"] for r in results.values()),
        "per_class": {c.label: sum(r["per_class"][c.label] for r in results.values())
                      for c in ClassLabel},
    }
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    # Wall time is log-only so output trees stay byte-identical across runs.
    log.info("labeled %d patches (%d boxes, %d fallbacks) in %.2fs",
             report["patches"], report["boxes"], report["fallbacks"],
             time.monotonic() - started)
    return 0


# ---------------------------------------------------------------------------
# dataset

def cmd_dataset(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    manifest = Path(_pick(args, cfg, "manifest", str, required=True))
    labels_dir = Path(_pick(args, cfg, "labels", str, required=True))
    out_dir = Path(_pick(args, cfg, "out", str, required=True))
    seed = _pick(args, cfg, "seed", int, 0)
    ratio_text = _pick(args, cfg, "ratios", str, "0.7,0.1,0.2")
    ratios = tuple(float(r) for r in ratio_text.split(","))
    if len(ratios) != 3:
        raise ValueError(f"ratios must be three numbers, got {ratio_text!r}")

    refs = read_manifest(manifest)
    patches_dir = manifest.parent
    split = split_dataset([r.patch_id for r in refs], SplitSpec(ratios, seed))
    images = {r.patch_id: patches_dir / patch_filename(r) for r in refs}
    labels = {r.patch_id: labels_dir / f"{r.patch_id}.txt" for r in refs
              if (labels_dir / f"{r.patch_id}.txt").exists()}
    descriptor = emit_dataset(split, images, labels, out_dir)
    log.info("dataset: train=%d val=%d test=%d, descriptor %s",
             len(split.train), len(split.val), len(split.test), descriptor)
    return 0


# ---------------------------------------------------------------------------
# eval / sweep / confusion

def _load_eval_inputs(args, cfg):
    gt_dir = Path(_pick(args, cfg, "gt", str, required=True))
    patch_size = _pick(args, cfg, "patch_size", int, required=True)
    gts = evaluate.load_ground_truth(gt_dir, patch_size)
    pred_dirs = getattr(args, "pred", None) or \
        ([cfg["pred"]] if "pred" in cfg else None)
    if not pred_dirs:
        raise ValueError("missing required option --pred")
    as_labels = _pick(args, cfg, "labels_as_pred", bool, False)
    runs = []
    for d in pred_dirs:
        if as_labels:
            runs.append(evaluate.labels_as_detections(Path(d), patch_size))
        else:
            runs.append(evaluate.load_predictions(Path(d), patch_size))
    return runs, gts, patch_size


def cmd_eval(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    runs, gts, _ = _load_eval_inputs(args, cfg)
    out_dir = Path(_pick(args, cfg, "out", str, required=True))
    iou_thr = _pick(args, cfg, "iou", float, evaluate.DEFAULT_IOU_THR)
    conf_thr = _pick(args, cfg, "conf", float, 0.0)
    name = _pick(args, cfg, "name", str, "run")

    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = [evaluate.score(dets, gts, iou_thr, conf_thr) for dets in runs]
    if len(metrics) == 1:
        final = metrics[0]
        payload = final.to_dict()
    else:
        final = evaluate.aggregate_runs(metrics)
        payload = {"mean": final.to_dict(),
                   "runs": [m.to_dict() for m in metrics]}
    (out_dir / "report.txt").write_text(evaluate.emit_report([(name, final)]))
    (out_dir / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    log.info("eval: mF1=%.3f whale_overall F1=%.3f", final.mf1, final.whale_overall.f1)
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    runs, gts, _ = _load_eval_inputs(args, cfg)
    out_path = Path(_pick(args, cfg, "out", str, required=True))
    iou_thr = _pick(args, cfg, "iou", float, evaluate.DEFAULT_IOU_THR)
    if len(runs) != 1:
        raise ValueError("sweep expects exactly one --pred directory")
    best = evaluate.sweep_threshold(runs[0], gts, iou_thr)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps({"best_conf_thr": best}, sort_keys=True) + "\n")
    log.info("sweep: best confidence threshold %.2f", best)
    return 0


def cmd_confusion(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    runs, gts, _ = _load_eval_inputs(args, cfg)
    out_dir = Path(_pick(args, cfg, "out", str, required=True))
    iou_thr = _pick(args, cfg, "iou", float, evaluate.DEFAULT_IOU_THR)
    conf_thr = _pick(args, cfg, "conf", float, evaluate.DEFAULT_CONFUSION_CONF)
    if len(runs) != 1:
        raise ValueError("confusion expects exactly one --pred directory")
    cm = evaluate.confusion_matrix(runs[0], gts, conf_thr, iou_thr)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "confusion.txt").write_text(cm.render())
    (out_dir / "confusion.json").write_text(json.dumps(cm.to_dict(), sort_keys=True) + "\n")
    return 0


# ---------------------------------------------------------------------------
# serve

def cmd_serve(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    manifest = _pick(args, cfg, "manifest", str, required=True)
    images = _pick(args, cfg, "images", str, required=True)
    labels = _pick(args, cfg, "labels", str, required=True)
    revisions = _pick(args, cfg, "revisions")
    static = _pick(args, cfg, "static")
    port = _pick(args, cfg, "port", int, 8750)

    from seeker.service import LabelStore, create_app

    store = LabelStore(manifest, images, labels, revisions)
    app = create_app(store, static)
    import uvicorn

    uvicorn.run(app, host="127.0.0.1", port=port, log_level="info")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="seeker",
                     description="point-to-box labeling and evaluation toolchain")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="stretch, tile, and filter a scene")
    _add_common(p)
    p.add_argument("--scene", help="raster file (8- or 16-bit single band)")
    p.add_argument("--meta", help="sidecar path (default <scene>.meta)")
    p.add_argument("--points", help="point CSV; keeps only patches containing points")
    p.add_argument("--out")
    p.add_argument("--patch-size", dest="patch_size", type=int)
    p.add_argument("--stretch", action="store_true", default=None,
                   help="percentile-stretch 16-bit input to 8-bit")
    p.add_argument("--p-low", dest="p_low", type=float)
    p.add_argument("--p-high", dest="p_high", type=float)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("synth", help="generate synthetic labeled patches")
    _add_common(p)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--patches", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--objects", type=int)
    p.add_argument("--touch-prob", dest="touch_prob", type=float)
    p.add_argument("--gsd", type=float)
    p.add_argument("--classes", help="e.g. certain_whale=0.5,harp_seal=0.5")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("label", help="auto-label patches from points")
    _add_common(p)
    p.add_argument("--manifest")
    p.add_argument("--points")
    p.add_argument("--out")
    p.add_argument("--backend", choices=["synthetic", "fixture", "external"])
    p.add_argument("--backend-cmd", dest="backend_cmd",
                   help="command line for the external model sidecar")
    p.add_argument("--fixture", help="fixture mask JSON for the fixture backend")
    p.add_argument("--baseline-buffer", dest="baseline_buffer", action="store_true",
                   default=None, help="emit fixed buffer boxes, no segmentation")
    p.add_argument("--buffer-whale", dest="buffer_whale", type=float)
    p.add_argument("--buffer-seal", dest="buffer_seal", type=float)
    p.add_argument("--buffer-full-side", dest="buffer_full_side", action="store_true",
                   default=None)
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("dataset", help="split and lay out the detection dataset")
    _add_common(p)
    p.add_argument("--manifest")
    p.add_argument("--labels")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--ratios", help="train,val,test fractions (default 0.7,0.1,0.2)")
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("eval", help="score prediction files against labels")
    _add_common(p)
    p.add_argument("--pred", action="append", help="prediction dir (repeat to average runs)")
    p.add_argument("--gt")
    p.add_argument("--patch-size", dest="patch_size", type=int)
    p.add_argument("--iou", type=float)
    p.add_argument("--conf", type=float)
    p.add_argument("--name")
    p.add_argument("--labels-as-pred", dest="labels_as_pred", action="store_true",
                   default=None, help="read 5-field label files as confidence-1.0 detections")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="find the F1-maximizing confidence threshold")
    _add_common(p)
    p.add_argument("--pred", action="append")
    p.add_argument("--gt")
    p.add_argument("--patch-size", dest="patch_size", type=int)
    p.add_argument("--iou", type=float)
    p.add_argument("--labels-as-pred", dest="labels_as_pred", action="store_true", default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("confusion", help="confusion matrix with background class")
    _add_common(p)
    p.add_argument("--pred", action="append")
    p.add_argument("--gt")
    p.add_argument("--patch-size", dest="patch_size", type=int)
    p.add_argument("--iou", type=float)
    p.add_argument("--conf", type=float)
    p.add_argument("--labels-as-pred", dest="labels_as_pred", action="store_true", default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_confusion)

    p = sub.add_parser("serve", help="run the label review HTTP service")
    _add_common(p)
    p.add_argument("--manifest")
    p.add_argument("--images")
    p.add_argument("--labels")
    p.add_argument("--revisions")
    p.add_argument("--static", help="directory of UI static assets to serve at /")
    p.add_argument("--port", type=int)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _setup_logging(bool(args.verbose))
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        log.error("%s", exc)
        return 1
    except BrokenPipeError:
        return 2
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 2
        log.error("runtime error: %s", exc, exc_info=bool(args.verbose))
        return 2


if __name__ == "__main__":
    sys.exit(main())
