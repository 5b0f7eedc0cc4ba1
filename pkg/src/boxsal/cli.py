"""Command-line front end: synth, pseudo-label, train, predict, eval.

Every command is deterministic for fixed seeds: rerunning with identical
inputs reproduces output files byte for byte.  Exit code 0 means all
requested outputs were produced; 1 means some per-image work failed; 2
means bad arguments or unusable inputs.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .core import BoxAnnotation, BoxSalError, DatasetRecord, PseudoLabel, LabelSource, \
    ConfigurationError, rasterize_boxes
from .data_io import SyntheticSceneSpec, generate_synthetic, load_annotations, load_image, \
    save_annotations, save_image
from .grabcut import GrabCutConfig, generate_pseudo_label
from .metrics import evaluate_dataset, format_report
from .predictor import forward, load_checkpoint
from .trainer import load_train_config, train, with_loss_switches


def _fail(message: str, code: int = 2) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _resolve_image_path(image_ref: str, annotations_path: Path, images_dir: Path | None) -> Path:
    if images_dir is not None:
        return images_dir / Path(image_ref).name
    return annotations_path.parent / image_ref


def _pseudo_label_one(args: tuple) -> dict:
    image_path, ann, mode, config = args
    image = load_image(image_path)
    h, w = image.shape[:2]
    stats: dict = {}
    if mode == "box":
        label = PseudoLabel(rasterize_boxes(ann, h, w), LabelSource.RAW_BOX)
        stats["iterations"] = 0
    else:
        record = DatasetRecord(image=image, annotation=ann)
        label = generate_pseudo_label(record, config, stats=stats)
    return {"path": str(image_path), "mask": label.mask,
            "fg_pixels": int(label.mask.sum()), "iterations_used": stats["iterations"]}


def cmd_pseudo_label(args) -> int:
    annotations_path = Path(args.annotations)
    if not annotations_path.is_file():
        return _fail(f"annotation file not found: {annotations_path}")
    images_dir = Path(args.images) if args.images else None
    if images_dir is not None and not images_dir.is_dir():
        return _fail(f"image directory not found: {images_dir}")
    try:
        annotations = load_annotations(annotations_path)
    except BoxSalError as exc:
        return _fail(str(exc))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = GrabCutConfig(components=args.k, iterations=args.iters,
                           gamma_pairwise=args.gamma, seed=args.seed)

    tasks = []
    for ann in sorted(annotations, key=lambda a: a.image_ref):
        image_path = _resolve_image_path(ann.image_ref, annotations_path, images_dir)
        tasks.append((image_path, ann, args.mode, config))

    failures = 0
    outcomes = []
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_pseudo_label_one, task) for task in tasks]
            for task, future in zip(tasks, futures):
                try:
                    outcomes.append(future.result())
                except BoxSalError as exc:
                    print(f"error: {task[0]}: {exc}", file=sys.stderr)
                    failures += 1
    else:
        for task in tasks:
            try:
                outcomes.append(_pseudo_label_one(task))
            except BoxSalError as exc:
                print(f"error: {task[0]}: {exc}", file=sys.stderr)
                failures += 1
    for result in outcomes:
        out_path = out_dir / (Path(result["path"]).stem + ".png")
        save_image(result["mask"], out_path)
        print(json.dumps({"path": result["path"], "fg_pixels": result["fg_pixels"],
                          "iterations_used": result["iterations_used"]}, sort_keys=True))
    if failures:
        print(f"error: {failures} of {len(tasks)} images failed", file=sys.stderr)
        return 1
    return 0


def _load_training_records(data_dir: Path, labels_dir: Path) -> list[DatasetRecord]:
    annotations_path = data_dir / "annotations.json"
    if not annotations_path.is_file():
        raise ConfigurationError(f"no annotations.json under {data_dir}")
    annotations = load_annotations(annotations_path)
    missing = []
    records = []
    for ann in sorted(annotations, key=lambda a: a.image_ref):
        image_path = annotations_path.parent / ann.image_ref
        label_path = labels_dir / (Path(ann.image_ref).stem + ".png")
        if not label_path.is_file():
            missing.append(ann.image_ref)
            continue
        image = load_image(image_path)
        mask = load_image(label_path)
        label = PseudoLabel((mask > 0.5).astype(np.float64), LabelSource.GRABCUT)
        records.append(DatasetRecord(image=image, annotation=ann, pseudo_label=label))
    if missing:
        raise ConfigurationError(f"missing pseudo-labels for: {', '.join(missing)}")
    return records


def cmd_train(args) -> int:
    try:
        config = load_train_config(args.config)
        config = with_loss_switches(config, fore=args.fore == "on", back=args.back == "on")
        if args.epochs is not None:
            config = replace(config, epochs=args.epochs)
        records = _load_training_records(Path(args.data), Path(args.labels))
        if not records:
            return _fail("no training records found")
        _, log = train(records, config, out_dir=args.out)
    except BoxSalError as exc:
        return _fail(str(exc))
    print(f"trained {config.epochs} epochs on {len(records)} images; "
          f"final loss {log[-1]['loss_total']:.4f}")
    return 0


def cmd_predict(args) -> int:
    try:
        state, _, _ = load_checkpoint(args.checkpoint)
    except (BoxSalError, OSError) as exc:
        return _fail(f"cannot load checkpoint: {exc}")
    images_dir = Path(args.images)
    if not images_dir.is_dir():
        return _fail(f"image directory not found: {images_dir}")
    paths = sorted(images_dir.glob("*.png"))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not paths:
        print("warning: no .png images found; nothing to do", file=sys.stderr)
        return 0

    def predict_one(path: Path) -> float:
        started = time.perf_counter()
        sal, _ = forward(state, load_image(path))
        save_image(sal, out_dir / path.name)
        return time.perf_counter() - started

    failures = 0
    elapsed = []
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_predict_worker,
                                   (args.checkpoint, str(p), str(out_dir / p.name)))
                       for p in paths]
            for path, future in zip(paths, futures):
                try:
                    elapsed.append(future.result())
                except BoxSalError as exc:
                    print(f"error: {path}: {exc}", file=sys.stderr)
                    failures += 1
    else:
        for path in paths:
            try:
                elapsed.append(predict_one(path))
            except BoxSalError as exc:
                print(f"error: {path}: {exc}", file=sys.stderr)
                failures += 1
    if elapsed:
        print(f"predicted {len(elapsed)} images, mean {np.mean(elapsed):.4f}s/image")
    if failures:
        return 1
    return 0


def _predict_worker(task: tuple[str, str, str]) -> float:
    checkpoint, image_path, out_path = task
    state, _, _ = load_checkpoint(checkpoint)
    started = time.perf_counter()
    sal, _ = forward(state, load_image(image_path))
    save_image(sal, out_path)
    return time.perf_counter() - started


def cmd_eval(args) -> int:
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    if not pred_dir.is_dir() or not gt_dir.is_dir():
        return _fail("prediction and ground-truth directories must exist")
    pred_names = {p.name for p in pred_dir.glob("*.png")}
    gt_names = {p.name for p in gt_dir.glob("*.png")}
    unmatched = sorted(pred_names ^ gt_names)
    if unmatched:
        return _fail("unmatched files: " + ", ".join(unmatched))
    names = sorted(pred_names)
    if not names:
        return _fail("no .png files to evaluate")
    preds = [load_image(pred_dir / n) for n in names]
    gts = [(load_image(gt_dir / n) > 0.5).astype(np.float64) for n in names]
    report = evaluate_dataset(preds, gts)
    if args.format == "json-lines":
        payload = {"mae": report.mae, "f_beta": report.f_beta, "e_xi": report.e_xi,
                   "s_alpha": report.s_alpha, "images": len(names),
                   "degenerate": list(report.degenerate)}
        print(json.dumps(payload, sort_keys=True))
        if args.per_image:
            for name, row in zip(names, report.per_image):
                print(json.dumps({"image": name, "mae": row[0], "f_beta": row[1],
                                  "e_xi": row[2], "s_alpha": row[3]}, sort_keys=True))
    else:
        print("S      F      E      MAE")
        print(format_report(report))
        if args.per_image:
            for name, row in zip(names, report.per_image):
                print(f"{name}  mae={row[0]:.3f} f={row[1]:.3f} e={row[2]:.3f} s={row[3]:.3f}")
    return 0


def cmd_synth(args) -> int:
    out_dir = Path(args.out)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "gt").mkdir(parents=True, exist_ok=True)
    if args.spec:
        try:
            base = json.loads(Path(args.spec).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            return _fail(f"cannot read scene spec {args.spec}: {exc}")
        if "shapes" in base:
            base["shapes"] = tuple(base["shapes"])
        if "fg_colors" in base:
            base["fg_colors"] = tuple(tuple(c) for c in base["fg_colors"])
        if "bg_color" in base:
            base["bg_color"] = tuple(base["bg_color"])
    else:
        # instance extents default to a salient-object fraction of the canvas
        min_size = args.min_size if args.min_size else max(2, round(args.size * 0.45))
        max_size = args.max_size if args.max_size else max(2, round(args.size * 0.62))
        base = dict(height=args.size, width=args.size, num_instances=args.instances,
                    shapes=tuple(args.shapes.split(",")), min_size=min_size,
                    max_size=max_size, noise_sigma=args.noise)
    base.pop("seed", None)
    annotations = []
    for i in range(args.count):
        try:
            spec = SyntheticSceneSpec(seed=args.seed + i, **base)
        except (TypeError, ValueError) as exc:
            return _fail(f"bad scene spec: {exc}")
        record = generate_synthetic(spec)
        name = f"{i:04d}.png"
        save_image(record.image, out_dir / "images" / name)
        save_image(record.gt, out_dir / "gt" / name)
        annotations.append(BoxAnnotation(boxes=record.annotation.boxes,
                                         image_ref=f"images/{name}"))
    save_annotations(annotations, out_dir / "annotations.json")
    print(f"wrote {args.count} scenes under {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boxsal",
        description="Weakly supervised saliency detection from bounding boxes")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pseudo-label", help="generate pseudo-label masks from boxes")
    p.add_argument("--images", default=None, help="image directory (default: resolve "
                                                  "paths relative to the annotation file)")
    p.add_argument("--annotations", required=True, help="annotation JSON file")
    p.add_argument("--out", required=True, help="output mask directory")
    p.add_argument("--mode", choices=("grabcut", "box"), default="grabcut",
                   help="grabcut refinement or raw rasterized boxes")
    p.add_argument("--iters", type=int, default=5, help="segmentation rounds")
    p.add_argument("--k", type=int, default=5, help="GMM components per side")
    p.add_argument("--gamma", type=float, default=50.0, help="pairwise smoothness weight")
    p.add_argument("--seed", type=int, default=17)
    p.add_argument("--jobs", type=int, default=1, help="parallel workers across images")
    p.set_defaults(func=cmd_pseudo_label)

    p = sub.add_parser("train", help="train the saliency predictor")
    p.add_argument("--config", required=True, help="training config JSON")
    p.add_argument("--data", required=True, help="dataset dir (images/ + annotations.json)")
    p.add_argument("--labels", required=True, help="pseudo-label mask directory")
    p.add_argument("--out", required=True, help="output dir for checkpoints and loss log")
    p.add_argument("--fore", choices=("on", "off"), default="on",
                   help="smoothness loss switch")
    p.add_argument("--back", choices=("on", "off"), default="on",
                   help="background loss switch")
    p.add_argument("--epochs", type=int, default=None, help="override config epochs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="emit saliency maps for a directory of images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--per-image", action="store_true")
    p.add_argument("--format", choices=("text", "json-lines"), default="text")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic corpus with ground truth")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--spec", default=None,
                   help="JSON file of scene-spec fields (overrides the flags below)")
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--instances", type=int, default=1)
    p.add_argument("--shapes", default="blob", help="comma list: rectangle,ellipse,blob")
    p.add_argument("--noise", type=float, default=0.02)
    p.add_argument("--min-size", type=int, default=0,
                   help="smallest instance extent (default: scaled to --size)")
    p.add_argument("--max-size", type=int, default=0,
                   help="largest instance extent (default: scaled to --size)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
