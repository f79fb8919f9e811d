"""Command-line entry point: ``adgan <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import config as config_io

log = logging.getLogger("adgan")


def _write_manifest(out: Path, args, extra: dict | None = None):
    out.mkdir(parents=True, exist_ok=True)
    record = {
        "command": args.command,
        "args": {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"},
        "version": __version__,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    if extra:
        record.update(extra)
    (out / "run_manifest.json").write_text(json.dumps(record, indent=1, default=str))


def _load_config(args) -> config_io.RunConfig:
    if getattr(args, "config", None):
        cfg = config_io.load(args.config)
    elif getattr(args, "preset", "full") == "desk":
        cfg = config_io.desk_config()
    else:
        cfg = config_io.RunConfig()
    return cfg


def _inputs(path) -> list[Path]:
    from .imageio import list_images

    path = Path(path)
    return [path] if path.is_file() else list_images(path)


def _load_generator(ckpt):
    from .inference import default_tile
    from .trainer import TrainState

    state = TrainState.load(ckpt)
    state.G.eval()
    return state.G, default_tile(state.cfg.crop)


# -- mask / data generation --------------------------------------------------

def cmd_synth_masks(args):
    from .imageio import save_image
    from .masksynth import generate_mask_spec, rasterize_instance_mask, rasterize_mask

    cfg = _load_config(args).masksynth
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = np.random.SeedSequence(args.seed).generate_state(args.count).tolist()
    for i, s in enumerate(seeds):
        spec = generate_mask_spec(cfg, s)
        mask = rasterize_instance_mask(spec, args.edge_width) if args.instance else rasterize_mask(spec)
        save_image(mask, out / f"mask_{i:05d}.png", 8)
        (out / f"mask_{i:05d}.json").write_text(json.dumps(spec.to_dict(), indent=1))
    _write_manifest(out, args, {"n_masks": args.count})
    print(f"wrote {args.count} masks to {out}")


def cmd_gen_phantom(args):
    from .phantom import make_dataset

    cfg = _load_config(args)
    manifest = make_dataset(args.count, cfg.masksynth, cfg.phantom, args.seed, args.out,
                            instance=args.instance, bit_depth=args.bit_depth)
    print(f"wrote {manifest['n_images']} phantoms to {args.out} (manifest hash {manifest['hash'][:12]})")


# -- training -----------------------------------------------------------------

def cmd_train(args):
    from .plotting import plot_training_log
    from .trainer import fit

    cfg = _load_config(args)
    if args.total_iters is not None:
        cfg.train.total_iters = args.total_iters
        cfg.train.const_lr_iters = min(cfg.train.const_lr_iters, args.total_iters)
    out = Path(args.out)
    results = []
    for k in range(args.repeats):
        cfg.train.seed = args.seed + k
        run_dir = out if args.repeats == 1 else out / f"repeat_{k}"
        ckpt, log_csv = fit(args.images, args.masks, cfg.generator, cfg.train, run_dir,
                            resume=args.resume, progress=args.verbose)
        fig = plot_training_log(log_csv, run_dir / "training_curves.png")
        config_io.save(cfg, run_dir / "config.yaml")
        results.append({"checkpoint": str(ckpt), "log": str(log_csv), "figure": str(fig)})
        print(f"checkpoint: {ckpt}")
    _write_manifest(out, args, {"runs": results})


# -- inference ----------------------------------------------------------------

def cmd_translate(args):
    from .imageio import load_image, load_mask, save_image
    from .inference import translate

    G, tile = _load_generator(args.ckpt)
    src, dst = (0, 1) if args.direction == "image2mask" else (1, 0)
    out = Path(args.out)
    for p in _inputs(args.input):
        x = load_image(p) if src == 0 else load_mask(p)
        save_image(np.clip(translate(G, x, src, dst, tile=tile), -1, 1), out / f"{p.stem}.png", 8)
    _write_manifest(out, args)


def cmd_segment(args):
    from .imageio import load_image, save_image, save_labels
    from .inference import segment

    G, tile = _load_generator(args.ckpt)
    out = Path(args.out)
    for p in _inputs(args.input):
        mask, labels = segment(G, load_image(p), args.threshold, args.erosion_radius, tile=tile)
        save_image(np.where(mask, 1.0, -1.0), out / f"{p.stem}.png", 8)
        save_labels(labels, out / "labels" / f"{p.stem}.png")
    _write_manifest(out, args)


def cmd_segment_instances(args):
    from .imageio import load_image, save_labels
    from .inference import instance_segment

    G, tile = _load_generator(args.ckpt)
    out = Path(args.out)
    for p in _inputs(args.input):
        save_labels(instance_segment(G, load_image(p), args.t_lo, args.t_hi, tile=tile), out / f"{p.stem}.png")
    _write_manifest(out, args)


def cmd_synthesize(args):
    from .imageio import load_mask, save_image
    from .inference import synthesize

    G, tile = _load_generator(args.ckpt)
    out = Path(args.out)
    for p in _inputs(args.input):
        save_image(np.clip(synthesize(G, load_mask(p), tile=tile), -1, 1), out / f"{p.stem}.png", 16)
    _write_manifest(out, args)


def cmd_interpolate(args):
    from .imageio import load_image, load_mask, save_image
    from .inference import interpolate_domains
    from .plotting import plot_filmstrip

    G, _ = _load_generator(args.ckpt)
    src, dst = (0, 1) if args.direction == "image2mask" else (1, 0)
    out = Path(args.out)
    for p in _inputs(args.input):
        x = load_image(p) if src == 0 else load_mask(p)
        frames = interpolate_domains(G, x, args.steps, src, dst)
        for k, f in enumerate(frames):
            save_image(np.clip(f, -1, 1), out / p.stem / f"frame_{k:02d}.png", 8)
        alphas = np.linspace(0, 1, args.steps)
        plot_filmstrip(frames, out / f"{p.stem}_interpolation.png", [f"{a:.2f}" for a in alphas])
    _write_manifest(out, args)


# -- evaluation -------------------------------------------------------------------

def _paired(pred_dir, gt_dir) -> list[tuple[Path, Path]]:
    from .imageio import list_images

    gt = {p.stem: p for p in list_images(gt_dir)}
    pairs = [(p, gt[p.stem]) for p in list_images(pred_dir) if p.stem in gt]
    if not pairs:
        raise ValueError(f"no matching file names between {pred_dir} and {gt_dir}")
    return pairs


def _as_labels(path, binary: bool):
    from .imageio import read_raw
    from .metrics import connected_components

    arr = read_raw(path)
    return connected_components(arr > 0) if binary else arr.astype(np.int32)


def cmd_evaluate(args):
    from .metrics import object_f1, pixel_metrics, summarize
    from .plotting import plot_score_distribution

    rows = []
    for pred_p, gt_p in _paired(args.pred, args.gt):
        pred = _as_labels(pred_p, binary=not args.instance)
        gt = _as_labels(gt_p, binary=not args.instance)
        row = {"image": pred_p.stem}
        row |= pixel_metrics(pred > 0, gt > 0).to_dict()
        obj = object_f1(pred, gt, args.iou_threshold, args.det)
        row |= {f"obj_{k}": v for k, v in obj.to_dict().items()}
        rows.append(row)
    keys = ["precision", "recall", "dice", "obj_f1", "obj_seg_score"]
    aggregate = {k: summarize(r[k] for r in rows) for k in keys}
    if args.det is not None:
        aggregate["op_csb"] = summarize(r["obj_op_csb"] for r in rows)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps({"per_image": rows, "aggregate": aggregate}, indent=1))
    with open(out.with_suffix(".csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    plot_score_distribution({k: [r[k] for r in rows] for k in keys}, out.with_suffix(".png"), "per-image scores")
    for k in keys:
        print(f"{k:>14s}: {aggregate[k]['mean']:.4f} ± {aggregate[k]['std']:.4f}")


def cmd_diagnose(args):
    from .diagnostics import lossy_report
    from .metrics import summarize
    from .plotting import plot_offsets

    rows = []
    for pred_p, ref_p in _paired(args.pred, args.ref):
        rep = lossy_report(_as_labels(pred_p, args.binary), _as_labels(ref_p, args.binary))
        rows.append({"image": pred_p.stem} | rep.to_dict())
    offsets = [o for r in rows for o in r["matched_centroid_offsets"]]
    deltas = [r["count_delta"] for r in rows]
    aggregate = {
        "abs_count_delta": summarize(abs(d) for d in deltas),
        "mean_offset": summarize(offsets),
        "per_object_iou": summarize(i for r in rows for i in r["per_object_iou"]),
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps({"per_image": rows, "aggregate": aggregate}, indent=1))
    plot_offsets(offsets, deltas, out.with_suffix(".png"))
    print(f"mean |count delta| {aggregate['abs_count_delta']['mean']:.3f}, "
          f"mean offset {aggregate['mean_offset']['mean']:.3f} px")


def cmd_export_features(args):
    from .diagnostics import export_content_features
    from .imageio import load_image, load_mask

    G, _ = _load_generator(args.ckpt)
    domain = 0 if args.domain == "image" else 1
    loader = load_image if domain == 0 else load_mask
    images = {p.stem: loader(p) for p in _inputs(args.images)}
    print(f"wrote {export_content_features(G, images, domain, args.out)}")


def cmd_describe_checkpoint(args):
    import torch

    ckpt = torch.load(args.ckpt, map_location="cpu", weights_only=False)
    print(f"iteration: {ckpt['iteration']}")
    print(f"generator_config: {json.dumps(ckpt['generator_config'])}")
    print(f"train_config: {json.dumps(ckpt['train_config'], default=str)}")
    for part in ("generator", "discriminator"):
        sd = ckpt[part]
        print(f"{part}: {sum(v.numel() for v in sd.values())} parameters")
        for name, v in sd.items():
            print(f"  {name} {tuple(v.shape)}")


def cmd_default_config(args):
    cfg = config_io.desk_config() if args.preset == "desk" else config_io.RunConfig()
    text = config_io.dumps(cfg)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adgan", description="Unsupervised nuclei segmentation by unpaired image-to-mask translation.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--seed", type=int, default=0, help="global random seed (default 0)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    # repeated on every subcommand so the flags may follow it; SUPPRESS keeps the global value otherwise
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS, help="log progress")

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text, parents=[common])
        p.set_defaults(func=func)
        return p

    def cfg_args(p):
        p.add_argument("--config", type=Path, help="YAML run config; unknown keys are rejected")
        p.add_argument("--preset", choices=["full", "desk"], default="full", help="defaults used when --config is absent")

    def ckpt_args(p, input_name="--input"):
        p.add_argument("--ckpt", type=Path, required=True, help="checkpoint written by 'train'")
        p.add_argument(input_name, type=Path, required=True, help="image file or directory")
        p.add_argument("--out", type=Path, required=True, help="output directory")

    p = add("synth-masks", cmd_synth_masks, "Generate synthetic ellipse masks (PNG + JSON sidecar).")
    cfg_args(p)
    p.add_argument("--count", type=int, required=True, help="number of masks")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--instance", action="store_true", help="ternary masks with gray object edges")
    p.add_argument("--edge-width", type=int, default=2, help="edge ring width in pixels (default 2)")

    p = add("gen-phantom", cmd_gen_phantom, "Render a phantom microscopy dataset with quarantined ground truth.")
    cfg_args(p)
    p.add_argument("--count", type=int, required=True, help="number of images")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--instance", action="store_true", help="unpaired masks use the ternary edge encoding")
    p.add_argument("--bit-depth", type=int, choices=[8, 16], default=16, help="image bit depth (default 16)")

    p = add("train", cmd_train, "Train on unpaired image and mask directories.")
    cfg_args(p)
    p.add_argument("--images", type=Path, required=True, help="image domain directory")
    p.add_argument("--masks", type=Path, required=True, help="mask domain directory (unpaired)")
    p.add_argument("--out", type=Path, required=True, help="run directory")
    p.add_argument("--total-iters", type=int, help="override train.total_iters")
    p.add_argument("--resume", type=Path, help="continue from this checkpoint")
    p.add_argument("--repeats", type=int, default=1, help="independent runs with seeds seed..seed+repeats-1")

    p = add("translate", cmd_translate, "Translate images between domains.")
    ckpt_args(p)
    p.add_argument("--direction", choices=["image2mask", "mask2image"], default="image2mask")

    p = add("segment", cmd_segment, "Semantic segmentation (8-bit binary PNG + watershed labels).")
    ckpt_args(p)
    p.add_argument("--threshold", type=float, default=0.0, help="binarization threshold (default 0.0)")
    p.add_argument("--erosion-radius", type=int, default=2, help="marker erosion radius (default 2)")

    p = add("segment-instances", cmd_segment_instances, "Instance segmentation from a model trained on ternary masks.")
    ckpt_args(p)
    p.add_argument("--t-lo", type=float, default=-0.33, help="background/edge threshold (default -0.33)")
    p.add_argument("--t-hi", type=float, default=0.33, help="edge/interior threshold (default 0.33)")

    p = add("synthesize", cmd_synthesize, "Mask -> image synthesis.")
    ckpt_args(p)

    p = add("interpolate", cmd_interpolate, "Decode with linearly interpolated domain labels.")
    ckpt_args(p)
    p.add_argument("--steps", type=int, default=10, help="number of frames (default 10)")
    p.add_argument("--direction", choices=["image2mask", "mask2image"], default="image2mask")

    p = add("evaluate", cmd_evaluate, "Pixel and object metrics against ground truth.")
    p.add_argument("--pred", type=Path, required=True, help="prediction directory")
    p.add_argument("--gt", type=Path, required=True, help="ground-truth directory (matching file names)")
    p.add_argument("--instance", action="store_true", help="inputs are 16-bit label maps rather than binary masks")
    p.add_argument("--iou-threshold", type=float, default=0.5, help="object matching IoU (default 0.5)")
    p.add_argument("--det", type=float, help="externally computed DET score, enables OP_csb")
    p.add_argument("--out", type=Path, required=True, help="report JSON (CSV and PNG written alongside)")

    p = add("diagnose", cmd_diagnose, "Lossy-transformation report: count deltas, centroid offsets, IoU.")
    p.add_argument("--pred", type=Path, required=True, help="predicted label maps")
    p.add_argument("--ref", type=Path, required=True, help="reference label maps")
    p.add_argument("--binary", action="store_true", help="inputs are binary masks; label by connected components")
    p.add_argument("--out", type=Path, required=True, help="report JSON (PNG written alongside)")

    p = add("export-features", cmd_export_features, "Export average-pooled content features as CSV.")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--images", type=Path, required=True, help="image file or directory")
    p.add_argument("--domain", choices=["image", "mask"], required=True)
    p.add_argument("--out", type=Path, required=True, help="CSV path")

    p = add("describe-checkpoint", cmd_describe_checkpoint, "Print iteration, configs and parameter shapes.")
    p.add_argument("--ckpt", type=Path, required=True)

    p = add("default-config", cmd_default_config, "Emit the default run config as YAML.")
    p.add_argument("--preset", choices=["full", "desk"], default="full")
    p.add_argument("--out", type=Path, help="file to write (stdout if omitted)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"adgan {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
