"""Command-line front-end: prepare | train | edit | eval.

Every stage is reproducible under a fixed seed and config; the config hash
is embedded in manifests, checkpoints, and run records. Exit codes:
0 success, 1 validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import augment as augment_mod
from . import evalharness, imgcore, masker, matcher, sampler
from .config import RunConfig, load_config, stable_seed
from .diffcore import (
    DualUNet,
    NoiseSchedule,
    Trainer,
    TrainingSample,
    cfg_sample,
    load_checkpoint,
    save_checkpoint,
)

logger = logging.getLogger("mimicforge")


def _setup_threads():
    import torch

    n = int(os.environ.get("MIMICFORGE_THREADS", "1"))
    torch.set_num_threads(max(1, n))


def _preprocess(img: np.ndarray, resolution: int, binary: bool = False) -> np.ndarray:
    """Pad to square, resize to the canonical resolution."""
    sq, _ = imgcore.pad_to_square(img)
    out = imgcore.resize_bilinear(sq, resolution, resolution)
    if binary:
        out = (out > 0.5).astype(np.float32)
    return out


def _load_video_frames(video_dir: str, resolution: int) -> list[np.ndarray]:
    frames = []
    for name in sorted(os.listdir(video_dir)):
        if name.endswith(".png"):
            img = imgcore.load_png(os.path.join(video_dir, name))
            if img.shape[2] != 3:
                img = np.repeat(img[:, :, :1], 3, axis=2)
            frames.append(_preprocess(img, resolution))
    return frames


def cmd_prepare(cfg: RunConfig, dataset_root: str, out_dir: str) -> int:
    res = cfg.resolution
    videos_root = os.path.join(dataset_root, "videos")
    stills_root = os.path.join(dataset_root, "stills")
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "masks"), exist_ok=True)

    video_entries = []
    if os.path.isdir(videos_root):
        for vid in sorted(os.listdir(videos_root)):
            vdir = os.path.join(videos_root, vid)
            if not os.path.isdir(vdir):
                continue
            frames = _load_video_frames(vdir, res)
            if len(frames) < 2:
                continue
            pairs = sampler.select_pairs(
                frames, cfg.band, cfg.max_pairs_per_video,
                rng_seed=stable_seed(cfg.seed, "select", vid), video_id=vid,
            )
            for pair in pairs:
                ia, ib = pair.origin.idx_a, pair.origin.idx_b
                tag = f"video_{vid}_{ia:04d}_{ib:04d}"
                try:
                    src_feats = matcher.detect_and_describe(
                        pair.source, cfg.sift_contrast_threshold, cfg.sift_edge_ratio)
                    ref_feats = matcher.detect_and_describe(
                        pair.reference, cfg.sift_contrast_threshold, cfg.sift_edge_ratio)
                    matches = matcher.match_ratio_test(src_feats, ref_feats, cfg.sift_ratio)
                except imgcore.InvalidImageError:
                    matches = matcher.KeypointMatchSet()
                gm = masker.grid_mask(
                    res, res, matches, cfg.mask_policy,
                    rng_seed=stable_seed(cfg.seed, "gridmask", tag),
                )
                src_rel = f"images/{tag}_src.png"
                ref_rel = f"images/{tag}_ref.png"
                mask_rel = f"masks/{tag}.png"
                imgcore.save_png(os.path.join(out_dir, src_rel), pair.source)
                imgcore.save_png(os.path.join(out_dir, ref_rel), pair.reference)
                imgcore.save_png(os.path.join(out_dir, mask_rel), gm.rendered)
                with open(os.path.join(out_dir, f"masks/{tag}.json"), "w") as f:
                    f.write(gm.to_sidecar())
                video_entries.append({
                    "kind": "video", "video_id": vid, "idx_a": ia, "idx_b": ib,
                    "ssim": pair.ssim_score, "source": src_rel, "reference": ref_rel,
                    "mask": mask_rel, "matches": len(matches),
                })

    pseudo_entries = []
    if os.path.isdir(stills_root):
        for image_id in sorted(os.listdir(stills_root)):
            sdir = os.path.join(stills_root, image_id)
            img_path = os.path.join(sdir, "image.png")
            if not os.path.isfile(img_path):
                continue
            image = _preprocess(imgcore.load_png(img_path), res)
            if image.shape[2] != 3:
                image = np.repeat(image[:, :, :1], 3, axis=2)
            object_masks = [
                _preprocess(imgcore.load_png(os.path.join(sdir, name)), res, binary=True)
                for name in sorted(os.listdir(sdir))
                if name.startswith("mask_") and name.endswith(".png")
            ]
            object_masks = [m for m in object_masks if m.max() > 0]
            if not object_masks:
                continue
            still = sampler.SegmentedStill(image=image, object_masks=object_masks, image_id=image_id)
            pair = sampler.make_pseudo_pair(
                still, rng_seed=stable_seed(cfg.seed, "pseudo", image_id), cfg=cfg.augment)
            seg = masker.segmentation_mask(
                pair.object_mask, rng_seed=stable_seed(cfg.seed, "dilate", image_id))
            tag = f"pseudo_{image_id}"
            src_rel = f"images/{tag}_src.png"
            ref_rel = f"images/{tag}_ref.png"
            mask_rel = f"masks/{tag}.png"
            imgcore.save_png(os.path.join(out_dir, src_rel), pair.source)
            imgcore.save_png(os.path.join(out_dir, ref_rel), pair.reference)
            imgcore.save_png(os.path.join(out_dir, mask_rel), seg)
            pseudo_entries.append({
                "kind": "pseudo", "image_id": image_id, "ssim": pair.ssim_score,
                "source": src_rel, "reference": ref_rel, "mask": mask_rel,
            })

    if not video_entries and not pseudo_entries:
        logger.error("empty dataset: no usable videos or stills under %s", dataset_root)
        return 1

    mixed = list(
        sampler.mix_sources(
            iter(video_entries), iter(pseudo_entries), cfg.video_fraction,
            rng_seed=stable_seed(cfg.seed, "mix"),
        )
    )
    manifest_path = os.path.join(out_dir, "pairs.jsonl")
    with open(manifest_path, "w") as f:
        f.write(json.dumps({"config_hash": cfg.config_hash(), "seed": cfg.seed}) + "\n")
        for entry in mixed:
            f.write(json.dumps(entry, sort_keys=True) + "\n")
    logger.info("wrote %d pairs (%d video, %d pseudo) to %s",
                len(mixed), len(video_entries), len(pseudo_entries), manifest_path)
    return 0


def _read_pair_manifest(path):
    with open(path) as f:
        lines = [json.loads(line) for line in f if line.strip()]
    if not lines or "config_hash" not in lines[0]:
        raise ValueError("pair manifest missing header line")
    return lines[0], lines[1:]


def _opt_state_tensors(trainer: Trainer) -> dict:
    import torch

    out = {}
    for name, param in trainer.model.named_parameters():
        state = trainer.opt.state.get(param)
        if not state:
            continue
        out[f"opt.{name}.exp_avg"] = state["exp_avg"]
        out[f"opt.{name}.exp_avg_sq"] = state["exp_avg_sq"]
        out[f"opt.{name}.step"] = torch.as_tensor(float(state["step"]))
    return out


def _restore_opt_state(trainer: Trainer, state: dict) -> None:
    import torch

    for name, param in trainer.model.named_parameters():
        key = f"opt.{name}.exp_avg"
        if key not in state:
            continue
        trainer.opt.state[param] = {
            "step": torch.tensor(float(state[f"opt.{name}.step"])),
            "exp_avg": state[key].clone(),
            "exp_avg_sq": state[f"opt.{name}.exp_avg_sq"].clone(),
        }


def cmd_train(cfg: RunConfig, manifest: str, ckpt_out: str, resume: str | None = None) -> int:
    _setup_threads()
    header, entries = _read_pair_manifest(manifest)
    if not entries:
        logger.error("no pairs in manifest %s", manifest)
        return 1
    base = os.path.dirname(os.path.abspath(manifest))
    samples = [
        TrainingSample(
            source=imgcore.load_png(os.path.join(base, e["source"])),
            reference=imgcore.load_png(os.path.join(base, e["reference"])),
            mask=(imgcore.load_png(os.path.join(base, e["mask"])) > 0.5).astype(np.float32),
        )
        for e in entries
    ]

    trainer = Trainer(cfg.train)
    start_step = 0
    if resume:
        state, _, start_step = load_checkpoint(resume)
        model_state = {k: v for k, v in state.items() if not k.startswith("opt.")}
        trainer.model.load_state_dict(model_state)
        _restore_opt_state(trainer, state)
        trainer.step_count = start_step
        # replay the seeded stream so the data/noise sequence continues
        # exactly where the interrupted run stopped
        for _ in range(start_step):
            trainer.rng.integers(0, len(samples), size=cfg.train.batch)
            trainer.rng.random()
            trainer.rng.random()
            trainer.rng.integers(0, trainer.schedule.T)
            for _ in range(cfg.train.batch):
                trainer.rng.integers(0, 2**31)

    log_path = ckpt_out + ".log.jsonl"
    mode = "a" if resume else "w"
    try:
        with open(log_path, mode) as logf:
            for step in range(start_step, cfg.train.steps):
                idx = trainer.rng.integers(0, len(samples), size=cfg.train.batch)
                batch = [samples[i] for i in idx]
                loss = trainer.train_step(batch)
                if (step + 1) % cfg.train.log_interval == 0:
                    logf.write(json.dumps({"step": step + 1, "loss": loss}) + "\n")
    except FloatingPointError as exc:
        logger.error("training aborted: %s; saving partial checkpoint", exc)
        state = dict(trainer.model.state_dict())
        state.update(_opt_state_tensors(trainer))
        save_checkpoint(ckpt_out, state, cfg.config_hash(), trainer.step_count)
        return 2

    state = dict(trainer.model.state_dict())
    state.update(_opt_state_tensors(trainer))
    save_checkpoint(ckpt_out, state, cfg.config_hash(), trainer.step_count)
    logger.info("checkpoint written to %s at step %d", ckpt_out, trainer.step_count)
    return 0


def cmd_edit(
    cfg: RunConfig,
    ckpt: str,
    source: str,
    mask: str,
    reference: str,
    out: str,
    depth: str | None = None,
    scale: float | None = None,
    steps: int | None = None,
    seed: int | None = None,
) -> int:
    _setup_threads()
    scale = cfg.train.guidance_scale if scale is None else scale
    steps = cfg.train.sample_steps if steps is None else steps
    seed = cfg.seed if seed is None else seed

    state, ckpt_hash, _ = load_checkpoint(ckpt)
    model = DualUNet(widths=cfg.train.widths)
    try:
        model.load_state_dict({k: v for k, v in state.items() if not k.startswith("opt.")})
    except RuntimeError as exc:
        logger.error("checkpoint does not match the configured model: %s", exc)
        return 1
    model.eval()

    res = cfg.resolution
    src = _preprocess(imgcore.load_png(source), res)
    msk = _preprocess(imgcore.load_png(mask), res, binary=True)
    ref = _preprocess(imgcore.load_png(reference), res)
    dep = _preprocess(imgcore.load_png(depth), res) if depth else None
    if src.shape[2] != 3 or ref.shape[2] != 3:
        logger.error("source and reference must be color images")
        return 1

    schedule = NoiseSchedule(T=cfg.train.schedule_T)
    result = cfg_sample(src, msk, ref, dep, scale, steps, seed, model, schedule)
    imgcore.save_png(out, result)
    record = {
        "seed": seed, "scale": scale, "steps": steps,
        "config_hash": cfg.config_hash(), "checkpoint_hash": ckpt_hash,
    }
    with open(out + ".json", "w") as f:
        json.dump(record, f, indent=2, sort_keys=True)
    return 0


def cmd_eval(manifest: str, outputs_dir: str, report_out: str, scores: str | None = None) -> int:
    records, issues = evalharness.validate_manifest(manifest)
    for issue in issues:
        logger.warning("manifest issue [%s]: %s", issue.record_id, issue.message)
    if not records:
        logger.error("no valid records in %s", manifest)
        return 1
    reports = evalharness.evaluate(
        records, outputs_dir, os.path.dirname(os.path.abspath(manifest)), scores)
    evalharness.emit_report(reports, report_out, "json")
    evalharness.emit_report(reports, os.path.splitext(report_out)[0] + ".md", "markdown-table")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mimicforge")
    parser.add_argument("--config", help="TOML config file")
    parser.add_argument("--seed", type=int, help="override the run seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="build a training-pair manifest from a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="output directory for manifest, images, masks")

    p = sub.add_parser("train", help="train the dual-U-Net on a pair manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ckpt-out", required=True)
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--steps", type=int, help="override training steps")

    p = sub.add_parser("edit", help="regenerate the masked region of a source image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--source", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--depth")
    p.add_argument("--scale", type=float, help="guidance scale (default from config: 5)")
    p.add_argument("--steps", type=int, help="sampling steps")
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="score benchmark outputs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--outputs", required=True)
    p.add_argument("--scores", help="external embedding/LPIPS scores (JSON lines)")
    p.add_argument("--report-out", required=True)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "steps", None) is not None and args.command == "train":
        overrides["steps"] = args.steps
    try:
        cfg = load_config(args.config, overrides)
    except (OSError, ValueError, TypeError) as exc:
        logger.error("bad config: %s", exc)
        return 1

    try:
        if args.command == "prepare":
            return cmd_prepare(cfg, args.dataset, args.out)
        if args.command == "train":
            return cmd_train(cfg, args.manifest, args.ckpt_out, args.resume)
        if args.command == "edit":
            return cmd_edit(
                cfg, args.ckpt, args.source, args.mask, args.reference, args.out,
                depth=args.depth, scale=args.scale, steps=args.steps, seed=args.seed,
            )
        if args.command == "eval":
            return cmd_eval(args.manifest, args.outputs, args.report_out, args.scores)
    except (ValueError, OSError) as exc:
        logger.error("%s", exc)
        return 1
    except Exception as exc:  # runtime failures map to exit code 2
        logger.error("runtime error: %s", exc)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
