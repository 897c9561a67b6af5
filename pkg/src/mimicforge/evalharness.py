"""Benchmark harness: part composition / texture transfer tasks, each with
an inter-ID and an inner-ID track.

Inner-ID records carry a ground truth and are scored internally with
SSIM/PSNR (full image); LPIPS and the inter-ID embedding similarities are
joined from an externally produced scores file and never fabricated.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field

from . import metrics

logger = logging.getLogger(__name__)

TASKS = ("part_composition", "texture_transfer")
TRACKS = ("inter_id", "inner_id")
INNER_METRICS = ("ssim", "psnr", "lpips")
INTER_METRICS = ("dino_i", "clip_i", "clip_t")

PSNR_SENTINEL = "inf"


@dataclass
class BenchmarkRecord:
    id: str
    task: str
    track: str
    source_path: str
    mask_path: str
    reference_path: str
    ground_truth_path: str | None = None
    reference_region_mask_path: str | None = None
    prompt_text: str | None = None
    depth_required: bool = False


@dataclass
class ValidationIssue:
    record_id: str
    message: str


@dataclass
class TrackReport:
    task: str
    track: str
    means: dict[str, float] = field(default_factory=dict)
    records_scored: int = 0
    records_skipped: int = 0


def _check_record(rec: BenchmarkRecord, base_dir: str) -> list[str]:
    problems = []
    if rec.task not in TASKS:
        problems.append(f"unknown task {rec.task!r}")
    if rec.track not in TRACKS:
        problems.append(f"unknown track {rec.track!r}")
    if rec.track == "inner_id" and not rec.ground_truth_path:
        problems.append("inner_id record missing ground_truth_path")
    if rec.track == "inter_id":
        if not rec.reference_region_mask_path:
            problems.append("inter_id record missing reference_region_mask_path")
        if not rec.prompt_text:
            problems.append("inter_id record missing prompt_text")
    if rec.task == "texture_transfer" and not rec.depth_required:
        problems.append("texture_transfer record must set depth_required")
    for attr in ("source_path", "mask_path", "reference_path", "ground_truth_path", "reference_region_mask_path"):
        rel = getattr(rec, attr)
        if rel and not os.path.exists(os.path.join(base_dir, rel)):
            problems.append(f"{attr} missing on disk: {rel}")
    return problems


def validate_manifest(path) -> tuple[list[BenchmarkRecord], list[ValidationIssue]]:
    """Parse and check a manifest; invalid records are reported per record,
    not fatal."""
    with open(path) as f:
        raw = json.load(f)
    if not isinstance(raw, list):
        raise ValueError("manifest must be a JSON array of records")
    base_dir = os.path.dirname(os.path.abspath(path))
    records, issues = [], []
    for i, obj in enumerate(raw):
        try:
            rec = BenchmarkRecord(**obj)
        except TypeError as exc:
            issues.append(ValidationIssue(record_id=str(obj.get("id", f"#{i}")), message=str(exc)))
            continue
        problems = _check_record(rec, base_dir)
        if problems:
            issues.extend(ValidationIssue(record_id=rec.id, message=p) for p in problems)
        else:
            records.append(rec)
    return records, issues


def evaluate(
    records: list[BenchmarkRecord],
    outputs_dir,
    manifest_dir,
    scores_file=None,
) -> list[TrackReport]:
    """Score per (task, track). Inner-ID SSIM/PSNR are computed here over the
    full image; everything else comes from the scores file. Records without
    an output image are skipped and counted."""
    from .imgcore import load_png

    joined: dict[tuple[str, str], float] = {}
    if scores_file:
        for line in metrics.read_scores(scores_file):
            key = (line["id"], line["metric"])
            if key in joined:
                logger.warning("duplicate score for %s/%s; last wins", *key)
            joined[key] = float(line["value"])

    buckets: dict[tuple[str, str], dict] = {}
    for rec in records:
        bucket = buckets.setdefault(
            (rec.task, rec.track), {"values": {}, "scored": 0, "skipped": 0}
        )
        out_path = os.path.join(outputs_dir, f"{rec.id}.png")
        if not os.path.exists(out_path):
            logger.warning("no output image for record %s; skipping", rec.id)
            bucket["skipped"] += 1
            continue
        per_metric = {}
        if rec.track == "inner_id":
            out_img = load_png(out_path)
            gt = load_png(os.path.join(manifest_dir, rec.ground_truth_path))
            per_metric["ssim"] = metrics.ssim(out_img, gt)
            per_metric["psnr"] = metrics.psnr(out_img, gt)
            if (rec.id, "lpips") in joined:
                per_metric["lpips"] = joined[(rec.id, "lpips")]
        else:
            for name in INTER_METRICS:
                if (rec.id, name) in joined:
                    per_metric[name] = joined[(rec.id, name)]
        bucket["scored"] += 1
        for name, value in per_metric.items():
            bucket["values"].setdefault(name, []).append(value)

    reports = []
    for task in TASKS:
        for track in TRACKS:
            bucket = buckets.get((task, track))
            if bucket is None:
                continue
            means = {}
            for name, vals in bucket["values"].items():
                means[name] = math.inf if any(math.isinf(v) for v in vals) else sum(vals) / len(vals)
            reports.append(
                TrackReport(
                    task=task,
                    track=track,
                    means=means,
                    records_scored=bucket["scored"],
                    records_skipped=bucket["skipped"],
                )
            )
    return reports


def _metric_columns(track: str) -> tuple[str, ...]:
    return INNER_METRICS if track == "inner_id" else INTER_METRICS


def _fmt(value: float | None) -> str:
    if value is None:
        return "—"
    if math.isinf(value):
        return PSNR_SENTINEL
    return f"{value:.4f}"


def reports_to_json(reports: list[TrackReport]) -> str:
    payload = []
    for rep in sorted(reports, key=lambda r: (r.task, r.track)):
        means = {
            name: (PSNR_SENTINEL if math.isinf(v) else v)
            for name, v in sorted(rep.means.items())
        }
        payload.append(
            {
                "task": rep.task,
                "track": rep.track,
                "means": means,
                "records_scored": rep.records_scored,
                "records_skipped": rep.records_skipped,
            }
        )
    return json.dumps(payload, indent=2, sort_keys=True)


def reports_from_json(text: str) -> list[TrackReport]:
    out = []
    for obj in json.loads(text):
        means = {k: (math.inf if v == PSNR_SENTINEL else float(v)) for k, v in obj["means"].items()}
        out.append(
            TrackReport(
                task=obj["task"],
                track=obj["track"],
                means=means,
                records_scored=obj["records_scored"],
                records_skipped=obj["records_skipped"],
            )
        )
    return out


def reports_to_markdown(reports: list[TrackReport]) -> str:
    """One table block per (task, track), columns mirroring the benchmark's
    metric set."""
    blocks = []
    for rep in sorted(reports, key=lambda r: (r.task, r.track)):
        cols = _metric_columns(rep.track)
        header = "| " + " | ".join(c.upper().replace("_I", "-I").replace("_T", "-T") for c in cols) + " |"
        sep = "|" + "---|" * len(cols)
        row = "| " + " | ".join(_fmt(rep.means.get(c)) for c in cols) + " |"
        blocks.append(
            f"### {rep.task} / {rep.track} "
            f"(scored {rep.records_scored}, skipped {rep.records_skipped})\n"
            f"{header}\n{sep}\n{row}\n"
        )
    return "\n".join(blocks)


def emit_report(reports: list[TrackReport], path, fmt: str = "json") -> None:
    if not reports:
        raise ValueError("no reports to emit")
    if fmt == "json":
        text = reports_to_json(reports)
    elif fmt == "markdown-table":
        text = reports_to_markdown(reports)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    with open(path, "w") as f:
        f.write(text)
