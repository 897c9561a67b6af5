import * as fs from "node:fs";
import * as path from "node:path";
import { maskedCrop } from "./crop.js";
import {
  cosineSimilarity,
  embedImage,
  embedImageForText,
  embedStructure,
  embedText,
  perceptualDistance,
} from "./features.js";
import { BenchmarkRecord, Manifest, Metric } from "./manifest.js";
import { readPng, RawImage } from "./png.js";
import { ScoreLine, validateScore } from "./scores.js";

export type Backend = "builtin" | "pretrained";

export interface ScoreOptions {
  metrics: Set<Metric>;
  backend?: Backend;
  weightsDir?: string;
  log?: (msg: string) => void;
}

/**
 * The pretrained backend expects CLIP/DINOv2/LPIPS weight files on disk;
 * none ship with this sandbox, so selecting it without a populated weights
 * directory is a fatal configuration error with instructions.
 */
export function resolveBackend(opts: ScoreOptions): Backend {
  const backend = opts.backend ?? "builtin";
  if (backend === "pretrained") {
    const dir = opts.weightsDir;
    const wanted = ["clip.onnx", "dinov2.onnx", "lpips.onnx"];
    const missing = wanted.filter((f) => !dir || !fs.existsSync(path.join(dir, f)));
    if (missing.length) {
      throw new Error(
        `pretrained backend selected but weights are missing: ${missing.join(", ")}. ` +
          `Download the ONNX exports of your chosen CLIP/DINOv2/LPIPS variants into a ` +
          `directory and pass it with --weights-dir, or use --backend builtin.`,
      );
    }
  }
  return backend;
}

function scoreRecord(
  rec: BenchmarkRecord,
  outputImg: RawImage,
  baseDir: string,
  metrics: Set<Metric>,
): ScoreLine[] {
  const lines: ScoreLine[] = [];
  const load = (rel: string) => readPng(path.join(baseDir, rel));

  if (rec.track === "inner_id") {
    if (metrics.has("lpips") && rec.ground_truth_path) {
      const gt = load(rec.ground_truth_path);
      lines.push({ id: rec.id, metric: "lpips", value: perceptualDistance(outputImg, gt) });
    }
    return lines;
  }

  // inter-ID: compare the edited region against the reference region
  const wantsCrops = metrics.has("dino_i") || metrics.has("clip_i");
  if (wantsCrops && rec.reference_region_mask_path) {
    const outCrop = maskedCrop(outputImg, load(rec.mask_path));
    const refCrop = maskedCrop(load(rec.reference_path), load(rec.reference_region_mask_path));
    if (metrics.has("clip_i")) {
      lines.push({
        id: rec.id,
        metric: "clip_i",
        value: cosineSimilarity(embedImage(outCrop), embedImage(refCrop)),
      });
    }
    if (metrics.has("dino_i")) {
      lines.push({
        id: rec.id,
        metric: "dino_i",
        value: cosineSimilarity(embedStructure(outCrop), embedStructure(refCrop)),
      });
    }
  }
  if (metrics.has("clip_t") && rec.prompt_text) {
    lines.push({
      id: rec.id,
      metric: "clip_t",
      value: cosineSimilarity(embedImageForText(outputImg), embedText(rec.prompt_text)),
    });
  }
  return lines;
}

/** Score every record with an output image; returns the lines to write. */
export function scoreManifest(
  manifest: Manifest,
  outputsDir: string,
  opts: ScoreOptions,
): ScoreLine[] {
  resolveBackend(opts);
  const log = opts.log ?? (() => undefined);
  if (opts.metrics.size === 0) return [];
  const lines: ScoreLine[] = [];
  for (const rec of manifest.records) {
    const outPath = path.join(outputsDir, `${rec.id}.png`);
    let output: RawImage;
    try {
      output = readPng(outPath);
    } catch {
      log(`record ${rec.id}: output image unreadable at ${outPath}, skipping`);
      continue;
    }
    try {
      const recLines = scoreRecord(rec, output, manifest.baseDir, opts.metrics);
      recLines.forEach(validateScore);
      lines.push(...recLines);
    } catch (err) {
      log(`record ${rec.id}: ${String(err)}, skipping`);
    }
  }
  return lines;
}
