import * as fs from "node:fs";
import * as path from "node:path";

export const METRICS = ["dino_i", "clip_i", "clip_t", "lpips"] as const;
export type Metric = (typeof METRICS)[number];

export interface BenchmarkRecord {
  id: string;
  task: string;
  track: "inter_id" | "inner_id";
  source_path: string;
  mask_path: string;
  reference_path: string;
  ground_truth_path?: string;
  reference_region_mask_path?: string;
  prompt_text?: string;
  depth_required?: boolean;
}

export interface Manifest {
  records: BenchmarkRecord[];
  baseDir: string;
}

export function readManifest(manifestPath: string): Manifest {
  const raw = JSON.parse(fs.readFileSync(manifestPath, "utf-8"));
  if (!Array.isArray(raw)) {
    throw new Error("manifest must be a JSON array of records");
  }
  for (const rec of raw) {
    for (const key of ["id", "task", "track", "source_path", "mask_path", "reference_path"]) {
      if (typeof rec[key] !== "string") {
        throw new Error(`record ${rec.id ?? "?"} missing field ${key}`);
      }
    }
  }
  return {
    records: raw as BenchmarkRecord[],
    baseDir: path.dirname(path.resolve(manifestPath)),
  };
}
