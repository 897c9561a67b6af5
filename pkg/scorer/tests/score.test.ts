import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { beforeAll, describe, expect, it } from "vitest";
import { readManifest } from "../src/manifest.js";
import { RawImage, writePng } from "../src/png.js";
import { resolveBackend, scoreManifest } from "../src/score.js";
import { writeScores } from "../src/scores.js";

function randomImage(seed: number, w = 24, h = 24): RawImage {
  const data = new Uint8Array(w * h * 3);
  let state = seed >>> 0 || 1;
  for (let i = 0; i < data.length; i++) {
    state = (Math.imul(state, 1103515245) + 12345) >>> 0;
    data[i] = state % 256;
  }
  return { width: w, height: h, channels: 3, data };
}

function centerMask(w = 24, h = 24): RawImage {
  const data = new Uint8Array(w * h);
  for (let y = 6; y < h - 6; y++) for (let x = 6; x < w - 6; x++) data[y * w + x] = 255;
  return { width: w, height: h, channels: 1, data };
}

let root: string;
let outputs: string;
let manifestPath: string;

beforeAll(() => {
  root = fs.mkdtempSync(path.join(os.tmpdir(), "scorer-test-"));
  const img = path.join(root, "img");
  outputs = path.join(root, "outputs");
  fs.mkdirSync(img);
  fs.mkdirSync(outputs);

  const source = randomImage(1);
  const reference = randomImage(2);
  const gt = randomImage(3);
  writePng(path.join(img, "source.png"), source);
  writePng(path.join(img, "reference.png"), reference);
  writePng(path.join(img, "gt.png"), gt);
  writePng(path.join(img, "mask.png"), centerMask());
  writePng(path.join(img, "refmask.png"), centerMask());

  // inner output identical to ground truth; inter output is some edit
  writePng(path.join(outputs, "inner_0.png"), gt);
  writePng(path.join(outputs, "inter_0.png"), randomImage(4));

  const records = [
    {
      id: "inner_0", task: "part_composition", track: "inner_id",
      source_path: "img/source.png", mask_path: "img/mask.png",
      reference_path: "img/reference.png", ground_truth_path: "img/gt.png",
    },
    {
      id: "inter_0", task: "part_composition", track: "inter_id",
      source_path: "img/source.png", mask_path: "img/mask.png",
      reference_path: "img/reference.png",
      reference_region_mask_path: "img/refmask.png",
      prompt_text: "a colored shape",
    },
    {
      id: "no_output", task: "part_composition", track: "inner_id",
      source_path: "img/source.png", mask_path: "img/mask.png",
      reference_path: "img/reference.png", ground_truth_path: "img/gt.png",
    },
  ];
  manifestPath = path.join(root, "manifest.json");
  fs.writeFileSync(manifestPath, JSON.stringify(records));
});

describe("scoreManifest", () => {
  it("emits one line per applicable (record, metric)", () => {
    const manifest = readManifest(manifestPath);
    const lines = scoreManifest(manifest, outputs, {
      metrics: new Set(["dino_i", "clip_i", "clip_t", "lpips"] as const),
    });
    const byKey = new Map(lines.map((l) => [`${l.id}/${l.metric}`, l.value]));
    expect(byKey.has("inner_0/lpips")).toBe(true);
    expect(byKey.has("inter_0/clip_i")).toBe(true);
    expect(byKey.has("inter_0/dino_i")).toBe(true);
    expect(byKey.has("inter_0/clip_t")).toBe(true);
    expect(lines.some((l) => l.id === "no_output")).toBe(false);
    expect(lines).toHaveLength(4);
  });

  it("identical output and ground truth score lpips <= 1e-3", () => {
    const manifest = readManifest(manifestPath);
    const lines = scoreManifest(manifest, outputs, { metrics: new Set(["lpips"] as const) });
    const lpips = lines.find((l) => l.id === "inner_0")!;
    expect(lpips.value).toBeLessThanOrEqual(1e-3);
    expect(lpips.value).toBeGreaterThanOrEqual(0);
  });

  it("empty metrics set emits zero lines", () => {
    const manifest = readManifest(manifestPath);
    expect(scoreManifest(manifest, outputs, { metrics: new Set() })).toHaveLength(0);
  });

  it("skips unreadable outputs with a warning instead of failing", () => {
    fs.writeFileSync(path.join(outputs, "broken.png"), "not a png");
    const records = [
      {
        id: "broken", task: "part_composition", track: "inner_id",
        source_path: "img/source.png", mask_path: "img/mask.png",
        reference_path: "img/reference.png", ground_truth_path: "img/gt.png",
      },
    ];
    const manifestB = path.join(root, "manifest_broken.json");
    fs.writeFileSync(manifestB, JSON.stringify(records));
    const warnings: string[] = [];
    const lines = scoreManifest(readManifest(manifestB), outputs, {
      metrics: new Set(["lpips"] as const),
      log: (m) => warnings.push(m),
    });
    expect(lines).toHaveLength(0);
    expect(warnings.some((w) => w.includes("broken"))).toBe(true);
  });

  it("scores are deterministic across runs", () => {
    const manifest = readManifest(manifestPath);
    const opts = { metrics: new Set(["clip_i", "dino_i", "lpips"] as const) };
    expect(scoreManifest(manifest, outputs, opts)).toEqual(scoreManifest(manifest, outputs, opts));
  });

  it("writes valid JSON lines", () => {
    const manifest = readManifest(manifestPath);
    const lines = scoreManifest(manifest, outputs, {
      metrics: new Set(["dino_i", "clip_i", "clip_t", "lpips"] as const),
    });
    const out = path.join(root, "scores.jsonl");
    expect(writeScores(out, lines)).toBe(lines.length);
    const parsed = fs
      .readFileSync(out, "utf-8")
      .split("\n")
      .filter((l) => l.length)
      .map((l) => JSON.parse(l));
    expect(parsed).toHaveLength(lines.length);
    for (const obj of parsed) {
      expect(Object.keys(obj).sort()).toEqual(["id", "metric", "value"]);
      expect(typeof obj.value).toBe("number");
    }
  });
});

describe("backends", () => {
  it("builtin backend needs no weights", () => {
    expect(resolveBackend({ metrics: new Set() })).toBe("builtin");
  });

  it("pretrained backend without weights fails with instructions", () => {
    expect(() =>
      resolveBackend({ metrics: new Set(), backend: "pretrained" }),
    ).toThrow(/weights-dir|weights are missing/);
  });
});
