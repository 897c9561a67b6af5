import { RawImage, toGray } from "./png.js";

/**
 * Deterministic handcrafted feature backends.
 *
 * The sandbox has no pretrained CLIP/DINOv2/LPIPS weights, so the default
 * backend computes fixed (weight-free) features with the same contracts:
 * cosine similarities in [-1, 1] that hit 1 on identical inputs, and a
 * perceptual distance that is 0 on identical inputs and grows with
 * structural difference. Scores are comparable within one run of the
 * scorer, which is all the harness needs for ranking outputs.
 */

const GRID = 4;
const ORI_BINS = 8;

function l2normalize(v: Float64Array): Float64Array {
  let s = 0;
  for (const x of v) s += x * x;
  if (s === 0) {
    // zero feature (e.g. an all-black crop): use a fixed unit direction so
    // cosine similarity stays defined and equal inputs still score 1
    const out = new Float64Array(v.length);
    out[0] = 1;
    return out;
  }
  const n = Math.sqrt(s);
  return v.map((x) => x / n);
}

export function cosineSimilarity(u: Float64Array, v: Float64Array): number {
  if (u.length !== v.length || u.length === 0) {
    throw new Error(`length mismatch: ${u.length} vs ${v.length}`);
  }
  let uv = 0, uu = 0, vv = 0;
  for (let i = 0; i < u.length; i++) {
    uv += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu === 0 || vv === 0) throw new Error("zero-norm vector");
  return Math.min(1, Math.max(-1, uv / Math.sqrt(uu * vv)));
}

/** Bilinear resize of a gray plane (half-pixel centers). */
function resizeGray(src: Float64Array, w: number, h: number, ow: number, oh: number): Float64Array {
  const out = new Float64Array(ow * oh);
  for (let y = 0; y < oh; y++) {
    const sy = Math.min(Math.max(((y + 0.5) * h) / oh - 0.5, 0), h - 1);
    const y0 = Math.floor(sy), y1 = Math.min(y0 + 1, h - 1), fy = sy - y0;
    for (let x = 0; x < ow; x++) {
      const sx = Math.min(Math.max(((x + 0.5) * w) / ow - 0.5, 0), w - 1);
      const x0 = Math.floor(sx), x1 = Math.min(x0 + 1, w - 1), fx = sx - x0;
      out[y * ow + x] =
        src[y0 * w + x0] * (1 - fy) * (1 - fx) +
        src[y0 * w + x1] * (1 - fy) * fx +
        src[y1 * w + x0] * fy * (1 - fx) +
        src[y1 * w + x1] * fy * fx;
    }
  }
  return out;
}

/** GRIDxGRID mean color cells plus a gradient orientation histogram. */
export function embedImage(img: RawImage): Float64Array {
  const { width: w, height: h } = img;
  const colors = new Float64Array(GRID * GRID * 3);
  const counts = new Float64Array(GRID * GRID);
  const c = Math.min(img.channels, 3);
  for (let y = 0; y < h; y++) {
    const gy = Math.min(Math.floor((y * GRID) / h), GRID - 1);
    for (let x = 0; x < w; x++) {
      const gx = Math.min(Math.floor((x * GRID) / w), GRID - 1);
      const cell = gy * GRID + gx;
      counts[cell]++;
      for (let k = 0; k < 3; k++) {
        colors[cell * 3 + k] += img.data[(y * w + x) * img.channels + (k % c)] / 255;
      }
    }
  }
  for (let cell = 0; cell < GRID * GRID; cell++) {
    for (let k = 0; k < 3; k++) colors[cell * 3 + k] /= Math.max(counts[cell], 1);
  }

  // orientation histogram over a fixed-size gray rendering, magnitude-weighted
  const size = 32;
  const gray = resizeGray(toGray(img), w, h, size, size);
  const hist = new Float64Array(ORI_BINS);
  for (let y = 1; y < size - 1; y++) {
    for (let x = 1; x < size - 1; x++) {
      const dx = gray[y * size + x + 1] - gray[y * size + x - 1];
      const dy = gray[(y + 1) * size + x] - gray[(y - 1) * size + x];
      const mag = Math.hypot(dx, dy);
      if (mag === 0) continue;
      let theta = Math.atan2(dy, dx); // [-pi, pi]
      let bin = Math.floor(((theta + Math.PI) / (2 * Math.PI)) * ORI_BINS);
      if (bin === ORI_BINS) bin = 0;
      hist[bin] += mag;
    }
  }

  const out = new Float64Array(colors.length + hist.length);
  out.set(l2normalize(colors), 0);
  out.set(l2normalize(hist), colors.length);
  return l2normalize(out);
}

/** Patch-correlation features: a small gram matrix of local intensities. */
export function embedStructure(img: RawImage): Float64Array {
  const size = 16;
  const gray = resizeGray(toGray(img), img.width, img.height, size, size);
  // 4 shifted copies of the plane; gram of their pairwise products captures
  // local structure, loosely mirroring self-supervised patch features
  const shifts: Array<[number, number]> = [[0, 0], [0, 1], [1, 0], [1, 1]];
  const planes = shifts.map(([sy, sx]) => {
    const p = new Float64Array(size * size);
    for (let y = 0; y < size; y++) {
      for (let x = 0; x < size; x++) {
        const yy = Math.min(y + sy, size - 1);
        const xx = Math.min(x + sx, size - 1);
        p[y * size + x] = gray[yy * size + xx];
      }
    }
    return p;
  });
  const gram = new Float64Array(shifts.length * shifts.length);
  for (let a = 0; a < planes.length; a++) {
    for (let b = 0; b < planes.length; b++) {
      let s = 0;
      for (let i = 0; i < size * size; i++) s += planes[a][i] * planes[b][i];
      gram[a * planes.length + b] = s / (size * size);
    }
  }
  const out = new Float64Array(gram.length + size * size);
  out.set(l2normalize(gram), 0);
  out.set(l2normalize(new Float64Array(gray)), gram.length);
  return l2normalize(out);
}

/** Deterministic text embedding: token hashes spread over a fixed basis. */
export function embedText(text: string, dim = 64): Float64Array {
  const out = new Float64Array(dim);
  const tokens = text.toLowerCase().split(/[^a-z0-9]+/).filter((t) => t.length > 0);
  for (const token of tokens) {
    // FNV-1a
    let hash = 0x811c9dc5;
    for (let i = 0; i < token.length; i++) {
      hash ^= token.charCodeAt(i);
      hash = Math.imul(hash, 0x01000193) >>> 0;
    }
    out[hash % dim] += 1;
    out[(hash >>> 8) % dim] += 0.5;
  }
  return l2normalize(out);
}

/** Project an image embedding onto the text dimension with a fixed basis. */
export function embedImageForText(img: RawImage, dim = 64): Float64Array {
  const feat = embedImage(img);
  const out = new Float64Array(dim);
  // fixed LCG-expanded projection matrix; no trained weights involved
  let state = 1234567891;
  for (let j = 0; j < dim; j++) {
    for (let i = 0; i < feat.length; i++) {
      state = (Math.imul(state, 1103515245) + 12345) >>> 0;
      out[j] += feat[i] * ((state / 0xffffffff) * 2 - 1);
    }
  }
  return l2normalize(out);
}

/** Multi-scale perceptual distance: 0 for identical inputs, >= 0 always. */
export function perceptualDistance(a: RawImage, b: RawImage): number {
  const size = 64;
  let ga = resizeGray(toGray(a), a.width, a.height, size, size);
  let gb = resizeGray(toGray(b), b.width, b.height, size, size);
  let total = 0;
  let s = size;
  while (s >= 8) {
    let mse = 0;
    for (let i = 0; i < s * s; i++) {
      const d = ga[i] - gb[i];
      mse += d * d;
    }
    total += mse / (s * s);
    s = Math.floor(s / 2);
    ga = resizeGray(ga, s * 2, s * 2, s, s);
    gb = resizeGray(gb, s * 2, s * 2, s, s);
  }
  return total;
}
