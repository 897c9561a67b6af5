import * as fs from "node:fs";
import { PNG } from "pngjs";

/** 8-bit image: row-major RGB(A) flattened to per-pixel channel tuples. */
export interface RawImage {
  width: number;
  height: number;
  channels: number; // 1, 3 or 4
  data: Uint8Array; // width * height * channels
}

/** Decode an 8-bit PNG. Gray PNGs come back single-channel. */
export function readPng(path: string): RawImage {
  const png = PNG.sync.read(fs.readFileSync(path));
  const { width, height, data } = png; // pngjs always expands to RGBA

  // collapse to gray or RGB when the extra channels carry no information
  const n = width * height;
  let isGray = true;
  let opaque = true;
  for (let i = 0; i < n; i++) {
    const o = i * 4;
    if (data[o] !== data[o + 1] || data[o] !== data[o + 2]) isGray = false;
    if (data[o + 3] !== 255) opaque = false;
    if (!isGray && !opaque) break;
  }
  if (isGray && opaque) {
    const out = new Uint8Array(n);
    for (let i = 0; i < n; i++) out[i] = data[i * 4];
    return { width, height, channels: 1, data: out };
  }
  if (opaque) {
    const out = new Uint8Array(n * 3);
    for (let i = 0; i < n; i++) {
      out[i * 3] = data[i * 4];
      out[i * 3 + 1] = data[i * 4 + 1];
      out[i * 3 + 2] = data[i * 4 + 2];
    }
    return { width, height, channels: 3, data: out };
  }
  return { width, height, channels: 4, data: new Uint8Array(data) };
}

export function writePng(path: string, img: RawImage): void {
  const png = new PNG({ width: img.width, height: img.height });
  const n = img.width * img.height;
  for (let i = 0; i < n; i++) {
    const o = i * 4;
    if (img.channels === 1) {
      png.data[o] = png.data[o + 1] = png.data[o + 2] = img.data[i];
      png.data[o + 3] = 255;
    } else {
      png.data[o] = img.data[i * img.channels];
      png.data[o + 1] = img.data[i * img.channels + 1];
      png.data[o + 2] = img.data[i * img.channels + 2];
      png.data[o + 3] = img.channels === 4 ? img.data[i * 4 + 3] : 255;
    }
  }
  fs.writeFileSync(path, PNG.sync.write(png));
}

/** Channel-mean gray plane in [0, 1]. */
export function toGray(img: RawImage): Float64Array {
  const n = img.width * img.height;
  const out = new Float64Array(n);
  const c = Math.min(img.channels, 3); // alpha never contributes
  for (let i = 0; i < n; i++) {
    let s = 0;
    for (let k = 0; k < c; k++) s += img.data[i * img.channels + k];
    out[i] = s / c / 255;
  }
  return out;
}
