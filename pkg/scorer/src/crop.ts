import { RawImage } from "./png.js";

/**
 * Tight bounding-box crop of the mask's positive region; pixels inside the
 * box but outside the mask are zeroed.
 *
 * This deliberately duplicates the harness's crop rule instead of importing
 * it, so the scorer deploys on its own; a shared fixture test pins the two
 * implementations to pixel-exact agreement.
 */
export function maskedCrop(img: RawImage, mask: RawImage): RawImage {
  if (mask.channels !== 1) {
    throw new Error("mask must be single-channel");
  }
  if (mask.width !== img.width || mask.height !== img.height) {
    throw new Error(
      `mask ${mask.width}x${mask.height} does not match image ${img.width}x${img.height}`,
    );
  }
  let y0 = mask.height, y1 = -1, x0 = mask.width, x1 = -1;
  for (let y = 0; y < mask.height; y++) {
    for (let x = 0; x < mask.width; x++) {
      if (mask.data[y * mask.width + x] >= 128) {
        if (y < y0) y0 = y;
        if (y > y1) y1 = y;
        if (x < x0) x0 = x;
        if (x > x1) x1 = x;
      }
    }
  }
  if (y1 < 0) throw new Error("empty mask");

  const w = x1 - x0 + 1;
  const h = y1 - y0 + 1;
  const c = img.channels;
  const out = new Uint8Array(w * h * c);
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      if (mask.data[(y + y0) * mask.width + (x + x0)] >= 128) {
        const src = ((y + y0) * img.width + (x + x0)) * c;
        const dst = (y * w + x) * c;
        for (let k = 0; k < c; k++) out[dst + k] = img.data[src + k];
      }
    }
  }
  return { width: w, height: h, channels: c, data: out };
}
