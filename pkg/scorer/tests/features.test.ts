import { describe, expect, it } from "vitest";
import {
  cosineSimilarity,
  embedImage,
  embedImageForText,
  embedStructure,
  embedText,
  perceptualDistance,
} from "../src/features.js";
import { RawImage } from "../src/png.js";

function randomImage(seed: number, w = 24, h = 24, channels = 3): RawImage {
  const data = new Uint8Array(w * h * channels);
  let state = seed >>> 0 || 1;
  for (let i = 0; i < data.length; i++) {
    state = (Math.imul(state, 1103515245) + 12345) >>> 0;
    data[i] = state % 256;
  }
  return { width: w, height: h, channels, data };
}

describe("embedding similarities", () => {
  it("identical images score clip-style similarity >= 0.999", () => {
    const img = randomImage(7);
    const sim = cosineSimilarity(embedImage(img), embedImage(img));
    expect(sim).toBeGreaterThanOrEqual(0.999);
  });

  it("identical images score structure similarity >= 0.999", () => {
    const img = randomImage(8);
    const sim = cosineSimilarity(embedStructure(img), embedStructure(img));
    expect(sim).toBeGreaterThanOrEqual(0.999);
  });

  it("similarities stay within [-1, 1] across random pairs", () => {
    for (let seed = 1; seed <= 20; seed++) {
      const a = embedImage(randomImage(seed));
      const b = embedImage(randomImage(seed + 100));
      const sim = cosineSimilarity(a, b);
      expect(sim).toBeGreaterThanOrEqual(-1);
      expect(sim).toBeLessThanOrEqual(1);
    }
  });

  it("an inverted image scores lower than the image itself", () => {
    const img = randomImage(9);
    const inverted: RawImage = { ...img, data: img.data.map((v) => 255 - v) as Uint8Array };
    const self = cosineSimilarity(embedImage(img), embedImage(img));
    const other = cosineSimilarity(embedImage(img), embedImage(inverted));
    expect(other).toBeLessThan(self);
  });

  it("is deterministic", () => {
    const img = randomImage(10);
    expect(Array.from(embedImage(img))).toEqual(Array.from(embedImage(img)));
    expect(Array.from(embedStructure(img))).toEqual(Array.from(embedStructure(img)));
  });

  it("handles an all-black crop without dividing by zero", () => {
    const black: RawImage = { width: 8, height: 8, channels: 3, data: new Uint8Array(192) };
    const sim = cosineSimilarity(embedImage(black), embedImage(black));
    expect(sim).toBeGreaterThanOrEqual(0.999);
  });
});

describe("text embedding", () => {
  it("same prompt embeds identically, different prompts differ", () => {
    const a = embedText("a red square on a table");
    const b = embedText("a red square on a table");
    const c = embedText("a blue circle in the sky");
    expect(cosineSimilarity(a, b)).toBeCloseTo(1, 9);
    expect(cosineSimilarity(a, c)).toBeLessThan(1);
  });

  it("image-to-text similarity lands in [-1, 1]", () => {
    const sim = cosineSimilarity(embedImageForText(randomImage(3)), embedText("some prompt"));
    expect(Math.abs(sim)).toBeLessThanOrEqual(1);
  });
});

describe("perceptual distance", () => {
  it("identical images score <= 1e-3", () => {
    const img = randomImage(11);
    expect(perceptualDistance(img, img)).toBeLessThanOrEqual(1e-3);
  });

  it("is non-negative and grows with noise amplitude", () => {
    const img = randomImage(12, 32, 32);
    const jitter = (amp: number): RawImage => ({
      ...img,
      data: img.data.map((v, i) => {
        const delta = ((i * 2654435761) % (2 * amp + 1)) - amp;
        return Math.min(255, Math.max(0, v + delta));
      }) as Uint8Array,
    });
    const small = perceptualDistance(img, jitter(8));
    const large = perceptualDistance(img, jitter(64));
    expect(small).toBeGreaterThanOrEqual(0);
    expect(large).toBeGreaterThan(small);
  });

  it("works across different input resolutions", () => {
    const a = randomImage(13, 16, 16);
    const b = randomImage(13, 48, 48);
    expect(Number.isFinite(perceptualDistance(a, b))).toBe(true);
  });
});
