export { readPng, writePng, toGray, RawImage } from "./png.js";
export { maskedCrop } from "./crop.js";
export {
  cosineSimilarity,
  embedImage,
  embedStructure,
  embedText,
  embedImageForText,
  perceptualDistance,
} from "./features.js";
export { readManifest, METRICS, Metric, BenchmarkRecord, Manifest } from "./manifest.js";
export { ScoreLine, writeScores, validateScore } from "./scores.js";
export { scoreManifest, resolveBackend, ScoreOptions, Backend } from "./score.js";
