import * as fs from "node:fs";
import { Metric } from "./manifest.js";

/** One line of the scores file shared with the evaluation harness. */
export interface ScoreLine {
  id: string;
  metric: Metric;
  value: number;
}

export function validateScore(line: ScoreLine): void {
  if (line.metric === "lpips") {
    if (line.value < 0) throw new Error(`lpips must be >= 0, got ${line.value}`);
  } else if (line.value < -1 || line.value > 1) {
    throw new Error(`${line.metric} must be in [-1, 1], got ${line.value}`);
  }
}

/** JSON lines, one object per line, same schema the harness reads back. */
export function writeScores(path: string, lines: ScoreLine[]): number {
  const text = lines
    .map((l) => JSON.stringify({ id: l.id, metric: l.metric, value: l.value }))
    .join("\n");
  fs.writeFileSync(path, lines.length ? text + "\n" : "");
  return lines.length;
}
