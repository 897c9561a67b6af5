#!/usr/bin/env node
import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { METRICS, Metric, readManifest } from "./manifest.js";
import { Backend, scoreManifest } from "./score.js";
import { writeScores } from "./scores.js";

export async function main(argv: string[]): Promise<number> {
  const args = await yargs(argv)
    .command("score", "score benchmark outputs into a JSON-lines file")
    .demandCommand(1)
    .option("manifest", { type: "string", demandOption: true })
    .option("outputs", { type: "string", demandOption: true })
    .option("metrics", {
      type: "string",
      default: METRICS.join(","),
      describe: `comma-separated subset of ${METRICS.join(",")} (empty for none)`,
    })
    .option("out", { type: "string", demandOption: true })
    .option("backend", {
      choices: ["builtin", "pretrained"] as const,
      default: "builtin" as Backend,
    })
    .option("weights-dir", { type: "string" })
    .strict()
    .parse();

  const names = args.metrics.split(",").map((m) => m.trim()).filter((m) => m.length);
  for (const name of names) {
    if (!(METRICS as readonly string[]).includes(name)) {
      console.error(`unknown metric: ${name}`);
      return 1;
    }
  }

  try {
    const manifest = readManifest(args.manifest);
    const lines = scoreManifest(manifest, args.outputs, {
      metrics: new Set(names as Metric[]),
      backend: args.backend,
      weightsDir: args.weightsDir,
      log: (msg) => console.warn(msg),
    });
    const written = writeScores(args.out, lines);
    console.log(`wrote ${written} score lines to ${args.out}`);
    return 0;
  } catch (err) {
    console.error(String(err));
    return 1;
  }
}

const invokedDirectly =
  process.argv[1] && import.meta.url.endsWith(process.argv[1].split("/").pop()!);
if (invokedDirectly) {
  main(hideBin(process.argv)).then((code) => process.exit(code));
}
