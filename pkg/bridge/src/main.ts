#!/usr/bin/env node
/**
 * Detector subprocess bridge.
 *
 * Reads one `image_id<TAB>absolute_path` request per stdin line, writes one
 * `image_id<TAB>score` response per request (or `image_id<TAB>ERROR<TAB>reason`
 * for images it cannot score) and exits 0 at end of input.
 *
 * Flags:
 *   --backend baseline_highfreq | external_module   (default baseline_highfreq)
 *   --module <path>       scorer module for the external_module backend; it
 *                         must export scoreImage(image, deviceHint) -> number
 *   --batch-size <n>      requests decoded and flushed per batch (default 16)
 *   --device <hint>       opaque string forwarded to external backends
 */

import { pathToFileURL } from "node:url";
import * as readline from "node:readline";
import { baselineScore } from "./baseline.js";
import { decodeToGray, type GrayImage } from "./decode.js";
import { errorLine, parseRequestLine, scoreLine, type Request } from "./protocol.js";

type Scorer = (image: GrayImage) => number;

interface BridgeConfig {
  backend: "baseline_highfreq" | "external_module";
  modulePath?: string;
  batchSize: number;
  deviceHint?: string;
}

function parseArgs(argv: string[]): BridgeConfig {
  const config: BridgeConfig = { backend: "baseline_highfreq", batchSize: 16 };
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    const next = () => {
      i += 1;
      if (i >= argv.length) {
        throw new Error(`flag ${arg} needs a value`);
      }
      return argv[i];
    };
    switch (arg) {
      case "--backend": {
        const value = next();
        if (value !== "baseline_highfreq" && value !== "external_module") {
          throw new Error(`unknown backend ${value}`);
        }
        config.backend = value;
        break;
      }
      case "--module":
        config.modulePath = next();
        break;
      case "--batch-size": {
        const value = Number(next());
        if (!Number.isInteger(value) || value < 1) {
          throw new Error("--batch-size needs a positive integer");
        }
        config.batchSize = value;
        break;
      }
      case "--device":
        config.deviceHint = next();
        break;
      default:
        throw new Error(`unknown flag ${arg}`);
    }
  }
  if (config.backend === "external_module" && !config.modulePath) {
    throw new Error("external_module backend needs --module <path>");
  }
  return config;
}

async function loadScorer(config: BridgeConfig): Promise<Scorer> {
  if (config.backend === "baseline_highfreq") {
    return baselineScore;
  }
  const mod = await import(pathToFileURL(config.modulePath!).href);
  const fn = mod.scoreImage ?? mod.default;
  if (typeof fn !== "function") {
    throw new Error(`module ${config.modulePath} exports no scoreImage function`);
  }
  return (image) => fn(image, config.deviceHint);
}

function respond(score: Scorer, request: Request): string {
  let image: GrayImage;
  try {
    image = decodeToGray(request.path);
  } catch (err) {
    return errorLine(request.imageId, `cannot decode: ${(err as Error).message}`);
  }
  const value = score(image);
  if (typeof value !== "number" || !Number.isFinite(value) || value < 0 || value > 1) {
    return errorLine(request.imageId, `backend produced invalid score ${String(value)}`);
  }
  return scoreLine(request.imageId, value);
}

export async function main(): Promise<number> {
  let config: BridgeConfig;
  let score: Scorer;
  try {
    config = parseArgs(process.argv.slice(2));
    score = await loadScorer(config);
  } catch (err) {
    process.stderr.write(`detector-bridge: ${(err as Error).message}\n`);
    return 2;
  }

  const batch: Request[] = [];
  const flush = () => {
    if (batch.length === 0) {
      return;
    }
    const lines = batch.map((request) => respond(score, request));
    process.stdout.write(lines.join("\n") + "\n");
    batch.length = 0;
  };

  for await (const line of readline.createInterface({ input: process.stdin })) {
    if (line.trim() === "") {
      continue;
    }
    try {
      batch.push(parseRequestLine(line));
    } catch (err) {
      process.stderr.write(`detector-bridge: ${(err as Error).message}\n`);
      return 2;
    }
    if (batch.length >= config.batchSize) {
      flush();
    }
  }
  flush();
  return 0;
}

main().then(
  (code) => process.exit(code),
  (err) => {
    process.stderr.write(`detector-bridge: ${err?.stack ?? err}\n`);
    process.exit(1);
  },
);
