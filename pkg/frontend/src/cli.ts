#!/usr/bin/env node
/** plots --csv results.csv [--csv more.csv] --chart latency|throughput|schedsim --out fig.svg */

import * as fs from "fs";
import { pathToFileURL } from "url";

import { IoError, SchemaError } from "./csv.js";
import { ChartKind, render } from "./render.js";

export function parseArgs(argv: string[]): { inputCsvs: string[]; chart: ChartKind; out: string } {
  const inputCsvs: string[] = [];
  let chart: string | undefined;
  let out: string | undefined;
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    const next = () => {
      i++;
      if (i >= argv.length) throw new SchemaError(`${arg} needs a value`);
      return argv[i];
    };
    if (arg === "--csv") inputCsvs.push(next());
    else if (arg === "--chart") chart = next();
    else if (arg === "--out") out = next();
    else if (arg === "--help" || arg === "-h") {
      console.log("usage: plots --csv results.csv --chart latency|throughput|schedsim --out fig.svg");
      process.exit(0);
    } else throw new SchemaError(`unknown argument ${arg}`);
  }
  if (inputCsvs.length === 0 || !chart || !out) {
    throw new SchemaError("required: --csv, --chart, --out");
  }
  if (!["latency", "throughput", "schedsim"].includes(chart)) {
    throw new SchemaError(`unknown chart ${chart}`);
  }
  return { inputCsvs, chart: chart as ChartKind, out };
}

export function main(argv: string[]): number {
  try {
    const result = render(parseArgs(argv));
    console.log(`wrote ${result.out}: ${result.seriesCount} series, ` +
      `${result.pointCount} plotted values`);
    return 0;
  } catch (err) {
    if (err instanceof SchemaError) {
      console.error(`schema error: ${err.message}`);
      return 2;
    }
    if (err instanceof IoError) {
      console.error(`io error: ${err.message}`);
      return 1;
    }
    throw err;
  }
}

function isMainModule(): boolean {
  if (!process.argv[1]) return false;
  try {
    return import.meta.url === pathToFileURL(fs.realpathSync(process.argv[1])).href;
  } catch {
    return false;
  }
}

if (isMainModule()) {
  process.exit(main(process.argv.slice(2)));
}
