/** CSV loading with strict schema validation against the documented
 * bench/schedsim layouts (docs/csv-schema.md in the store repo). The
 * plotter refuses anything it does not recognise rather than guessing. */

import * as fs from "fs";

export class SchemaError extends Error {}
export class IoError extends Error {}

export const BENCH_COLUMNS = [
  "run", "backend", "nodes", "opType",
  "p10_ms", "p50_ms", "p90_ms", "throughput_ops_s", "errors",
] as const;

export const SCHEDSIM_COLUMNS = [
  "backend", "nodes", "layers", "link",
  "step", "actor", "kind", "median_ms", "p10_ms", "p90_ms",
] as const;

export type Row = Record<string, string>;

/** Minimal RFC-4180 parsing: quoted fields, doubled quotes, CRLF. */
export function parseCsv(text: string): string[][] {
  const rows: string[][] = [];
  let row: string[] = [];
  let field = "";
  let quoted = false;
  let i = 0;
  while (i < text.length) {
    const ch = text[i];
    if (quoted) {
      if (ch === '"' && text[i + 1] === '"') { field += '"'; i += 2; continue; }
      if (ch === '"') { quoted = false; i++; continue; }
      field += ch; i++; continue;
    }
    if (ch === '"') { quoted = true; i++; continue; }
    if (ch === ",") { row.push(field); field = ""; i++; continue; }
    if (ch === "\n" || ch === "\r") {
      if (ch === "\r" && text[i + 1] === "\n") i++;
      row.push(field); field = "";
      rows.push(row); row = [];
      i++; continue;
    }
    field += ch; i++;
  }
  if (field.length > 0 || row.length > 0) { row.push(field); rows.push(row); }
  return rows.filter((r) => !(r.length === 1 && r[0] === ""));
}

function readFileOrThrow(path: string): string {
  try {
    return fs.readFileSync(path, "utf8");
  } catch (err) {
    throw new IoError(`cannot read ${path}: ${err}`);
  }
}

export function loadRows(path: string, columns: readonly string[]): Row[] {
  const raw = parseCsv(readFileOrThrow(path));
  if (raw.length === 0) {
    throw new SchemaError(`${path}: empty CSV, expected header ${columns.join(",")}`);
  }
  const header = raw[0];
  const unknown = header.filter((c) => !columns.includes(c));
  if (unknown.length > 0) {
    throw new SchemaError(`${path}: unknown columns ${unknown.join(", ")}`);
  }
  const missing = columns.filter((c) => !header.includes(c));
  if (missing.length > 0) {
    throw new SchemaError(`${path}: missing columns ${missing.join(", ")}`);
  }
  const body = raw.slice(1);
  if (body.length === 0) {
    throw new SchemaError(`${path}: no data rows`);
  }
  return body.map((cells, n) => {
    if (cells.length !== header.length) {
      throw new SchemaError(`${path}: row ${n + 2} has ${cells.length} cells`);
    }
    const row: Row = {};
    header.forEach((col, idx) => { row[col] = cells[idx]; });
    return row;
  });
}

export function num(row: Row, column: string): number {
  const value = Number(row[column]);
  if (!Number.isFinite(value)) {
    throw new SchemaError(`non-numeric ${column}: ${JSON.stringify(row[column])}`);
  }
  return value;
}
