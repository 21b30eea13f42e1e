/** PlotSpec handling: pick rows per chart kind, group into series, write
 * the SVG. Plotted values are the CSV's own values: median rows are used
 * verbatim when present; otherwise per-run values are grouped and the
 * nearest-rank member of each group is plotted (still a CSV value). */

import * as fs from "fs";
import * as path from "path";

import { Bar, Series, errorBarLineChart, stackedBarChart } from "./chart.js";
import {
  BENCH_COLUMNS,
  IoError,
  Row,
  SCHEDSIM_COLUMNS,
  SchemaError,
  loadRows,
  num,
} from "./csv.js";

export type ChartKind = "latency" | "throughput" | "schedsim";

export interface PlotSpec {
  inputCsvs: string[];
  chart: ChartKind;
  out: string;
}

export interface RenderResult {
  out: string;
  seriesCount: number;
  pointCount: number;
}

function nearestRank(sorted: number[], pct: number): number {
  const rank = Math.max(Math.ceil((pct / 100) * sorted.length), 1);
  return sorted[rank - 1];
}

function groupKey(row: Row): string {
  return `${row.backend}/${row.opType}`;
}

function benchRows(spec: PlotSpec): Row[] {
  const rows = spec.inputCsvs.flatMap((p) => loadRows(p, BENCH_COLUMNS));
  const medians = rows.filter((r) => r.run === "median");
  return medians.length > 0 ? medians : rows;
}

/** Latency: y = p50_ms with p10/p90 whiskers straight from the columns. */
function latencySeries(spec: PlotSpec): Series[] {
  const rows = benchRows(spec);
  const byKey = new Map<string, Row[]>();
  for (const row of rows) {
    const list = byKey.get(groupKey(row)) ?? [];
    list.push(row);
    byKey.set(groupKey(row), list);
  }
  const series: Series[] = [];
  for (const [label, group] of [...byKey.entries()].sort()) {
    const seen = new Set<string>();
    for (const row of group) {
      if (seen.has(row.nodes)) {
        throw new SchemaError(
          `multiple rows for ${label} nodes=${row.nodes}; ` +
          `re-run bench with --repeats to get median rows`);
      }
      seen.add(row.nodes);
    }
    series.push({
      label,
      points: group.map((row) => ({
        x: num(row, "nodes"),
        y: num(row, "p50_ms"),
        lo: num(row, "p10_ms"),
        hi: num(row, "p90_ms"),
      })),
    });
  }
  return series;
}

/** Throughput: per-run values grouped per (backend, opType, nodes); the
 * plotted point and whiskers are nearest-rank members of the group. */
function throughputSeries(spec: PlotSpec): Series[] {
  const all = spec.inputCsvs.flatMap((p) => loadRows(p, BENCH_COLUMNS));
  const perRun = all.filter((r) => r.run !== "median");
  const rows = perRun.length > 0 ? perRun : all;
  const byKey = new Map<string, Map<number, number[]>>();
  for (const row of rows) {
    const key = groupKey(row);
    const nodes = num(row, "nodes");
    const inner = byKey.get(key) ?? new Map<number, number[]>();
    const list = inner.get(nodes) ?? [];
    list.push(num(row, "throughput_ops_s"));
    inner.set(nodes, list);
    byKey.set(key, inner);
  }
  const series: Series[] = [];
  for (const [label, inner] of [...byKey.entries()].sort()) {
    const points = [...inner.entries()]
      .sort((a, b) => a[0] - b[0])
      .map(([nodes, values]) => {
        const sorted = [...values].sort((a, b) => a - b);
        return {
          x: nodes,
          y: nearestRank(sorted, 50),
          lo: nearestRank(sorted, 10),
          hi: nearestRank(sorted, 90),
        };
      });
    series.push({ label, points });
  }
  return series;
}

/** Scheduling-flow composition: one stacked bar per backend. */
function schedsimBars(spec: PlotSpec): Bar[] {
  const rows = spec.inputCsvs.flatMap((p) => loadRows(p, SCHEDSIM_COLUMNS));
  const byBackend = new Map<string, Row[]>();
  for (const row of rows) {
    if (row.step === "total") continue;
    const label = `${row.backend} (n=${row.nodes}, layers=${row.layers})`;
    const list = byBackend.get(label) ?? [];
    list.push(row);
    byBackend.set(label, list);
  }
  if (byBackend.size === 0) {
    throw new SchemaError("schedsim CSV holds only total rows");
  }
  return [...byBackend.entries()].sort().map(([label, group]) => ({
    label,
    segments: group.map((row) => ({
      name: row.step,
      kind: row.kind,
      value: num(row, "median_ms"),
    })),
  }));
}

export function render(spec: PlotSpec): RenderResult {
  if (spec.inputCsvs.length === 0) {
    throw new SchemaError("no input CSVs given");
  }
  let svg: string;
  let seriesCount: number;
  let pointCount: number;
  if (spec.chart === "latency") {
    const series = latencySeries(spec);
    svg = errorBarLineChart("Latency vs cluster size (median, p10-p90)",
      "cluster size (nodes)", "latency (ms)", series);
    seriesCount = series.length;
    pointCount = series.reduce((a, s) => a + s.points.length, 0);
  } else if (spec.chart === "throughput") {
    const series = throughputSeries(spec);
    svg = errorBarLineChart("Throughput vs cluster size (median, p10-p90)",
      "cluster size (nodes)", "throughput (ops/s)", series);
    seriesCount = series.length;
    pointCount = series.reduce((a, s) => a + s.points.length, 0);
  } else if (spec.chart === "schedsim") {
    const bars = schedsimBars(spec);
    svg = stackedBarChart("Scheduling critical path by step (median ms)",
      "latency (ms)", bars);
    seriesCount = bars.length;
    pointCount = bars.reduce((a, b) => a + b.segments.length, 0);
  } else {
    throw new SchemaError(`unknown chart kind ${JSON.stringify(spec.chart)}`);
  }
  try {
    fs.mkdirSync(path.dirname(path.resolve(spec.out)), { recursive: true });
    fs.writeFileSync(spec.out, svg);
  } catch (err) {
    if (err instanceof SchemaError) throw err;
    throw new IoError(`cannot write ${spec.out}: ${err}`);
  }
  return { out: spec.out, seriesCount, pointCount };
}
