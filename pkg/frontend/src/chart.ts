/** Hand-rolled SVG rendering: median lines with p10-p90 error bars, and
 * stacked composition bars. Every plotted point carries data-* attributes
 * with the exact source values so charts stay machine-checkable. */

export interface ErrorPoint {
  x: number;
  y: number;
  lo: number;
  hi: number;
}

export interface Series {
  label: string;
  points: ErrorPoint[];
}

export interface Segment {
  name: string;
  kind: string;
  value: number;
}

export interface Bar {
  label: string;
  segments: Segment[];
}

const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
  "#8c564b", "#e377c2", "#7f7f7f"];

const W = 720;
const H = 440;
const MARGIN = { top: 48, right: 180, bottom: 56, left: 76 };

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function fmt(value: number): string {
  if (value === 0) return "0";
  const abs = Math.abs(value);
  if (abs >= 1000) return value.toFixed(0);
  if (abs >= 10) return value.toFixed(1);
  return value.toPrecision(3);
}

function ticks(lo: number, hi: number, count = 5): number[] {
  if (hi <= lo) return [lo];
  const span = hi - lo;
  const step = Math.pow(10, Math.floor(Math.log10(span / count)));
  const err = span / (count * step);
  const mult = err >= 7.5 ? 10 : err >= 3.5 ? 5 : err >= 1.5 ? 2 : 1;
  const nice = step * mult;
  const out: number[] = [];
  for (let v = Math.ceil(lo / nice) * nice; v <= hi + 1e-9; v += nice) {
    out.push(Number(v.toFixed(12)));
  }
  return out;
}

interface Scale {
  (value: number): number;
  lo: number;
  hi: number;
}

function linear(lo: number, hi: number, rangeLo: number, rangeHi: number): Scale {
  const span = hi - lo || 1;
  const scale = ((value: number) =>
    rangeLo + ((value - lo) / span) * (rangeHi - rangeLo)) as Scale;
  scale.lo = lo;
  scale.hi = hi;
  return scale;
}

function frame(title: string, body: string): string {
  return `<svg xmlns="http://www.w3.org/2000/svg" width="${W}" height="${H}" viewBox="0 0 ${W} ${H}" font-family="sans-serif">
<rect width="${W}" height="${H}" fill="white"/>
<text x="${W / 2}" y="24" text-anchor="middle" font-size="16">${esc(title)}</text>
${body}
</svg>
`;
}

function axes(sx: Scale, sy: Scale, xLabel: string, yLabel: string,
              xTicks: number[]): string {
  const x0 = MARGIN.left;
  const x1 = W - MARGIN.right;
  const y0 = H - MARGIN.bottom;
  const y1 = MARGIN.top;
  const parts = [
    `<line x1="${x0}" y1="${y0}" x2="${x1}" y2="${y0}" stroke="black"/>`,
    `<line x1="${x0}" y1="${y0}" x2="${x0}" y2="${y1}" stroke="black"/>`,
    `<text x="${(x0 + x1) / 2}" y="${H - 12}" text-anchor="middle" font-size="13">${esc(xLabel)}</text>`,
    `<text x="18" y="${(y0 + y1) / 2}" text-anchor="middle" font-size="13" transform="rotate(-90 18 ${(y0 + y1) / 2})">${esc(yLabel)}</text>`,
  ];
  for (const t of xTicks) {
    const px = sx(t);
    parts.push(`<line x1="${px}" y1="${y0}" x2="${px}" y2="${y0 + 5}" stroke="black"/>`);
    parts.push(`<text x="${px}" y="${y0 + 20}" text-anchor="middle" font-size="12">${fmt(t)}</text>`);
  }
  for (const t of ticks(sy.lo, sy.hi)) {
    const py = sy(t);
    parts.push(`<line x1="${x0 - 5}" y1="${py}" x2="${x0}" y2="${py}" stroke="black"/>`);
    parts.push(`<line x1="${x0}" y1="${py}" x2="${x1}" y2="${py}" stroke="#ddd"/>`);
    parts.push(`<text x="${x0 - 9}" y="${py + 4}" text-anchor="end" font-size="12">${fmt(t)}</text>`);
  }
  return parts.join("\n");
}

function legend(labels: string[]): string {
  const x = W - MARGIN.right + 16;
  return labels.map((label, i) => {
    const y = MARGIN.top + 10 + i * 22;
    const color = PALETTE[i % PALETTE.length];
    return `<rect x="${x}" y="${y - 9}" width="12" height="12" fill="${color}"/>` +
      `<text x="${x + 18}" y="${y + 2}" font-size="12">${esc(label)}</text>`;
  }).join("\n");
}

/** Median line per series with vertical p10-p90 whiskers at each point. */
export function errorBarLineChart(title: string, xLabel: string, yLabel: string,
                                  series: Series[]): string {
  const points = series.flatMap((s) => s.points);
  const xs = points.map((p) => p.x);
  const his = points.map((p) => p.hi);
  const sx = linear(Math.min(...xs), Math.max(...xs),
    MARGIN.left + 24, W - MARGIN.right - 24);
  const sy = linear(0, Math.max(...his) * 1.06 || 1,
    H - MARGIN.bottom, MARGIN.top);
  const body: string[] = [axes(sx, sy, xLabel, yLabel, [...new Set(xs)].sort((a, b) => a - b))];
  series.forEach((s, i) => {
    const color = PALETTE[i % PALETTE.length];
    const ordered = [...s.points].sort((a, b) => a.x - b.x);
    const path = ordered.map((p) => `${sx(p.x)},${sy(p.y)}`).join(" ");
    const parts = [`<polyline points="${path}" fill="none" stroke="${color}" stroke-width="2"/>`];
    for (const p of ordered) {
      const px = sx(p.x);
      parts.push(`<line x1="${px}" y1="${sy(p.lo)}" x2="${px}" y2="${sy(p.hi)}" stroke="${color}" stroke-width="1.5"/>`);
      parts.push(`<line x1="${px - 4}" y1="${sy(p.lo)}" x2="${px + 4}" y2="${sy(p.lo)}" stroke="${color}"/>`);
      parts.push(`<line x1="${px - 4}" y1="${sy(p.hi)}" x2="${px + 4}" y2="${sy(p.hi)}" stroke="${color}"/>`);
      parts.push(`<circle cx="${px}" cy="${sy(p.y)}" r="3.5" fill="${color}" ` +
        `data-series="${esc(s.label)}" data-x="${p.x}" data-y="${p.y}" ` +
        `data-lo="${p.lo}" data-hi="${p.hi}"/>`);
    }
    body.push(`<g class="series" data-series="${esc(s.label)}">\n${parts.join("\n")}\n</g>`);
  });
  body.push(legend(series.map((s) => s.label)));
  return frame(title, body.join("\n"));
}

/** One stacked horizontal bar per entry, segments in given order. */
export function stackedBarChart(title: string, xLabel: string,
                                bars: Bar[]): string {
  const totals = bars.map((b) => b.segments.reduce((a, s) => a + s.value, 0));
  const sx = linear(0, Math.max(...totals) * 1.06 || 1,
    MARGIN.left, W - MARGIN.right);
  const kinds = [...new Set(bars.flatMap((b) => b.segments.map((s) => s.kind)))];
  const barH = 44;
  const body: string[] = [];
  const y0 = H - MARGIN.bottom;
  body.push(`<line x1="${MARGIN.left}" y1="${y0}" x2="${W - MARGIN.right}" y2="${y0}" stroke="black"/>`);
  for (const t of ticks(0, sx.hi)) {
    body.push(`<line x1="${sx(t)}" y1="${y0}" x2="${sx(t)}" y2="${y0 + 5}" stroke="black"/>`);
    body.push(`<text x="${sx(t)}" y="${y0 + 20}" text-anchor="middle" font-size="12">${fmt(t)}</text>`);
  }
  body.push(`<text x="${(MARGIN.left + W - MARGIN.right) / 2}" y="${H - 12}" text-anchor="middle" font-size="13">${esc(xLabel)}</text>`);
  bars.forEach((bar, i) => {
    const y = MARGIN.top + 30 + i * (barH + 26);
    let cursor = 0;
    const parts: string[] = [];
    for (const segment of bar.segments) {
      const px0 = sx(cursor);
      const px1 = sx(cursor + segment.value);
      const color = PALETTE[kinds.indexOf(segment.kind) % PALETTE.length];
      parts.push(`<rect x="${px0}" y="${y}" width="${Math.max(px1 - px0, 0)}" height="${barH}" ` +
        `fill="${color}" stroke="white" stroke-width="0.5" ` +
        `data-series="${esc(bar.label)}" data-step="${esc(segment.name)}" ` +
        `data-kind="${esc(segment.kind)}" data-value="${segment.value}"/>`);
      cursor += segment.value;
    }
    parts.push(`<text x="${MARGIN.left - 8}" y="${y + barH / 2 + 4}" text-anchor="end" font-size="13">${esc(bar.label)}</text>`);
    parts.push(`<text x="${sx(cursor) + 6}" y="${y + barH / 2 + 4}" font-size="12">${fmt(cursor)}</text>`);
    body.push(`<g class="series" data-series="${esc(bar.label)}">\n${parts.join("\n")}\n</g>`);
  });
  body.push(legend(kinds));
  return frame(title, body.join("\n"));
}
