/** One renderer per figure kind.  Each consumes the primary component's
 * CSV/JSON payloads and returns a complete SVG document string. */

import { SchemaError, Table, column, parseCsv, requireColumns } from "./csv.js";
import { GapReport, LifshitzReport, WegnerReport } from "./schemas.js";
import {
  PLOT,
  axes,
  circles,
  color,
  document,
  fmt,
  linearScale,
  logScale,
  polyline,
} from "./svg.js";

export class EmptyDataError extends Error {}

function extent(values: number[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (!(lo < hi)) {
    hi = lo + 1;
  }
  return [lo, hi];
}

function pad([lo, hi]: [number, number], frac = 0.05): [number, number] {
  const span = hi - lo;
  return [lo - frac * span, hi + frac * span];
}

function requireRows(table: Table, path: string): void {
  if (table.rows.length === 0) {
    throw new EmptyDataError(`${path}: dataset is empty; refusing to render`);
  }
}

export function renderBands(csvText: string, path: string, gapJson?: string): string {
  const table = parseCsv(csvText, path);
  requireRows(table, path);
  const thetaCols = table.columns.filter((c) => c.startsWith("theta"));
  const bandCols = table.columns.filter((c) => c.startsWith("E"));
  if (thetaCols.length === 0 || bandCols.length === 0) {
    throw new SchemaError(`${path}: expected theta*/E* columns, got ${table.columns.join(",")}`);
  }
  const xs = table.rows.map((_, i) => i);
  const allE = bandCols.flatMap((c) => column(table, c));
  const x = linearScale(0, Math.max(xs.length - 1, 1), PLOT.x0, PLOT.x1);
  const y = linearScale(...pad(extent(allE)), PLOT.y0, PLOT.y1);
  const parts: string[] = [];
  if (gapJson !== undefined) {
    const gap = GapReport.parse(JSON.parse(gapJson));
    if (gap.found && gap.lower_edge != null && gap.upper_edge != null) {
      const top = y(gap.upper_edge);
      const bottom = y(gap.lower_edge);
      parts.push(
        `<rect x="${PLOT.x0}" y="${fmt(top)}" width="${PLOT.x1 - PLOT.x0}" height="${fmt(bottom - top)}" fill="#dddddd" id="gap-shading"/>`,
      );
    }
  }
  parts.push(axes(x, y, "flattened quasi-momentum grid index", "energy"));
  bandCols.forEach((name, n) => {
    const ys = column(table, name).map(y);
    parts.push(polyline(xs.map(x), ys, color(n)));
  });
  return document("Floquet bands", parts.join("\n"));
}

export function renderIds(csvText: string, path: string): string {
  const table = parseCsv(csvText, path);
  requireColumns(table, ["energy", "value"], path);
  requireRows(table, path);
  const energy = column(table, "energy");
  const value = column(table, "value");
  const x = linearScale(...pad(extent(energy)), PLOT.x0, PLOT.x1);
  const y = linearScale(-0.02, 1.02, PLOT.y0, PLOT.y1);
  const body = [
    axes(x, y, "energy", "integrated density of states"),
    polyline(energy.map(x), value.map(y), color(0)),
  ].join("\n");
  return document("IDS", body);
}

export function renderLifshitz(jsonText: string, path: string): string {
  let parsed: LifshitzReport;
  try {
    parsed = LifshitzReport.parse(JSON.parse(jsonText));
  } catch (err) {
    throw new SchemaError(`${path}: ${String(err)}`);
  }
  if (parsed.log_energies.length === 0) {
    throw new EmptyDataError(`${path}: no fit points; refusing to render`);
  }
  const xs = parsed.log_energies;
  const ys = parsed.loglog_values;
  const x = linearScale(...pad(extent(xs), 0.1), PLOT.x0, PLOT.x1);
  const y = linearScale(...pad(extent(ys), 0.15), PLOT.y0, PLOT.y1);
  const [lo, hi] = extent(xs);
  const fitLine = polyline(
    [x(lo), x(hi)],
    [y(parsed.slope * lo + parsed.intercept), y(parsed.slope * hi + parsed.intercept)],
    color(1),
    'id="fit-line"',
  );
  const meanX = xs.reduce((a, b) => a + b, 0) / xs.length;
  const meanY = ys.reduce((a, b) => a + b, 0) / ys.length;
  const anchor = meanY - parsed.target * meanX;
  const refLine = polyline(
    [x(lo), x(hi)],
    [y(parsed.target * lo + anchor), y(parsed.target * hi + anchor)],
    color(3),
    `id="reference-slope" data-slope="${fmt(parsed.target)}" stroke-dasharray="6 4"`,
  );
  const body = [
    axes(x, y, "log(E - edge)", "log|log(N - N(edge))|"),
    circles(xs.map(x), ys.map(y), color(0)),
    fitLine,
    refLine,
    `<text x="${PLOT.x1 - 8}" y="${PLOT.y1 + 16}" text-anchor="end" font-size="12">fit ${fmt(parsed.slope)}, reference ${fmt(parsed.target)}</text>`,
  ].join("\n");
  return document("Lifshitz tail", body);
}

export function renderWegner(csvText: string, csvPath: string, jsonText: string): string {
  const table = parseCsv(csvText, csvPath);
  requireColumns(table, ["eta", "volume", "p_hat", "ci_low", "ci_high"], csvPath);
  requireRows(table, csvPath);
  const report = WegnerReport.parse(JSON.parse(jsonText));
  const etas = column(table, "eta");
  const volumes = column(table, "volume");
  const pHats = column(table, "p_hat");
  const floor = 1e-4;
  const x = logScale(...extent(etas), PLOT.x0, PLOT.x1);
  const y = logScale(floor, 1.0, PLOT.y0, PLOT.y1);
  const vols = [...new Set(volumes)].sort((a, b) => a - b);
  const parts = [axes(x, y, "window half-width η", "estimated probability")];
  vols.forEach((vol, i) => {
    const sel = table.rows
      .map((_, r) => r)
      .filter((r) => volumes[r] === vol);
    const px = sel.map((r) => x(etas[r]));
    const py = sel.map((r) => y(Math.max(pHats[r], floor)));
    parts.push(circles(px, py, color(i)));
    if (report.c_hat > 0) {
      const ref = sel.map((r) =>
        y(Math.min(1, Math.max(report.c_hat * Math.pow(etas[r], 1 / report.q) * vol, floor))),
      );
      parts.push(
        polyline(px, ref, color(i),
          `id="wegner-reference-${vol}" data-q="${fmt(report.q)}" stroke-dasharray="5 4"`),
      );
    }
  });
  return document("Wegner probe", parts.join("\n"));
}

export function renderDecay(csvText: string, path: string): string {
  const table = parseCsv(csvText, path);
  requireColumns(table, ["side", "norm"], path);
  requireRows(table, path);
  const sides = column(table, "side");
  const norms = column(table, "norm");
  const positive = norms.map((n) => Math.max(n, 1e-300));
  const x = linearScale(...pad(extent(sides), 0.1), PLOT.x0, PLOT.x1);
  const y = logScale(...extent(positive), PLOT.y0, PLOT.y1);
  const body = [
    axes(x, y, "side length L", "boundary-resolvent norm"),
    polyline(sides.map(x), positive.map(y), color(0)),
    circles(sides.map(x), positive.map(y), color(0)),
  ].join("\n");
  return document("boundary-resolvent decay", body);
}
