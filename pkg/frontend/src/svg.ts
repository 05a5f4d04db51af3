/** Deterministic SVG assembly: fixed canvas, fixed fonts, numbers printed
 * with a locale-independent trimmed precision.  Identical inputs produce
 * identical bytes. */

export const WIDTH = 720;
export const HEIGHT = 480;
export const MARGIN = { left: 72, right: 24, top: 40, bottom: 56 };

export function fmt(x: number): string {
  if (!Number.isFinite(x)) return "0";
  if (x === 0) return "0";
  const out = x.toPrecision(8);
  return out.includes(".") ? out.replace(/\.?0+(e|$)/, "$1") : out;
}

export interface Scale {
  (value: number): number;
  ticks: number[];
  label: (v: number) => string;
}

function ticksLinear(lo: number, hi: number, count = 6): number[] {
  const span = hi - lo;
  if (span <= 0) return [lo];
  const step = Math.pow(10, Math.floor(Math.log10(span / count)));
  const candidates = [step, 2 * step, 5 * step, 10 * step];
  const chosen = candidates.find((s) => span / s <= count) ?? 10 * step;
  const first = Math.ceil(lo / chosen) * chosen;
  const out: number[] = [];
  for (let v = first; v <= hi + 1e-12 * span; v += chosen) out.push(v);
  return out;
}

export function linearScale(lo: number, hi: number, rLo: number, rHi: number): Scale {
  const span = hi - lo || 1;
  const scale = ((value: number) => rLo + ((value - lo) / span) * (rHi - rLo)) as Scale;
  scale.ticks = ticksLinear(lo, hi);
  scale.label = (v) => fmt(Math.abs(v) < 1e-12 * Math.abs(span) ? 0 : v);
  return scale;
}

export function logScale(lo: number, hi: number, rLo: number, rHi: number): Scale {
  const a = Math.log10(lo);
  const b = Math.log10(hi);
  const span = b - a || 1;
  const scale = ((value: number) =>
    rLo + ((Math.log10(value) - a) / span) * (rHi - rLo)) as Scale;
  const ticks: number[] = [];
  for (let e = Math.ceil(a); e <= Math.floor(b); e++) ticks.push(Math.pow(10, e));
  scale.ticks = ticks.length >= 2 ? ticks : [lo, hi];
  scale.label = (v) => {
    const e = Math.log10(v);
    return Number.isInteger(e) ? `1e${e}` : fmt(v);
  };
  return scale;
}

export const PLOT = {
  x0: MARGIN.left,
  x1: WIDTH - MARGIN.right,
  y0: HEIGHT - MARGIN.bottom,
  y1: MARGIN.top,
};

const PALETTE = ["#1f6fb4", "#d95f02", "#2c8e5b", "#c23b80", "#6a51a3", "#666666"];

export function color(i: number): string {
  return PALETTE[i % PALETTE.length];
}

export function polyline(
  xs: number[],
  ys: number[],
  stroke: string,
  extra = "",
): string {
  const pts = xs.map((x, i) => `${fmt(x)},${fmt(ys[i])}`).join(" ");
  return `<polyline fill="none" stroke="${stroke}" stroke-width="1.4" points="${pts}" ${extra}/>`;
}

export function circles(xs: number[], ys: number[], fill: string): string {
  return xs
    .map((x, i) => `<circle cx="${fmt(x)}" cy="${fmt(ys[i])}" r="3" fill="${fill}"/>`)
    .join("\n");
}

export function axes(x: Scale, y: Scale, xlabel: string, ylabel: string): string {
  const parts: string[] = [];
  parts.push(
    `<line x1="${PLOT.x0}" y1="${PLOT.y0}" x2="${PLOT.x1}" y2="${PLOT.y0}" stroke="#222" stroke-width="1"/>`,
    `<line x1="${PLOT.x0}" y1="${PLOT.y0}" x2="${PLOT.x0}" y2="${PLOT.y1}" stroke="#222" stroke-width="1"/>`,
  );
  for (const t of x.ticks) {
    const px = x(t);
    parts.push(
      `<line x1="${fmt(px)}" y1="${PLOT.y0}" x2="${fmt(px)}" y2="${PLOT.y0 + 5}" stroke="#222" stroke-width="1"/>`,
      `<text x="${fmt(px)}" y="${PLOT.y0 + 20}" text-anchor="middle" font-size="11">${x.label(t)}</text>`,
    );
  }
  for (const t of y.ticks) {
    const py = y(t);
    parts.push(
      `<line x1="${PLOT.x0 - 5}" y1="${fmt(py)}" x2="${PLOT.x0}" y2="${fmt(py)}" stroke="#222" stroke-width="1"/>`,
      `<text x="${PLOT.x0 - 8}" y="${fmt(py + 4)}" text-anchor="end" font-size="11">${y.label(t)}</text>`,
    );
  }
  parts.push(
    `<text x="${(PLOT.x0 + PLOT.x1) / 2}" y="${HEIGHT - 12}" text-anchor="middle" font-size="13">${xlabel}</text>`,
    `<text x="18" y="${(PLOT.y0 + PLOT.y1) / 2}" text-anchor="middle" font-size="13" transform="rotate(-90 18 ${(PLOT.y0 + PLOT.y1) / 2})">${ylabel}</text>`,
  );
  return parts.join("\n");
}

export function document(title: string, body: string): string {
  return [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}" font-family="DejaVu Sans, sans-serif">`,
    `<rect width="${WIDTH}" height="${HEIGHT}" fill="#ffffff"/>`,
    `<text x="${WIDTH / 2}" y="24" text-anchor="middle" font-size="15">${title}</text>`,
    body,
    `</svg>`,
    ``,
  ].join("\n");
}
