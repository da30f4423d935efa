/**
 * Dependency-free SVG chart builders.
 *
 * Pure string producers: values in, SVG markup out. Gaps (null values,
 * e.g. an undefined metric for an epoch with an empty denominator)
 * break the polyline rather than interpolating across it.
 */

export interface Series {
  label: string;
  values: Array<number | null>;
  color: string;
}

export interface ChartOptions {
  width?: number;
  height?: number;
  min?: number;
  max?: number;
}

const MARGIN = { top: 8, right: 8, bottom: 18, left: 34 };

function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/**
 * Piecewise path for one series over epoch indices 0..n-1. Exported for
 * tests; renderLineChart embeds its output.
 */
export function linePath(
  values: Array<number | null>,
  plotWidth: number,
  plotHeight: number,
  min: number,
  max: number,
): string {
  const n = values.length;
  if (n === 0 || max <= min) return "";
  const step = n > 1 ? plotWidth / (n - 1) : 0;
  const parts: string[] = [];
  let penDown = false;
  values.forEach((v, i) => {
    if (v === null || !Number.isFinite(v)) {
      penDown = false;
      return;
    }
    const x = n > 1 ? i * step : plotWidth / 2;
    const y = plotHeight - ((v - min) / (max - min)) * plotHeight;
    parts.push(`${penDown ? "L" : "M"}${x.toFixed(1)},${y.toFixed(1)}`);
    penDown = true;
  });
  return parts.join(" ");
}

/** Multi-series line chart with a y-axis scaled to [min, max]. */
export function renderLineChart(title: string, series: Series[], options: ChartOptions = {}): string {
  const width = options.width ?? 320;
  const height = options.height ?? 160;
  const min = options.min ?? 0;
  const max = options.max ?? 1;
  const plotWidth = width - MARGIN.left - MARGIN.right;
  const plotHeight = height - MARGIN.top - MARGIN.bottom;
  const epochs = Math.max(0, ...series.map((s) => s.values.length));

  const paths = series
    .map((s) => {
      const d = linePath(s.values, plotWidth, plotHeight, min, max);
      return d === ""
        ? ""
        : `<path d="${d}" fill="none" stroke="${s.color}" stroke-width="1.5"/>`;
    })
    .join("");
  const legend = series
    .map(
      (s, i) =>
        `<text x="0" y="${12 * (i + 1)}" fill="${s.color}" font-size="10">${escapeXml(s.label)}</text>`,
    )
    .join("");
  const yTicks = [min, (min + max) / 2, max]
    .map((v) => {
      const y = plotHeight - ((v - min) / (max - min)) * plotHeight;
      return (
        `<text x="-4" y="${y.toFixed(1)}" text-anchor="end" dominant-baseline="middle" ` +
        `font-size="9" fill="currentColor" opacity="0.6">${v.toFixed(1)}</text>` +
        `<line x1="0" x2="${plotWidth}" y1="${y.toFixed(1)}" y2="${y.toFixed(1)}" ` +
        `stroke="currentColor" opacity="0.12"/>`
      );
    })
    .join("");

  return (
    `<figure class="chart"><figcaption>${escapeXml(title)}</figcaption>` +
    `<svg viewBox="0 0 ${width} ${height}" role="img" aria-label="${escapeXml(title)}">` +
    `<g transform="translate(${MARGIN.left},${MARGIN.top})">` +
    yTicks +
    paths +
    `<text x="${plotWidth}" y="${plotHeight + 13}" text-anchor="end" font-size="9" ` +
    `fill="currentColor" opacity="0.6">epoch 1–${epochs}</text>` +
    `</g><g transform="translate(${MARGIN.left + 4},${MARGIN.top})">${legend}</g>` +
    `</svg></figure>`
  );
}

/**
 * Attribute detail rows: one bar per attribute on the shared [0,1]
 * scale, with the top-ranked attributes visually marked.
 */
export function renderValueBars(
  names: string[],
  values: number[],
  highlights: Set<string>,
): string {
  const rows = names
    .map((name, i) => {
      const value = values[i] ?? 0;
      const clamped = Math.max(0, Math.min(1, value));
      const marked = highlights.has(name);
      return (
        `<div class="attr-row${marked ? " attr-top" : ""}">` +
        `<span class="attr-name">${escapeXml(name)}${marked ? " ★" : ""}</span>` +
        `<span class="attr-bar"><span class="attr-fill" style="width:${(clamped * 100).toFixed(1)}%"></span></span>` +
        `<span class="attr-value">${value.toFixed(3)}</span>` +
        `</div>`
      );
    })
    .join("");
  return `<div class="attr-table">${rows}</div>`;
}
