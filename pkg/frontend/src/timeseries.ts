/** Multi-panel SVG time-series rendering for solver diagnostics. */

import { scaleLinear } from "d3-scale";
import { line as d3line } from "d3-shape";

import { escapeXml } from "./contour.js";

export interface Series {
  label: string;
  t: number[];
  v: number[];
  color?: string;
}

export interface Panel {
  title: string;
  series: Series[];
  /** Plot log10 of the values (residual norms and friends). */
  log?: boolean;
}

export interface TimeseriesOptions {
  width?: number;
  panelHeight?: number;
  caption?: string;
}

export function timeseriesSvg(
  panels: Panel[],
  opts: TimeseriesOptions = {},
): string {
  const width = opts.width ?? 800;
  const ph = opts.panelHeight ?? 180;
  const ml = 70;
  const mr = 16;
  const mt = 26;
  const mb = 24;
  const height = panels.length * ph + (opts.caption ? 24 : 0);
  const parts: string[] = [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" ` +
      `height="${height}" viewBox="0 0 ${width} ${height}" ` +
      `font-family="monospace" font-size="12">`,
    `<rect width="${width}" height="${height}" fill="#ffffff"/>`,
  ];
  const palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

  panels.forEach((panel, pi) => {
    const y0 = pi * ph;
    const tAll = panel.series.flatMap((s) => s.t);
    const vAll = panel.series.flatMap((s) =>
      panel.log ? s.v.map((v) => Math.log10(Math.max(v, 1e-300))) : s.v,
    );
    const tMin = Math.min(...tAll);
    const tMax = Math.max(...tAll);
    let vMin = Math.min(...vAll);
    let vMax = Math.max(...vAll);
    if (vMax - vMin < 1e-12) {
      const pad = Math.max(1e-12, Math.abs(vMax) * 1e-6);
      vMin -= pad;
      vMax += pad;
    }
    const sx = scaleLinear([tMin, tMax], [ml, width - mr]);
    const sy = scaleLinear([vMin, vMax], [y0 + ph - mb, y0 + mt]);
    parts.push(
      `<rect x="${ml}" y="${y0 + mt}" width="${width - ml - mr}" ` +
        `height="${ph - mt - mb}" fill="none" stroke="#cccccc"/>`,
      `<text x="${ml}" y="${y0 + 16}" fill="#333333">` +
        `${escapeXml(panel.title)}</text>`,
      `<text x="${ml - 6}" y="${sy(vMax) + 4}" text-anchor="end" ` +
        `fill="#666666">${vMax.toPrecision(4)}</text>`,
      `<text x="${ml - 6}" y="${sy(vMin) + 4}" text-anchor="end" ` +
        `fill="#666666">${vMin.toPrecision(4)}</text>`,
    );
    panel.series.forEach((s, si) => {
      const gen = d3line<number>()
        .x((_, i) => sx(s.t[i]))
        .y((_, i) =>
          sy(panel.log ? Math.log10(Math.max(s.v[i], 1e-300)) : s.v[i]),
        );
      const d = gen(s.v.map((_, i) => i)) ?? "";
      const color = s.color ?? palette[si % palette.length];
      parts.push(
        `<path d="${d}" fill="none" stroke="${color}" stroke-width="1.5"/>`,
        `<text x="${width - mr - 6}" y="${y0 + 16 + 14 * si}" ` +
          `text-anchor="end" fill="${color}">${escapeXml(s.label)}</text>`,
      );
    });
  });

  if (opts.caption) {
    parts.push(
      `<text x="8" y="${height - 8}" fill="#333333">` +
        `${escapeXml(opts.caption)}</text>`,
    );
  }
  parts.push("</svg>");
  return parts.join("\n") + "\n";
}
