/** Contour extraction and SVG rendering for field snapshots. */

import { contours } from "d3-contour";
import { scaleLinear, scaleSequential } from "d3-scale";
import { interpolateViridis } from "d3-scale-chromatic";

import { Snapshot, interfaceLevel } from "./fchb.js";

export interface Point {
  x: number;
  y: number;
}

/**
 * Rings of the interface-proxy contour, in domain coordinates.
 *
 * d3-contour consumes values[row * width + col]; our snapshots store
 * values[ix * nY + iy], so d3's (x, y) grid indices are our (iy, ix)
 * and are mapped back through the shared [-L, L) axes.
 */
export function contourRings(snap: Snapshot, level?: number): Point[][] {
  const lv = level ?? interfaceLevel(snap);
  const h = (2 * snap.L) / snap.nX;
  const polys = contours()
    .size([snap.nY, snap.nX])
    .contour(Array.from(snap.values), lv);
  const rings: Point[][] = [];
  for (const polygon of polys.coordinates) {
    for (const ring of polygon) {
      rings.push(
        ring.map(([gx, gy]) => ({
          x: -snap.L + h * (gy - 0.5),
          y: -snap.L + h * (gx - 0.5),
        })),
      );
    }
  }
  return rings;
}

export interface FieldSvgOptions {
  width?: number;
  nLevels?: number;
  /** Shared color domain [lo, hi] across a snapshot series. */
  domain?: [number, number];
  caption?: string;
  /** Overlay curve in domain coordinates, drawn on top of the field. */
  overlay?: Point[];
}

/** Render one snapshot as filled contour bands with the interface-proxy
 * level highlighted; returns a standalone SVG document string. */
export function fieldSvg(snap: Snapshot, opts: FieldSvgOptions = {}): string {
  const width = opts.width ?? 800;
  const nLevels = opts.nLevels ?? 12;
  let lo: number;
  let hi: number;
  if (opts.domain) {
    [lo, hi] = opts.domain;
  } else {
    lo = Math.min(...snap.values);
    hi = Math.max(...snap.values);
  }
  const color = scaleSequential(interpolateViridis).domain([lo, hi]);
  const sx = scaleLinear([-snap.L, snap.L], [0, width]);
  const px = (p: Point) => `${sx(p.x).toFixed(2)},${sx(p.y).toFixed(2)}`;

  const thresholds = Array.from(
    { length: nLevels },
    (_, i) => lo + ((i + 0.5) * (hi - lo)) / nLevels,
  );
  const h = (2 * snap.L) / snap.nX;
  const gen = contours().size([snap.nY, snap.nX]).thresholds(thresholds);
  const bands = gen(Array.from(snap.values));

  const paths: string[] = [];
  for (const band of bands) {
    const d = band.coordinates
      .map((polygon) =>
        polygon
          .map(
            (ring) =>
              "M" +
              ring
                .map(([gx, gy]) =>
                  px({
                    x: -snap.L + h * (gy - 0.5),
                    y: -snap.L + h * (gx - 0.5),
                  }),
                )
                .join("L") +
              "Z",
          )
          .join(""),
      )
      .join("");
    if (d.length > 0) {
      paths.push(
        `<path d="${d}" fill="${color(band.value)}" stroke="none"/>`,
      );
    }
  }

  const iface = contourRings(snap)
    .map((ring) => "M" + ring.map(px).join("L") + "Z")
    .join("");
  const overlay =
    opts.overlay && opts.overlay.length > 1
      ? `<path d="M${opts.overlay.map(px).join("L")}Z" fill="none" ` +
        `stroke="#ff3333" stroke-width="1.5" stroke-dasharray="6 4"/>`
      : "";
  const caption = opts.caption
    ? `<text x="8" y="${width - 10}" font-family="monospace" ` +
      `font-size="14" fill="#ffffff">${escapeXml(opts.caption)}</text>`
    : "";

  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" ` +
    `height="${width}" viewBox="0 0 ${width} ${width}">\n` +
    `<rect width="${width}" height="${width}" fill="${color(lo)}"/>\n` +
    paths.join("\n") +
    `\n<path d="${iface}" fill="none" stroke="#ffffff" stroke-width="2"/>\n` +
    overlay +
    "\n" +
    caption +
    "\n</svg>\n"
  );
}

export function escapeXml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Sampled circle in domain coordinates (the reduced-flow overlay). */
export function circlePoints(radius: number, n = 256): Point[] {
  return Array.from({ length: n }, (_, i) => {
    const th = (2 * Math.PI * i) / n;
    return { x: radius * Math.cos(th), y: radius * Math.sin(th) };
  });
}
