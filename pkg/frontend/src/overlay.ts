/** Pixel-space agreement between the rendered interface contour and the
 * projected-curve overlay. */

import { Snapshot, interfaceLevel } from "./fchb.js";
import { Point, contourRings } from "./contour.js";

/**
 * The interface-proxy level cuts the bilayer band twice, producing an
 * inner and an outer ring around the midline the reduced flow tracks.
 * Per angular bin the band midline is the average of the two crossing
 * radii; the returned value is the largest pixel distance between that
 * midline and the overlay circle of radius `overlayRadius` (domain
 * units) at the given render width.
 */
export function contourOverlayDistance(
  snap: Snapshot,
  overlayRadius: number,
  width = 800,
  nBins = 32,
): number {
  const rings = contourRings(snap, interfaceLevel(snap));
  if (rings.length < 2) {
    throw new Error(
      `expected an inner and outer interface ring, got ${rings.length}`,
    );
  }
  // the two rings bracketing the band: largest and smallest mean radius
  const meanR = (ring: Point[]) =>
    ring.reduce((a, p) => a + Math.hypot(p.x, p.y), 0) / ring.length;
  const sorted = [...rings].sort((a, b) => meanR(a) - meanR(b));
  const inner = sorted[0];
  const outer = sorted[sorted.length - 1];

  const binRadius = (ring: Point[]) => {
    const sums = new Array(nBins).fill(0);
    const counts = new Array(nBins).fill(0);
    for (const p of ring) {
      const th = Math.atan2(p.y, p.x);
      const b = Math.min(
        nBins - 1,
        Math.floor(((th + Math.PI) / (2 * Math.PI)) * nBins),
      );
      sums[b] += Math.hypot(p.x, p.y);
      counts[b] += 1;
    }
    return sums.map((s, i) => (counts[i] > 0 ? s / counts[i] : NaN));
  };

  const rIn = binRadius(inner);
  const rOut = binRadius(outer);
  const pxPerUnit = width / (2 * snap.L);
  let worst = 0;
  let used = 0;
  for (let b = 0; b < nBins; b++) {
    if (!Number.isFinite(rIn[b]) || !Number.isFinite(rOut[b])) continue;
    const mid = 0.5 * (rIn[b] + rOut[b]);
    worst = Math.max(worst, Math.abs(mid - overlayRadius) * pxPerUnit);
    used += 1;
  }
  if (used < nBins / 2) {
    throw new Error(`interface rings cover only ${used}/${nBins} bins`);
  }
  return worst;
}
