/** Directory-level rendering of an experiment artifact tree. */

import { mkdir, readdir, writeFile } from "fs/promises";
import { existsSync } from "fs";
import path from "path";

import {
  RadiusRow,
  RunSummary,
  TrajectoryRow,
  interpolateAt,
  readRadiusComparison,
  readSummary,
  readTrajectory,
} from "./config.js";
import { Snapshot, fieldMax, fieldMin, readSnapshot } from "./fchb.js";
import { circlePoints, fieldSvg } from "./contour.js";
import { Panel, timeseriesSvg } from "./timeseries.js";

export interface RenderManifest {
  fieldImages: string[];
  timeseriesImage: string;
  movie?: string;
  captions: string[];
  summary: RunSummary;
}

export function snapshotCaption(snap: Snapshot, summary: RunSummary): string {
  return (
    `${summary.experiment} v${summary.version}  ` +
    `t=${snap.t.toPrecision(6)}  eps=${snap.eps}  ` +
    `grid=${snap.nX}x${snap.nY}  L=${snap.L.toPrecision(6)}`
  );
}

async function listSnapshots(inDir: string): Promise<string[]> {
  const dir = path.join(inDir, "snapshots");
  if (!existsSync(dir)) return [];
  const names = (await readdir(dir)).filter((f) => f.endsWith(".fchb"));
  names.sort();
  return names.map((f) => path.join(dir, f));
}

function trajectoryPanels(
  rows: TrajectoryRow[],
  radii: RadiusRow[] | null,
): Panel[] {
  const t = rows.map((r) => r.t);
  const panels: Panel[] = [
    {
      title: "free energy",
      series: [{ label: "E(t)", t, v: rows.map((r) => r.energy) }],
    },
    {
      title: "mass (mean value)",
      series: [{ label: "mass", t, v: rows.map((r) => r.mass) }],
    },
    {
      title: "projected residual norm (log10)",
      series: [{ label: "||Pi0 F||", t, v: rows.map((r) => r.res_norm) }],
      log: true,
    },
  ];
  if (radii && radii.length > 0) {
    panels.splice(1, 0, {
      title: "interface radius: PDE vs reduced flow",
      series: [
        { label: "R_pde", t: radii.map((r) => r.t), v: radii.map((r) => r.R_pde) },
        {
          label: "R_curve",
          t: radii.map((r) => r.t),
          v: radii.map((r) => r.R_curve),
        },
      ],
    });
  }
  return panels;
}

/** Render every artifact of an experiment directory into SVG images. */
export async function renderExperiment(
  inDir: string,
  outDir: string,
  opts: { movie?: boolean; width?: number } = {},
): Promise<RenderManifest> {
  const width = opts.width ?? 800;
  const summary = await readSummary(path.join(inDir, "summary.json"));
  await mkdir(outDir, { recursive: true });

  const snapPaths = await listSnapshots(inDir);
  const snaps = await Promise.all(snapPaths.map(readSnapshot));

  // shared color scale across the whole snapshot series
  let lo = Infinity;
  let hi = -Infinity;
  for (const s of snaps) {
    lo = Math.min(lo, fieldMin(s));
    hi = Math.max(hi, fieldMax(s));
  }

  const radiusPath = path.join(inDir, "radius_comparison.csv");
  const radii = existsSync(radiusPath)
    ? await readRadiusComparison(radiusPath)
    : null;

  const fieldImages: string[] = [];
  const captions: string[] = [];
  for (const snap of snaps) {
    const caption = snapshotCaption(snap, summary);
    const overlay = radii
      ? circlePoints(interpolateAt(radii, snap.t, "R_pde"))
      : undefined;
    const svg = fieldSvg(snap, {
      width,
      domain: [lo, hi],
      caption,
      overlay,
    });
    const name = `field_${snap.t.toFixed(3).padStart(12, "0")}.svg`;
    const out = path.join(outDir, name);
    await writeFile(out, svg);
    fieldImages.push(out);
    captions.push(caption);
  }

  const trajPath = ["pde_trajectory.csv", "trajectory.csv"]
    .map((f) => path.join(inDir, f))
    .find(existsSync);
  if (!trajPath) {
    throw new Error(`no trajectory CSV found under ${inDir}`);
  }
  const rows = await readTrajectory(trajPath);
  const tsSvg = timeseriesSvg(trajectoryPanels(rows, radii), {
    width,
    caption: `${summary.experiment} v${summary.version}  seed=${summary.seed}`,
  });
  const timeseriesImage = path.join(outDir, "timeseries.svg");
  await writeFile(timeseriesImage, tsSvg);

  let movie: string | undefined;
  if (opts.movie) {
    movie = path.join(outDir, "movie.html");
    await writeFile(movie, movieHtml(fieldImages.map((p) => path.basename(p))));
  }

  return { fieldImages, timeseriesImage, movie, captions, summary };
}

function movieHtml(frames: string[]): string {
  return `<!DOCTYPE html>
<html>
<head><meta charset="utf-8"><title>field sequence</title></head>
<body style="margin:0;background:#000">
<img id="frame" src="${frames[0] ?? ""}" style="width:100vmin;height:100vmin">
<script>
const frames = ${JSON.stringify(frames)};
let i = 0;
setInterval(() => {
  i = (i + 1) % frames.length;
  document.getElementById("frame").src = frames[i];
}, 400);
</script>
</body>
</html>
`;
}
