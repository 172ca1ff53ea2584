/** Schemas for the JSON/CSV artifacts written by the experiment runner. */

import { readFile } from "fs/promises";
import { csvParse } from "d3-dsv";
import { z } from "zod";

export const runSummarySchema = z
  .object({
    experiment: z.string(),
    version: z.string(),
    seed: z.number().int(),
    config: z.record(z.unknown()),
  })
  .passthrough();

export type RunSummary = z.infer<typeof runSummarySchema>;

/** Extra fields the pde-vs-curve experiment is contracted to emit. */
export const pdeVsCurveSummarySchema = runSummarySchema.extend({
  experiment: z.literal("pde-vs-curve"),
  epsilon: z.number().positive(),
  M0: z.number(),
  R_star: z.number().positive(),
  c_t: z.number(),
  max_rel_deviation: z.number().nonnegative(),
  R_pde_final: z.number().positive(),
  R_curve_final: z.number().positive(),
});

export type PdeVsCurveSummary = z.infer<typeof pdeVsCurveSummarySchema>;

export async function readSummary(path: string): Promise<RunSummary> {
  return runSummarySchema.parse(JSON.parse(await readFile(path, "utf8")));
}

export interface TrajectoryRow {
  t: number;
  mass: number;
  energy: number;
  res_norm: number;
  dt: number;
}

export interface RadiusRow {
  t: number;
  R_pde: number;
  R_curve: number;
}

function numericRows<T>(text: string, columns: (keyof T & string)[]): T[] {
  const parsed = csvParse(text);
  for (const c of columns) {
    if (!parsed.columns.includes(c)) {
      throw new Error(`missing CSV column "${c}" (got ${parsed.columns})`);
    }
  }
  return parsed.map((row) => {
    const out = {} as Record<string, number>;
    for (const c of columns) {
      const v = Number(row[c]);
      if (!Number.isFinite(v)) {
        throw new Error(`non-numeric value "${row[c]}" in column "${c}"`);
      }
      out[c] = v;
    }
    return out as T;
  });
}

export async function readTrajectory(path: string): Promise<TrajectoryRow[]> {
  return numericRows<TrajectoryRow>(await readFile(path, "utf8"), [
    "t",
    "mass",
    "energy",
    "res_norm",
    "dt",
  ]);
}

export async function readRadiusComparison(path: string): Promise<RadiusRow[]> {
  return numericRows<RadiusRow>(await readFile(path, "utf8"), [
    "t",
    "R_pde",
    "R_curve",
  ]);
}

/** Linear interpolation of a sampled series at time t (clamped). */
export function interpolateAt(
  rows: { t: number }[],
  t: number,
  key: string,
): number {
  const get = (r: { t: number }) => (r as Record<string, number>)[key];
  if (rows.length === 0) throw new Error("empty series");
  if (t <= rows[0].t) return get(rows[0]);
  const last = rows[rows.length - 1];
  if (t >= last.t) return get(last);
  for (let i = 1; i < rows.length; i++) {
    if (rows[i].t >= t) {
      const a = rows[i - 1];
      const b = rows[i];
      const w = (t - a.t) / (b.t - a.t);
      return (1 - w) * get(a) + w * get(b);
    }
  }
  return get(last);
}
