/**
 * Parser for the binary field-snapshot format emitted by the solver.
 *
 * Layout (little-endian, no padding):
 *   0  "FCHB"      4-byte magic
 *   4  version     uint32 (currently 1)
 *   8  n_x         uint32
 *  12  n_y         uint32
 *  16  L           float64   half-width of the [-L, L)^2 domain
 *  24  eps         float64   interface-width parameter
 *  32  t           float64   simulation time
 *  40  values      n_x * n_y float64, row-major (x index outermost)
 */

import { readFile } from "fs/promises";

export const SNAPSHOT_MAGIC = "FCHB";
export const SNAPSHOT_VERSION = 1;
export const HEADER_BYTES = 40;

export class BadMagic extends Error {
  constructor(message: string) {
    super(message);
    this.name = "BadMagic";
  }
}

export class TruncatedFile extends Error {
  constructor(message: string) {
    super(message);
    this.name = "TruncatedFile";
  }
}

export interface Snapshot {
  nX: number;
  nY: number;
  L: number;
  eps: number;
  t: number;
  /** Row-major: values[ix * nY + iy]; x = -L + ix * (2L / nX). */
  values: Float64Array;
}

export function parseSnapshot(buf: Buffer): Snapshot {
  if (buf.length < HEADER_BYTES) {
    throw new TruncatedFile(
      `snapshot header truncated: ${buf.length} < ${HEADER_BYTES} bytes`,
    );
  }
  const magic = buf.toString("latin1", 0, 4);
  if (magic !== SNAPSHOT_MAGIC) {
    throw new BadMagic(`bad magic ${JSON.stringify(magic)}`);
  }
  const version = buf.readUInt32LE(4);
  if (version !== SNAPSHOT_VERSION) {
    throw new BadMagic(`unsupported version ${version}`);
  }
  const nX = buf.readUInt32LE(8);
  const nY = buf.readUInt32LE(12);
  const L = buf.readDoubleLE(16);
  const eps = buf.readDoubleLE(24);
  const t = buf.readDoubleLE(32);
  const need = HEADER_BYTES + nX * nY * 8;
  if (buf.length < need) {
    throw new TruncatedFile(
      `snapshot body truncated: ${buf.length} < ${need} bytes`,
    );
  }
  const values = new Float64Array(nX * nY);
  for (let i = 0; i < values.length; i++) {
    values[i] = buf.readDoubleLE(HEADER_BYTES + 8 * i);
  }
  return { nX, nY, L, eps, t, values };
}

export async function readSnapshot(path: string): Promise<Snapshot> {
  return parseSnapshot(await readFile(path));
}

export function fieldMin(snap: Snapshot): number {
  let m = Infinity;
  for (const v of snap.values) m = Math.min(m, v);
  return m;
}

export function fieldMax(snap: Snapshot): number {
  let m = -Infinity;
  for (const v of snap.values) m = Math.max(m, v);
  return m;
}

/**
 * Level of the interface proxy contour.  For a bilayer state the field
 * ranges from the background value up to the pulse maximum, so the
 * midpoint of the observed range is the documented (b_- + u_max)/2
 * proxy without re-deriving the well constants here.
 */
export function interfaceLevel(snap: Snapshot): number {
  return 0.5 * (fieldMin(snap) + fieldMax(snap));
}
