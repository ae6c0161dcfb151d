/** Run-length mask decoding.
 *
 * The service sends masks as {h, w, runs: [start, len, ...]} over the
 * row-major flattening of the binary mask.
 */

import type { RleMask } from "./api.js";

/** Decode to a flat Uint8Array of h*w zeros and ones. */
export function decodeRle(mask: RleMask): Uint8Array {
  const { h, w, runs } = mask;
  if (h <= 0 || w <= 0) {
    throw new Error(`bad mask size ${h}x${w}`);
  }
  if (runs.length % 2 !== 0) {
    throw new Error(`runs must be (start, len) pairs, got ${runs.length} values`);
  }
  const out = new Uint8Array(h * w);
  for (let i = 0; i < runs.length; i += 2) {
    const start = runs[i];
    const len = runs[i + 1];
    if (start < 0 || len < 0 || start + len > out.length) {
      throw new Error(`run (${start}, ${len}) outside ${h}x${w} mask`);
    }
    out.fill(1, start, start + len);
  }
  return out;
}

/** Total foreground pixel count of a decoded or encoded mask. */
export function maskArea(mask: RleMask): number {
  let area = 0;
  for (let i = 1; i < mask.runs.length; i += 2) {
    area += mask.runs[i];
  }
  return area;
}
