// Run-length mask decoding.

import { describe, expect, it } from "vitest";

import { decodeRle, maskArea } from "../src/rle.js";

describe("decodeRle", () => {
  it("decodes a known mask", () => {
    // mask [[0,1,1],[1,0,0]] flattens to runs [1,3]
    const flat = decodeRle({ h: 2, w: 3, runs: [1, 3] });
    expect(Array.from(flat)).toEqual([0, 1, 1, 1, 0, 0]);
  });

  it("decodes empty and full masks", () => {
    expect(Array.from(decodeRle({ h: 2, w: 2, runs: [] }))).toEqual([0, 0, 0, 0]);
    expect(Array.from(decodeRle({ h: 2, w: 2, runs: [0, 4] }))).toEqual([
      1, 1, 1, 1,
    ]);
  });

  it("handles multiple runs", () => {
    const flat = decodeRle({ h: 1, w: 8, runs: [0, 2, 5, 2] });
    expect(Array.from(flat)).toEqual([1, 1, 0, 0, 0, 1, 1, 0]);
  });

  it("rejects malformed runs", () => {
    expect(() => decodeRle({ h: 2, w: 2, runs: [0] })).toThrow(/pairs/);
    expect(() => decodeRle({ h: 2, w: 2, runs: [3, 5] })).toThrow(/outside/);
    expect(() => decodeRle({ h: 0, w: 2, runs: [] })).toThrow(/size/);
  });
});

describe("maskArea", () => {
  it("sums run lengths", () => {
    expect(maskArea({ h: 1, w: 8, runs: [0, 2, 5, 2] })).toBe(4);
    expect(maskArea({ h: 4, w: 4, runs: [] })).toBe(0);
  });
});
