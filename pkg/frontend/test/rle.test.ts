import { describe, expect, it } from "vitest";

import { countOn, decodeRle, diffOverlays } from "../src/rle.js";
import type { RleRow } from "../src/types.js";

describe("rle overlays", () => {
  it("decodes rows of spans into a flat grid", () => {
    const rows: RleRow[] = [
      [1, [[0, 2]]],
      [2, [[3, 1], [5, 2]]],
    ];
    const grid = decodeRle(rows, 4, 8);
    expect(countOn(grid)).toBe(5);
    expect(grid[1 * 8 + 0]).toBe(1);
    expect(grid[1 * 8 + 1]).toBe(1);
    expect(grid[1 * 8 + 2]).toBe(0);
    expect(grid[2 * 8 + 3]).toBe(1);
    expect(grid[2 * 8 + 5]).toBe(1);
    expect(grid[2 * 8 + 6]).toBe(1);
  });

  it("clips spans to the grid", () => {
    const grid = decodeRle([[0, [[6, 5]]]], 2, 8);
    expect(countOn(grid)).toBe(2);
  });

  it("classifies kept, added, and removed pixels", () => {
    const prev = decodeRle([[0, [[0, 3]]]], 1, 8);
    const curr = decodeRle([[0, [[2, 3]]]], 1, 8);
    const diff = diffOverlays(prev, curr);
    expect(Array.from(diff.kept.slice(0, 6))).toEqual([0, 0, 1, 0, 0, 0]);
    expect(Array.from(diff.added.slice(0, 6))).toEqual([0, 0, 0, 1, 1, 0]);
    expect(Array.from(diff.removed.slice(0, 6))).toEqual([1, 1, 0, 0, 0, 0]);
  });

  it("treats a null previous overlay as all-new", () => {
    const curr = decodeRle([[0, [[1, 2]]]], 1, 4);
    const diff = diffOverlays(null, curr);
    expect(countOn(diff.added)).toBe(2);
    expect(countOn(diff.kept)).toBe(0);
    expect(countOn(diff.removed)).toBe(0);
  });
});
