import { describe, expect, it } from "vitest";

import {
  clickToVoxel,
  planeToVoxel,
  sliceShape,
  voxelToPlane,
} from "../src/slices.js";
import type { Axis } from "../src/types.js";

const DIMS: [number, number, number] = [20, 24, 28];

describe("slice geometry", () => {
  it("matches the server orientation contract", () => {
    expect(sliceShape(DIMS, "a")).toEqual({ rows: 24, cols: 28 });
    expect(sliceShape(DIMS, "b")).toEqual({ rows: 20, cols: 28 });
    expect(sliceShape(DIMS, "c")).toEqual({ rows: 20, cols: 24 });
  });

  it("plane/voxel mappings are inverse for every axis", () => {
    for (const axis of ["a", "b", "c"] as Axis[]) {
      for (const voxel of [
        [0, 0, 0],
        [5, 7, 9],
        [19, 23, 27],
      ] as [number, number, number][]) {
        const plane = voxelToPlane(axis, voxel);
        expect(planeToVoxel(axis, plane.index, plane.row, plane.col)).toEqual(
          voxel
        );
      }
    }
  });

  it("maps clicks at any pixel of a voxel's cell to that voxel", () => {
    const zoom = 12;
    for (const axis of ["a", "b", "c"] as Axis[]) {
      const voxel: [number, number, number] = [5, 7, 9];
      const plane = voxelToPlane(axis, voxel);
      for (const [dx, dy] of [
        [0, 0],
        [zoom - 1, zoom - 1],
        [Math.floor(zoom / 2), Math.floor(zoom / 2)],
      ]) {
        const px = plane.col * zoom + dx;
        const py = plane.row * zoom + dy;
        expect(clickToVoxel(axis, plane.index, px, py, zoom, DIMS)).toEqual(
          voxel
        );
      }
    }
  });

  it("rejects clicks outside the slice", () => {
    expect(clickToVoxel("c", 0, 24 * 12, 0, 12, DIMS)).toBeNull();
    expect(clickToVoxel("c", 0, 0, 20 * 12, 12, DIMS)).toBeNull();
    expect(clickToVoxel("c", 0, -1, 0, 12, DIMS)).toBeNull();
  });
});
