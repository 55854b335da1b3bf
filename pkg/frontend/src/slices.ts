/** Slice geometry: the server's orientation contract and click mapping.
 *
 * Axis "a" slices are (rows=b, cols=c); "b" -> (rows=a, cols=c);
 * "c" -> (rows=a, cols=b). The UI never does spacing math beyond an
 * integer zoom factor, so a click maps back to exactly one voxel.
 */

import type { Axis } from "./types.js";

export const AXES: Axis[] = ["a", "b", "c"];

export interface SliceShape {
  rows: number;
  cols: number;
}

export function axisExtent(dims: [number, number, number], axis: Axis): number {
  return dims[AXES.indexOf(axis)];
}

export function sliceShape(dims: [number, number, number], axis: Axis): SliceShape {
  const [h, w, d] = dims;
  switch (axis) {
    case "a":
      return { rows: w, cols: d };
    case "b":
      return { rows: h, cols: d };
    case "c":
      return { rows: h, cols: w };
  }
}

/** (row, col) on an axis slice at `index` -> full voxel coordinate. */
export function planeToVoxel(
  axis: Axis,
  index: number,
  row: number,
  col: number
): [number, number, number] {
  switch (axis) {
    case "a":
      return [index, row, col];
    case "b":
      return [row, index, col];
    case "c":
      return [row, col, index];
  }
}

/** Voxel -> (row, col) on the axis slice that contains it. */
export function voxelToPlane(
  axis: Axis,
  voxel: [number, number, number]
): { index: number; row: number; col: number } {
  const [a, b, c] = voxel;
  switch (axis) {
    case "a":
      return { index: a, row: b, col: c };
    case "b":
      return { index: b, row: a, col: c };
    case "c":
      return { index: c, row: a, col: b };
  }
}

/** Canvas pixel -> voxel, given the integer zoom used to draw the slice. */
export function clickToVoxel(
  axis: Axis,
  index: number,
  px: number,
  py: number,
  zoom: number,
  dims: [number, number, number]
): [number, number, number] | null {
  const { rows, cols } = sliceShape(dims, axis);
  const row = Math.floor(py / zoom);
  const col = Math.floor(px / zoom);
  if (row < 0 || row >= rows || col < 0 || col >= cols) {
    return null;
  }
  return planeToVoxel(axis, index, row, col);
}
