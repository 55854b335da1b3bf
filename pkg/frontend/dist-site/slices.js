/** Slice geometry: the server's orientation contract and click mapping.
 *
 * Axis "a" slices are (rows=b, cols=c); "b" -> (rows=a, cols=c);
 * "c" -> (rows=a, cols=b). The UI never does spacing math beyond an
 * integer zoom factor, so a click maps back to exactly one voxel.
 */
export const AXES = ["a", "b", "c"];
export function axisExtent(dims, axis) {
    return dims[AXES.indexOf(axis)];
}
export function sliceShape(dims, axis) {
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
export function planeToVoxel(axis, index, row, col) {
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
export function voxelToPlane(axis, voxel) {
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
export function clickToVoxel(axis, index, px, py, zoom, dims) {
    const { rows, cols } = sliceShape(dims, axis);
    const row = Math.floor(py / zoom);
    const col = Math.floor(px / zoom);
    if (row < 0 || row >= rows || col < 0 || col >= cols) {
        return null;
    }
    return planeToVoxel(axis, index, row, col);
}
