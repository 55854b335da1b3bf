/** Run-length-encoded overlay rows: decoding and per-step diffing. */
/** Expand RLE rows into a flat boolean grid of rows*cols. */
export function decodeRle(rows, nRows, nCols) {
    const out = new Uint8Array(nRows * nCols);
    for (const [row, spans] of rows) {
        if (row < 0 || row >= nRows) {
            continue;
        }
        for (const [start, length] of spans) {
            const lo = Math.max(0, start);
            const hi = Math.min(nCols, start + length);
            out.fill(1, row * nCols + lo, row * nCols + hi);
        }
    }
    return out;
}
/** Classify each pixel of the current overlay against the previous one,
 * so mask REPLACEMENT is visible: additions and removals get their own
 * hues per step. */
export function diffOverlays(prev, curr) {
    const kept = new Uint8Array(curr.length);
    const added = new Uint8Array(curr.length);
    const removed = new Uint8Array(curr.length);
    for (let i = 0; i < curr.length; i++) {
        const was = prev ? prev[i] : 0;
        if (curr[i] && was) {
            kept[i] = 1;
        }
        else if (curr[i]) {
            added[i] = 1;
        }
        else if (was) {
            removed[i] = 1;
        }
    }
    return { kept, added, removed };
}
/** Count set pixels (used by the timeline sanity readout). */
export function countOn(grid) {
    let n = 0;
    for (let i = 0; i < grid.length; i++) {
        n += grid[i];
    }
    return n;
}
