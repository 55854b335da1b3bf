/** Canvas slice viewer: draws the server PNG plus the RLE overlay diff,
 * maps clicks to voxels, and never computes segmentation itself. */

import { Client } from "./api.js";
import { decodeRle, diffOverlays } from "./rle.js";
import { clickToVoxel, sliceShape, voxelToPlane } from "./slices.js";
import type { Axis, OverlayResponse, VolumeMeta } from "./types.js";

const COLOURS = {
  kept: [255, 210, 60],
  added: [70, 220, 120],
  removed: [235, 80, 80],
  marker: [80, 160, 255],
} as const;

export class SliceViewer {
  axis: Axis = "c";
  index = 0;
  channel = 0;
  zoom = 12;
  opacity = 0.55;
  promptMarker: [number, number, number] | null = null;

  private meta: VolumeMeta | null = null;
  private sessionId: string | null = null;
  private prevOverlay: Uint8Array | null = null;
  private currOverlay: Uint8Array | null = null;

  constructor(
    private readonly client: Client,
    private readonly canvas: HTMLCanvasElement
  ) {}

  bind(meta: VolumeMeta, sessionId: string): void {
    this.meta = meta;
    this.sessionId = sessionId;
    this.index = Math.floor(meta.dims[2] / 2);
    this.prevOverlay = null;
    this.currOverlay = null;
  }

  get dims(): [number, number, number] {
    if (!this.meta) {
      throw new Error("viewer not bound to a volume");
    }
    return this.meta.dims;
  }

  axisExtent(): number {
    const idx = { a: 0, b: 1, c: 2 }[this.axis];
    return this.dims[idx];
  }

  /** Convert a canvas click to the voxel it covers (or null outside). */
  voxelAt(px: number, py: number): [number, number, number] | null {
    return clickToVoxel(this.axis, this.index, px, py, this.zoom, this.dims);
  }

  /** Snapshot the current overlay as "previous" before a refine step, so
   * additions and removals can be tinted differently. */
  snapshotOverlay(): void {
    this.prevOverlay = this.currOverlay;
  }

  clearOverlay(): void {
    this.prevOverlay = null;
    this.currOverlay = null;
    this.promptMarker = null;
  }

  async fetchOverlay(): Promise<OverlayResponse | null> {
    if (!this.sessionId) {
      return null;
    }
    try {
      const overlay = await this.client.overlay(
        this.sessionId,
        this.axis,
        this.index
      );
      const { rows, cols } = sliceShape(this.dims, this.axis);
      this.currOverlay = decodeRle(overlay.rows, rows, cols);
      return overlay;
    } catch {
      this.currOverlay = null;
      return null;
    }
  }

  async draw(): Promise<void> {
    if (!this.meta) {
      return;
    }
    const { rows, cols } = sliceShape(this.dims, this.axis);
    this.canvas.width = cols * this.zoom;
    this.canvas.height = rows * this.zoom;
    const ctx = this.canvas.getContext("2d");
    if (!ctx) {
      return;
    }
    ctx.imageSmoothingEnabled = false;
    const img = new Image();
    const url = this.client.sliceUrl(
      this.meta.volume_id,
      this.axis,
      this.index,
      this.channel
    );
    await new Promise<void>((resolve, reject) => {
      img.onload = () => resolve();
      img.onerror = () => reject(new Error(`slice fetch failed: ${url}`));
      img.src = url;
    });
    ctx.drawImage(img, 0, 0, this.canvas.width, this.canvas.height);
    this.paintOverlay(ctx, rows, cols);
    this.paintMarker(ctx);
  }

  private paintOverlay(
    ctx: CanvasRenderingContext2D,
    rows: number,
    cols: number
  ): void {
    if (!this.currOverlay && !this.prevOverlay) {
      return;
    }
    const diff = diffOverlays(
      this.prevOverlay,
      this.currOverlay ?? new Uint8Array(rows * cols)
    );
    const layers: [Uint8Array, readonly number[]][] = [
      [diff.kept, COLOURS.kept],
      [diff.added, COLOURS.added],
      [diff.removed, COLOURS.removed],
    ];
    for (const [grid, rgb] of layers) {
      ctx.fillStyle = `rgba(${rgb[0]},${rgb[1]},${rgb[2]},${this.opacity})`;
      for (let r = 0; r < rows; r++) {
        for (let col = 0; col < cols; col++) {
          if (grid[r * cols + col]) {
            ctx.fillRect(col * this.zoom, r * this.zoom, this.zoom, this.zoom);
          }
        }
      }
    }
  }

  private paintMarker(ctx: CanvasRenderingContext2D): void {
    if (!this.promptMarker) {
      return;
    }
    const plane = voxelToPlane(this.axis, this.promptMarker);
    if (plane.index !== this.index) {
      return;
    }
    const [r, g, b] = COLOURS.marker;
    ctx.strokeStyle = `rgb(${r},${g},${b})`;
    ctx.lineWidth = 2;
    ctx.strokeRect(
      plane.col * this.zoom - 2,
      plane.row * this.zoom - 2,
      this.zoom + 4,
      this.zoom + 4
    );
  }
}
