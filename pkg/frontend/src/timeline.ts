/** Step timeline: mirrors the server history exactly, never computed
 * client-side. */

import type { StepRecord } from "./types.js";

export interface TimelineEntry {
  step: number;
  seed: [number, number, number];
  added: number;
  removed: number;
  maskVoxels: number;
  stabilised: boolean;
  dice?: number;
}

export class Timeline {
  private entries: TimelineEntry[] = [];

  get length(): number {
    return this.entries.length;
  }

  get all(): readonly TimelineEntry[] {
    return this.entries;
  }

  get converged(): boolean {
    const last = this.entries[this.entries.length - 1];
    return last ? last.stabilised : false;
  }

  get lastDice(): number | undefined {
    const last = this.entries[this.entries.length - 1];
    return last?.dice;
  }

  reset(): void {
    this.entries = [];
  }

  /** Append server step records; a zero-diff terminal entry is kept so
   * the UI can show "converged" explicitly. */
  extend(records: StepRecord[]): TimelineEntry[] {
    const appended: TimelineEntry[] = [];
    for (const rec of records) {
      const entry: TimelineEntry = {
        step: this.entries.length + 1,
        seed: rec.seed,
        added: rec.added,
        removed: rec.removed,
        maskVoxels: rec.mask_voxels,
        stabilised: rec.stabilised,
        dice: rec.dice,
      };
      this.entries.push(entry);
      appended.push(entry);
    }
    return appended;
  }
}
