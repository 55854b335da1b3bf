/** Step timeline: mirrors the server history exactly, never computed
 * client-side. */
export class Timeline {
    constructor() {
        this.entries = [];
    }
    get length() {
        return this.entries.length;
    }
    get all() {
        return this.entries;
    }
    get converged() {
        const last = this.entries[this.entries.length - 1];
        return last ? last.stabilised : false;
    }
    get lastDice() {
        const last = this.entries[this.entries.length - 1];
        return last?.dice;
    }
    reset() {
        this.entries = [];
    }
    /** Append server step records; a zero-diff terminal entry is kept so
     * the UI can show "converged" explicitly. */
    extend(records) {
        const appended = [];
        for (const rec of records) {
            const entry = {
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
