/** Wire types mirroring the /api/v1 contract. */

export type Axis = "a" | "b" | "c";

export interface VolumeMeta {
  volume_id: string;
  dims: [number, number, number];
  channels: number;
  spacing_mm: [number, number, number];
  source?: string;
}

export interface SessionInfo {
  session_id: string;
  volume_id: string;
  horizon?: number;
}

export interface PromptResponse {
  prompt: [number, number, number];
  mask_voxels: number;
  grow_iterations: number;
  grow_converged: boolean;
  dice?: number;
}

export interface StepRecord {
  seed: [number, number, number];
  added: number;
  removed: number;
  mask_voxels: number;
  stabilised: boolean;
  dice?: number;
}

export interface RefineResponse {
  steps: StepRecord[];
  stabilised: boolean;
  steps_run: number;
  done: boolean;
}

/** Per-row run-length spans: [rowIndex, [[colStart, length], ...]]. */
export type RleRow = [number, [number, number][]];

export interface OverlayResponse {
  axis: Axis;
  index: number;
  dims: [number, number, number];
  rows: RleRow[];
}

export interface Classification {
  classification: "positive" | "negative";
  mask_voxels: number;
  threshold: number;
}

export interface ApiError {
  code: string;
  message: string;
  field?: string;
}
