/** Typed REST client for the segmentation service (/api/v1). */

import type {
  ApiError,
  Axis,
  Classification,
  OverlayResponse,
  PromptResponse,
  RefineResponse,
  SessionInfo,
  VolumeMeta,
} from "./types.js";

export class ServiceError extends Error {
  constructor(
    public readonly status: number,
    public readonly body: ApiError
  ) {
    super(`${body.code}: ${body.message}`);
  }

  get retryable(): boolean {
    return this.status === 409;
  }
}

async function request<T>(
  base: string,
  path: string,
  init?: RequestInit
): Promise<T> {
  const resp = await fetch(base + path, init);
  if (!resp.ok) {
    let body: ApiError;
    try {
      body = (await resp.json()) as ApiError;
    } catch {
      body = { code: "http", message: resp.statusText };
    }
    throw new ServiceError(resp.status, body);
  }
  return (await resp.json()) as T;
}

function post(body: unknown): RequestInit {
  return {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  };
}

export class Client {
  constructor(private readonly base: string = "") {}

  listVolumes(): Promise<{ volumes: VolumeMeta[] }> {
    return request(this.base, "/api/v1/volumes");
  }

  volume(id: string): Promise<VolumeMeta> {
    return request(this.base, `/api/v1/volumes/${id}`);
  }

  loadVolume(path: string): Promise<VolumeMeta> {
    return request(this.base, "/api/v1/volumes", post({ path }));
  }

  sliceUrl(id: string, axis: Axis, index: number, channel: number): string {
    return (
      `${this.base}/api/v1/volumes/${id}/slice` +
      `?axis=${axis}&index=${index}&channel=${channel}`
    );
  }

  createSession(
    volumeId: string,
    truthMaskId?: string
  ): Promise<SessionInfo> {
    const body: Record<string, string> = { volume_id: volumeId };
    if (truthMaskId) {
      body.truth_mask_id = truthMaskId;
    }
    return request(this.base, "/api/v1/sessions", post(body));
  }

  prompt(
    sessionId: string,
    voxel: [number, number, number]
  ): Promise<PromptResponse> {
    return request(
      this.base,
      `/api/v1/sessions/${sessionId}/prompt`,
      post({ a: voxel[0], b: voxel[1], c: voxel[2] })
    );
  }

  refine(
    sessionId: string,
    steps: number | "auto"
  ): Promise<RefineResponse> {
    return request(
      this.base,
      `/api/v1/sessions/${sessionId}/refine`,
      post({ steps })
    );
  }

  overlay(
    sessionId: string,
    axis: Axis,
    index: number
  ): Promise<OverlayResponse> {
    return request(
      this.base,
      `/api/v1/sessions/${sessionId}/overlay?axis=${axis}&index=${index}`
    );
  }

  classification(sessionId: string): Promise<Classification> {
    return request(this.base, `/api/v1/sessions/${sessionId}/classification`);
  }

  resetPrompt(sessionId: string): Promise<{ ok: boolean }> {
    return request(
      this.base,
      `/api/v1/sessions/${sessionId}/reset-prompt`,
      post({})
    );
  }
}
