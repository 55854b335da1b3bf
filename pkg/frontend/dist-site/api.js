/** Typed REST client for the segmentation service (/api/v1). */
export class ServiceError extends Error {
    constructor(status, body) {
        super(`${body.code}: ${body.message}`);
        this.status = status;
        this.body = body;
    }
    get retryable() {
        return this.status === 409;
    }
}
async function request(base, path, init) {
    const resp = await fetch(base + path, init);
    if (!resp.ok) {
        let body;
        try {
            body = (await resp.json());
        }
        catch {
            body = { code: "http", message: resp.statusText };
        }
        throw new ServiceError(resp.status, body);
    }
    return (await resp.json());
}
function post(body) {
    return {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
    };
}
export class Client {
    constructor(base = "") {
        this.base = base;
    }
    listVolumes() {
        return request(this.base, "/api/v1/volumes");
    }
    volume(id) {
        return request(this.base, `/api/v1/volumes/${id}`);
    }
    loadVolume(path) {
        return request(this.base, "/api/v1/volumes", post({ path }));
    }
    sliceUrl(id, axis, index, channel) {
        return (`${this.base}/api/v1/volumes/${id}/slice` +
            `?axis=${axis}&index=${index}&channel=${channel}`);
    }
    createSession(volumeId, truthMaskId) {
        const body = { volume_id: volumeId };
        if (truthMaskId) {
            body.truth_mask_id = truthMaskId;
        }
        return request(this.base, "/api/v1/sessions", post(body));
    }
    prompt(sessionId, voxel) {
        return request(this.base, `/api/v1/sessions/${sessionId}/prompt`, post({ a: voxel[0], b: voxel[1], c: voxel[2] }));
    }
    refine(sessionId, steps) {
        return request(this.base, `/api/v1/sessions/${sessionId}/refine`, post({ steps }));
    }
    overlay(sessionId, axis, index) {
        return request(this.base, `/api/v1/sessions/${sessionId}/overlay?axis=${axis}&index=${index}`);
    }
    classification(sessionId) {
        return request(this.base, `/api/v1/sessions/${sessionId}/classification`);
    }
    resetPrompt(sessionId) {
        return request(this.base, `/api/v1/sessions/${sessionId}/reset-prompt`, post({}));
    }
}
