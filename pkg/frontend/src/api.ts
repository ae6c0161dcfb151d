/** Typed client for the segmentation session service.
 *
 * Endpoints: POST /sessions, POST /sessions/{id}/clicks, GET
 * /sessions/{id}/mask, POST /sessions/{id}/undo|reset, DELETE
 * /sessions/{id}.  All errors arrive as JSON {code, message} bodies and are
 * rethrown as ApiError.
 */

export interface MaskSummary {
  area: number;
  bbox: [number, number, number, number] | null;
}

export interface StatePayload {
  clicks: number;
  mask_summary: MaskSummary;
  iou?: number;
}

export interface RleMask {
  h: number;
  w: number;
  runs: number[];
}

export interface SessionInfo {
  session_id: string;
  height: number;
  width: number;
}

export interface AckedState {
  payload: StatePayload;
  clickCount: number;
}

export class ApiError extends Error {
  constructor(
    public readonly code: string,
    message: string,
    public readonly status: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function fail(resp: Response): Promise<never> {
  let code = "unknown_error";
  let message = `HTTP ${resp.status}`;
  try {
    const body = (await resp.json()) as { code?: string; message?: string };
    if (body.code) code = body.code;
    if (body.message) message = body.message;
  } catch {
    /* non-JSON error body; keep the defaults */
  }
  throw new ApiError(code, message, resp.status);
}

function acked(payload: StatePayload, resp: Response): AckedState {
  const header = resp.headers.get("X-Click-Count");
  return {
    payload,
    clickCount: header === null ? payload.clicks : Number(header),
  };
}

export class ApiClient {
  constructor(private readonly base: string = "") {}

  async createSession(image: Blob, gt?: Blob): Promise<SessionInfo> {
    let resp: Response;
    if (gt) {
      const form = new FormData();
      form.append("image", image, "image.png");
      form.append("gt", gt, "gt.png");
      resp = await fetch(`${this.base}/sessions`, { method: "POST", body: form });
    } else {
      resp = await fetch(`${this.base}/sessions`, { method: "POST", body: image });
    }
    if (!resp.ok) return fail(resp);
    return (await resp.json()) as SessionInfo;
  }

  async addClick(
    id: string,
    row: number,
    col: number,
    positive: boolean,
  ): Promise<AckedState> {
    const resp = await fetch(`${this.base}/sessions/${id}/clicks`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ row, col, positive }),
    });
    if (!resp.ok) return fail(resp);
    return acked((await resp.json()) as StatePayload, resp);
  }

  async getMask(id: string): Promise<RleMask> {
    const resp = await fetch(`${this.base}/sessions/${id}/mask?format=rle`);
    if (!resp.ok) return fail(resp);
    return (await resp.json()) as RleMask;
  }

  maskPngUrl(id: string): string {
    return `${this.base}/sessions/${id}/mask?format=png`;
  }

  async undo(id: string): Promise<AckedState> {
    const resp = await fetch(`${this.base}/sessions/${id}/undo`, {
      method: "POST",
    });
    if (!resp.ok) return fail(resp);
    return acked((await resp.json()) as StatePayload, resp);
  }

  async reset(id: string): Promise<AckedState> {
    const resp = await fetch(`${this.base}/sessions/${id}/reset`, {
      method: "POST",
    });
    if (!resp.ok) return fail(resp);
    return acked((await resp.json()) as StatePayload, resp);
  }

  async deleteSession(id: string): Promise<void> {
    const resp = await fetch(`${this.base}/sessions/${id}`, {
      method: "DELETE",
    });
    if (!resp.ok) return fail(resp);
  }
}
