import { Box, ClassId, GridLines, LabelSet, PatchSummary } from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ConflictError extends ApiError {
  constructor(message: string) {
    super(409, message);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

interface WireBox {
  ann_id: string;
  class: number;
  box: [number, number, number, number];
}

function fromWire(w: WireBox): Box {
  return {
    annId: w.ann_id,
    cls: w.class as ClassId,
    x1: w.box[0], y1: w.box[1], x2: w.box[2], y2: w.box[3],
  };
}

function toWire(b: Box): WireBox {
  return { ann_id: b.annId, class: b.cls, box: [b.x1, b.y1, b.x2, b.y2] };
}

/** Thin client for the review service JSON API. */
export class ReviewApi {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const resp = await this.fetchFn(this.baseUrl + path, init);
    if (resp.status === 409) {
      throw new ConflictError(await resp.text());
    }
    if (!resp.ok) {
      throw new ApiError(resp.status, `${resp.status} on ${path}: ${await resp.text()}`);
    }
    return resp;
  }

  async listPatches(): Promise<PatchSummary[]> {
    const resp = await this.request("/api/patches");
    return (await resp.json()) as PatchSummary[];
  }

  imageUrl(patchId: string): string {
    return `${this.baseUrl}/api/patches/${encodeURIComponent(patchId)}/image`;
  }

  async getLabels(patchId: string): Promise<LabelSet> {
    const resp = await this.request(`/api/patches/${encodeURIComponent(patchId)}/labels`);
    const data = await resp.json();
    return { revision: data.revision, boxes: (data.boxes as WireBox[]).map(fromWire) };
  }

  /** Returns the new revision; throws ConflictError on a stale base. */
  async putLabels(patchId: string, baseRevision: number, boxes: Box[],
                  author = "reviewer"): Promise<number> {
    const resp = await this.request(`/api/patches/${encodeURIComponent(patchId)}/labels`, {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        base_revision: baseRevision,
        boxes: boxes.map(toWire),
        author,
      }),
    });
    return (await resp.json()).revision as number;
  }

  async corrections(): Promise<Record<string, Record<string, number>>> {
    const resp = await this.request("/api/stats/corrections");
    return await resp.json();
  }

  async grid(patchId: string, cellM = 250): Promise<GridLines> {
    const resp = await this.request(
      `/api/patches/${encodeURIComponent(patchId)}/grid?cell_m=${cellM}`);
    return (await resp.json()) as GridLines;
  }
}
