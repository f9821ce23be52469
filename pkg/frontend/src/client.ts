/**
 * Typed client for the streamvid generation service.
 *
 * Every response body is validated with the zod schemas before use, and the
 * error envelope is surfaced verbatim so the UI can highlight the offending
 * fields the way the server named them.
 */

import {
  ErrorBodySchema,
  Layout,
  SessionCreatedSchema,
  SessionInfo,
  SessionInfoSchema,
  StepResponse,
  StepResponseSchema,
} from "./schema.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export interface CreateSessionBody {
  mode: "generator" | "simulator";
  seed?: number;
  reference_image?: string;
  overrides?: Record<string, number | string>;
}

export interface LayoutEdit {
  op: "add_box" | "remove_box" | "move_box" | "set_ego";
  [key: string]: unknown;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly fields: string[] = [],
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function raiseApiError(res: Response): Promise<never> {
  let code = "unknown_error";
  let message = `request failed with status ${res.status}`;
  let fields: string[] = [];
  try {
    const body = ErrorBodySchema.parse(await res.json());
    code = body.error.code;
    message = body.error.message;
    fields = body.error.fields ?? [];
  } catch {
    // Non-JSON or unexpected shape: keep the generic message.
  }
  throw new ApiError(res.status, code, message, fields);
}

export class SteerClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async post(path: string, body: unknown): Promise<unknown> {
    const res = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!res.ok) await raiseApiError(res);
    return res.json();
  }

  async createSession(body: CreateSessionBody): Promise<string> {
    const json = await this.post("/sessions", body);
    return SessionCreatedSchema.parse(json).session_id;
  }

  async step(
    sessionId: string,
    layout: Layout,
    edits: LayoutEdit[] = [],
  ): Promise<StepResponse> {
    const body: Record<string, unknown> = { layout };
    if (edits.length > 0) body.edits = edits;
    const json = await this.post(`/sessions/${sessionId}/step`, body);
    return StepResponseSchema.parse(json);
  }

  async getSession(sessionId: string): Promise<SessionInfo> {
    const res = await this.fetchImpl(`${this.baseUrl}/sessions/${sessionId}`);
    if (!res.ok) await raiseApiError(res);
    return SessionInfoSchema.parse(await res.json());
  }

  async deleteSession(sessionId: string): Promise<void> {
    const res = await this.fetchImpl(`${this.baseUrl}/sessions/${sessionId}`, {
      method: "DELETE",
    });
    if (!res.ok) await raiseApiError(res);
  }
}
