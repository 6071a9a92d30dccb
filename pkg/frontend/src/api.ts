/** Thin fetch client for the session service; all state lives server-side. */

import type {
  ApiErrorBody,
  CorrectionResponse,
  Grammar,
  HealthInfo,
  RolloutResponse,
  SessionCreated,
  SessionState,
} from "./types";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
    public readonly detail: unknown = null,
  ) {
    super(message);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const res = await fetch(url, init);
  const body = await res.json();
  if (!res.ok) {
    const err = body as ApiErrorBody;
    throw new ApiError(res.status, err.code ?? "http-error",
      err.message ?? res.statusText, err.detail);
  }
  return body as T;
}

export class SessionApi {
  constructor(private readonly base: string) {}

  health(): Promise<HealthInfo> {
    return request(`${this.base}/health`);
  }

  grammar(): Promise<Grammar> {
    return request(`${this.base}/grammar`);
  }

  createSession(taskSeed: number): Promise<SessionCreated> {
    return request(`${this.base}/sessions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ task_seed: taskSeed }),
    });
  }

  rollout(sessionId: string): Promise<RolloutResponse> {
    return request(`${this.base}/sessions/${sessionId}/rollout`, {
      method: "POST",
    });
  }

  correct(sessionId: string, phrase: string): Promise<CorrectionResponse> {
    return request(`${this.base}/sessions/${sessionId}/correction`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ phrase }),
    });
  }

  autoCorrect(sessionId: string): Promise<CorrectionResponse> {
    return request(`${this.base}/sessions/${sessionId}/correction`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ auto: true }),
    });
  }

  state(sessionId: string): Promise<SessionState> {
    return request(`${this.base}/sessions/${sessionId}`);
  }
}
