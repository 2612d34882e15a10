/** Thin client for the annotation service API. */

import type { ChoiceValue, FieldError, SubmitResult, Task } from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(message: string, readonly status?: number) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  /** Next unlabeled task for this annotator, or null when they are done. */
  async nextTask(annotatorId: string): Promise<Task | null> {
    const url = `${this.baseUrl}/api/tasks/next?annotator=${encodeURIComponent(annotatorId)}`;
    let response: Response;
    try {
      response = await this.fetchFn(url);
    } catch (err) {
      throw new ApiError(`network failure: ${String(err)}`);
    }
    if (response.status === 204) return null;
    if (!response.ok) throw new ApiError(`task fetch failed (${response.status})`, response.status);
    return (await response.json()) as Task;
  }

  async submit(body: {
    pair_id: string;
    annotator_id: string;
    choices: Record<string, ChoiceValue>;
    q2_explanation: string;
  }): Promise<SubmitResult> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}/api/annotations`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(`network failure: ${String(err)}`);
    }
    if (response.status === 201) return { kind: "created" };
    if (response.status === 422) {
      const payload = (await response.json()) as { errors: FieldError[] };
      return { kind: "invalid", errors: payload.errors ?? [] };
    }
    if (response.status === 409) {
      const payload = (await response.json()) as { errors?: FieldError[] };
      const message = payload.errors?.[0]?.message ?? "already submitted";
      return { kind: "duplicate", message };
    }
    throw new ApiError(`submit failed (${response.status})`, response.status);
  }

  async stats(): Promise<{ responses: number }> {
    const response = await this.fetchFn(`${this.baseUrl}/api/stats`);
    if (!response.ok) throw new ApiError(`stats failed (${response.status})`, response.status);
    return (await response.json()) as { responses: number };
  }
}
