/** REST client for the monitor service; fetch is injectable for tests. */

import { MonitorStateInfo } from "./types.js";

export interface RetrainRequest {
  csv_path: string;
  trials?: number;
  seed?: number;
}

export type RetrainStart =
  | { kind: "accepted"; jobId: string }
  | { kind: "busy"; error: string }
  | { kind: "error"; error: string };

export type AckResult =
  | { kind: "ok"; acknowledgedAt: string | null }
  | { kind: "gone" }
  | { kind: "error"; error: string };

export class ApiClient {
  private readonly fetchFn: typeof fetch;

  constructor(private readonly baseUrl: string, fetchFn?: typeof fetch) {
    this.fetchFn = fetchFn ?? fetch.bind(globalThis);
  }

  async getState(): Promise<MonitorStateInfo> {
    const resp = await this.fetchFn(`${this.baseUrl}/state`);
    if (!resp.ok) throw new Error(`GET /state -> ${resp.status}`);
    return (await resp.json()) as MonitorStateInfo;
  }

  async startRetrain(req: RetrainRequest): Promise<RetrainStart> {
    const resp = await this.fetchFn(`${this.baseUrl}/retrain`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(req),
    });
    const body = (await resp.json().catch(() => ({}))) as Record<string, unknown>;
    if (resp.status === 202) {
      return { kind: "accepted", jobId: String(body.job_id) };
    }
    if (resp.status === 409) {
      return { kind: "busy", error: String(body.error ?? "a retrain job is already running") };
    }
    return { kind: "error", error: String(body.error ?? `HTTP ${resp.status}`) };
  }

  async getJob(jobId: string): Promise<{ state: string } | null> {
    const resp = await this.fetchFn(`${this.baseUrl}/retrain/${encodeURIComponent(jobId)}`);
    if (resp.status === 404) return null;
    if (!resp.ok) throw new Error(`GET /retrain/${jobId} -> ${resp.status}`);
    return (await resp.json()) as { state: string };
  }

  async ackAlarm(id: number): Promise<AckResult> {
    const resp = await this.fetchFn(`${this.baseUrl}/alarms/${id}/ack`, { method: "POST" });
    if (resp.status === 404) return { kind: "gone" };
    if (!resp.ok) return { kind: "error", error: `HTTP ${resp.status}` };
    const body = (await resp.json()) as { acknowledged_at?: string | null };
    return { kind: "ok", acknowledgedAt: body.acknowledged_at ?? null };
  }
}
