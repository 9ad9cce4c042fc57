/** Wire types for the monitor service stream and REST API. */

export interface ReadingMessage {
  type: "reading";
  ts: string;
  seq: number;
  channels: number[]; // 7 native-unit values
  score: number;
  anomaly: boolean;
  model_id: string;
}

export interface AlarmMessage {
  type: "alarm";
  id: number;
  ts: string;
  seq: number;
  score: number;
  threshold: number;
  streak: number;
  model_id: string;
}

export interface RetrainMessage {
  type: "retrain";
  job_id: string;
  state: string; // collecting | tuning | training | deploying | done | failed
}

export type StreamMessage = ReadingMessage | AlarmMessage | RetrainMessage;

export interface MonitorStateInfo {
  model_id: string;
  threshold: number;
  last_row: number;
  streak: number;
  alarm_n: number;
  interval_s: number;
}

export interface AlarmListEntry {
  id: number;
  ts: string;
  seq: number;
  score: number;
  threshold: number;
  streak: number;
  model_id: string;
  acknowledged: boolean;
  acknowledgedAt: string | null;
}

export interface RetrainJobView {
  jobId: string;
  state: string;
}

export const CHANNEL_NAMES = [
  "pH",
  "liquid °C",
  "cond µS/cm",
  "ambient °C",
  "humidity %",
  "CO₂ ppm",
  "light lux",
] as const;

export const N_CHANNELS = CHANNEL_NAMES.length;

/** Terminal retrain states; anything else means a job is in flight. */
export function isTerminalJobState(state: string): boolean {
  return state === "done" || state === "failed";
}
