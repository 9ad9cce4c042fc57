/**
 * Dashboard state as a pure reducer over stream messages.
 *
 * Rendering consumes this state only, so replaying a recorded message
 * log always reproduces the identical view state (snapshot-testable).
 * Chart history is a bounded ring: the last WINDOW points per series.
 */

import {
  AlarmListEntry,
  N_CHANNELS,
  RetrainJobView,
  StreamMessage,
  isTerminalJobState,
} from "./types.js";

export const WINDOW = 600;

export interface SeriesPoint {
  seq: number;
  value: number;
}

export type ConnectionState = "connecting" | "connected" | "disconnected";

export interface DashboardState {
  connection: ConnectionState;
  modelId: string | null;
  threshold: number | null;
  lastSeq: number | null;
  /** one bounded series per channel, native units */
  channels: SeriesPoint[][];
  /** reconstruction-error series, same window */
  scores: SeriesPoint[];
  /** score of the newest reading, for the header */
  lastScore: number | null;
  lastAnomaly: boolean;
  /** newest first */
  alarms: AlarmListEntry[];
  job: RetrainJobView | null;
  /** count of readings consumed this session */
  readingsSeen: number;
  droppedMessages: number;
}

export function initialState(): DashboardState {
  return {
    connection: "connecting",
    modelId: null,
    threshold: null,
    lastSeq: null,
    channels: Array.from({ length: N_CHANNELS }, () => []),
    scores: [],
    lastScore: null,
    lastAnomaly: false,
    alarms: [],
    job: null,
    readingsSeen: 0,
    droppedMessages: 0,
  };
}

function pushBounded(series: SeriesPoint[], point: SeriesPoint): SeriesPoint[] {
  const out = series.length >= WINDOW ? series.slice(series.length - WINDOW + 1) : series.slice();
  out.push(point);
  return out;
}

/** Apply one stream message; unknown types are counted, never fatal. */
export function apply(state: DashboardState, msg: StreamMessage | { type: string }): DashboardState {
  switch (msg.type) {
    case "reading": {
      const m = msg as StreamMessage & { type: "reading" };
      if (!Array.isArray(m.channels) || m.channels.length !== N_CHANNELS) {
        return { ...state, droppedMessages: state.droppedMessages + 1 };
      }
      return {
        ...state,
        modelId: m.model_id,
        lastSeq: m.seq,
        channels: state.channels.map((s, i) => pushBounded(s, { seq: m.seq, value: m.channels[i] })),
        scores: pushBounded(state.scores, { seq: m.seq, value: m.score }),
        lastScore: m.score,
        lastAnomaly: m.anomaly,
        readingsSeen: state.readingsSeen + 1,
      };
    }
    case "alarm": {
      const m = msg as StreamMessage & { type: "alarm" };
      const entry: AlarmListEntry = {
        id: m.id,
        ts: m.ts,
        seq: m.seq,
        score: m.score,
        threshold: m.threshold,
        streak: m.streak,
        model_id: m.model_id,
        acknowledged: false,
        acknowledgedAt: null,
      };
      return { ...state, threshold: m.threshold, alarms: [entry, ...state.alarms] };
    }
    case "retrain": {
      const m = msg as StreamMessage & { type: "retrain" };
      return { ...state, job: { jobId: m.job_id, state: m.state } };
    }
    default:
      return { ...state, droppedMessages: state.droppedMessages + 1 };
  }
}

export function applyAll(
  state: DashboardState,
  messages: Array<StreamMessage | { type: string }>,
): DashboardState {
  let out = state;
  for (const msg of messages) {
    out = apply(out, msg);
  }
  return out;
}

export function setConnection(state: DashboardState, connection: ConnectionState): DashboardState {
  return state.connection === connection ? state : { ...state, connection };
}

export function setThreshold(state: DashboardState, threshold: number, modelId: string): DashboardState {
  return { ...state, threshold, modelId };
}

/** Acknowledgement is monotone: an acked alarm never reverts. */
export function ackAlarm(state: DashboardState, id: number, at: string | null): DashboardState {
  let changed = false;
  const alarms = state.alarms.map((a) => {
    if (a.id !== id || a.acknowledged) return a;
    changed = true;
    return { ...a, acknowledged: true, acknowledgedAt: at };
  });
  return changed ? { ...state, alarms } : state;
}

/** Remove an alarm the service no longer knows (ack returned 404). */
export function dropAlarm(state: DashboardState, id: number): DashboardState {
  const alarms = state.alarms.filter((a) => a.id !== id);
  return alarms.length === state.alarms.length ? state : { ...state, alarms };
}

export function unackedCount(state: DashboardState): number {
  return state.alarms.reduce((n, a) => n + (a.acknowledged ? 0 : 1), 0);
}

/** The retrain control is enabled only when no job is in flight. */
export function canRetrain(state: DashboardState): boolean {
  return state.connection === "connected" && (state.job === null || isTerminalJobState(state.job.state));
}

/**
 * A 409 on POST /retrain means some job is already running (possibly
 * started by another client); disable the control until the stream
 * delivers that job's real state.
 */
export function markRetrainBusy(state: DashboardState): DashboardState {
  if (state.job !== null && !isTerminalJobState(state.job.state)) return state;
  return { ...state, job: { jobId: "unknown", state: "running" } };
}
