/** DOM wiring: stream -> store -> render, plus the retrain/ack controls. */

import { ApiClient } from "./api.js";
import { drawChannelChart, drawScoreChart } from "./charts.js";
import {
  DashboardState,
  ackAlarm,
  apply,
  canRetrain,
  dropAlarm,
  initialState,
  markRetrainBusy,
  setConnection,
  setThreshold,
  unackedCount,
} from "./store.js";
import { StreamClient } from "./stream.js";
import { N_CHANNELS } from "./types.js";

const base = window.location.origin;
const api = new ApiClient(base);

let state: DashboardState = initialState();
let renderQueued = false;

function setState(next: DashboardState): void {
  state = next;
  if (!renderQueued) {
    renderQueued = true;
    requestAnimationFrame(() => {
      renderQueued = false;
      render();
    });
  }
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

const channelsGrid = el<HTMLDivElement>("channels");
const channelCanvases: HTMLCanvasElement[] = [];
for (let i = 0; i < N_CHANNELS; i++) {
  const canvas = document.createElement("canvas");
  canvas.width = 280;
  canvas.height = 90;
  channelsGrid.appendChild(canvas);
  channelCanvases.push(canvas);
}
const scoreCanvas = el<HTMLCanvasElement>("score-chart");

function render(): void {
  const banner = el<HTMLDivElement>("connection");
  banner.textContent = state.connection;
  banner.className = `banner ${state.connection}`;

  el<HTMLSpanElement>("model-id").textContent = state.modelId ? state.modelId.slice(0, 12) : "–";
  el<HTMLSpanElement>("threshold").textContent =
    state.threshold !== null ? state.threshold.toPrecision(4) : "–";
  el<HTMLSpanElement>("last-score").textContent =
    state.lastScore !== null ? state.lastScore.toPrecision(4) : "–";
  el<HTMLSpanElement>("readings-seen").textContent = String(state.readingsSeen);
  el<HTMLSpanElement>("last-score").className = state.lastAnomaly ? "bad" : "good";

  for (let i = 0; i < N_CHANNELS; i++) drawChannelChart(channelCanvases[i], state, i);
  drawScoreChart(scoreCanvas, state);

  renderAlarms();
  renderJob();
}

function renderAlarms(): void {
  el<HTMLSpanElement>("alarm-count").textContent = String(unackedCount(state));
  const list = el<HTMLUListElement>("alarm-list");
  list.replaceChildren();
  for (const alarm of state.alarms.slice(0, 50)) {
    const item = document.createElement("li");
    item.className = alarm.acknowledged ? "alarm acked" : "alarm";
    const text = document.createElement("span");
    text.textContent =
      `#${alarm.id} seq ${alarm.seq} score ${alarm.score.toPrecision(4)} ` +
      `> ${alarm.threshold.toPrecision(4)} (streak ${alarm.streak}) ${alarm.ts}`;
    item.appendChild(text);
    if (!alarm.acknowledged) {
      const button = document.createElement("button");
      button.textContent = "ack";
      button.addEventListener("click", async () => {
        const result = await api.ackAlarm(alarm.id);
        if (result.kind === "ok") setState(ackAlarm(state, alarm.id, result.acknowledgedAt));
        else if (result.kind === "gone") {
          setState(dropAlarm(state, alarm.id));
          notice(`alarm #${alarm.id} no longer exists on the service`);
        } else notice(`ack failed: ${result.error}`);
      });
      item.appendChild(button);
    }
    list.appendChild(item);
  }
}

function renderJob(): void {
  const card = el<HTMLDivElement>("job-card");
  const button = el<HTMLButtonElement>("retrain-btn");
  button.disabled = !canRetrain(state);
  button.title = button.disabled
    ? state.connection !== "connected"
      ? "not connected"
      : "a retrain job is already running"
    : "train a new bundle from the CSV and swap it in";
  if (state.job === null) {
    card.textContent = "no retrain job this session";
    card.className = "job idle";
    return;
  }
  card.textContent = `${state.job.jobId}: ${state.job.state}`;
  card.className = `job ${state.job.state}`;
}

function notice(text: string): void {
  const node = el<HTMLDivElement>("notice");
  node.textContent = text;
  node.classList.add("visible");
  setTimeout(() => node.classList.remove("visible"), 4000);
}

el<HTMLButtonElement>("retrain-btn").addEventListener("click", async () => {
  const csvPath = el<HTMLInputElement>("retrain-csv").value.trim();
  if (!csvPath) {
    notice("enter the CSV path to retrain from");
    return;
  }
  const result = await api.startRetrain({ csv_path: csvPath });
  if (result.kind === "accepted") {
    setState(apply(state, { type: "retrain", job_id: result.jobId, state: "collecting" }));
  } else if (result.kind === "busy") {
    notice(result.error);
    setState(markRetrainBusy(state));
  } else {
    notice(result.error);
  }
});

async function bootstrap(): Promise<void> {
  try {
    const info = await api.getState();
    setState(setThreshold(state, info.threshold, info.model_id));
  } catch {
    // stream connection will fill the header in eventually
  }
  const client = new StreamClient(`${base}/stream`, {
    onMessage: (msg) => setState(apply(state, msg as { type: string })),
    onStatus: (status) => setState(setConnection(state, status)),
  });
  void client.run();
}

render();
void bootstrap();
