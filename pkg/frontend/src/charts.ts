/**
 * Hand-rolled canvas charts: one sparkline per channel plus the score
 * chart with the threshold drawn as a horizontal line, so operators see
 * the margin to the decision boundary rather than a bare verdict.
 */

import { DashboardState, SeriesPoint } from "./store.js";
import { CHANNEL_NAMES } from "./types.js";

const GRID = "#2a3340";
const LINE = "#6fb3ff";
const SCORE = "#ffd166";
const THRESHOLD = "#ef476f";
const ANOMALY_DOT = "#ef476f";
const TEXT = "#9fb0c0";

function extent(points: SeriesPoint[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const p of points) {
    if (p.value < lo) lo = p.value;
    if (p.value > hi) hi = p.value;
  }
  if (!isFinite(lo)) return [0, 1];
  if (hi - lo < 1e-12) return [lo - 0.5, hi + 0.5];
  return [lo, hi];
}

function drawSeries(
  ctx: CanvasRenderingContext2D,
  points: SeriesPoint[],
  w: number,
  h: number,
  lo: number,
  hi: number,
  color: string,
): void {
  if (points.length < 2) return;
  ctx.strokeStyle = color;
  ctx.lineWidth = 1.25;
  ctx.beginPath();
  const n = points.length;
  for (let i = 0; i < n; i++) {
    const x = (i / (n - 1)) * (w - 4) + 2;
    const y = h - 3 - ((points[i].value - lo) / (hi - lo)) * (h - 6);
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  }
  ctx.stroke();
}

export function drawChannelChart(
  canvas: HTMLCanvasElement,
  state: DashboardState,
  channel: number,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = GRID;
  ctx.strokeRect(0.5, 0.5, w - 1, h - 1);
  const points = state.channels[channel];
  const [lo, hi] = extent(points);
  drawSeries(ctx, points, w, h, lo, hi, LINE);
  ctx.fillStyle = TEXT;
  ctx.font = "10px system-ui, sans-serif";
  ctx.fillText(CHANNEL_NAMES[channel], 6, 12);
  if (points.length > 0) {
    const last = points[points.length - 1].value;
    ctx.fillText(last.toPrecision(5), 6, h - 6);
  }
}

export function drawScoreChart(canvas: HTMLCanvasElement, state: DashboardState): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = GRID;
  ctx.strokeRect(0.5, 0.5, w - 1, h - 1);

  const points = state.scores;
  let [lo, hi] = extent(points);
  lo = 0;
  if (state.threshold !== null) hi = Math.max(hi, state.threshold * 1.4);

  if (state.threshold !== null) {
    const ty = h - 3 - ((state.threshold - lo) / (hi - lo)) * (h - 6);
    ctx.strokeStyle = THRESHOLD;
    ctx.setLineDash([6, 4]);
    ctx.beginPath();
    ctx.moveTo(2, ty);
    ctx.lineTo(w - 2, ty);
    ctx.stroke();
    ctx.setLineDash([]);
    ctx.fillStyle = THRESHOLD;
    ctx.font = "10px system-ui, sans-serif";
    ctx.fillText(`threshold ${state.threshold.toPrecision(4)}`, 6, Math.max(12, ty - 4));
  }

  drawSeries(ctx, points, w, h, lo, hi, SCORE);

  // mark over-threshold points
  if (state.threshold !== null && points.length > 1) {
    ctx.fillStyle = ANOMALY_DOT;
    const n = points.length;
    for (let i = 0; i < n; i++) {
      if (points[i].value > state.threshold) {
        const x = (i / (n - 1)) * (w - 4) + 2;
        const y = h - 3 - ((points[i].value - lo) / (hi - lo)) * (h - 6);
        ctx.fillRect(x - 1.5, y - 1.5, 3, 3);
      }
    }
  }

  ctx.fillStyle = TEXT;
  ctx.font = "10px system-ui, sans-serif";
  ctx.fillText("reconstruction error", 6, 12);
}
