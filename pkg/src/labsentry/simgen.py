"""Synthetic 7-channel sensor streams, fault injection and scoring metrics.

The generator produces plausible "normal" laboratory telemetry: per
channel a baseline mean, gaussian noise, a slow sinusoidal drift, plus
occasional stirring/reagent events that shift a couple of channels for a
bounded stretch.  Everything is driven by one seeded RNG, so a config +
seed pins the stream exactly.

Anomalies are micro-perturbations (a few percent of the current value)
on the pH or conductivity channel; corruption injects the raw sentinel
strings the cleaning stage must drop.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from importlib import resources

import numpy as np

from labsentry.preprocess import (
    CHANNEL_NAMES,
    CSV_HEADER,
    N_CHANNELS,
    SENTINEL_DISCONNECT,
    SensorFrame,
    format_frame_row,
)

_EPOCH = datetime(2024, 1, 1, tzinfo=timezone.utc)

ANOMALY_CHANNELS = ("ph", "cond_us_cm")

SENTINEL_CELLS = ("255", SENTINEL_DISCONNECT + ": not connected")


@dataclass(frozen=True)
class ChannelSpec:
    name: str
    mean: float
    sigma: float  # gaussian noise, native units
    drift_amp: float  # sinusoid amplitude, native units (sign sets direction)
    drift_period_s: float
    drift_phase: float = 0.0  # radians; channels sharing period+phase co-drift

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"{self.name}: sigma must be >= 0")
        if self.drift_period_s <= 0:
            raise ValueError(f"{self.name}: drift period must be positive")


@dataclass(frozen=True)
class GeneratorConfig:
    channels: tuple[ChannelSpec, ...]
    rate_hz: float = 1.0
    event_rate_per_s: float = 0.002  # stirring / reagent steps
    event_duration_s: tuple[float, float] = (20.0, 60.0)
    event_magnitude: tuple[float, float] = (0.005, 0.015)  # fraction of channel mean
    seed: int = 0

    def __post_init__(self):
        if not 0.5 <= self.rate_hz <= 1.0:
            raise ValueError("rate_hz must lie in [0.5, 1.0]")
        if len(self.channels) != N_CHANNELS:
            raise ValueError(f"config must define {N_CHANNELS} channels")
        names = tuple(c.name for c in self.channels)
        if names != CHANNEL_NAMES:
            raise ValueError(f"channel names/order must be {CHANNEL_NAMES}, got {names}")

    def with_seed(self, seed: int) -> "GeneratorConfig":
        return GeneratorConfig(
            channels=self.channels,
            rate_hz=self.rate_hz,
            event_rate_per_s=self.event_rate_per_s,
            event_duration_s=self.event_duration_s,
            event_magnitude=self.event_magnitude,
            seed=seed,
        )

    def as_dict(self) -> dict:
        return {
            "rate_hz": self.rate_hz,
            "event_rate_per_s": self.event_rate_per_s,
            "event_duration_s": list(self.event_duration_s),
            "event_magnitude": list(self.event_magnitude),
            "seed": self.seed,
            "channels": [
                {
                    "name": c.name,
                    "mean": c.mean,
                    "sigma": c.sigma,
                    "drift_amp": c.drift_amp,
                    "drift_period_s": c.drift_period_s,
                    "drift_phase": c.drift_phase,
                }
                for c in self.channels
            ],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "GeneratorConfig":
        channels = tuple(ChannelSpec(**c) for c in obj["channels"])
        return cls(
            channels=channels,
            rate_hz=obj.get("rate_hz", 1.0),
            event_rate_per_s=obj.get("event_rate_per_s", 0.002),
            event_duration_s=tuple(obj.get("event_duration_s", (20.0, 60.0))),
            event_magnitude=tuple(obj.get("event_magnitude", (0.005, 0.015))),
            seed=obj.get("seed", 0),
        )


def default_config(seed: int = 0) -> GeneratorConfig:
    """The checked-in default generator parameters."""
    text = resources.files("labsentry").joinpath("data/default_generator.json").read_text()
    return GeneratorConfig.from_dict(json.loads(text)).with_seed(seed)


def load_config(path, seed: int | None = None) -> GeneratorConfig:
    with open(path) as fh:
        cfg = GeneratorConfig.from_dict(json.load(fh))
    return cfg if seed is None else cfg.with_seed(seed)


@dataclass
class LabeledStream:
    frames: list[SensorFrame]
    labels: np.ndarray  # bool per frame, True on injected rows

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=bool)
        if len(self.frames) != self.labels.shape[0]:
            raise ValueError("frames and labels must have equal length")


@dataclass
class Metrics:
    tp: int
    fp: int
    tn: int
    fn: int
    precision: float
    recall: float
    f1: float

    def as_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def generate(cfg: GeneratorConfig, n_rows: int, start_seq: int = 0) -> list[SensorFrame]:
    """Produce n_rows frames of normal telemetry, deterministic per seed."""
    if n_rows < 1:
        raise ValueError("n_rows must be >= 1")
    rng = np.random.default_rng(cfg.seed)
    dt = 1.0 / cfg.rate_hz
    t = np.arange(n_rows) * dt

    means = np.array([c.mean for c in cfg.channels])
    sigmas = np.array([c.sigma for c in cfg.channels])
    amps = np.array([c.drift_amp for c in cfg.channels])
    periods = np.array([c.drift_period_s for c in cfg.channels])
    phases = np.array([c.drift_phase for c in cfg.channels])

    values = (
        means
        + amps * np.sin(2.0 * np.pi * t[:, None] / periods + phases)
        + rng.normal(0.0, 1.0, size=(n_rows, N_CHANNELS)) * sigmas
    )

    # stirring / reagent steps: bounded offsets on a couple of channels
    offsets = np.zeros((n_rows, N_CHANNELS))
    starts = np.flatnonzero(rng.random(n_rows) < cfg.event_rate_per_s * dt)
    for s in starts:
        dur = int(rng.uniform(*cfg.event_duration_s) * cfg.rate_hz)
        n_ch = int(rng.integers(1, 3))  # 1 or 2 channels per event
        chans = rng.choice(N_CHANNELS, size=n_ch, replace=False)
        for ch in chans:
            mag = rng.uniform(*cfg.event_magnitude) * abs(means[ch])
            sign = 1.0 if rng.random() < 0.5 else -1.0
            offsets[s : s + dur, ch] += sign * mag
    values += offsets

    frames = []
    for i in range(n_rows):
        ts = (_EPOCH + timedelta(seconds=i * dt)).isoformat().replace("+00:00", "Z")
        frames.append(SensorFrame(timestamp=ts, seq=start_seq + i, channels=values[i]))
    return frames


def inject_anomalies(
    frames: list[SensorFrame],
    rate: float,
    magnitude: float | tuple[float, float] = (0.02, 0.03),
    seed: int = 0,
) -> LabeledStream:
    """Perturb ~rate*n seeded rows by +-magnitude on pH or conductivity.

    `magnitude` is a fraction of the current value; a (lo, hi) tuple
    draws per-row magnitudes uniformly from the interval.
    """
    if not 0 <= rate < 1:
        raise ValueError("rate must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    chan_idx = tuple(CHANNEL_NAMES.index(name) for name in ANOMALY_CHANNELS)

    out: list[SensorFrame] = []
    labels = np.zeros(len(frames), dtype=bool)
    for i, frame in enumerate(frames):
        if rate > 0 and rng.random() < rate:
            ch = chan_idx[int(rng.integers(len(chan_idx)))]
            if isinstance(magnitude, tuple):
                mag = float(rng.uniform(*magnitude))
            else:
                mag = float(magnitude)
            sign = 1.0 if rng.random() < 0.5 else -1.0
            channels = frame.channels.copy()
            channels[ch] *= 1.0 + sign * mag
            out.append(SensorFrame(frame.timestamp, frame.seq, channels))
            labels[i] = True
        else:
            out.append(frame)
    return LabeledStream(frames=out, labels=labels)


def inject_corruption(
    stream: LabeledStream,
    rate: float,
    seed: int = 0,
    protect_labels: bool = False,
) -> dict[int, tuple[int, str]]:
    """Plan sentinel-cell corruption: {row index: (channel, sentinel string)}.

    The plan is applied when rows are rendered to CSV (see write_csv);
    with protect_labels, injected-anomaly rows are never corrupted.
    """
    if not 0 <= rate < 1:
        raise ValueError("rate must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    plan: dict[int, tuple[int, str]] = {}
    for i in range(len(stream.frames)):
        if rate <= 0 or rng.random() >= rate:
            continue
        if protect_labels and stream.labels[i]:
            continue
        ch = int(rng.integers(N_CHANNELS))
        sentinel = SENTINEL_CELLS[int(rng.integers(len(SENTINEL_CELLS)))]
        plan[i] = (ch, sentinel)
    return plan


def frames_to_rows(
    frames: list[SensorFrame], corruption: dict[int, tuple[int, str]] | None = None
) -> list[list[str]]:
    """Render frames to CSV cells, applying an optional corruption plan."""
    rows = []
    for i, frame in enumerate(frames):
        row = format_frame_row(frame)
        if corruption and i in corruption:
            ch, sentinel = corruption[i]
            row[2 + ch] = sentinel
        rows.append(row)
    return rows


def write_csv(path, frames, corruption=None, header: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(CSV_HEADER + "\n")
        for row in frames_to_rows(frames, corruption):
            fh.write(",".join(row) + "\n")


def write_labels_csv(path, stream: LabeledStream) -> None:
    """Ground-truth file: `seq,label` with label in {0, 1}."""
    with open(path, "w", newline="") as fh:
        fh.write("seq,label\n")
        for frame, label in zip(stream.frames, stream.labels):
            fh.write(f"{frame.seq},{1 if label else 0}\n")


def read_labels_csv(path) -> dict[int, bool]:
    labels: dict[int, bool] = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("seq"):
                continue
            seq_str, label_str = line.split(",")
            labels[int(seq_str)] = label_str.strip() == "1"
    return labels


def evaluate(labels, verdicts) -> Metrics:
    """Position-wise confusion counts and derived precision/recall/F1.

    All 0/0 ratios resolve to 0.0.
    """
    labels = np.asarray(labels, dtype=bool)
    verdicts = np.asarray(verdicts, dtype=bool)
    if labels.shape != verdicts.shape:
        raise ValueError(f"length mismatch: {labels.shape} labels vs {verdicts.shape} verdicts")
    tp = int(np.sum(labels & verdicts))
    fp = int(np.sum(~labels & verdicts))
    tn = int(np.sum(~labels & ~verdicts))
    fn = int(np.sum(labels & ~verdicts))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics(tp=tp, fp=fp, tn=tn, fn=fn, precision=precision, recall=recall, f1=f1)
