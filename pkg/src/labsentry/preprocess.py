"""Sensor CSV ingestion, row scrubbing and per-channel min-max scaling.

The wire format is a plain CSV with two leading bookkeeping columns
(timestamp, seq) followed by the seven sensor channels:

    timestamp,seq,ph,liq_temp_c,cond_us_cm,amb_temp_c,humidity_pct,co2_ppm,light_lux

Saturated or glitched cells arrive as the literal string ``255`` or as a
``DS18B20 error`` message; affected rows are dropped, never imputed.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from labsentry.errors import InsufficientDataError

N_CHANNELS = 7

CHANNEL_NAMES = (
    "ph",
    "liq_temp_c",
    "cond_us_cm",
    "amb_temp_c",
    "humidity_pct",
    "co2_ppm",
    "light_lux",
)

CSV_HEADER = "timestamp,seq," + ",".join(CHANNEL_NAMES)

# first channel column, 0-based (after timestamp and seq)
CHANNEL_OFFSET = 2

N_COLUMNS = CHANNEL_OFFSET + N_CHANNELS

SENTINEL_SATURATED = "255"
SENTINEL_DISCONNECT = "DS18B20 error"

SCALER_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SensorFrame:
    """One timestamped reading of the seven sensor channels."""

    timestamp: str
    seq: int
    channels: np.ndarray  # shape (7,), float64, finite

    def __post_init__(self):
        ch = np.asarray(self.channels, dtype=np.float64)
        if ch.shape != (N_CHANNELS,):
            raise ValueError(f"channels must have shape ({N_CHANNELS},), got {ch.shape}")
        if not np.all(np.isfinite(ch)):
            raise ValueError("channels must be finite")
        if self.seq < 0:
            raise ValueError("seq must be non-negative")
        object.__setattr__(self, "channels", ch)


@dataclass
class CleanReport:
    """Row accounting for one clean() pass."""

    rows_in: int = 0
    rows_dropped_sentinel: int = 0
    rows_dropped_nonnumeric: int = 0
    rows_out: int = 0

    def as_dict(self) -> dict:
        return {
            "rows_in": self.rows_in,
            "rows_dropped_sentinel": self.rows_dropped_sentinel,
            "rows_dropped_nonnumeric": self.rows_dropped_nonnumeric,
            "rows_out": self.rows_out,
        }


@dataclass(frozen=True)
class ChannelScaler:
    """Per-channel min/max mapping raw units onto [0, 1].

    Immutable once fitted; safe to share across threads.
    """

    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        mins = np.asarray(self.mins, dtype=np.float64)
        maxs = np.asarray(self.maxs, dtype=np.float64)
        if mins.shape != (N_CHANNELS,) or maxs.shape != (N_CHANNELS,):
            raise ValueError("mins/maxs must be 7-vectors")
        if np.any(mins > maxs):
            raise ValueError("mins must not exceed maxs")
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)

    def transform(self, x: np.ndarray) -> np.ndarray:
        """Scale a 7-vector (or an (n, 7) batch) into fit-range units.

        Values are deliberately NOT clamped: readings outside the fitted
        range land outside [0, 1], which is exactly the signal the
        detector needs.  Channels with zero fitted range map to 0.0.
        """
        x = np.asarray(x, dtype=np.float64)
        span = self.maxs - self.mins
        out = np.zeros_like(x, dtype=np.float64)
        nonzero = span > 0
        out[..., nonzero] = (x[..., nonzero] - self.mins[nonzero]) / span[nonzero]
        return out

    def to_json(self) -> str:
        return json.dumps(
            {
                "version": SCALER_SCHEMA_VERSION,
                "mins": list(self.mins),
                "maxs": list(self.maxs),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ChannelScaler":
        obj = json.loads(text)
        if not isinstance(obj, dict) or obj.get("version") != SCALER_SCHEMA_VERSION:
            raise ValueError("unsupported scaler schema")
        mins = obj.get("mins")
        maxs = obj.get("maxs")
        if (
            not isinstance(mins, list)
            or not isinstance(maxs, list)
            or len(mins) != N_CHANNELS
            or len(maxs) != N_CHANNELS
        ):
            raise ValueError(f"scaler mins/maxs must be lists of {N_CHANNELS} numbers")
        return cls(mins=np.asarray(mins, float), maxs=np.asarray(maxs, float))


def _is_int(cell: str) -> bool:
    try:
        int(cell.strip())
    except (TypeError, ValueError):
        return False
    return True


def parse_csv(source) -> tuple[list[list[str]], list[list[str]]]:
    """Split CSV input into well-shaped rows and a reject list.

    ``source`` may be text, bytes or a file-like object.  An optional
    header line is recognised by a non-numeric seq cell and skipped.
    Lines with the wrong column count go to the reject list rather than
    being silently dropped.  Returns ``(rows, rejects)`` in file order.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw

    rows: list[list[str]] = []
    rejects: list[list[str]] = []
    first = True
    for record in csv.reader(io.StringIO(text)):
        if not record or (len(record) == 1 and record[0].strip() == ""):
            continue
        if first:
            first = False
            # header: a full-width line whose seq cell is not numeric
            if len(record) == N_COLUMNS and not _is_int(record[1]):
                continue
        if len(record) != N_COLUMNS:
            rejects.append(record)
        else:
            rows.append(record)
    return rows, rejects


def _classify_row(row: list[str]) -> tuple[SensorFrame | None, str | None]:
    """Try to turn one raw row into a SensorFrame.

    Returns (frame, None) on success, else (None, drop reason) where the
    reason is ``"sentinel"`` or ``"nonnumeric"``.
    """
    cells = row[CHANNEL_OFFSET : CHANNEL_OFFSET + N_CHANNELS]
    for cell in cells:
        if cell.strip() == SENTINEL_SATURATED or SENTINEL_DISCONNECT in cell:
            return None, "sentinel"
    try:
        seq = int(row[1].strip())
        if seq < 0:
            return None, "nonnumeric"
        values = [float(c) for c in cells]
    except (TypeError, ValueError):
        return None, "nonnumeric"
    if not all(math.isfinite(v) for v in values):
        return None, "nonnumeric"
    return SensorFrame(timestamp=row[0], seq=seq, channels=np.array(values)), None


def clean(rows: list[list[str]]) -> tuple[list[SensorFrame], CleanReport]:
    """Scrub corrupted rows and build SensorFrames from the survivors.

    A row is dropped when any channel cell is the exact trimmed sentinel
    ``"255"``, contains ``"DS18B20 error"``, or fails finite-float
    parsing.  The sentinel match is a string comparison on purpose: a
    legitimate 255.3 uS/cm reading must survive.
    """
    report = CleanReport(rows_in=len(rows))
    frames: list[SensorFrame] = []
    for row in rows:
        frame, reason = _classify_row(row)
        if frame is not None:
            frames.append(frame)
        elif reason == "sentinel":
            report.rows_dropped_sentinel += 1
        else:
            report.rows_dropped_nonnumeric += 1
    report.rows_out = len(frames)
    return frames, report


def frames_to_matrix(frames: list[SensorFrame]) -> np.ndarray:
    """Stack frame channels into an (n, 7) float64 matrix."""
    if not frames:
        return np.empty((0, N_CHANNELS))
    return np.stack([f.channels for f in frames])


def fit_scaler(frames: list[SensorFrame]) -> ChannelScaler:
    """Fit per-channel extrema over the given frames (needs >= 2)."""
    if len(frames) < 2:
        raise InsufficientDataError(f"need at least 2 frames to fit a scaler, got {len(frames)}")
    mat = frames_to_matrix(frames)
    return ChannelScaler(mins=mat.min(axis=0), maxs=mat.max(axis=0))


def transform(scaler: ChannelScaler, frame: SensorFrame | np.ndarray) -> np.ndarray:
    """Scale one frame (or raw 7-vector) with the fitted extrema."""
    x = frame.channels if isinstance(frame, SensorFrame) else frame
    return scaler.transform(x)


def to_model_input(scaled: np.ndarray, layout: int = 1) -> np.ndarray:
    """Reshape a scaled 7-vector into the model's token sequence.

    layout 1 (default): seven tokens of one scalar each, shape (7, 1);
    channel i becomes token i in CSV order.  layout 0 is the degenerate
    single-token variant, shape (1, 7).
    """
    scaled = np.asarray(scaled, dtype=np.float64)
    if scaled.shape != (N_CHANNELS,):
        raise ValueError(f"expected a {N_CHANNELS}-vector, got shape {scaled.shape}")
    if not np.all(np.isfinite(scaled)):
        raise ValueError("scaled values must be finite")
    if layout == 1:
        return scaled.reshape(N_CHANNELS, 1)
    if layout == 0:
        return scaled.reshape(1, N_CHANNELS)
    raise ValueError(f"unknown layout {layout}")


def format_frame_row(frame: SensorFrame) -> list[str]:
    """Render a frame back into CSV cells (repr floats, round-trip exact)."""
    return [frame.timestamp, str(frame.seq)] + [repr(float(v)) for v in frame.channels]
