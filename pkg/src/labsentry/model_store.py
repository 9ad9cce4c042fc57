"""Persistence for the deployable detector bundle.

A bundle directory holds exactly three files:

* ``model.ocae``    -- compact binary weights (format below)
* ``scaler.json``   -- per-channel min/max, see labsentry.preprocess
* ``threshold.txt`` -- decimal reconstruction-error threshold

model.ocae, little-endian:

    magic      4 bytes  "OCAE"
    version    u16      1
    layout     u8       1 = channel tokens, 0 = degenerate single token
    hidden_dim u16
    n_channels u16      7
    weights    f32[]    enc1 W,b; attn W,b; bottleneck W,b; dec1 W,b;
                        dec2 W,b; out W,b  (row-major)
    crc32      u32      over all preceding bytes

Total size is 11 + 4*param_count + 4 bytes.  The CRC is written last so
a truncated or corrupted file never loads.
"""

from __future__ import annotations

import hashlib
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from labsentry.autoencoder import (
    LAYOUT_CHANNEL_TOKENS,
    LAYOUT_SINGLE_TOKEN,
    AttentionAutoencoder,
    AttentionParams,
    DenseLayer,
)
from labsentry.detector import DEFAULT_THRESHOLD, Threshold, format_threshold, parse_threshold
from labsentry.errors import ModelFormatError
from labsentry.preprocess import N_CHANNELS, ChannelScaler

MAGIC = b"OCAE"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHBHH")  # magic, version, layout, hidden_dim, n_channels

MODEL_FILE = "model.ocae"
SCALER_FILE = "scaler.json"
THRESHOLD_FILE = "threshold.txt"


@dataclass(frozen=True)
class DetectorBundle:
    """Immutable deployable triple plus the model file's content hash."""

    model: AttentionAutoencoder
    scaler: ChannelScaler
    threshold: Threshold
    model_id: str


def model_file_size(hidden_dim: int, layout: int = LAYOUT_CHANNEL_TOKENS) -> int:
    """Exact on-disk size in bytes for a given architecture."""
    d = hidden_dim
    dh = d // 2
    in_dim = 1 if layout == LAYOUT_CHANNEL_TOKENS else N_CHANNELS
    count = (
        (in_dim * d + d)
        + (d + 1)
        + (d * dh + dh)
        + (dh * dh + dh)
        + (dh * d + d)
        + (d * N_CHANNELS + N_CHANNELS)
    )
    return _HEADER.size + 4 * count + 4


def serialize_model(model: AttentionAutoencoder) -> bytes:
    """Render the model into the binary format (32-bit weights)."""
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, model.layout, model.hidden_dim, N_CHANNELS)]
    for _, arr in model.param_arrays():
        parts.append(np.ascontiguousarray(arr, dtype=np.float32).tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def save_model(model: AttentionAutoencoder, path) -> int:
    """Write the binary model file; returns the byte count written."""
    data = serialize_model(model)
    Path(path).write_bytes(data)
    return len(data)


def deserialize_model(data: bytes) -> AttentionAutoencoder:
    if len(data) < _HEADER.size + 4:
        raise ModelFormatError(f"model file too short ({len(data)} bytes)")
    magic, version, layout, hidden_dim, n_channels = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ModelFormatError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format version {version}")
    if layout not in (LAYOUT_CHANNEL_TOKENS, LAYOUT_SINGLE_TOKEN):
        raise ModelFormatError(f"unknown layout byte {layout}")
    if hidden_dim < 2 or hidden_dim % 2 != 0:
        raise ModelFormatError(f"invalid hidden_dim {hidden_dim}")
    if n_channels != N_CHANNELS:
        raise ModelFormatError(f"expected {N_CHANNELS} channels, file has {n_channels}")

    expected = model_file_size(hidden_dim, layout)
    if len(data) != expected:
        raise ModelFormatError(f"file length {len(data)} != expected {expected} (truncated?)")
    (crc_stored,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) != crc_stored:
        raise ModelFormatError("CRC mismatch")

    d = hidden_dim
    dh = d // 2
    in_dim = 1 if layout == LAYOUT_CHANNEL_TOKENS else N_CHANNELS
    shapes = [
        (in_dim, d), (d,),  # enc1
        (d, 1), (),  # attention
        (d, dh), (dh,),  # bottleneck
        (dh, dh), (dh,),  # dec1
        (dh, d), (d,),  # dec2
        (d, N_CHANNELS), (N_CHANNELS,),  # out
    ]
    offset = _HEADER.size
    arrays = []
    for shape in shapes:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        offset += 4 * count
        arrays.append(arr.astype(np.float64).reshape(shape))

    w1, b1, wa, ba, wb, bb, wd1, bd1, wd2, bd2, wo, bo = arrays
    return AttentionAutoencoder(
        enc1=DenseLayer(w1, b1, "relu"),
        attn=AttentionParams(wa, float(ba)),
        bottleneck=DenseLayer(wb, bb, "relu"),
        dec1=DenseLayer(wd1, bd1, "relu"),
        dec2=DenseLayer(wd2, bd2, "relu"),
        out=DenseLayer(wo, bo, "sigmoid"),
        hidden_dim=d,
        layout=layout,
    )


def load_model(path) -> AttentionAutoencoder:
    return deserialize_model(Path(path).read_bytes())


def save_bundle(directory, model: AttentionAutoencoder, scaler: ChannelScaler, threshold: Threshold) -> dict:
    """Write the three bundle files; returns {filename: byte count}."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    sizes = {MODEL_FILE: save_model(model, directory / MODEL_FILE)}
    scaler_text = scaler.to_json()
    (directory / SCALER_FILE).write_text(scaler_text)
    sizes[SCALER_FILE] = len(scaler_text.encode())
    threshold_text = format_threshold(threshold)
    (directory / THRESHOLD_FILE).write_text(threshold_text)
    sizes[THRESHOLD_FILE] = len(threshold_text.encode())
    return sizes


def load_bundle(directory) -> DetectorBundle:
    """Load a bundle directory.

    model.ocae and scaler.json are mandatory; a missing threshold.txt
    falls back to the monitor default 0.02 (marked with n=0).  Corrupt
    files always raise, never silently default.
    """
    directory = Path(directory)
    model_path = directory / MODEL_FILE
    scaler_path = directory / SCALER_FILE
    if not model_path.is_file():
        raise FileNotFoundError(f"missing {MODEL_FILE} in {directory}")
    if not scaler_path.is_file():
        raise FileNotFoundError(f"missing {SCALER_FILE} in {directory}")

    model_bytes = model_path.read_bytes()
    model = deserialize_model(model_bytes)
    try:
        scaler = ChannelScaler.from_json(scaler_path.read_text())
    except ValueError as exc:
        raise ModelFormatError(f"bad scaler file: {exc}") from exc

    threshold_path = directory / THRESHOLD_FILE
    if threshold_path.is_file():
        try:
            threshold = parse_threshold(threshold_path.read_text())
        except ValueError as exc:
            raise ModelFormatError(f"bad threshold file: {exc}") from exc
    else:
        threshold = Threshold(value=DEFAULT_THRESHOLD, mean=DEFAULT_THRESHOLD, std=0.0, n=0)

    model_id = hashlib.sha256(model_bytes).hexdigest()
    return DetectorBundle(model=model, scaler=scaler, threshold=threshold, model_id=model_id)
