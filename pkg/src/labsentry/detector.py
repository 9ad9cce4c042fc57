"""Reconstruction-error scoring and threshold-based classification.

The decision boundary is calibrated once, on the training rows' own
reconstruction errors, as mean + 2 * population std.  A reading is
anomalous when its score strictly exceeds the threshold value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from labsentry.autoencoder import AttentionAutoencoder, forward, mse
from labsentry.errors import InsufficientDataError
from labsentry.preprocess import ChannelScaler, SensorFrame, to_model_input, transform

# applied by the monitor service when a bundle has no threshold file
DEFAULT_THRESHOLD = 0.02


@dataclass(frozen=True)
class Threshold:
    value: float  # mean + 2 * std for calibrated thresholds
    mean: float
    std: float
    n: int  # sample count; 0 marks a file-loaded or default value


@dataclass(frozen=True)
class Verdict:
    score: float
    is_anomaly: bool


def calibrate(errors) -> Threshold:
    """Fit the decision threshold from training reconstruction errors.

    Uses the population standard deviation (divide by n) so results are
    bit-reproducible regardless of sample size conventions.
    """
    arr = np.asarray(errors, dtype=np.float64).ravel()
    if arr.size < 2:
        raise InsufficientDataError(f"need at least 2 errors to calibrate, got {arr.size}")
    mean = float(np.mean(arr))
    std = float(np.std(arr))  # ddof=0
    return Threshold(value=mean + 2.0 * std, mean=mean, std=std, n=int(arr.size))


def score(model: AttentionAutoencoder, scaler: ChannelScaler, frame: SensorFrame | np.ndarray) -> float:
    """Anomaly score of one frame: mse between scaled input and its reconstruction."""
    scaled = transform(scaler, frame)
    trace = forward(model, to_model_input(scaled, model.layout))
    return mse(scaled, trace.x_hat)


def classify(score_value: float, threshold: Threshold) -> Verdict:
    """Strict greater-than comparison; a score equal to the threshold is normal."""
    return Verdict(score=float(score_value), is_anomaly=float(score_value) > threshold.value)


def format_threshold(threshold: Threshold) -> str:
    """Decimal text form (full round-trip precision, newline-terminated)."""
    return repr(float(threshold.value)) + "\n"


def parse_threshold(text: str) -> Threshold:
    """Parse a threshold file leniently (surrounding whitespace ignored)."""
    value = float(text.strip())
    return Threshold(value=value, mean=value, std=0.0, n=0)
