"""Anomaly monitoring for multi-channel liquid sensors.

Pipeline: ingest sensor CSV streams, train an attention one-class
autoencoder on normal data only, calibrate a reconstruction-error
threshold, pack everything into a compact deployable bundle, and watch a
live CSV feed with debounced alarms.
"""

__version__ = "0.1.0"

from labsentry.preprocess import (
    ChannelScaler,
    CleanReport,
    SensorFrame,
    clean,
    fit_scaler,
    parse_csv,
    to_model_input,
    transform,
)
from labsentry.autoencoder import (
    AttentionAutoencoder,
    ForwardTrace,
    TrainConfig,
    forward,
    init,
    mse,
    train,
)
from labsentry.detector import Threshold, Verdict, calibrate, classify, score
from labsentry.model_store import DetectorBundle, load_bundle, save_bundle, save_model

__all__ = [
    "AttentionAutoencoder",
    "ChannelScaler",
    "CleanReport",
    "DetectorBundle",
    "ForwardTrace",
    "SensorFrame",
    "Threshold",
    "TrainConfig",
    "Verdict",
    "calibrate",
    "classify",
    "clean",
    "fit_scaler",
    "forward",
    "init",
    "load_bundle",
    "mse",
    "parse_csv",
    "save_bundle",
    "save_model",
    "score",
    "to_model_input",
    "train",
    "transform",
]
