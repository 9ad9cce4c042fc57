"""Command-line entry point: the collect-train-deploy loop as subcommands.

    labsentry generate  synthetic sensor CSV (+ optional labels)
    labsentry train     fit scaler + model + threshold, write a bundle
    labsentry tune      hyperparameter search, print the trial report
    labsentry eval      precision/recall/F1 of a bundle on a labeled stream
    labsentry export    re-serialize a bundle, print exact byte sizes
    labsentry monitor   run the live monitor service
    labsentry pipeline  generate -> train -> eval in one call

Every subcommand is deterministic given --seed.  Exit codes: 1 I/O
error, 2 bad/insufficient data, 3 training divergence.

A JSON config file (--config) may supply any flag by its long name with
dashes replaced by underscores; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from labsentry import autoencoder, detector, model_store, preprocess, simgen, tuner
from labsentry.errors import DivergenceError, InsufficientDataError, LabsentryError, ModelFormatError

logger = logging.getLogger("labsentry")

EXIT_OK = 0
EXIT_IO = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3

# reference training settings used when tuning is skipped
DEFAULT_HIDDEN_DIM = 64
DEFAULT_BATCH_SIZE = 16
DEFAULT_LEARNING_RATE = 7e-4
DEFAULT_EPOCHS = 10


def _parse_magnitude(text: str):
    """'0.025' -> 0.025; '0.02..0.03' -> (0.02, 0.03)."""
    if ".." in text:
        lo, hi = text.split("..", 1)
        return (float(lo), float(hi))
    return float(text)


def _load_clean_csv(path):
    rows, rejects = preprocess.parse_csv(Path(path).read_bytes())
    frames, report = preprocess.clean(rows)
    if rejects:
        logger.warning("%d malformed line(s) rejected", len(rejects))
    logger.info(
        "cleaned %s: %d in, %d sentinel-dropped, %d nonnumeric-dropped, %d out",
        path, report.rows_in, report.rows_dropped_sentinel,
        report.rows_dropped_nonnumeric, report.rows_out,
    )
    return frames, report


def cmd_generate(args) -> int:
    if args.rows < 1:
        raise SystemExit("--rows must be >= 1")
    if args.gen_config:
        cfg = simgen.load_config(args.gen_config, seed=args.seed)
    else:
        cfg = simgen.default_config(seed=args.seed)
    if args.rate_hz is not None:
        cfg = simgen.GeneratorConfig(
            channels=cfg.channels, rate_hz=args.rate_hz,
            event_rate_per_s=cfg.event_rate_per_s, event_duration_s=cfg.event_duration_s,
            event_magnitude=cfg.event_magnitude, seed=cfg.seed,
        )
    frames = simgen.generate(cfg, args.rows, start_seq=args.start_seq)

    corruption = None
    if args.anomaly_rate > 0:
        stream = simgen.inject_anomalies(
            frames, rate=args.anomaly_rate, magnitude=args.magnitude, seed=args.seed + 1
        )
    else:
        stream = simgen.LabeledStream(frames=frames, labels=np.zeros(len(frames), dtype=bool))
    if args.corruption_rate > 0:
        corruption = simgen.inject_corruption(
            stream, rate=args.corruption_rate, seed=args.seed + 2, protect_labels=True
        )

    simgen.write_csv(args.out, stream.frames, corruption)
    print(f"wrote {len(stream.frames)} rows to {args.out} "
          f"({int(stream.labels.sum())} anomalous, {len(corruption or {})} corrupted)")
    if args.labels_out:
        simgen.write_labels_csv(args.labels_out, stream)
        print(f"wrote labels to {args.labels_out}")
    return EXIT_OK


def _train_bundle(frames, args):
    """Shared by train and pipeline: scaler + (tune) + train + threshold."""
    scaler = preprocess.fit_scaler(frames)
    scaled = scaler.transform(preprocess.frames_to_matrix(frames))

    if args.tune:
        params, results = tuner.tune(scaled, n_trials=args.trials, seed=args.seed)
        logger.info("tuning done: best %s", params.as_dict())
    else:
        params = tuner.TrialParams(
            hidden_dim=args.hidden_dim, batch_size=args.batch_size,
            learning_rate=args.learning_rate, epochs=args.epochs,
        )
        results = []

    cfg = autoencoder.TrainConfig(
        batch_size=params.batch_size, learning_rate=params.learning_rate,
        epochs=params.epochs, patience=args.patience,
        val_fraction=args.val_fraction, seed=args.seed,
    )
    model = autoencoder.init(params.hidden_dim, seed=args.seed)
    trained, history = autoencoder.train(model, scaled, cfg)
    errors = autoencoder.batch_reconstruction_errors(trained, scaled)
    threshold = detector.calibrate(errors)
    return trained, scaler, threshold, params, history, results


def cmd_train(args) -> int:
    frames, _ = _load_clean_csv(args.data)
    trained, scaler, threshold, params, history, _ = _train_bundle(frames, args)
    sizes = model_store.save_bundle(args.model_dir, trained, scaler, threshold)
    summary = {
        "bundle_dir": str(args.model_dir),
        "files": sizes,
        "params": params.as_dict(),
        "epochs_run": history.epochs_run,
        "final_train_loss": history.train_loss[-1],
        "best_val_loss": history.best_val_loss,
        "threshold": threshold.value,
    }
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_tune(args) -> int:
    frames, _ = _load_clean_csv(args.data)
    scaler = preprocess.fit_scaler(frames)
    scaled = scaler.transform(preprocess.frames_to_matrix(frames))
    params, results = tuner.tune(scaled, n_trials=args.trials, seed=args.seed)
    report = tuner.report_json(results)
    if args.report:
        Path(args.report).write_text(report)
        logger.info("report written to %s", args.report)
    print(report)
    print(json.dumps({"best": params.as_dict()}, indent=2))
    return EXIT_OK


def cmd_eval(args) -> int:
    bundle = model_store.load_bundle(args.model_dir)
    frames, _ = _load_clean_csv(args.data)
    labels_by_seq = simgen.read_labels_csv(args.labels)
    if not labels_by_seq:
        print("labels file is empty", file=sys.stderr)
        return EXIT_DATA
    missing = [f.seq for f in frames if f.seq not in labels_by_seq]
    if missing:
        print(f"{len(missing)} stream rows missing from labels (first: seq {missing[0]})", file=sys.stderr)
        return EXIT_DATA

    scaled = bundle.scaler.transform(preprocess.frames_to_matrix(frames))
    errors = autoencoder.batch_reconstruction_errors(bundle.model, scaled)
    verdicts = errors > bundle.threshold.value
    labels = [labels_by_seq[f.seq] for f in frames]
    metrics = simgen.evaluate(labels, verdicts)

    print(json.dumps(metrics.as_dict(), indent=2))
    print()
    print(f"{'':12s}{'predicted +':>14s}{'predicted -':>14s}")
    print(f"{'actual +':12s}{metrics.tp:14d}{metrics.fn:14d}")
    print(f"{'actual -':12s}{metrics.fp:14d}{metrics.tn:14d}")
    print()
    print(f"precision {metrics.precision:.4f}  recall {metrics.recall:.4f}  f1 {metrics.f1:.4f}")
    return EXIT_OK


def cmd_export(args) -> int:
    bundle = model_store.load_bundle(args.model_dir)
    out_dir = Path(args.out or args.model_dir)
    sizes = model_store.save_bundle(out_dir, bundle.model, bundle.scaler, bundle.threshold)
    for name, size in sizes.items():
        print(f"{name}: {size} bytes")
    print(f"model_id: {model_store.load_bundle(out_dir).model_id}")
    return EXIT_OK


def cmd_monitor(args) -> int:
    from labsentry import monitor

    monitor.run_loop(
        args.model_dir,
        args.csv,
        bind=args.bind,
        interval=args.interval,
        alarm_n=args.alarm_n,
        static_dir=args.static_dir,
        retrain_root=args.retrain_root,
    )
    return EXIT_OK


def cmd_pipeline(args) -> int:
    """One-click loop: generate normal data, train, evaluate on a fresh
    injected stream, leave a deployable bundle behind."""
    workdir = Path(args.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    train_csv = workdir / "train.csv"
    test_csv = workdir / "test.csv"
    labels_csv = workdir / "labels.csv"

    cfg = (simgen.load_config(args.gen_config, seed=args.seed) if args.gen_config
           else simgen.default_config(seed=args.seed))
    simgen.write_csv(train_csv, simgen.generate(cfg, args.rows))
    test_stream = simgen.inject_anomalies(
        simgen.generate(cfg.with_seed(args.seed + 2000), args.rows),
        rate=args.anomaly_rate, magnitude=args.magnitude, seed=args.seed + 7,
    )
    simgen.write_csv(test_csv, test_stream.frames)
    simgen.write_labels_csv(labels_csv, test_stream)

    frames, _ = _load_clean_csv(train_csv)
    trained, scaler, threshold, params, history, _ = _train_bundle(frames, args)
    sizes = model_store.save_bundle(args.model_dir, trained, scaler, threshold)

    eval_args = argparse.Namespace(model_dir=args.model_dir, data=str(test_csv), labels=str(labels_csv))
    rc = cmd_eval(eval_args)
    print(json.dumps({"bundle_dir": str(args.model_dir), "files": sizes,
                      "params": params.as_dict(), "threshold": threshold.value}, indent=2))
    return rc


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tune", action="store_true", help="random-search hyperparameters first")
    p.add_argument("--trials", type=int, default=10, help="tuning trials (default 10)")
    p.add_argument("--hidden-dim", type=int, default=DEFAULT_HIDDEN_DIM,
                   help="encoder width when not tuning (default 64)")
    p.add_argument("--batch-size", type=int, default=DEFAULT_BATCH_SIZE, help="default 16")
    p.add_argument("--learning-rate", type=float, default=DEFAULT_LEARNING_RATE, help="default 7e-4")
    p.add_argument("--epochs", type=int, default=DEFAULT_EPOCHS, help="default 10")
    p.add_argument("--patience", type=int, default=5,
                   help="early stop after this many stagnant epochs (default 5)")
    p.add_argument("--val-fraction", type=float, default=0.10,
                   help="validation split fraction (default 0.10)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="labsentry", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config", help="JSON file supplying flag defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic sensor CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--rate-hz", type=float, default=None, help="sample rate in [0.5, 1.0]")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start-seq", type=int, default=0)
    p.add_argument("--anomaly-rate", type=float, default=0.0)
    p.add_argument("--magnitude", type=_parse_magnitude, default=(0.02, 0.03),
                   help="perturbation fraction, e.g. 0.02..0.03 or 0.025")
    p.add_argument("--corruption-rate", type=float, default=0.0)
    p.add_argument("--labels-out")
    p.add_argument("--gen-config", help="generator config JSON")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a detector bundle from a CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--model-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tune", help="hyperparameter search report")
    p.add_argument("--data", required=True)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", help="write the JSON report here as well")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("eval", help="score a labeled stream against a bundle")
    p.add_argument("--model-dir", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--labels", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export", help="re-serialize a bundle and print byte sizes")
    p.add_argument("--model-dir", required=True)
    p.add_argument("--out", help="target directory (default: in place)")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("monitor", help="run the live monitor service")
    p.add_argument("--model-dir", required=True)
    p.add_argument("--csv", required=True)
    p.add_argument("--interval", type=float, default=2.0, help="poll period seconds (default 2)")
    p.add_argument("--alarm-n", type=int, default=2,
                   help="consecutive anomalies before an alarm (default 2)")
    p.add_argument("--bind", default="127.0.0.1:8080")
    p.add_argument("--static-dir", help="serve this directory at / (dashboard build)")
    p.add_argument("--retrain-root", help="where retrain jobs write new bundles")
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("pipeline", help="generate + train + eval, one click")
    p.add_argument("--workdir", required=True)
    p.add_argument("--model-dir", required=True)
    p.add_argument("--rows", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--anomaly-rate", type=float, default=0.05)
    p.add_argument("--magnitude", type=_parse_magnitude, default=(0.02, 0.03))
    p.add_argument("--gen-config", help="generator config JSON")
    _add_train_flags(p)
    p.set_defaults(func=cmd_pipeline)

    # subparsers parse into a fresh namespace, so config-file defaults
    # must be pushed into each of them (see main)
    parser._command_parsers = list(sub.choices.values())  # type: ignore[attr-defined]
    return parser


def main(argv=None) -> int:
    parser = build_parser()

    # --config supplies defaults; explicit flags override
    pre, _ = parser.parse_known_args(argv)
    if pre.config:
        try:
            defaults = json.loads(Path(pre.config).read_text())
        except (OSError, ValueError) as exc:
            print(f"bad config file: {exc}", file=sys.stderr)
            return EXIT_IO
        mapped = {k.replace("-", "_"): v for k, v in defaults.items()}
        parser.set_defaults(**mapped)
        for sub in parser._command_parsers:
            sub.set_defaults(**{k: v for k, v in mapped.items()
                                if any(a.dest == k for a in sub._actions)})

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"file not found: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (InsufficientDataError, ModelFormatError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except LabsentryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
