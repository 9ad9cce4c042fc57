"""Long-running edge monitor: tail the sensor CSV, score, debounce, serve.

Three cooperating activities share one process:

* the poll/score loop (single-threaded, ordered) tails the CSV every
  `interval` seconds, scores each new row against the current bundle and
  applies the consecutive-hit alarm rule;
* an HTTP server exposes health/state/retrain REST endpoints plus a
  newline-delimited JSON event stream at /stream and the dashboard
  static bundle at /;
* at most one retrain job rebuilds a bundle in the background and swaps
  it in atomically -- scoring continues on the old bundle until the new
  one is fully loaded.

The alarm rule fires once per anomaly run: at the transition streak ==
alarm_n, suppressing repeats while the streak keeps growing, re-arming
on the next normal reading.  Corrupt rows are skipped without resetting
the streak so a sensor glitch cannot mask an ongoing incident.
"""

from __future__ import annotations

import itertools
import json
import logging
import queue
import threading
import time
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from labsentry import detector, preprocess, tuner
from labsentry import autoencoder
from labsentry.errors import InsufficientDataError, LabsentryError
from labsentry.model_store import DetectorBundle, load_bundle, save_bundle
from labsentry.preprocess import SensorFrame

logger = logging.getLogger(__name__)

DEFAULT_INTERVAL_S = 2.0
DEFAULT_ALARM_N = 2
MIN_RETRAIN_ROWS = 500
RECOMMENDED_RETRAIN_ROWS = 2000


# ---------------------------------------------------------------------------
# CSV tailing


class CsvTail:
    """Incremental reader for an append-only (but rotatable) sensor CSV.

    Tracks a byte offset so polls never re-read consumed rows; a final
    line without its newline is left for the next poll.  A shrinking
    file is treated as rotation: consumption restarts from the top.
    """

    def __init__(self, path):
        self.path = Path(path)
        self._offset = 0
        self._size_seen = 0
        self.last_row = 0  # raw data rows consumed (drops included)
        self.rotations = 0

    def poll(self) -> list[SensorFrame]:
        """Return cleaned frames from rows appended since the last poll."""
        try:
            size = self.path.stat().st_size
        except FileNotFoundError:
            return []
        if size < self._size_seen:
            logger.warning("csv %s shrank (%d -> %d bytes): rotation, restarting", self.path, self._size_seen, size)
            self._offset = 0
            self.last_row = 0
            self.rotations += 1
        self._size_seen = size
        if size <= self._offset:
            return []

        with open(self.path, "rb") as fh:
            fh.seek(self._offset)
            chunk = fh.read(size - self._offset)
        # consume only complete lines; defer a partially written tail
        end = chunk.rfind(b"\n")
        if end < 0:
            return []
        chunk = chunk[: end + 1]
        at_start = self._offset == 0
        self._offset += len(chunk)

        rows, rejects = preprocess.parse_csv(chunk) if at_start else _parse_lines(chunk)
        if rejects:
            logger.warning("csv %s: %d malformed line(s) skipped", self.path, len(rejects))
        frames, report = preprocess.clean(rows)
        consumed = report.rows_in + len(rejects)
        self.last_row += consumed
        return frames


def _parse_lines(data: bytes) -> tuple[list[list[str]], list[list[str]]]:
    """parse_csv without header detection, for mid-file continuation."""
    import csv as _csv
    import io as _io

    rows, rejects = [], []
    for record in _csv.reader(_io.StringIO(data.decode("utf-8"))):
        if not record or (len(record) == 1 and record[0].strip() == ""):
            continue
        (rows if len(record) == preprocess.N_COLUMNS else rejects).append(record)
    return rows, rejects


def tail_csv(path, last_row: int) -> tuple[list[SensorFrame], int]:
    """One-shot tail: cleaned frames of rows with index >= last_row.

    Returns (frames, new_last_row).  new_last_row counts every data row
    seen, including rows the cleaner drops.  A missing file yields zero
    rows, not an error.
    """
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError:
        return [], last_row
    end = data.rfind(b"\n")
    if end < 0:
        return [], last_row
    rows, _ = preprocess.parse_csv(data[: end + 1])
    new_rows = rows[last_row:]
    frames, _ = preprocess.clean(new_rows)
    return frames, last_row + len(new_rows)


# ---------------------------------------------------------------------------
# Debounced alarm state machine


@dataclass(frozen=True)
class MonitorState:
    last_row: int = 0
    streak: int = 0
    alarm_n: int = DEFAULT_ALARM_N
    interval: float = DEFAULT_INTERVAL_S


@dataclass(frozen=True)
class AlarmEvent:
    timestamp: str  # timestamp of the triggering row
    seq: int
    score: float
    threshold: float
    streak: int
    model_id: str


def step(
    state: MonitorState, frame: SensorFrame, bundle: DetectorBundle
) -> tuple[MonitorState, AlarmEvent | None, detector.Verdict | None]:
    """Score one frame and advance the alarm state machine.

    An alarm fires exactly when the streak reaches alarm_n; it re-arms
    only after a normal reading resets the streak.  If scoring fails the
    frame is skipped: no verdict, streak untouched.
    """
    try:
        value = detector.score(bundle.model, bundle.scaler, frame)
    except Exception:
        logger.exception("scoring failed for seq=%s; frame skipped", frame.seq)
        return replace(state, last_row=state.last_row + 1), None, None

    verdict = detector.classify(value, bundle.threshold)
    alarm = None
    if verdict.is_anomaly:
        streak = state.streak + 1
        if streak == state.alarm_n:
            alarm = AlarmEvent(
                timestamp=frame.timestamp,
                seq=frame.seq,
                score=verdict.score,
                threshold=bundle.threshold.value,
                streak=streak,
                model_id=bundle.model_id,
            )
    else:
        streak = 0
    return replace(state, last_row=state.last_row + 1, streak=streak), alarm, verdict


# ---------------------------------------------------------------------------
# Stream fan-out


class _Subscriber:
    def __init__(self, maxsize: int):
        self.q: queue.Queue = queue.Queue(maxsize=maxsize)
        self.dropped = False


class BroadcastHub:
    """Fan-out with per-subscriber buffering.

    A subscriber that stops draining its queue is marked dropped and
    removed rather than back-pressuring the scoring loop.
    """

    def __init__(self, maxsize: int = 256):
        self._maxsize = maxsize
        self._subs: list[_Subscriber] = []
        self._lock = threading.Lock()

    def subscribe(self) -> _Subscriber:
        sub = _Subscriber(self._maxsize)
        with self._lock:
            self._subs.append(sub)
        return sub

    def unsubscribe(self, sub: _Subscriber) -> None:
        with self._lock:
            if sub in self._subs:
                self._subs.remove(sub)

    def publish(self, message: dict) -> None:
        line = json.dumps(message, separators=(",", ":"))
        with self._lock:
            subs = list(self._subs)
        for sub in subs:
            try:
                sub.q.put_nowait(line)
            except queue.Full:
                sub.dropped = True
                logger.warning("dropping slow stream subscriber")
                self.unsubscribe(sub)

    @property
    def subscriber_count(self) -> int:
        with self._lock:
            return len(self._subs)


# ---------------------------------------------------------------------------
# Retraining


RETRAIN_STATES = ("collecting", "tuning", "training", "deploying", "done", "failed")


@dataclass
class RetrainJob:
    job_id: str
    csv_path: str
    trials: int
    seed: int
    state: str = "collecting"
    started_at: str = ""
    bundle_dir: str | None = None
    error: str | None = None

    def as_dict(self) -> dict:
        out = {
            "job_id": self.job_id,
            "state": self.state,
            "started_at": self.started_at,
            "csv_path": self.csv_path,
            "trials": self.trials,
            "seed": self.seed,
        }
        if self.bundle_dir is not None:
            out["bundle_dir"] = self.bundle_dir
        if self.error is not None:
            out["error"] = self.error
        return out


def run_retrain_pipeline(csv_path, out_dir, trials: int = 10, seed: int = 0,
                         progress=None) -> Path:
    """clean -> scale -> (tune) -> train -> calibrate -> save bundle.

    Returns the bundle directory.  Raises on insufficient data or
    training divergence; the caller keeps its old bundle in that case.
    """
    def report(state):
        if progress:
            progress(state)

    report("collecting")
    data = Path(csv_path).read_bytes()
    rows, rejects = preprocess.parse_csv(data)
    frames, clean_report = preprocess.clean(rows)
    if len(frames) < MIN_RETRAIN_ROWS:
        raise InsufficientDataError(
            f"retraining needs >= {MIN_RETRAIN_ROWS} cleaned rows, got {len(frames)}"
        )
    if len(frames) < RECOMMENDED_RETRAIN_ROWS:
        logger.warning(
            "only %d cleaned rows; short windows over-flag new normal data (recommended >= %d)",
            len(frames), RECOMMENDED_RETRAIN_ROWS,
        )
    scaler = preprocess.fit_scaler(frames)
    scaled = scaler.transform(preprocess.frames_to_matrix(frames))

    if trials > 0:
        report("tuning")
        params, _ = tuner.tune(scaled, n_trials=trials, seed=seed)
    else:
        params = tuner.TrialParams(hidden_dim=64, batch_size=16, learning_rate=7e-4, epochs=10)

    report("training")
    cfg = autoencoder.TrainConfig(
        batch_size=params.batch_size,
        learning_rate=params.learning_rate,
        epochs=params.epochs,
        seed=seed,
    )
    model = autoencoder.init(params.hidden_dim, seed=seed)
    trained, _ = autoencoder.train(model, scaled, cfg)
    errors = autoencoder.batch_reconstruction_errors(trained, scaled)
    threshold = detector.calibrate(errors)

    report("deploying")
    out_dir = Path(out_dir)
    save_bundle(out_dir, trained, scaler, threshold)
    return out_dir


# ---------------------------------------------------------------------------
# Service


class RetrainConflict(LabsentryError):
    """A retrain job is already running."""


class MonitorService:
    """Owns the bundle reference, alarm registry, stream hub and jobs."""

    def __init__(
        self,
        bundle: DetectorBundle,
        csv_path,
        interval: float = DEFAULT_INTERVAL_S,
        alarm_n: int = DEFAULT_ALARM_N,
        retrain_root=None,
    ):
        self._bundle = bundle
        self._bundle_lock = threading.Lock()
        self.tail = CsvTail(csv_path)
        self.state = MonitorState(alarm_n=alarm_n, interval=interval)
        self.hub = BroadcastHub()
        self.alarms: dict[int, dict] = {}
        self._alarm_ids = itertools.count(1)
        self._alarm_lock = threading.Lock()
        self._job: RetrainJob | None = None
        self._job_history: dict[str, RetrainJob] = {}
        self._job_lock = threading.Lock()
        self._job_counter = itertools.count(1)
        self.retrain_root = Path(retrain_root) if retrain_root else Path(csv_path).parent / "bundles"
        self._stop = threading.Event()

    # -- bundle --------------------------------------------------------

    @property
    def bundle(self) -> DetectorBundle:
        with self._bundle_lock:
            return self._bundle

    def swap_bundle(self, bundle: DetectorBundle) -> None:
        with self._bundle_lock:
            old = self._bundle
            self._bundle = bundle
        logger.info("bundle swapped: %s -> %s", old.model_id[:12], bundle.model_id[:12])

    # -- scoring loop ---------------------------------------------------

    def process_frame(self, frame: SensorFrame) -> detector.Verdict | None:
        bundle = self.bundle  # snapshot: one frame, one bundle
        self.state, alarm, verdict = step(self.state, frame, bundle)
        if verdict is not None:
            self.hub.publish(
                {
                    "type": "reading",
                    "ts": frame.timestamp,
                    "seq": frame.seq,
                    "channels": [float(v) for v in frame.channels],
                    "score": verdict.score,
                    "anomaly": verdict.is_anomaly,
                    "model_id": bundle.model_id,
                }
            )
        if alarm is not None:
            with self._alarm_lock:
                alarm_id = next(self._alarm_ids)
                self.alarms[alarm_id] = {
                    "id": alarm_id,
                    "ts": alarm.timestamp,
                    "seq": alarm.seq,
                    "score": alarm.score,
                    "threshold": alarm.threshold,
                    "streak": alarm.streak,
                    "model_id": alarm.model_id,
                    "acknowledged": False,
                    "acknowledged_at": None,
                }
            logger.warning("ALARM #%d seq=%d score=%.6f > %.6f", alarm_id, alarm.seq, alarm.score, alarm.threshold)
            self.hub.publish({"type": "alarm", "id": alarm_id, "ts": alarm.timestamp,
                              "seq": alarm.seq, "score": alarm.score, "threshold": alarm.threshold,
                              "streak": alarm.streak, "model_id": alarm.model_id})
        return verdict

    def poll_once(self) -> int:
        try:
            frames = self.tail.poll()
        except OSError:
            logger.exception("csv poll failed; retrying next interval")
            return 0
        for frame in frames:
            self.process_frame(frame)
        # raw row accounting including dropped rows
        self.state = replace(self.state, last_row=self.tail.last_row)
        return len(frames)

    def run(self) -> None:
        """Poll/score until stop() is called; flushes a final snapshot."""
        logger.info("monitor loop started: %s", json.dumps(self.snapshot()))
        while not self._stop.is_set():
            self.poll_once()
            self._stop.wait(self.state.interval)
        logger.info("monitor loop stopped: final state %s", json.dumps(self.snapshot()))

    def stop(self) -> None:
        self._stop.set()

    # -- REST views ------------------------------------------------------

    def snapshot(self) -> dict:
        bundle = self.bundle
        return {
            "model_id": bundle.model_id,
            "threshold": bundle.threshold.value,
            "last_row": self.state.last_row,
            "streak": self.state.streak,
            "alarm_n": self.state.alarm_n,
            "interval_s": self.state.interval,
        }

    def ack_alarm(self, alarm_id: int) -> dict | None:
        with self._alarm_lock:
            entry = self.alarms.get(alarm_id)
            if entry is None:
                return None
            if not entry["acknowledged"]:
                entry["acknowledged"] = True
                entry["acknowledged_at"] = datetime.now(timezone.utc).isoformat()
            return dict(entry)

    # -- retraining -------------------------------------------------------

    def start_retrain(self, csv_path: str, trials: int = 10, seed: int = 0) -> RetrainJob:
        with self._job_lock:
            if self._job is not None and self._job.state not in ("done", "failed"):
                raise RetrainConflict(f"job {self._job.job_id} is {self._job.state}")
            job = RetrainJob(
                job_id=f"job-{next(self._job_counter)}",
                csv_path=str(csv_path),
                trials=trials,
                seed=seed,
                started_at=datetime.now(timezone.utc).isoformat(),
            )
            self._job = job
            self._job_history[job.job_id] = job
        thread = threading.Thread(target=self._retrain_worker, args=(job,), daemon=True)
        thread.start()
        return job

    def get_job(self, job_id: str) -> RetrainJob | None:
        with self._job_lock:
            return self._job_history.get(job_id)

    def _set_job_state(self, job: RetrainJob, state: str) -> None:
        job.state = state
        self.hub.publish({"type": "retrain", "job_id": job.job_id, "state": state})

    def _retrain_worker(self, job: RetrainJob) -> None:
        out_dir = self.retrain_root / f"{job.job_id}-{int(time.time())}"
        try:
            run_retrain_pipeline(
                job.csv_path,
                out_dir,
                trials=job.trials,
                seed=job.seed,
                progress=lambda s: self._set_job_state(job, s),
            )
            bundle = load_bundle(out_dir)  # swap only a fully loadable bundle
            self.swap_bundle(bundle)
            job.bundle_dir = str(out_dir)
            self._set_job_state(job, "done")
        except Exception as exc:
            logger.exception("retrain %s failed", job.job_id)
            job.error = str(exc)
            self._set_job_state(job, "failed")


# ---------------------------------------------------------------------------
# HTTP layer


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    @property
    def service(self) -> MonitorService:
        return self.server.service  # type: ignore[attr-defined]

    @property
    def static_dir(self) -> Path | None:
        return self.server.static_dir  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):
        logger.debug("http: " + fmt, *args)

    def _json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        path = self.path.split("?", 1)[0]
        if path == "/health":
            self._json(200, {"status": "ok"})
        elif path == "/state":
            self._json(200, self.service.snapshot())
        elif path.startswith("/retrain/"):
            job = self.service.get_job(path.rsplit("/", 1)[1])
            if job is None:
                self._json(404, {"error": "unknown job"})
            else:
                self._json(200, job.as_dict())
        elif path == "/alarms":
            with self.service._alarm_lock:
                self._json(200, {"alarms": list(self.service.alarms.values())})
        elif path == "/stream":
            self._stream()
        else:
            self._static(path)

    def do_POST(self):
        path = self.path.split("?", 1)[0]
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        if path == "/retrain":
            try:
                payload = json.loads(raw or b"{}")
                csv_path = payload["csv_path"]
            except (ValueError, KeyError):
                self._json(400, {"error": "body must be JSON with csv_path"})
                return
            try:
                job = self.service.start_retrain(
                    csv_path,
                    trials=int(payload.get("trials", 10)),
                    seed=int(payload.get("seed", 0)),
                )
            except RetrainConflict as exc:
                self._json(409, {"error": str(exc)})
                return
            self._json(202, {"job_id": job.job_id})
        elif path.startswith("/alarms/") and path.endswith("/ack"):
            try:
                alarm_id = int(path.split("/")[2])
            except ValueError:
                self._json(400, {"error": "bad alarm id"})
                return
            entry = self.service.ack_alarm(alarm_id)
            if entry is None:
                self._json(404, {"error": "unknown alarm"})
            else:
                self._json(200, entry)
        else:
            self._json(404, {"error": "not found"})

    def _stream(self):
        sub = self.service.hub.subscribe()
        try:
            self.send_response(200)
            self.send_header("Content-Type", "application/x-ndjson")
            self.send_header("Cache-Control", "no-store")
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Connection", "close")
            self.end_headers()
            while not sub.dropped:
                try:
                    line = sub.q.get(timeout=1.0)
                except queue.Empty:
                    continue
                self.wfile.write(line.encode() + b"\n")
                self.wfile.flush()
        except (BrokenPipeError, ConnectionResetError):
            pass
        finally:
            self.service.hub.unsubscribe(sub)
            self.close_connection = True

    def _static(self, path: str):
        root = self.static_dir
        if root is None:
            if path == "/":
                self._json(200, {"service": "labsentry monitor", "endpoints": [
                    "/health", "/state", "/stream", "/retrain", "/alarms"]})
            else:
                self._json(404, {"error": "not found"})
            return
        name = "index.html" if path == "/" else path.lstrip("/")
        target = (root / name).resolve()
        if not str(target).startswith(str(root.resolve())) or not target.is_file():
            self._json(404, {"error": "not found"})
            return
        import mimetypes

        body = target.read_bytes()
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


class MonitorServer:
    """HTTP server wrapper bound to a MonitorService."""

    def __init__(self, service: MonitorService, bind: str = "127.0.0.1:8080", static_dir=None):
        host, _, port = bind.partition(":")
        self.httpd = ThreadingHTTPServer((host, int(port or 8080)), _Handler)
        self.httpd.daemon_threads = True
        self.httpd.service = service  # type: ignore[attr-defined]
        self.httpd.static_dir = Path(static_dir) if static_dir else None  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self.httpd.server_address[:2]

    def start(self) -> None:
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()

    def shutdown(self) -> None:
        self.httpd.shutdown()
        if self._thread:
            self._thread.join(timeout=5)


def run_loop(
    bundle_dir,
    csv_path,
    bind: str = "127.0.0.1:8080",
    interval: float = DEFAULT_INTERVAL_S,
    alarm_n: int = DEFAULT_ALARM_N,
    static_dir=None,
    retrain_root=None,
) -> None:
    """Load the bundle, start the HTTP server and run the scoring loop.

    Blocks until interrupted.  A missing/corrupt bundle is fatal here;
    transient I/O problems inside the loop are retried next poll.
    """
    bundle = load_bundle(bundle_dir)  # fatal on failure, by design
    service = MonitorService(bundle, csv_path, interval=interval, alarm_n=alarm_n,
                             retrain_root=retrain_root)
    server = MonitorServer(service, bind=bind, static_dir=static_dir)
    server.start()
    host, port = server.address
    logger.info("monitor listening on http://%s:%d (model %s)", host, port, bundle.model_id[:12])
    try:
        service.run()
    except KeyboardInterrupt:
        logger.info("interrupted")
    finally:
        service.stop()
        server.shutdown()
