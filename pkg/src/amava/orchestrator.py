"""Per-session pipeline: buffer frames, classify, branch, emit audio.

One session owns one frame stream. Ingestion is cheap and never waits on
the slow stages: frames pair up into batches, batches go to a small worker
pool (at most `max_in_flight` processing at once), and when the pool is
saturated the oldest waiting batch is dropped — stale imagery is worthless
for navigation. Throttle checks, playback decisions, and audio emission
are serialized through one lock, so audio reaches the gateway in decision
order and the throttle timers see a consistent history.

`process_batch` is synchronous and deterministic given scripted components
and a manual clock; the threaded machinery (`start`/`submit_frame`/
`close`, or the `run_session` convenience driver) simply calls it from
worker threads for live use.
"""

from __future__ import annotations

import json
import logging
import threading
from collections import deque
from dataclasses import dataclass
from pathlib import Path

from .cache import AudioStore
from .classifier import Branch
from .clock import SystemClock
from .errors import SessionClosedError, SkipSignal
from .frames import FlowParams, FrameBatch, GrayFrame, downscale, extract_features
from .interpreter import AudioCategory, InterpreterBackend, SceneResponse, interpret
from .policy import (
    EmissionDecision,
    PolicyConfig,
    ThrottleState,
    decide,
    record_playback,
    should_throttle,
)
from .synth import AudioClip, SynthBackend, synthesize_sfx, synthesize_tts
from .text import key_of

logger = logging.getLogger(__name__)

EVENT_FIELDS = ("batch_index", "category", "decision", "clip_key", "t_batch", "t_decision", "t_sent")


@dataclass(frozen=True)
class EmissionEvent:
    """Logged outcome of one batch: a playback, a cache fill, or a skip."""

    batch_index: int
    category: AudioCategory
    decision: EmissionDecision
    clip_key: str | None
    t_batch: float
    t_decision: float
    t_sent: float | None

    def __post_init__(self):
        if self.t_decision < self.t_batch:
            raise ValueError("decision cannot precede batch formation")
        if self.t_sent is not None and self.t_sent < self.t_decision:
            raise ValueError("audio cannot be sent before the decision")

    def to_record(self) -> dict:
        return {
            "batch_index": self.batch_index,
            "category": self.category.value,
            "decision": self.decision.value,
            "clip_key": self.clip_key,
            "t_batch": self.t_batch,
            "t_decision": self.t_decision,
            "t_sent": self.t_sent,
        }


@dataclass(frozen=True)
class BatchJob:
    """A formed batch plus the original JPEG payloads for the interpreter."""

    frames: FrameBatch
    jpegs: tuple[bytes, ...]
    t_batch: float


@dataclass(frozen=True)
class DropEvent:
    batch_index: int
    t_ms: float
    reason: str


class Session:
    """State and workers for one connected stream."""

    def __init__(
        self,
        session_id: str,
        classifier,
        interpreter: InterpreterBackend,
        synth: SynthBackend,
        cache: AudioStore,
        policy: PolicyConfig | None = None,
        flow_params: FlowParams | None = None,
        clock=None,
        on_audio=None,
        log_path=None,
        batch_size: int = 2,
        max_in_flight: int = 2,
        downscale_max_side: int = 320,
    ):
        if batch_size != 2:
            raise ValueError("only 2-frame batches are supported")
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be positive")
        self.session_id = session_id
        self.classifier = classifier
        self.interpreter = interpreter
        self.synth = synth
        self.cache = cache
        self.policy = policy or PolicyConfig()
        self.flow_params = flow_params or FlowParams()
        self.clock = clock or SystemClock()
        self.on_audio = on_audio
        self.batch_size = batch_size
        self.max_in_flight = max_in_flight
        self.downscale_max_side = downscale_max_side

        self.throttle = ThrottleState()
        self.events: list[EmissionEvent] = []
        self.drops: list[DropEvent] = []
        self._next_batch_index = 0
        self._buffer: deque[tuple[GrayFrame, bytes | None]] = deque()
        self._closed = False

        self._decision_lock = threading.Lock()
        self._cond = threading.Condition()
        self._pending: deque[BatchJob] = deque()
        self._busy = 0
        self._workers: list[threading.Thread] = []

        self._log_file = None
        if log_path is not None:
            Path(log_path).parent.mkdir(parents=True, exist_ok=True)
            self._log_file = open(log_path, "a", encoding="utf-8")

    # ---------- ingestion ----------

    def ingest_frame(self, frame: GrayFrame, received_at: float, jpeg: bytes | None = None):
        """Buffer one frame; returns a BatchJob when a pair is complete.

        Fast by contract: no classification, no backend calls. The buffer
        is capped at twice the batch size; older frames fall off the front
        with a warning.
        """
        if self._closed:
            raise SessionClosedError(f"session {self.session_id} is closed")
        small = downscale(frame, self.downscale_max_side)
        self._buffer.append((small, jpeg))
        while len(self._buffer) > 2 * self.batch_size:
            stale, _ = self._buffer.popleft()
            logger.warning(
                "session %s: frame buffer full, dropping frame captured at %.0f ms",
                self.session_id,
                stale.timestamp_ms,
            )
        if len(self._buffer) < self.batch_size:
            return None
        (first, jpeg_a) = self._buffer.popleft()
        (second, jpeg_b) = self._buffer.popleft()
        batch = FrameBatch(frames=(first, second), batch_index=self._next_batch_index)
        self._next_batch_index += 1
        jpegs = tuple(j for j in (jpeg_a, jpeg_b) if j is not None)
        return BatchJob(frames=batch, jpegs=jpegs, t_batch=received_at)

    # ---------- one batch, synchronously ----------

    def process_batch(self, job: BatchJob) -> EmissionEvent | None:
        """Run the full pipeline on one batch; never raises.

        Component failures (interpreter timeouts, synthesis errors, bad
        frames) degrade to a skip event. Returns None only when the session
        closed before the decision could be emitted.
        """
        response = None
        try:
            features = extract_features(job.frames, self.flow_params)
            _, branch = self.classifier.classify(features)
            response = interpret(self.interpreter, list(job.jpegs), branch)
        except SkipSignal as exc:
            logger.warning(
                "session %s batch %d: interpreter unavailable (%s)",
                self.session_id,
                job.frames.batch_index,
                exc,
            )
        except Exception:
            logger.exception(
                "session %s batch %d: pipeline error", self.session_id, job.frames.batch_index
            )
        if response is None:
            response = SceneResponse(AudioCategory.NONE, "", "")

        cache_fill: tuple[str, int] | None = None
        with self._decision_lock:
            if self._closed:
                self._record_drop(job.frames.batch_index, "session closed")
                return None
            event, cache_fill = self._decide_and_emit(job, response)

        if cache_fill is not None:
            self._fill_cache(*cache_fill)
        return event

    def _decide_and_emit(self, job: BatchJob, response: SceneResponse):
        """Decision critical section: throttle, decide, play, log."""
        index = job.frames.batch_index
        now = self.clock.now_ms()
        category = response.category

        if category is AudioCategory.NONE:
            event = EmissionEvent(index, category, EmissionDecision.SKIP_NONE, None, job.t_batch, now, None)
            self._emit(event)
            return event, None

        content = response.content
        cached = self.cache.contains(content)
        throttled = should_throttle(self.throttle, category, now, self.policy)
        decision = decide(category, cached, throttled)

        clip: AudioClip | None = None
        clip_key: str | None = None
        cache_fill = None

        if decision is EmissionDecision.PLAY_CACHED:
            clip = self.cache.get(content)
            clip_key = key_of(content)
            if clip is None:  # evicted between the hit test and the read
                event = EmissionEvent(
                    index, category, EmissionDecision.SKIP_NONE, None, job.t_batch, now, None
                )
                self._emit(event)
                return event, None
        elif decision is EmissionDecision.SYNTHESIZE_AND_PLAY:
            try:
                clip = synthesize_tts(self.synth, content)
            except SkipSignal as exc:
                logger.warning(
                    "session %s batch %d: tts failed (%s)", self.session_id, index, exc
                )
                event = EmissionEvent(
                    index, category, EmissionDecision.SKIP_NONE, None, job.t_batch, now, None
                )
                self._emit(event)
                return event, None
            clip_key = self.cache.put(content, clip.tagged(category, index))
        elif decision is EmissionDecision.SYNTHESIZE_AND_CACHE_ONLY:
            clip_key = key_of(content)
            cache_fill = (content, index)

        t_sent = None
        if clip is not None:
            clip = clip.tagged(category, index)
            record_playback(self.throttle, category, now)
            if self.on_audio is not None:
                try:
                    self.on_audio(index, category, clip, content)
                except Exception:
                    logger.exception(
                        "session %s batch %d: audio sink failed", self.session_id, index
                    )
            t_sent = self.clock.now_ms()

        event = EmissionEvent(index, category, decision, clip_key, job.t_batch, now, t_sent)
        self._emit(event)
        return event, cache_fill

    def _fill_cache(self, content: str, index: int) -> None:
        """Cache-miss SFX synthesis; runs outside the decision lock."""
        try:
            clip = synthesize_sfx(self.synth, content).tagged(AudioCategory.SFX, index)
        except SkipSignal as exc:
            logger.warning(
                "session %s batch %d: sfx synthesis failed (%s)", self.session_id, index, exc
            )
            return
        key = self.cache.put(content, clip)
        logger.info(
            "session %s batch %d: cached sfx %s (%d ms)", self.session_id, index, key, clip.duration_ms
        )

    def _emit(self, event: EmissionEvent) -> None:
        self.events.append(event)
        log_file = self._log_file
        if log_file is not None:
            try:
                log_file.write(json.dumps(event.to_record()) + "\n")
                log_file.flush()
            except ValueError:  # log already closed by a concurrent shutdown
                pass

    def _record_drop(self, batch_index: int, reason: str) -> None:
        drop = DropEvent(batch_index, self.clock.now_ms(), reason)
        self.drops.append(drop)
        logger.warning(
            "session %s: dropped batch %d (%s)", self.session_id, batch_index, reason
        )

    # ---------- threaded driver ----------

    def start(self) -> None:
        """Spawn the worker pool for live (threaded) operation."""
        if self._workers:
            return
        for i in range(self.max_in_flight):
            worker = threading.Thread(
                target=self._worker_loop, daemon=True, name=f"{self.session_id}-worker-{i}"
            )
            worker.start()
            self._workers.append(worker)

    def submit_frame(self, frame: GrayFrame, received_at: float, jpeg: bytes | None = None) -> None:
        """Ingest one frame and queue any completed batch for the workers."""
        job = self.ingest_frame(frame, received_at, jpeg)
        if job is None:
            return
        with self._cond:
            if self._busy >= self.max_in_flight and self._pending:
                stale = self._pending.popleft()
                self._record_drop(stale.frames.batch_index, "backpressure")
            self._pending.append(job)
            self._cond.notify()

    def _worker_loop(self) -> None:
        while True:
            with self._cond:
                while not self._pending and not self._closed:
                    self._cond.wait()
                if self._closed and not self._pending:
                    return
                job = self._pending.popleft()
                self._busy += 1
            try:
                self.process_batch(job)
            finally:
                with self._cond:
                    self._busy -= 1
                    self._cond.notify_all()

    def close(self, join_timeout: float = 2.0) -> None:
        """Stop accepting frames, drop unstarted work, flush the event log."""
        with self._cond:
            if self._closed:
                return
            self._closed = True
            while self._pending:
                stale = self._pending.popleft()
                self._record_drop(stale.frames.batch_index, "pending at close")
            self._cond.notify_all()
        for worker in self._workers:
            worker.join(timeout=join_timeout)
        if self._log_file is not None:
            self._log_file.close()
            self._log_file = None

    @property
    def closed(self) -> bool:
        return self._closed


def run_session(session: Session, frame_source) -> None:
    """Drive a session from an iterable of (frame, received_at[, jpeg]).

    Ingestion and batch processing overlap; the source ending (or raising
    a disconnect) closes the session cleanly and flushes its log.
    """
    session.start()
    try:
        for item in frame_source:
            frame, received_at, jpeg = (*item, None)[:3]
            session.submit_frame(frame, received_at, jpeg)
    finally:
        session.close()
