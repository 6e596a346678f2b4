import time

import numpy as np
import pytest

from amava.cache import AudioStore
from amava.classifier import Branch, MovementClass
from amava.clock import ManualClock
from amava.errors import SessionClosedError
from amava.frames import GrayFrame, MotionFeatures
from amava.interpreter import AudioCategory, MockInterpreter
from amava.orchestrator import BatchJob, EmissionEvent, Session, run_session
from amava.policy import EmissionDecision, PolicyConfig
from amava.synth import MockSynth, StalledSynth
from amava.text import key_of

from conftest import frame_pair_shifted, texture


class ThresholdClassifier:
    """Deterministic stand-in honoring the classifier interface."""

    def classify(self, features: MotionFeatures):
        if features.flow_mag > 1.0 or features.frame_diff > 10.0:
            return MovementClass.HIGH, Branch.HIGH
        return MovementClass.LOW, Branch.LOW


def build_session(tmp_path, script, clock=None, synth=None, policy=None, **kwargs):
    """clock=None gives the session a real monotonic clock."""
    return Session(
        session_id="test",
        classifier=ThresholdClassifier(),
        interpreter=MockInterpreter(script, timeout_ms=kwargs.pop("interp_timeout_ms", 2500)),
        synth=synth or MockSynth(),
        cache=AudioStore(tmp_path / "cache"),
        policy=policy or PolicyConfig(),
        clock=clock,
        **kwargs,
    )


def batch_frames(kind: str, seed: int, t0: float):
    """Frame pair for one batch: static -> low branch, moving -> high."""
    if kind == "low":
        px = texture(seed, 64, 64)
        return GrayFrame(px.copy(), t0), GrayFrame(px.copy(), t0 + 500.0)
    return frame_pair_shifted(seed, size=(64, 64), shift=4, t0=t0)


# ---------------------------------------------------------------------------
# scripted 20-batch session: movement branch, interpreter reply, and the
# emission sequence worked out by hand from the throttle/caching rules
# ---------------------------------------------------------------------------

OFFICE = "sunlit office with wooden desks and a window"
HALLWAY = "quiet hallway with potted plants"
CYCLIST = "cyclist approaching quickly"
CAR = "car backing out ahead"
TRAFFIC = "traffic passing"
DOG = "dog barking"
PALLET = "pallet jack crossing"

GOLDEN_SCRIPT = [
    ("low", OFFICE),
    ("high", f"hazard: {CYCLIST}"),
    ("high", f"sfx: {TRAFFIC}"),
    ("high", "none"),
    ("high", f"hazard: {CAR}"),
    ("high", f"sfx: {TRAFFIC}"),
    ("high", f"hazard: {CAR}"),
    ("high", f"sfx: {TRAFFIC}"),
    ("low", HALLWAY),
    ("high", f"sfx: {DOG}"),
    ("high", f"sfx: {DOG}"),
    ("high", f"hazard: {CYCLIST}"),
    ("high", "none"),
    ("high", f"sfx: {TRAFFIC}"),
    ("high", f"sfx: {DOG}"),
    ("low", OFFICE),
    ("high", f"hazard: {PALLET}"),
    ("high", "none"),
    ("high", f"sfx: {TRAFFIC}"),
    ("high", f"hazard: {PALLET}"),
]

D = EmissionDecision
C = AudioCategory

# (batch, category, decision, content or None); times follow 1000*i + 500
GOLDEN_EXPECTED = [
    (0, C.DESCRIPTION, D.SYNTHESIZE_AND_PLAY, OFFICE),
    (1, C.HAZARD, D.SKIP_THROTTLED, None),          # shared speech timer, 1 s since batch 0
    (2, C.SFX, D.SYNTHESIZE_AND_CACHE_ONLY, TRAFFIC),
    (3, C.NONE, D.SKIP_NONE, None),
    (4, C.HAZARD, D.SYNTHESIZE_AND_PLAY, CAR),      # exactly 4 s since last speech
    (5, C.SFX, D.PLAY_CACHED, TRAFFIC),
    (6, C.HAZARD, D.SKIP_THROTTLED, None),          # 2 s inside the 5 s hazard window
    (7, C.SFX, D.SKIP_THROTTLED, None),             # 2 s inside the 3 s sfx window
    (8, C.DESCRIPTION, D.SKIP_THROTTLED, None),     # 8 s inside the 15 s window
    (9, C.SFX, D.SYNTHESIZE_AND_CACHE_ONLY, DOG),    # 4 s past the sfx window, miss
    (10, C.SFX, D.PLAY_CACHED, DOG),                 # 5 s since the last sfx play
    (11, C.HAZARD, D.SYNTHESIZE_AND_PLAY, CYCLIST),  # batch 1 never synthesized
    (12, C.NONE, D.SKIP_NONE, None),
    (13, C.SFX, D.PLAY_CACHED, TRAFFIC),             # exactly 3 s after batch 10
    (14, C.SFX, D.SKIP_THROTTLED, None),
    (15, C.DESCRIPTION, D.PLAY_CACHED, OFFICE),      # exactly 15 s after batch 0
    (16, C.HAZARD, D.SKIP_THROTTLED, None),          # shared timer after description
    (17, C.NONE, D.SKIP_NONE, None),
    (18, C.SFX, D.PLAY_CACHED, TRAFFIC),
    (19, C.HAZARD, D.SYNTHESIZE_AND_PLAY, PALLET),
]

GOLDEN_MOVEMENT = [entry[0] for entry in GOLDEN_SCRIPT]


class CountingSynth(MockSynth):
    def __init__(self):
        super().__init__()
        self.tts_calls = 0
        self.sfx_calls = 0

    def tts(self, text):
        self.tts_calls += 1
        return super().tts(text)

    def sfx(self, text):
        self.sfx_calls += 1
        return super().sfx(text)


def run_golden_session(tmp_path, run_tag: str):
    clock = ManualClock()
    audio_calls = []

    def on_audio(batch_index, category, clip, content):
        audio_calls.append((batch_index, category, clip.data, content))

    session = build_session(
        tmp_path / run_tag, GOLDEN_SCRIPT, clock=clock, on_audio=on_audio,
        synth=CountingSynth(),
        log_path=tmp_path / run_tag / "events.ndjson",
    )
    frame_no = 0
    for i, movement in enumerate(GOLDEN_MOVEMENT):
        first, second = batch_frames(movement, seed=100 + i, t0=500.0 * frame_no)
        for frame in (first, second):
            clock.set_ms(500.0 * frame_no)
            job = session.ingest_frame(frame, received_at=clock.now_ms())
            frame_no += 1
            if job is not None:
                session.process_batch(job)
    session.close()
    return session, audio_calls


class TestGoldenTrace:
    def test_matches_hand_derived_sequence(self, tmp_path):
        session, audio_calls = run_golden_session(tmp_path, "run1")
        assert len(session.events) == 20
        assert session.drops == []
        for event, (index, category, decision, content) in zip(session.events, GOLDEN_EXPECTED):
            t_expected = 1000.0 * index + 500.0
            assert event.batch_index == index
            assert event.category is category
            assert event.decision is decision
            assert event.t_batch == t_expected
            assert event.t_decision == t_expected
            if decision in (D.PLAY_CACHED, D.SYNTHESIZE_AND_PLAY):
                assert event.t_sent == t_expected
                assert event.clip_key == key_of(content)
            elif decision is D.SYNTHESIZE_AND_CACHE_ONLY:
                assert event.t_sent is None
                assert event.clip_key == key_of(content)
            else:
                assert event.t_sent is None
                assert event.clip_key is None

        played = [e for e in session.events if e.t_sent is not None]
        assert [e.batch_index for e in played] == [0, 4, 5, 10, 11, 13, 15, 18, 19]
        assert [c[0] for c in audio_calls] == [0, 4, 5, 10, 11, 13, 15, 18, 19]
        # skips never reach a synthesizer: 4 spoken plays, 2 sfx cache fills
        assert session.synth.tts_calls == 4
        assert session.synth.sfx_calls == 2

    def test_bit_deterministic_across_runs(self, tmp_path):
        first_session, first_audio = run_golden_session(tmp_path, "run1")
        second_session, second_audio = run_golden_session(tmp_path, "run2")
        assert first_session.events == second_session.events
        assert first_audio == second_audio  # includes clip bytes

    def test_log_file_round_trips(self, tmp_path):
        import json

        session, _ = run_golden_session(tmp_path, "run1")
        lines = (tmp_path / "run1" / "events.ndjson").read_text().strip().splitlines()
        assert len(lines) == 20
        for line, event in zip(lines, session.events):
            assert json.loads(line) == event.to_record()


class TestIngestion:
    def test_single_frame_no_batch(self, tmp_path):
        session = build_session(tmp_path, [("*", "none")])
        frame = GrayFrame(texture(0, 64, 64), 0.0)
        assert session.ingest_frame(frame, 0.0) is None

    def test_five_frames_two_batches_one_pending(self, tmp_path):
        session = build_session(tmp_path, [("*", "none")])
        batches = []
        for j in range(5):
            frame = GrayFrame(texture(j, 64, 64), 500.0 * j)
            job = session.ingest_frame(frame, 500.0 * j)
            if job is not None:
                batches.append(job)
        assert len(batches) == 2
        assert [b.frames.batch_index for b in batches] == [0, 1]
        # disjoint consecutive pairing
        assert batches[0].frames.frames[0].timestamp_ms == 0.0
        assert batches[0].frames.frames[1].timestamp_ms == 500.0
        assert batches[1].frames.frames[0].timestamp_ms == 1000.0
        assert batches[1].frames.frames[1].timestamp_ms == 1500.0

    def test_closed_session_rejects_frames(self, tmp_path):
        session = build_session(tmp_path, [("*", "none")])
        session.close()
        with pytest.raises(SessionClosedError):
            session.ingest_frame(GrayFrame(texture(0, 64, 64), 0.0), 0.0)

    def test_frames_downscaled_on_ingest(self, tmp_path):
        session = build_session(tmp_path, [("*", "none")])
        big = GrayFrame(texture(1, 360, 480), 0.0)
        session.ingest_frame(big, 0.0)
        job = session.ingest_frame(GrayFrame(texture(2, 360, 480), 500.0), 500.0)
        assert job is not None
        assert max(job.frames.frames[0].pixels.shape) == 320


class TestProcessBatchFailureModes:
    def test_interpreter_timeout_becomes_skip(self, tmp_path):
        clock = ManualClock()
        session = build_session(
            tmp_path, [("*", "hazard: x")], clock=clock, interp_timeout_ms=50,
        )
        session.interpreter.latency_ms = 300
        job = self._job(session)
        event = session.process_batch(job)
        assert event.decision is EmissionDecision.SKIP_NONE
        assert event.category is AudioCategory.NONE

    def test_tts_failure_becomes_skip(self, tmp_path):
        class BrokenSynth(MockSynth):
            def tts(self, text):
                raise RuntimeError("no voice today")

        session = build_session(tmp_path, [("low", "a calm room")], synth=BrokenSynth())
        event = session.process_batch(self._job(session, kind="low"))
        assert event.decision is EmissionDecision.SKIP_NONE
        assert session.throttle.last_tts_play is None

    def test_never_raises_even_on_classifier_crash(self, tmp_path):
        class ExplodingClassifier:
            def classify(self, features):
                raise RuntimeError("kaboom")

        session = build_session(tmp_path, [("*", "none")])
        session.classifier = ExplodingClassifier()
        event = session.process_batch(self._job(session))
        assert event.decision is EmissionDecision.SKIP_NONE

    @staticmethod
    def _job(session, kind="high"):
        first, second = batch_frames(kind, seed=7, t0=0.0)
        session.ingest_frame(first, session.clock.now_ms())
        return session.ingest_frame(second, session.clock.now_ms())


class TestNonBlockingContract:
    def test_ingest_fast_while_synth_stalled(self, tmp_path):
        """A stalled synthesizer must not slow the ingestion path."""
        synth = StalledSynth(stall_ms=5000, timeout_ms=20_000)
        session = build_session(
            tmp_path,
            [("high", "hazard: frozen ahead")],
            synth=synth,
            max_in_flight=2,
        )
        session.start()
        worst_ms = 0.0
        for j in range(12):
            frame_a, frame_b = batch_frames("high", seed=50 + j, t0=1000.0 * j)
            for frame in (frame_a, frame_b):
                started = time.perf_counter()
                session.submit_frame(frame, session.clock.now_ms())
                worst_ms = max(worst_ms, (time.perf_counter() - started) * 1000.0)
        time.sleep(0.3)  # let workers reach the stall
        assert worst_ms < 10.0
        assert len(session.drops) >= 1
        processed = {e.batch_index for e in session.events}
        dropped = {d.batch_index for d in session.drops}
        session.close(join_timeout=0.2)
        assert processed.isdisjoint(dropped)


class TestThreadedDrops:
    def test_backpressure_drops_oldest_unstarted(self, tmp_path):
        session = build_session(
            tmp_path,
            [("high", "hazard: keep moving")],
            policy=PolicyConfig(0, 0, 0, 0),
            max_in_flight=2,
        )
        session.interpreter.latency_ms = 800

        def flat_source():
            for j in range(10):
                first, second = batch_frames("high", seed=j, t0=250.0 * j)
                yield first, session.clock.now_ms()
                time.sleep(0.125)
                yield second, session.clock.now_ms()
                time.sleep(0.125)

        run_session(session, flat_source())
        total = len(session.events) + len(session.drops)
        assert total == 10  # no batch vanishes silently
        assert len(session.drops) >= 3
        # listed drop reasons are meaningful
        assert {d.reason for d in session.drops} <= {
            "backpressure",
            "pending at close",
            "session closed",
        }

    def test_no_events_after_close(self, tmp_path):
        session = build_session(tmp_path, [("high", "hazard: late")], max_in_flight=1)
        session.interpreter.latency_ms = 400
        session.start()
        first, second = batch_frames("high", seed=3, t0=0.0)
        session.submit_frame(first, session.clock.now_ms())
        session.submit_frame(second, session.clock.now_ms())
        time.sleep(0.05)  # worker is now inside the interpreter call
        session.close(join_timeout=1.0)
        events_at_close = list(session.events)
        time.sleep(0.6)
        assert session.events == events_at_close
        assert len(session.events) + len(session.drops) == 1


class TestReordering:
    @staticmethod
    def _reordering_rate(events):
        played = sorted(
            (e for e in events if e.t_sent is not None),
            key=lambda e: (e.t_sent, e.batch_index),
        )
        highest = -1
        reordered = 0
        for event in played:
            if event.batch_index < highest:
                reordered += 1
            highest = max(highest, event.batch_index)
        return (reordered / len(played)) if played else 0.0, len(played)

    def test_uniform_latency_keeps_order(self, tmp_path):
        session = build_session(
            tmp_path,
            [("high", "hazard: steady pace")],
            policy=PolicyConfig(0, 0, 0, 0),
            max_in_flight=2,
        )
        session.interpreter.latency_ms = 300

        def source():
            for j in range(8):
                first, second = batch_frames("high", seed=j, t0=400.0 * j)
                yield first, session.clock.now_ms()
                time.sleep(0.2)
                yield second, session.clock.now_ms()
                time.sleep(0.2)

        run_session(session, source())
        rate, played = self._reordering_rate(session.events)
        assert played >= 5
        assert rate == 0.0

    def test_randomized_latency_reorders_at_k4(self, tmp_path):
        rng = np.random.default_rng(99)
        latencies = rng.uniform(500.0, 3000.0, size=32)
        session = build_session(
            tmp_path,
            [("high", "hazard: chaos")],
            policy=PolicyConfig(0, 0, 0, 0),
            max_in_flight=4,
            interp_timeout_ms=10_000,
        )
        session.interpreter.latency_ms = lambda index: float(latencies[index % len(latencies)])
        session.start()
        for j in range(24):
            first, second = batch_frames("high", seed=j, t0=200.0 * j)
            session.submit_frame(first, session.clock.now_ms())
            session.submit_frame(second, session.clock.now_ms())
            time.sleep(0.1)
        time.sleep(3.2)  # drain the in-flight tail
        session.close(join_timeout=4.0)
        rate, played = self._reordering_rate(session.events)
        assert played >= 6
        assert rate > 0.0
