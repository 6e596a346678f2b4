import io
import time
import wave

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amava.errors import BackendTimeout
from amava.synth import (
    MockSynth,
    SFX_DURATION_MS,
    StalledSynth,
    TTS_MS_PER_WORD,
    synthesize_sfx,
    synthesize_tts,
)


def wav_duration_ms(data: bytes) -> float:
    with wave.open(io.BytesIO(data), "rb") as wav:
        return wav.getnframes() / wav.getframerate() * 1000.0


class TestMockTts:
    def test_duration_is_60ms_per_word(self):
        clip = synthesize_tts(MockSynth(), "three word phrase")
        assert clip.duration_ms == 3 * TTS_MS_PER_WORD == 180
        assert wav_duration_ms(clip.data) == pytest.approx(180.0)

    def test_deterministic(self):
        synth = MockSynth()
        first = synthesize_tts(synth, "the same sentence")
        second = synthesize_tts(synth, "the same sentence")
        assert first.data == second.data

    def test_normalization_equivalence(self):
        synth = MockSynth()
        assert synthesize_tts(synth, "Hello, World!").data == synthesize_tts(synth, "hello world").data

    def test_empty_text_rejected(self):
        with pytest.raises(ValueError):
            synthesize_tts(MockSynth(), "")
        with pytest.raises(ValueError):
            synthesize_tts(MockSynth(), "   ")

    def test_mime(self):
        assert synthesize_tts(MockSynth(), "hi").mime == "audio/wav"


class TestMockSfx:
    def test_fixed_duration(self):
        clip = synthesize_sfx(MockSynth(), "dog barking")
        assert clip.duration_ms == SFX_DURATION_MS == 1000
        assert wav_duration_ms(clip.data) == pytest.approx(1000.0)

    def test_differs_from_tts_of_same_text(self):
        synth = MockSynth()
        assert synthesize_sfx(synth, "dog barking").data != synthesize_tts(synth, "dog barking").data

    def test_failure_gives_no_partial_clip(self):
        class FailingSynth(MockSynth):
            def sfx(self, text):
                raise RuntimeError("service down")

        from amava.errors import BackendFailure

        with pytest.raises(BackendFailure):
            synthesize_sfx(FailingSynth(), "dog barking")


class TestClipValidity:
    @given(st.text(min_size=1, max_size=60))
    @settings(max_examples=100, deadline=None)
    def test_repeat_calls_byte_identical_and_riff(self, text):
        if not text.strip():
            return
        synth = MockSynth()
        for fn in (synthesize_tts, synthesize_sfx):
            first = fn(synth, text)
            second = fn(synth, text)
            assert first.data == second.data
            assert first.data[:4] == b"RIFF"
            assert first.data[8:12] == b"WAVE"
            wave.open(io.BytesIO(first.data), "rb").close()


class TestBudget:
    def test_never_blocks_past_budget(self):
        backend = StalledSynth(stall_ms=500, timeout_ms=100)
        started = time.monotonic()
        with pytest.raises(BackendTimeout):
            synthesize_tts(backend, "slow words")
        assert (time.monotonic() - started) * 1000.0 < 150
