"""Audio synthesis clients: spoken captions (TTS) and sound effects (SFX).

The mock backend renders real WAV audio deterministically from the text so
offline tests can assert byte-identical clips and known durations: spoken
clips run 60 ms per word as a hash-keyed tone sequence, sound effects are
a fixed 1 s of hash-seeded shaped noise. A thin live adapter posts to an
HTTP service configured via environment variables.
"""

from __future__ import annotations

import hashlib
import io
import os
import struct
import time
import wave
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace

import numpy as np

from .backends import call_with_budget
from .errors import BackendFailure
from .interpreter import AudioCategory
from .text import normalize_prompt

DEFAULT_SYNTH_TIMEOUT_MS = 2500

SAMPLE_RATE = 16000
TTS_MS_PER_WORD = 60
SFX_DURATION_MS = 1000


@dataclass(frozen=True)
class AudioClip:
    """Encoded audio plus enough metadata to route and replay it."""

    data: bytes
    mime: str
    category: AudioCategory = AudioCategory.NONE
    batch_index: int = -1
    duration_ms: int = 0  # 0 means unknown (live backends)

    def __post_init__(self):
        if not self.data:
            raise ValueError("audio clip bytes must be non-empty")
        if not self.mime:
            raise ValueError("audio clip needs a MIME type")

    def tagged(self, category: AudioCategory, batch_index: int) -> "AudioClip":
        return replace(self, category=category, batch_index=batch_index)


class SynthBackend(ABC):
    """Synthesis service boundary; returns a clip or raises within budget."""

    timeout_ms: float = DEFAULT_SYNTH_TIMEOUT_MS

    @abstractmethod
    def tts(self, text: str) -> AudioClip:
        """Spoken rendition of text."""

    @abstractmethod
    def sfx(self, text: str) -> AudioClip:
        """Environmental sound effect matching text."""


def synthesize_tts(backend: SynthBackend, text: str) -> AudioClip:
    """TTS under the backend's budget; empty text is a caller bug."""
    if not text or not text.strip():
        raise ValueError("tts text must be non-empty")
    return call_with_budget(lambda: backend.tts(text), backend.timeout_ms, what="tts")


def synthesize_sfx(backend: SynthBackend, text: str) -> AudioClip:
    if not text or not text.strip():
        raise ValueError("sfx text must be non-empty")
    return call_with_budget(lambda: backend.sfx(text), backend.timeout_ms, what="sfx")


def _wav_bytes(samples: np.ndarray) -> bytes:
    """Mono 16-bit WAV at the mock sample rate."""
    pcm = np.clip(samples, -1.0, 1.0)
    ints = (pcm * 32767.0).astype("<i2")
    buf = io.BytesIO()
    with wave.open(buf, "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(SAMPLE_RATE)
        wav.writeframes(ints.tobytes())
    return buf.getvalue()


class MockSynth(SynthBackend):
    """Deterministic WAV synthesizer keyed on the normalized text.

    Spoken and effect clips come from distinct waveform families (tones vs
    shaped noise) so tests can tell them apart byte-wise.
    """

    def __init__(self, timeout_ms: float = DEFAULT_SYNTH_TIMEOUT_MS, latency_ms: float = 0):
        self.timeout_ms = timeout_ms
        self.latency_ms = latency_ms

    def _maybe_sleep(self):
        if self.latency_ms:
            time.sleep(self.latency_ms / 1000.0)

    def tts(self, text: str) -> AudioClip:
        self._maybe_sleep()
        normalized = normalize_prompt(text)
        words = normalized.split() or [""]
        digest = hashlib.sha256(normalized.encode("utf-8")).digest()
        samples_per_word = SAMPLE_RATE * TTS_MS_PER_WORD // 1000
        t = np.arange(samples_per_word) / SAMPLE_RATE
        chunks = []
        for i, _ in enumerate(words):
            freq = 200.0 + digest[i % len(digest)] * 4.0
            chunks.append(0.4 * np.sin(2 * np.pi * freq * t))
        samples = np.concatenate(chunks)
        duration_ms = TTS_MS_PER_WORD * len(words)
        return AudioClip(_wav_bytes(samples), "audio/wav", duration_ms=duration_ms)

    def sfx(self, text: str) -> AudioClip:
        self._maybe_sleep()
        normalized = normalize_prompt(text)
        digest = hashlib.sha256(normalized.encode("utf-8")).digest()
        seed = struct.unpack("<Q", digest[:8])[0]
        rng = np.random.default_rng(seed)
        n = SAMPLE_RATE * SFX_DURATION_MS // 1000
        noise = rng.normal(0.0, 0.25, size=n)
        envelope = np.sin(np.pi * np.arange(n) / n)  # fade in and out
        return AudioClip(
            _wav_bytes(noise * envelope), "audio/wav", duration_ms=SFX_DURATION_MS
        )


class StalledSynth(SynthBackend):
    """Test double that blocks for a fixed time before answering."""

    def __init__(self, stall_ms: float, timeout_ms: float = 60_000):
        self.stall_ms = stall_ms
        self.timeout_ms = timeout_ms
        self._inner = MockSynth()

    def _stall(self):
        time.sleep(self.stall_ms / 1000.0)

    def tts(self, text: str) -> AudioClip:
        self._stall()
        return self._inner.tts(text)

    def sfx(self, text: str) -> AudioClip:
        self._stall()
        return self._inner.sfx(text)


class LiveSynth(SynthBackend):
    """Minimal HTTP adapter for a hosted synthesis service.

    Reads AMAVA_SYNTH_URL and AMAVA_SYNTH_API_KEY from the environment and
    passes the service's MP3 bytes straight through. Not exercised by the
    test suite.
    """

    def __init__(self, timeout_ms: float = DEFAULT_SYNTH_TIMEOUT_MS):
        self.timeout_ms = timeout_ms
        self.url = os.environ.get("AMAVA_SYNTH_URL", "")
        self.api_key = os.environ.get("AMAVA_SYNTH_API_KEY", "")
        if not self.url or not self.api_key:
            raise BackendFailure(
                "live synthesis needs AMAVA_SYNTH_URL and AMAVA_SYNTH_API_KEY"
            )

    def _request(self, kind: str, text: str) -> AudioClip:
        import httpx

        response = httpx.post(
            self.url,
            json={"kind": kind, "text": text},
            headers={"Authorization": f"Bearer {self.api_key}"},
            timeout=self.timeout_ms / 1000.0,
        )
        response.raise_for_status()
        return AudioClip(response.content, response.headers.get("content-type", "audio/mpeg"))

    def tts(self, text: str) -> AudioClip:
        return self._request("tts", text)

    def sfx(self, text: str) -> AudioClip:
        return self._request("sfx", text)
