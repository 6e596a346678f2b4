"""Scene interpretation: movement-conditioned prompts and response parsing.

A backend takes JPEG frames plus a prompt and returns free text. The low
movement branch asks for a short scene description and uses the reply as
is; the high branch asks for a single `category: content` line which is
parsed into one of four audio categories. Anything unparseable degrades to
"none", which downstream logic simply skips.
"""

from __future__ import annotations

import json
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum

from .backends import call_with_budget
from .classifier import Branch
from .errors import BackendFailure

DEFAULT_INTERPRETER_TIMEOUT_MS = 2500

# Defensive cap on low-branch description length, in words.
MAX_DESCRIPTION_WORDS = 40


class AudioCategory(str, Enum):
    DESCRIPTION = "description"
    HAZARD = "hazard"
    SFX = "sfx"
    NONE = "none"


_CATEGORY_TOKENS = {c.value: c for c in AudioCategory}

LOW_MOVEMENT_PROMPT = (
    "You are narrating for a blind pedestrian in a calm scene. "
    "Describe what these two camera frames show in 15 to 20 words. "
    "Reply with the description only."
)

HIGH_MOVEMENT_PROMPT = (
    "You are assisting a blind pedestrian in a busy scene shown in two "
    "camera frames. Reply with exactly one line of the form "
    "`category: content`, where category is one of hazard, sfx, "
    "description, or none. Use hazard for an urgent obstacle alert, sfx "
    "for a short environmental sound cue, description for useful context, "
    "and none when nothing is worth reporting."
)


@dataclass(frozen=True)
class SceneResponse:
    """Parsed interpreter output: a category plus the text to voice."""

    category: AudioCategory
    content: str
    raw: str = ""

    def __post_init__(self):
        if self.category is AudioCategory.NONE:
            if self.content:
                raise ValueError("a none response carries no content")
        elif not self.content:
            raise ValueError(f"a {self.category.value} response needs content")


class InterpreterBackend(ABC):
    """Vision-language service boundary: frames + prompt in, text out."""

    timeout_ms: float = DEFAULT_INTERPRETER_TIMEOUT_MS

    @abstractmethod
    def generate(self, frames: list[bytes], prompt: str) -> str:
        """Return raw text for the given JPEG frames, or raise."""


def build_prompt(movement: Branch) -> str:
    return LOW_MOVEMENT_PROMPT if movement is Branch.LOW else HIGH_MOVEMENT_PROMPT


def parse_response(raw: str) -> SceneResponse:
    """Parse `category: content` from the first line; degrade to none.

    Category matching is case-insensitive with surrounding whitespace
    trimmed. A recognized category with empty content (other than none)
    also degrades to none, so the caller never has to special-case
    malformed model output.
    """
    raw = raw or ""
    lines = raw.strip().splitlines()
    first = lines[0] if lines else ""
    head, sep, tail = first.partition(":")
    if sep:
        category = _CATEGORY_TOKENS.get(head.strip().lower())
        if category is AudioCategory.NONE:
            return SceneResponse(AudioCategory.NONE, "", raw)
        if category is not None:
            content = tail.strip()
            if content:
                return SceneResponse(category, content, raw)
    return SceneResponse(AudioCategory.NONE, "", raw)


def interpret(backend: InterpreterBackend, frames: list[bytes], movement: Branch) -> SceneResponse:
    """Run one backend call under its budget and map the reply to a response.

    Raises BackendTimeout/BackendFailure (typed skip signals) instead of
    ever blocking the pipeline.
    """
    prompt = build_prompt(movement)
    raw = call_with_budget(
        lambda: backend.generate(frames, prompt),
        backend.timeout_ms,
        what="interpreter",
    )
    if movement is Branch.HIGH:
        return parse_response(raw)
    words = (raw or "").split()
    if not words:
        return SceneResponse(AudioCategory.NONE, "", raw or "")
    return SceneResponse(
        AudioCategory.DESCRIPTION, " ".join(words[:MAX_DESCRIPTION_WORDS]), raw
    )


class MockInterpreter(InterpreterBackend):
    """Scripted backend for tests and offline runs.

    The script is an ordered list of (branch pattern, response text) pairs;
    call number i consumes entry i (mod script length), so a replayed
    session is a pure function of the script and the call index. A pattern
    of "low"/"high" asserts which branch the call came from; "*" matches
    either. Optional latency (constant ms or a callable of the call index)
    simulates slow round trips.
    """

    def __init__(self, script, timeout_ms: float = DEFAULT_INTERPRETER_TIMEOUT_MS, latency_ms=0):
        if not script:
            raise ValueError("mock script must contain at least one entry")
        self.script = [(str(p), str(t)) for p, t in script]
        self.timeout_ms = timeout_ms
        self.latency_ms = latency_ms
        self._calls = 0
        self._lock = threading.Lock()

    @classmethod
    def from_json(cls, path, **kwargs) -> "MockInterpreter":
        """Load a script file: a JSON list of {"branch": ..., "text": ...}."""
        with open(path, encoding="utf-8") as fh:
            entries = json.load(fh)
        script = [(e.get("branch", "*"), e["text"]) for e in entries]
        return cls(script, **kwargs)

    def generate(self, frames: list[bytes], prompt: str) -> str:
        with self._lock:
            index = self._calls
            self._calls += 1
        pattern, text = self.script[index % len(self.script)]
        branch = "low" if prompt == LOW_MOVEMENT_PROMPT else "high"
        if pattern not in ("*", branch):
            raise BackendFailure(
                f"script entry {index} expects branch {pattern!r}, got {branch!r}"
            )
        latency = self.latency_ms(index) if callable(self.latency_ms) else self.latency_ms
        if latency:
            time.sleep(latency / 1000.0)
        return text
