"""Throttle-and-playback policy.

Each audio category has its own minimum spacing between played clips, and
the two spoken categories (hazard, description) additionally share one
timer so speech never stacks up. Sound effects play only when already
cached; a miss synthesizes into the cache for next time. Timers advance
only on actual playback — suppressed or cache-only events must not be able
to silence a channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .errors import MonotonicityError
from .interpreter import AudioCategory

# Spoken categories governed by the shared speech timer.
TTS_CATEGORIES = frozenset({AudioCategory.HAZARD, AudioCategory.DESCRIPTION})


class EmissionDecision(str, Enum):
    PLAY_CACHED = "play_cached"
    SYNTHESIZE_AND_PLAY = "synthesize_and_play"
    SYNTHESIZE_AND_CACHE_ONLY = "synthesize_and_cache_only"
    SKIP_THROTTLED = "skip_throttled"
    SKIP_NONE = "skip_none"


PLAY_DECISIONS = frozenset({EmissionDecision.PLAY_CACHED, EmissionDecision.SYNTHESIZE_AND_PLAY})


@dataclass(frozen=True)
class PolicyConfig:
    hazard_throttle_ms: float = 5000.0
    sfx_throttle_ms: float = 3000.0
    description_throttle_ms: float = 15000.0
    shared_tts_ms: float = 4000.0

    def __post_init__(self):
        for name in (
            "hazard_throttle_ms",
            "sfx_throttle_ms",
            "description_throttle_ms",
            "shared_tts_ms",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def interval_for(self, category: AudioCategory) -> float:
        return {
            AudioCategory.HAZARD: self.hazard_throttle_ms,
            AudioCategory.SFX: self.sfx_throttle_ms,
            AudioCategory.DESCRIPTION: self.description_throttle_ms,
        }[category]


@dataclass
class ThrottleState:
    """Last playback time per category plus the shared speech timer."""

    last_play: dict[AudioCategory, float] = field(default_factory=dict)
    last_tts_play: float | None = None


def should_throttle(
    state: ThrottleState, category: AudioCategory, now_ms: float, cfg: PolicyConfig
) -> bool:
    """True when a play now would violate the category or shared spacing.

    A timestamp that was never recorded cannot throttle. Spacing exactly
    equal to the interval is allowed (strict `<` comparison).
    """
    if category is AudioCategory.NONE:
        raise ValueError("the none category never reaches the throttle")
    last = state.last_play.get(category)
    if last is not None and now_ms - last < cfg.interval_for(category):
        return True
    if category in TTS_CATEGORIES and state.last_tts_play is not None:
        if now_ms - state.last_tts_play < cfg.shared_tts_ms:
            return True
    return False


def decide(category: AudioCategory, is_cached: bool, throttled: bool) -> EmissionDecision:
    """Pure playback decision; see the category rows for the rationale.

    none never produces audio; throttled events are skipped outright (no
    synthesis); sound effects play only from cache and otherwise synthesize
    into it; spoken categories always play, from cache when possible.
    """
    if category is AudioCategory.NONE:
        return EmissionDecision.SKIP_NONE
    if throttled:
        return EmissionDecision.SKIP_THROTTLED
    if category is AudioCategory.SFX:
        return (
            EmissionDecision.PLAY_CACHED
            if is_cached
            else EmissionDecision.SYNTHESIZE_AND_CACHE_ONLY
        )
    return (
        EmissionDecision.PLAY_CACHED if is_cached else EmissionDecision.SYNTHESIZE_AND_PLAY
    )


def record_playback(state: ThrottleState, category: AudioCategory, now_ms: float) -> ThrottleState:
    """Advance timers after an actual playback; rejects time going backwards."""
    if category is AudioCategory.NONE:
        raise ValueError("the none category is never played")
    last = state.last_play.get(category)
    if last is not None and now_ms < last:
        raise MonotonicityError(
            f"{category.value} playback at {now_ms} precedes recorded {last}"
        )
    if category in TTS_CATEGORIES and state.last_tts_play is not None:
        if now_ms < state.last_tts_play:
            raise MonotonicityError(
                f"tts playback at {now_ms} precedes recorded {state.last_tts_play}"
            )
    state.last_play[category] = now_ms
    if category in TTS_CATEGORIES:
        state.last_tts_play = now_ms
    return state
