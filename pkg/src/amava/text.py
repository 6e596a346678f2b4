"""Prompt normalization and content-addressed keys.

Audio is cached under the text that was actually synthesized, so two
prompts that differ only in case, punctuation, or spacing share one clip.
"""

from __future__ import annotations

import hashlib
import re
import unicodedata

# ASCII symbols stripped alongside every Unicode punctuation category.
_ASCII_EXTRA = set("!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~")

_WHITESPACE_RUN = re.compile(r"\s+")


def _is_punctuation(ch: str) -> bool:
    return ch in _ASCII_EXTRA or unicodedata.category(ch).startswith("P")


def normalize_prompt(text: str) -> str:
    """Lowercase, drop punctuation, collapse whitespace runs, trim ends."""
    lowered = (text or "").lower()
    stripped = "".join(ch for ch in lowered if not _is_punctuation(ch))
    return _WHITESPACE_RUN.sub(" ", stripped).strip()


def key_of(text: str) -> str:
    """64-char lowercase hex SHA-256 of the UTF-8 normalized prompt."""
    return hashlib.sha256(normalize_prompt(text).encode("utf-8")).hexdigest()
