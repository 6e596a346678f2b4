"""Content-addressed audio store.

Clips are keyed by the SHA-256 of their normalized prompt text and written
as `<hex>.<ext>` next to a `<hex>.meta.json` sidecar, so a store reopened
on the same directory serves identical bytes. Writes go to a temp file and
are renamed into place; readers never observe partial files. Hit counts
are tracked in memory only, which keeps reads from mutating the directory.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import CacheIOError
from .interpreter import AudioCategory
from .synth import AudioClip
from .text import key_of, normalize_prompt

__all__ = ["AudioStore", "CacheEntry", "key_of", "normalize_prompt"]

_EXT_BY_MIME = {"audio/wav": "wav", "audio/x-wav": "wav", "audio/mpeg": "mp3"}
_MIME_BY_EXT = {"wav": "audio/wav", "mp3": "audio/mpeg"}


@dataclass
class CacheEntry:
    key: str
    path: Path
    mime: str
    text: str
    category: str | None
    created_at: float
    duration_ms: int = 0
    hit_count: int = 0
    last_used: float = field(default=0.0)


class AudioStore:
    """Directory-backed clip cache with optional least-recently-hit eviction."""

    def __init__(self, directory, max_entries: int | None = None):
        self.directory = Path(directory)
        if max_entries is not None and max_entries < 1:
            raise ValueError("max_entries must be positive when set")
        self.max_entries = max_entries
        self._lock = threading.RLock()
        self._entries: dict[str, CacheEntry] = {}
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise CacheIOError(f"cannot create cache directory {directory}: {exc}") from exc
        self._load_existing()

    def _load_existing(self) -> None:
        for meta_path in sorted(self.directory.glob("*.meta.json")):
            key = meta_path.name[: -len(".meta.json")]
            try:
                meta = json.loads(meta_path.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError):
                continue
            ext = _EXT_BY_MIME.get(meta.get("mime", ""), "bin")
            clip_path = self.directory / f"{key}.{ext}"
            if not clip_path.exists():
                continue
            self._entries[key] = CacheEntry(
                key=key,
                path=clip_path,
                mime=meta.get("mime", "application/octet-stream"),
                text=meta.get("text", ""),
                category=meta.get("category"),
                created_at=float(meta.get("created_at", 0.0)),
                duration_ms=int(meta.get("duration_ms", 0)),
                last_used=float(meta.get("created_at", 0.0)),
            )

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def contains(self, text: str) -> bool:
        """Hit test that does not touch hit counters."""
        with self._lock:
            return key_of(text) in self._entries

    def get(self, text: str) -> AudioClip | None:
        """Stored clip for this prompt, or None; hits bump the counter."""
        key = key_of(text)
        with self._lock:
            entry = self._entries.get(key)
            if entry is None:
                return None
            try:
                data = entry.path.read_bytes()
            except OSError as exc:
                raise CacheIOError(f"cannot read cached clip {entry.path}: {exc}") from exc
            entry.hit_count += 1
            entry.last_used = time.monotonic()
            try:
                category = AudioCategory(entry.category)
            except ValueError:
                category = AudioCategory.NONE
            return AudioClip(
                data, entry.mime, category=category, duration_ms=entry.duration_ms
            )

    def put(self, text: str, clip: AudioClip) -> str:
        """Persist a clip under the prompt's key; idempotent per key."""
        if not clip.data:
            raise ValueError("refusing to cache an empty clip")
        key = key_of(text)
        ext = _EXT_BY_MIME.get(clip.mime, "bin")
        clip_path = self.directory / f"{key}.{ext}"
        meta_path = self.directory / f"{key}.meta.json"
        meta = {
            "text": normalize_prompt(text),
            "category": clip.category.value if clip.category else None,
            "mime": clip.mime,
            "created_at": time.time(),
            "duration_ms": clip.duration_ms,
        }
        with self._lock:
            try:
                self._atomic_write(clip_path, clip.data)
                self._atomic_write(
                    meta_path, json.dumps(meta, sort_keys=True).encode("utf-8")
                )
            except OSError as exc:
                raise CacheIOError(f"cannot write cache entry {key}: {exc}") from exc
            self._entries[key] = CacheEntry(
                key=key,
                path=clip_path,
                mime=clip.mime,
                text=meta["text"],
                category=meta["category"],
                created_at=meta["created_at"],
                duration_ms=clip.duration_ms,
                last_used=time.monotonic(),
            )
            self._evict_if_needed()
        return key

    def hit_count(self, text: str) -> int:
        with self._lock:
            entry = self._entries.get(key_of(text))
            return entry.hit_count if entry else 0

    def _atomic_write(self, path: Path, data: bytes) -> None:
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)

    def _evict_if_needed(self) -> None:
        if self.max_entries is None:
            return
        while len(self._entries) > self.max_entries:
            victim = min(
                self._entries.values(), key=lambda e: (e.last_used, e.created_at)
            )
            for path in (victim.path, self.directory / f"{victim.key}.meta.json"):
                try:
                    path.unlink()
                except OSError:
                    pass
            del self._entries[victim.key]
