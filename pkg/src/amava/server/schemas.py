"""Wire protocol: JSON text messages over one WebSocket per session.

Clients open with `hello` and receive `hello_ack` carrying the session id
and negotiated capture rate. Frames travel client-to-server as base64
JPEG; audio and its caption travel back as separate messages in decision
order. `error` never tears down other sessions.
"""

from __future__ import annotations

import json
from typing import Literal, Union

from pydantic import BaseModel, Field, ValidationError


class HelloMessage(BaseModel):
    kind: Literal["hello"]
    client_version: str = "unknown"


class HelloAckMessage(BaseModel):
    kind: Literal["hello_ack"] = "hello_ack"
    session_id: str
    capture_hz: float


class FrameMessage(BaseModel):
    kind: Literal["frame"]
    session_id: str
    seq: int = Field(ge=0)
    captured_at_ms: float
    jpeg_b64: str


class AudioMessage(BaseModel):
    kind: Literal["audio"] = "audio"
    session_id: str
    batch_index: int
    category: str
    mime: str
    audio_b64: str


class CaptionMessage(BaseModel):
    kind: Literal["caption"] = "caption"
    session_id: str
    batch_index: int
    text: str


class StatusMessage(BaseModel):
    kind: Literal["status"] = "status"
    session_id: str
    detail: str


class ErrorMessage(BaseModel):
    kind: Literal["error"] = "error"
    code: str
    message: str


class ByeMessage(BaseModel):
    kind: Literal["bye"]
    session_id: str = ""


ClientMessage = Union[HelloMessage, FrameMessage, ByeMessage]

_CLIENT_KINDS = {
    "hello": HelloMessage,
    "frame": FrameMessage,
    "bye": ByeMessage,
}


class ProtocolViolation(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def parse_client_message(raw: str) -> ClientMessage:
    """Decode one inbound text frame or raise a ProtocolViolation."""
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ProtocolViolation("bad_json", f"message is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ProtocolViolation("bad_json", "message must be a JSON object")
    kind = payload.get("kind")
    model = _CLIENT_KINDS.get(kind)
    if model is None:
        raise ProtocolViolation("unknown_kind", f"unsupported message kind {kind!r}")
    try:
        return model.model_validate(payload)
    except ValidationError as exc:
        raise ProtocolViolation("bad_message", str(exc)) from exc
