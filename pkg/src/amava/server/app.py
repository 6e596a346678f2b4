"""FastAPI application: session lifecycle and frame/audio routing."""

from __future__ import annotations

import asyncio
import base64
import binascii
import logging
import uuid
from pathlib import Path

import cv2
import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from pydantic import BaseModel

from ..cache import AudioStore
from ..classifier import MovementClassifier
from ..clock import SystemClock
from ..config import ServerConfig
from ..errors import SessionClosedError
from ..frames import to_grayscale
from ..interpreter import MockInterpreter
from ..orchestrator import Session
from ..synth import MockSynth
from .schemas import (
    AudioMessage,
    ByeMessage,
    CaptionMessage,
    ErrorMessage,
    FrameMessage,
    HelloAckMessage,
    HelloMessage,
    ProtocolViolation,
    parse_client_message,
)

logger = logging.getLogger(__name__)

# Fallback script so a mock deployment talks even without a script file.
DEFAULT_MOCK_SCRIPT = [
    ("low", "a quiet room with a desk, a chair, and soft light from a window"),
    ("high", "description: people moving through a wide corridor"),
    ("high", "hazard: obstacle directly ahead"),
    ("high", "sfx: footsteps passing nearby"),
    ("*", "none"),
]


class HealthResponse(BaseModel):
    status: str
    sessions: int


class ConfigView(BaseModel):
    capture_hz: float
    batch_size: int
    max_in_flight: int
    interpreter_backend: str
    synth_backend: str
    cache_dir: str


def _build_interpreter(config: ServerConfig):
    if config.interpreter_backend == "live":
        from ..interpreter_live import LiveInterpreter

        return LiveInterpreter(timeout_ms=config.interpreter_timeout_ms)
    if config.interpreter_script:
        return MockInterpreter.from_json(
            config.interpreter_script, timeout_ms=config.interpreter_timeout_ms
        )
    return MockInterpreter(DEFAULT_MOCK_SCRIPT, timeout_ms=config.interpreter_timeout_ms)


def _build_synth(config: ServerConfig):
    if config.synth_backend == "live":
        from ..synth import LiveSynth

        return LiveSynth(timeout_ms=config.synth_timeout_ms)
    return MockSynth(timeout_ms=config.synth_timeout_ms)


def _session_log_path(config: ServerConfig, session_id: str) -> Path:
    base = Path(config.log_path)
    return base.with_name(f"{base.stem}.{session_id}{base.suffix or '.ndjson'}")


def create_app(config: ServerConfig) -> FastAPI:
    """Wire the pipeline components into the service."""
    app = FastAPI(title="amava", version="0.1.0")
    classifier = MovementClassifier.from_file(config.model_path)
    cache = AudioStore(config.cache_dir, max_entries=config.cache_max_entries or None)
    active_sessions: dict[str, Session] = {}

    app.state.config = config
    app.state.active_sessions = active_sessions

    @app.get("/healthz", response_model=HealthResponse)
    def healthz() -> HealthResponse:
        return HealthResponse(status="ok", sessions=len(active_sessions))

    @app.get("/config", response_model=ConfigView)
    def config_view() -> ConfigView:
        return ConfigView(
            capture_hz=config.capture_hz,
            batch_size=config.batch_size,
            max_in_flight=config.max_in_flight,
            interpreter_backend=config.interpreter_backend,
            synth_backend=config.synth_backend,
            cache_dir=config.cache_dir,
        )

    @app.websocket("/ws")
    async def gateway(websocket: WebSocket):
        await websocket.accept()
        try:
            first = parse_client_message(await websocket.receive_text())
        except ProtocolViolation as exc:
            await _send_error(websocket, exc.code, str(exc))
            await websocket.close(code=1002, reason=exc.code)
            return
        except WebSocketDisconnect:
            return
        if not isinstance(first, HelloMessage):
            await _send_error(websocket, "protocol", "expected hello before anything else")
            await websocket.close(code=1002, reason="missing hello")
            return

        session_id = uuid.uuid4().hex[:12]
        loop = asyncio.get_running_loop()
        outbox: asyncio.Queue = asyncio.Queue()

        def on_audio(batch_index, category, clip, content):
            audio = AudioMessage(
                session_id=session_id,
                batch_index=batch_index,
                category=category.value,
                mime=clip.mime,
                audio_b64=base64.b64encode(clip.data).decode("ascii"),
            )
            caption = CaptionMessage(
                session_id=session_id, batch_index=batch_index, text=content
            )
            loop.call_soon_threadsafe(outbox.put_nowait, audio)
            loop.call_soon_threadsafe(outbox.put_nowait, caption)

        session = Session(
            session_id=session_id,
            classifier=classifier,
            interpreter=_build_interpreter(config),
            synth=_build_synth(config),
            cache=cache,
            policy=config.policy(),
            flow_params=config.flow_params(),
            clock=SystemClock(),
            on_audio=on_audio,
            log_path=_session_log_path(config, session_id),
            batch_size=config.batch_size,
            max_in_flight=config.max_in_flight,
            downscale_max_side=config.downscale_max_side,
        )
        session.start()
        active_sessions[session_id] = session
        logger.info("session %s connected (client %s)", session_id, first.client_version)
        await websocket.send_text(
            HelloAckMessage(session_id=session_id, capture_hz=config.capture_hz).model_dump_json()
        )

        sender = asyncio.create_task(_drain_outbox(websocket, outbox))
        last_seq = -1
        try:
            while True:
                raw = await websocket.receive_text()
                try:
                    message = parse_client_message(raw)
                except ProtocolViolation as exc:
                    await _send_error(websocket, exc.code, str(exc))
                    continue
                if isinstance(message, ByeMessage):
                    break
                if isinstance(message, HelloMessage):
                    await _send_error(websocket, "protocol", "session already established")
                    continue
                last_seq = await _handle_frame(websocket, session, message, last_seq)
        except WebSocketDisconnect:
            logger.info("session %s disconnected", session_id)
        finally:
            session.close()
            sender.cancel()
            active_sessions.pop(session_id, None)

    return app


async def _drain_outbox(websocket: WebSocket, outbox: asyncio.Queue) -> None:
    while True:
        message = await outbox.get()
        await websocket.send_text(message.model_dump_json())


async def _send_error(websocket: WebSocket, code: str, message: str) -> None:
    try:
        await websocket.send_text(ErrorMessage(code=code, message=message).model_dump_json())
    except Exception:  # peer already gone
        pass


async def _handle_frame(
    websocket: WebSocket, session: Session, message: FrameMessage, last_seq: int
) -> int:
    if last_seq >= 0 and message.seq != last_seq + 1:
        logger.info(
            "session %s: sequence gap (%d after %d)", session.session_id, message.seq, last_seq
        )
    try:
        jpeg = base64.b64decode(message.jpeg_b64, validate=True)
        buffer = np.frombuffer(jpeg, dtype=np.uint8)
        bgr = cv2.imdecode(buffer, cv2.IMREAD_COLOR)
        if bgr is None:
            raise ValueError("not a decodable image")
        gray = to_grayscale(bgr[:, :, ::-1], timestamp_ms=message.captured_at_ms)
    except (ValueError, binascii.Error) as exc:
        await _send_error(websocket, "bad_frame", f"frame {message.seq} skipped: {exc}")
        return message.seq
    try:
        session.submit_frame(gray, session.clock.now_ms(), jpeg=jpeg)
    except SessionClosedError:
        pass
    return message.seq
