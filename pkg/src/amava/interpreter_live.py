"""Thin HTTP adapter for a hosted vision-language service.

Posts base64 frames plus the prompt to AMAVA_INTERPRETER_URL with a bearer
token from AMAVA_INTERPRETER_API_KEY and returns the service's text reply.
Deliberately minimal and excluded from the test suite.
"""

from __future__ import annotations

import base64
import os

import httpx

from .errors import BackendFailure
from .interpreter import DEFAULT_INTERPRETER_TIMEOUT_MS, InterpreterBackend


class LiveInterpreter(InterpreterBackend):
    def __init__(self, timeout_ms: float = DEFAULT_INTERPRETER_TIMEOUT_MS):
        self.timeout_ms = timeout_ms
        self.url = os.environ.get("AMAVA_INTERPRETER_URL", "")
        self.api_key = os.environ.get("AMAVA_INTERPRETER_API_KEY", "")
        if not self.url or not self.api_key:
            raise BackendFailure(
                "live interpretation needs AMAVA_INTERPRETER_URL and AMAVA_INTERPRETER_API_KEY"
            )

    def generate(self, frames: list[bytes], prompt: str) -> str:
        response = httpx.post(
            self.url,
            json={
                "prompt": prompt,
                "frames_b64": [base64.b64encode(f).decode("ascii") for f in frames],
            },
            headers={"Authorization": f"Bearer {self.api_key}"},
            timeout=self.timeout_ms / 1000.0,
        )
        response.raise_for_status()
        return response.json().get("text", "")
