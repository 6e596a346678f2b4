"""Shared plumbing for calling external backends under a time budget."""

from __future__ import annotations

import threading

from .errors import BackendFailure, BackendTimeout, SkipSignal


def call_with_budget(fn, timeout_ms: float, what: str = "backend call"):
    """Run fn() on a worker thread; raise typed failures, never block past budget.

    The worker is a daemon thread: if the call overruns its budget the
    caller gets BackendTimeout immediately and the stray thread is left to
    finish (or not) on its own.
    """
    result: dict = {}
    done = threading.Event()

    def runner():
        try:
            result["value"] = fn()
        except BaseException as exc:  # noqa: BLE001 - forwarded to caller as typed failure
            result["error"] = exc
        finally:
            done.set()

    thread = threading.Thread(target=runner, daemon=True, name=f"budget-{what}")
    thread.start()
    if not done.wait(timeout=timeout_ms / 1000.0):
        raise BackendTimeout(f"{what} exceeded its {timeout_ms:.0f} ms budget")
    if "error" in result:
        err = result["error"]
        if isinstance(err, SkipSignal):
            raise err
        raise BackendFailure(f"{what} failed: {err!r}") from err
    return result["value"]
