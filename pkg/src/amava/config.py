"""Central server configuration.

One flat `key = value` file (hash comments, blank lines ignored) covers
every tunable: network, batching, throttles, flow estimator, backend
selection, cache, and logging. Unknown keys and malformed values abort
startup with the offending key named, before anything binds a port.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .frames import DEFAULT_MAX_SIDE, FlowParams
from .policy import PolicyConfig


@dataclass
class ServerConfig:
    listen_host: str = "127.0.0.1"
    listen_port: int = 8777
    capture_hz: float = 2.0
    batch_size: int = 2
    max_in_flight: int = 2
    downscale_max_side: int = DEFAULT_MAX_SIDE

    model_path: str = ""

    hazard_throttle_ms: float = 5000.0
    sfx_throttle_ms: float = 3000.0
    description_throttle_ms: float = 15000.0
    shared_tts_ms: float = 4000.0

    flow_pyramid_levels: int = 3
    flow_pyramid_scale: float = 0.5
    flow_window_size: int = 15
    flow_iterations: int = 3
    flow_poly_n: int = 5
    flow_poly_sigma: float = 1.1

    interpreter_backend: str = "mock"
    interpreter_script: str = ""
    interpreter_timeout_ms: float = 2500.0
    synth_backend: str = "mock"
    synth_timeout_ms: float = 2500.0

    cache_dir: str = "amava-cache"
    cache_max_entries: int = 0  # 0 means unbounded
    log_path: str = "amava-events.ndjson"

    def policy(self) -> PolicyConfig:
        return PolicyConfig(
            hazard_throttle_ms=self.hazard_throttle_ms,
            sfx_throttle_ms=self.sfx_throttle_ms,
            description_throttle_ms=self.description_throttle_ms,
            shared_tts_ms=self.shared_tts_ms,
        )

    def flow_params(self) -> FlowParams:
        return FlowParams(
            pyramid_levels=self.flow_pyramid_levels,
            pyramid_scale=self.flow_pyramid_scale,
            window_size=self.flow_window_size,
            iterations=self.flow_iterations,
            poly_n=self.flow_poly_n,
            poly_sigma=self.flow_poly_sigma,
        )

    def validate(self) -> "ServerConfig":
        if not 1 <= self.listen_port <= 65535:
            raise ConfigError(f"listen_port: {self.listen_port} is not a valid port")
        if self.capture_hz <= 0:
            raise ConfigError(f"capture_hz: must be positive, got {self.capture_hz}")
        if self.batch_size != 2:
            raise ConfigError(
                f"batch_size: only 2-frame batches are supported, got {self.batch_size}"
            )
        if self.max_in_flight < 1:
            raise ConfigError(f"max_in_flight: must be >= 1, got {self.max_in_flight}")
        if self.downscale_max_side < 16:
            raise ConfigError(
                f"downscale_max_side: must be >= 16, got {self.downscale_max_side}"
            )
        if self.interpreter_backend not in ("mock", "live"):
            raise ConfigError(
                f"interpreter_backend: expected mock or live, got {self.interpreter_backend!r}"
            )
        if self.synth_backend not in ("mock", "live"):
            raise ConfigError(
                f"synth_backend: expected mock or live, got {self.synth_backend!r}"
            )
        if self.cache_max_entries < 0:
            raise ConfigError("cache_max_entries: must be >= 0")
        if not self.model_path:
            raise ConfigError("model_path: required (train a model first)")
        if not Path(self.model_path).is_file():
            raise ConfigError(f"model_path: no such file {self.model_path!r}")
        if self.interpreter_backend == "mock" and self.interpreter_script:
            if not Path(self.interpreter_script).is_file():
                raise ConfigError(
                    f"interpreter_script: no such file {self.interpreter_script!r}"
                )
        try:
            self.policy()
            self.flow_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self


_FIELD_TYPES = {f.name: f.type for f in fields(ServerConfig)}


def _parse_value(key: str, raw: str, target_type: str):
    try:
        if target_type.startswith("int"):
            return int(raw)
        if target_type.startswith("float"):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {target_type}") from exc


def parse_config_text(text: str) -> ServerConfig:
    values = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {line_no}: expected `key = value`, got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{key}: unknown configuration key")
        values[key] = _parse_value(key, raw, str(_FIELD_TYPES[key]))
    return ServerConfig(**values)


def load_config(path) -> ServerConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text).validate()
