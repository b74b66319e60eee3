"""Session configuration: key-value file, everything overridable."""

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from scopenav.igtl import IGTL_PORT


class ConfigError(Exception):
    pass


@dataclass
class SessionConfig:
    mesh_full: str | None = None
    mesh_collecting_system: str | None = None
    volume: str | None = None
    ct_fiducials: str | None = None
    registration_matrix: str | None = None
    igtl_port: int = IGTL_PORT
    viewer_port: int = 8080
    host: str = "127.0.0.1"
    decimation_mm: float = 0.5
    trail_capacity: int = 100_000
    threshold: float = 3.0
    metrics_interval_s: float = 1.0
    flush_batch: int = 100
    flush_interval_s: float = 0.5
    window: float = 400.0
    level: float = 40.0
    session_dir: str = "./sessions"
    ui_dir: str | None = None
    capture_window_ms: float = 1000.0

    def __post_init__(self):
        if self.decimation_mm < 0:
            raise ConfigError("decimation_mm must be >= 0")
        if self.trail_capacity < 1:
            raise ConfigError("trail_capacity must be positive")
        if not 1 <= self.flush_batch <= 100:
            raise ConfigError("flush_batch must be within [1, 100]")
        if self.metrics_interval_s <= 0:
            raise ConfigError("metrics_interval_s must be positive")

    def mesh_paths(self) -> dict[str, str]:
        paths = {}
        if self.mesh_full:
            paths["full"] = self.mesh_full
        if self.mesh_collecting_system:
            paths["collecting_system"] = self.mesh_collecting_system
        return paths


def load_session_config(path: str | Path, overrides: dict | None = None) -> SessionConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected key: value lines")
    known = set(SessionConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    base = Path(path).parent
    for key in ("mesh_full", "mesh_collecting_system", "volume", "ct_fiducials",
                "registration_matrix", "session_dir", "ui_dir"):
        if raw.get(key):
            raw[key] = str((base / str(raw[key])).resolve())
    if overrides:
        raw.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return SessionConfig(**raw)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
