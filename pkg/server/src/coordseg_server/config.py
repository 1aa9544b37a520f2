"""Server configuration from defaults, environment, file, and overrides."""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass
from pathlib import Path

ENV_PREFIX = "COORDSEG_SERVER_"


@dataclass(frozen=True)
class ServerConfig:
    """Everything the server needs to come up.

    ``detector_model`` / ``segmenter_model`` are model identifiers or
    checkpoint paths; the value ``stub`` (or ``stub:<canned reply>`` for the
    detector) selects the no-dependency desk-test adapters.
    """

    detector_model: str = "stub"
    segmenter_model: str = "stub"
    host: str = "127.0.0.1"
    port: int = 8008
    device: str = "auto"
    max_side: int = 1536
    max_new_tokens: int = 128

    def __post_init__(self):
        if not 0 < self.port < 65536:
            raise ValueError(f"port must be in 1..65535, got {self.port}")
        if self.max_side < 64:
            raise ValueError(f"max_side must be >= 64, got {self.max_side}")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be positive")


_FIELDS = {f.name: f.type for f in dataclasses.fields(ServerConfig)}
_INT_FIELDS = {name for name, tp in _FIELDS.items() if tp in (int, "int")}


def _coerce(name: str, raw: str):
    if name in _INT_FIELDS:
        try:
            return int(raw)
        except ValueError:
            raise ValueError(f"{name} must be an integer, got {raw!r}") from None
    return raw


def load_config(
    path: str | Path | None = None, overrides: dict | None = None
) -> ServerConfig:
    """Resolve settings as overrides > file > environment > defaults.

    The file is INI-style with a single ``[server]`` section whose keys are
    the field names above; environment variables use the same names
    uppercased with a ``COORDSEG_SERVER_`` prefix. ``overrides`` entries
    that are ``None`` are ignored, so argparse defaults pass through.
    """
    values: dict = {}
    for name in _FIELDS:
        raw = os.environ.get(ENV_PREFIX + name.upper())
        if raw is not None:
            values[name] = _coerce(name, raw)

    if path is not None:
        parser = configparser.ConfigParser()
        loaded = parser.read(path)
        if not loaded:
            raise ValueError(f"cannot read config file: {path}")
        if not parser.has_section("server"):
            raise ValueError(f"config file {path} has no [server] section")
        for key, raw in parser.items("server"):
            if key not in _FIELDS:
                raise ValueError(f"unknown option {key!r} in {path}")
            values[key] = _coerce(key, raw)

    for key, value in (overrides or {}).items():
        if key not in _FIELDS:
            raise ValueError(f"unknown config override {key!r}")
        if value is not None:
            values[key] = value

    return ServerConfig(**values)
