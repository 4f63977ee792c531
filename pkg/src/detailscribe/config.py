"""Run configuration: an INI-style manifest plus flag overrides.

Sections: [backend] (mock or external generation), [models] (chat endpoints
and client mode), [pipeline] (method and sampling knobs), [metrics] (scorer
endpoints). Any field a CLI flag also covers, the flag wins.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

from detailscribe import DetailScribeError


class ConfigError(DetailScribeError):
    pass


@dataclass
class RunConfig:
    # [backend]
    backend: str = "mock"  # mock | external
    external_url: str = ""
    channels: int = 3
    height: int = 64
    width: int = 64
    # [models]
    client: str = "canned"  # canned | env | script
    client_script: str = ""
    model_cache: str = ""
    # [pipeline]
    schedule: str = "linear"
    steps: int = 0  # 0 resolves per backend: 50 mock, 28 external
    method: str = "detailscribe"
    t_prime: int | None = None
    rounds: int = 1
    k_noises: int = 2
    seed: int = 0
    use_decomposition: bool = True
    output_dir: str = "runs"
    jobs: int = 1
    # [metrics]
    clipscore_url: str = ""
    imagereward_url: str = ""
    blip_vqa_url: str = ""

    def resolved_steps(self) -> int:
        if self.steps > 0:
            return self.steps
        return 28 if self.backend == "external" else 50

    def validate(self) -> None:
        if self.backend not in ("mock", "external"):
            raise ConfigError(f"backend must be mock or external, got {self.backend!r}")
        if self.backend == "external" and not self.external_url:
            raise ConfigError("external backend needs external_url")
        if self.client not in ("canned", "env", "script"):
            raise ConfigError(f"client must be canned, env or script, got {self.client!r}")
        if self.client == "script" and not self.client_script:
            raise ConfigError("script client needs client_script")
        if self.schedule not in ("linear", "cosine"):
            raise ConfigError(f"schedule must be linear or cosine, got {self.schedule!r}")
        T = self.resolved_steps()
        if T < 1:
            raise ConfigError("steps must be >= 1")
        if self.t_prime is not None and not (1 <= self.t_prime <= T):
            raise ConfigError(f"t_prime={self.t_prime} outside [1, steps={T}]")
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if self.k_noises < 1:
            raise ConfigError("k_noises must be >= 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        for dim in (self.channels, self.height, self.width):
            if dim < 1:
                raise ConfigError("image dimensions must be positive")


_SECTIONS = {
    "backend": ("backend", "external_url", "channels", "height", "width"),
    "models": ("client", "client_script", "model_cache"),
    "pipeline": (
        "schedule",
        "steps",
        "method",
        "t_prime",
        "rounds",
        "k_noises",
        "seed",
        "use_decomposition",
        "output_dir",
        "jobs",
    ),
    "metrics": ("clipscore_url", "imagereward_url", "blip_vqa_url"),
}

# [backend] uses the key "kind" for the backend field
_KEY_ALIASES = {("backend", "kind"): "backend"}


def load_config(path: str | Path) -> RunConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file {path} not found")
    cfg = RunConfig()
    types = {f.name: f.type for f in fields(RunConfig)}
    for section, keys in _SECTIONS.items():
        if not parser.has_section(section):
            continue
        for key in parser.options(section):
            name = _KEY_ALIASES.get((section, key), key)
            if name not in keys:
                raise ConfigError(f"unknown key [{section}] {key}")
            raw = parser.get(section, key)
            setattr(cfg, name, _coerce(name, raw, types[name]))
    return cfg


def _coerce(name: str, raw: str, type_name: str):
    raw = raw.strip()
    if type_name == "int":
        return int(raw)
    if type_name == "bool":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    if type_name == "int | None":
        return None if raw == "" else int(raw)
    return raw
