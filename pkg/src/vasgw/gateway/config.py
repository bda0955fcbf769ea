"""Gateway configuration file (JSON).

Relative paths are resolved against the directory holding the file.  Every
problem is reported as :class:`~vasgw.errors.ConfigError`, which the CLI
maps to exit status 2.
"""

from __future__ import annotations

import json
import re
from collections.abc import Mapping
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

from vasgw.errors import ConfigError, VasError
from vasgw.gateway.negotiation import DEFAULT_MAX_ROUNDS
from vasgw.gateway.node import ProfileDefinition
from vasgw.planner import DEFAULT_DEPTH_LIMIT, CostWeights
from vasgw.vo import Role

_TCP = re.compile(r"^tcp://([^:/]+):(\d{1,5})$")
_SIM = re.compile(r"^sim://[A-Za-z0-9._-]+$")
KNOWN_KEYS = {
    "gateway-id",
    "role",
    "listen",
    "registry",
    "depth-limit",
    "weights",
    "max-rounds",
    "seed",
    "catalog",
    "profiles",
}


@dataclass(frozen=True)
class GatewayConfig:
    gateway_id: str
    role: Role = Role.INFRASTRUCTURE_PROVIDER
    listen: str = "sim://local"
    journal: Path | None = None
    snapshot: Path | None = None
    depth_limit: int = DEFAULT_DEPTH_LIMIT
    weights: CostWeights = field(default_factory=CostWeights)
    max_rounds: int = DEFAULT_MAX_ROUNDS
    seed: int = 1
    catalog: str | None = None
    profiles: tuple[ProfileDefinition, ...] = ()

    @property
    def tcp_address(self) -> tuple[str, int] | None:
        m = _TCP.match(self.listen)
        return (m.group(1), int(m.group(2))) if m else None


def parse_config(doc: Any, base: Path = Path(".")) -> GatewayConfig:
    if not isinstance(doc, Mapping):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(doc) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    gid = doc.get("gateway-id")
    if not isinstance(gid, str) or not gid:
        raise ConfigError("gateway-id must be a non-empty string")
    try:
        role = Role(doc.get("role", Role.INFRASTRUCTURE_PROVIDER.value))
    except ValueError:
        raise ConfigError(f"unknown role {doc.get('role')!r}") from None
    listen = doc.get("listen", f"sim://{gid}")
    if not isinstance(listen, str) or not (_SIM.match(listen) or _TCP.match(listen)):
        raise ConfigError(f"listen must be sim://NAME or tcp://HOST:PORT, got {listen!r}")
    m = _TCP.match(listen)
    if m and not 0 <= int(m.group(2)) <= 65535:
        raise ConfigError(f"port out of range in {listen!r}")
    registry = doc.get("registry", {})
    if not isinstance(registry, Mapping):
        raise ConfigError("registry must be an object with journal/snapshot paths")
    journal = _path(registry.get("journal"), base, "registry.journal", must_exist=False)
    snapshot = _path(registry.get("snapshot"), base, "registry.snapshot", must_exist=True)
    depth = _positive_int(doc.get("depth-limit", DEFAULT_DEPTH_LIMIT), "depth-limit")
    rounds = _positive_int(doc.get("max-rounds", DEFAULT_MAX_ROUNDS), "max-rounds")
    seed = doc.get("seed", 1)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    weights = _weights(doc.get("weights", {}))
    catalog = doc.get("catalog")
    if catalog not in (None, "music-store"):
        raise ConfigError(f"unknown built-in catalog {catalog!r}")
    raw_profiles = doc.get("profiles", [])
    if not isinstance(raw_profiles, list):
        raise ConfigError("profiles must be a list")
    try:
        profiles = tuple(ProfileDefinition.from_doc(p) for p in raw_profiles)
    except (VasError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad profile definition: {exc}") from None
    return GatewayConfig(gid, role, listen, journal, snapshot, depth, weights, rounds, seed, catalog, profiles)


def load_config(path: str | Path) -> GatewayConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"configuration file {str(path)!r} not found") from None
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read configuration {str(path)!r}: {exc}") from None
    return parse_config(doc, path.parent)


def _path(value: Any, base: Path, name: str, must_exist: bool) -> Path | None:
    if value is None:
        return None
    if not isinstance(value, str) or not value:
        raise ConfigError(f"{name} must be a path string")
    p = Path(value)
    if not p.is_absolute():
        p = base / p
    if must_exist and not p.exists():
        raise ConfigError(f"{name} {str(p)!r} does not exist")
    if not p.parent.is_dir():
        raise ConfigError(f"directory for {name} {str(p.parent)!r} does not exist")
    return p


def _positive_int(value: Any, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"{name} must be a positive integer")
    return value


def _weights(doc: Any) -> CostWeights:
    if not isinstance(doc, Mapping):
        raise ConfigError("weights must be an object")
    names = {"latency-divisor": "latency_divisor", "failure": "failure", "history": "history"}
    kwargs: dict[str, Any] = {}
    for key, value in doc.items():
        if key == "history-saturation":
            kwargs["history_saturation"] = _positive_int(value, key)
            continue
        if key not in names:
            raise ConfigError(f"unknown weight {key!r}")
        try:
            frac = Fraction(str(value))
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"weight {key!r} is not a number") from None
        if frac < 0:
            raise ConfigError(f"weight {key!r} must be non-negative")
        kwargs[names[key]] = frac
    try:
        return CostWeights(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
