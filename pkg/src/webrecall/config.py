"""Run configuration: one JSON or YAML document holding every tunable knob.

Paths are resolved relative to the configuration file. ``builtin:<name>``
refers to the fixtures shipped with the package (``bench``, ``cms-mini``).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import yaml

from .env import World, load_world
from .errors import ConfigError
from .memory import Embedder, MemoryStore
from .navigator import SearchLimits
from .oracle import OracleHandle
from .oracle.remote import RemoteOracle
from .oracle.scripted import ScriptedOracle
from .policies import Policy, RandomWalkPolicy, RemotePolicy, ScriptedPolicy
from .runtime import ABLATIONS, RuntimeOptions

BUILTIN = "builtin:"
POLICIES = ("scripted", "random", "remote")

# name -> (low, high), inclusive
RANGES: dict[str, tuple[float, float]] = {
    "heuristic_weight": (0.0, 100.0),
    "capacity": (1, 10_000_000),
    "dedup_threshold": (0.0, 1.0),
    "min_similarity": (-1.0, 1.0),
    "k": (1, 50),
    "horizon_cap": (1, 1000),
    "exploration_cap": (1, 1000),
    "max_expansions": (1, 1_000_000),
    "candidate_cap": (1, 10_000),
    "rounds": (0, 1000),
    "parallelism": (1, 256),
    "oracle_budget": (1, 10_000_000),
    "embed_dim": (1, 65_536),
}


def builtin_path(kind: str, name: str) -> Path:
    path = resources.files("webrecall").joinpath("data", kind, f"{name}.json")
    return Path(str(path))


@dataclass(frozen=True)
class RunConfig:
    world_path: str = "builtin:bench"
    oracle: dict[str, str] = field(default_factory=lambda: {"mode": "scripted", "path": "builtin:bench"})
    policy: str = "scripted"
    f_mode: str = "standard"
    heuristic_weight: float = 1.0
    capacity: int = 10_000
    eviction: str = "lru"
    dedup_threshold: float = 0.95
    min_similarity: float = 0.30
    k: int = 1
    horizon_cap: int = 30
    exploration_cap: int = 5
    max_expansions: int = 500
    candidate_cap: int = 20
    seed: int = 0
    rounds: int = 5
    parallelism: int = 1
    ablations: tuple[str, ...] = ()
    oracle_budget: int = 5000
    embed_dim: int = 256
    base_dir: str = field(default=".", compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "ablations", tuple(sorted(set(self.ablations))))
        self.validate()

    def validate(self) -> None:
        for name, (lo, hi) in RANGES.items():
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{name} must be a number, got {value!r}")
            if not lo <= value <= hi:
                raise ConfigError(f"{name}={value} outside [{lo}, {hi}]")
        for name in ("capacity", "k", "horizon_cap", "exploration_cap", "max_expansions", "candidate_cap", "rounds", "parallelism", "oracle_budget", "embed_dim", "seed"):
            if not isinstance(getattr(self, name), int) or isinstance(getattr(self, name), bool):
                raise ConfigError(f"{name} must be an integer")
        if self.f_mode not in ("standard", "cumulative"):
            raise ConfigError(f"f_mode must be 'standard' or 'cumulative', got {self.f_mode!r}")
        if self.eviction not in ("lru", "lfu"):
            raise ConfigError(f"eviction must be 'lru' or 'lfu', got {self.eviction!r}")
        if self.policy not in POLICIES:
            raise ConfigError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        bad = set(self.ablations) - set(ABLATIONS)
        if bad:
            raise ConfigError(f"unknown ablations {sorted(bad)}; choose from {ABLATIONS}")
        mode = self.oracle.get("mode")
        if mode == "scripted":
            if "path" not in self.oracle:
                raise ConfigError("scripted oracle needs a 'path'")
            if not self.resolve(self.oracle["path"], "oracles").is_file():
                raise ConfigError(f"scripted oracle file not found: {self.oracle['path']}")
        elif mode == "remote":
            if not self.oracle.get("endpoint"):
                raise ConfigError("remote oracle needs an 'endpoint'")
        else:
            raise ConfigError(f"oracle mode must be 'scripted' or 'remote', got {mode!r}")
        if self.policy == "remote" and mode != "remote":
            raise ConfigError("a remote policy needs a remote oracle endpoint")
        if not self.resolve(self.world_path, "worlds").is_file():
            raise ConfigError(f"world file not found: {self.world_path}")

    def resolve(self, ref: str, kind: str) -> Path:
        if ref.startswith(BUILTIN):
            return builtin_path(kind, ref[len(BUILTIN):])
        path = Path(ref)
        return path if path.is_absolute() else Path(self.base_dir) / path

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d.pop("base_dir")
        d["ablations"] = list(self.ablations)
        return d

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")).hexdigest()

    def with_overrides(self, **changes: Any) -> "RunConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        try:
            return replace(self, **changes)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    # -- builders -------------------------------------------------------

    def load_world(self) -> World:
        return load_world(self.resolve(self.world_path, "worlds"))

    def make_oracle(self) -> OracleHandle:
        if self.oracle["mode"] == "scripted":
            return ScriptedOracle.from_file(self.resolve(self.oracle["path"], "oracles"))
        return RemoteOracle(self.oracle["endpoint"])

    def make_policy(self) -> Policy:
        if self.policy == "scripted":
            return ScriptedPolicy()
        if self.policy == "random":
            return RandomWalkPolicy(self.seed)
        return RemotePolicy(self.oracle["endpoint"])

    def make_memory(self) -> MemoryStore:
        return MemoryStore(Embedder(self.embed_dim), self.dedup_threshold, self.min_similarity)

    def runtime_options(self) -> RuntimeOptions:
        return RuntimeOptions(
            horizon=self.horizon_cap,
            exploration_cap=self.exploration_cap,
            k=self.k,
            rounds=self.rounds,
            seed=self.seed,
            parallelism=self.parallelism,
            limits=SearchLimits(self.max_expansions, self.candidate_cap, self.f_mode, self.heuristic_weight),  # type: ignore[arg-type]
            ablations=frozenset(self.ablations),
            oracle_budget=self.oracle_budget,
        )

    def report_settings(self) -> dict[str, Any]:
        return {
            "dedup_threshold": self.dedup_threshold,
            "min_similarity": self.min_similarity,
            "k": self.k,
            "f_mode": self.f_mode,
            "capacity": self.capacity,
            "seed": self.seed,
            "ablations": "+".join(self.ablations) or "none",
        }


def config_from_mapping(data: Mapping[str, Any], base_dir: str | Path = ".") -> RunConfig:
    known = {f.name for f in fields(RunConfig)} - {"base_dir"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
    values = dict(data)
    if "ablations" in values:
        if not isinstance(values["ablations"], (list, tuple)):
            raise ConfigError("ablations must be a list")
        values["ablations"] = tuple(values["ablations"])
    if "oracle" in values and not isinstance(values["oracle"], Mapping):
        raise ConfigError("oracle must be a mapping with a 'mode'")
    try:
        return RunConfig(**values, base_dir=str(base_dir))
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, Mapping):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_mapping(data, path.parent)


def manifest(cfg: RunConfig, command: str, world: World) -> dict[str, Any]:
    """Run identity: equal configs and seeds give equal manifests."""
    from . import __version__

    return {
        "command": command,
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
        "world_id": world.world_id,
        "oracle_mode": cfg.oracle["mode"],
        "policy": cfg.policy,
        "ablations": list(cfg.ablations),
        "version": __version__,
    }


__all__ = ["RunConfig", "load_config", "config_from_mapping", "manifest"]
