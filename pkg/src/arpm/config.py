"""Engine configuration: every tunable in one place.

Retrieval defaults are knowledge_k=5, chat_history_k=10,
similarity_threshold=0.5, RRF k=60, lambda_round=20 and lambda_hours=168.
Bonus magnitudes, BM25 constants and chunk sizes use conservative values;
every field can be overridden from a JSON file.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    """Raised for invalid or unknown configuration values."""


@dataclass(frozen=True)
class BM25Params:
    k1: float = 1.2
    b: float = 0.75
    delta: float = 0.5

    def __post_init__(self) -> None:
        if not self.k1 > 0:
            raise ConfigError("bm25.k1 must be positive")
        if not 0.0 <= self.b <= 1.0:
            raise ConfigError("bm25.b must lie in [0, 1]")
        if not self.delta >= 0:
            raise ConfigError("bm25.delta must be non-negative")


@dataclass(frozen=True)
class FusionParams:
    k_rrf: float = 60.0

    def __post_init__(self) -> None:
        if not self.k_rrf > 0:
            raise ConfigError("fusion.k_rrf must be positive")


@dataclass(frozen=True)
class BonusConfig:
    b_user: float = 0.10
    b_character: float = 0.10
    b_source: float = 0.05
    b_session: float = 0.15

    def __post_init__(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"bonus {f.name} must be finite and >= 0")


@dataclass(frozen=True)
class TemporalDecayParams:
    lambda_round: float = 20.0
    lambda_hours: float = 168.0

    def __post_init__(self) -> None:
        if not (self.lambda_round > 0 and self.lambda_hours > 0):
            raise ConfigError("decay constants must be positive")


# Ablation toggles accepted by the matrix runner, mapped to config fields.
ABLATION_TOGGLES = (
    "enable_chat_retrieval",
    "enable_knowledge_retrieval",
    "enable_bm25",
    "enable_temporal",
    "pure_dialogue",
    "strong_preset",
)


@dataclass(frozen=True)
class EngineConfig:
    knowledge_k: int = 5
    chat_history_k: int = 10
    similarity_threshold: float = 0.5
    rrf_pool_size: int = 100
    rerank_depth: int = 50

    bm25: BM25Params = field(default_factory=BM25Params)
    fusion: FusionParams = field(default_factory=FusionParams)
    bonuses: BonusConfig = field(default_factory=BonusConfig)
    decay: TemporalDecayParams = field(default_factory=TemporalDecayParams)
    knowledge_decay: TemporalDecayParams | None = None
    experience_decay: TemporalDecayParams | None = None
    trusted_sources: tuple[str, ...] = ()

    enable_knowledge_retrieval: bool = True
    enable_chat_retrieval: bool = True
    enable_bm25: bool = True
    enable_temporal: bool = True
    strong_preset: bool = False

    parent_size: int = 1000
    child_size: int = 200
    chunk_overlap: int = 0

    embedding_dim: int = 256
    prompt_budget_chars: int = 12000
    window_turns: int = 4
    max_repairs: int = 2
    model_timeout_s: float = 30.0

    def __post_init__(self) -> None:
        if self.knowledge_k < 0 or self.chat_history_k < 0:
            raise ConfigError("quotas must be >= 0")
        if not 0.0 <= self.similarity_threshold <= 1.0:
            raise ConfigError("similarity_threshold must lie in [0, 1]")
        if self.rrf_pool_size < 1 or self.rerank_depth < 1:
            raise ConfigError("rrf_pool_size and rerank_depth must be >= 1")
        if not self.parent_size >= self.child_size >= 1:
            raise ConfigError("need parent_size >= child_size >= 1")
        if not 0 <= self.chunk_overlap < self.child_size:
            raise ConfigError("chunk_overlap must lie in [0, child_size)")
        if self.embedding_dim < 1:
            raise ConfigError("embedding_dim must be >= 1")
        if self.max_repairs < 0:
            raise ConfigError("max_repairs must be >= 0")
        if self.prompt_budget_chars < 1 or self.window_turns < 0:
            raise ConfigError("invalid prompt budget or window size")

    def decay_for(self, route: str) -> TemporalDecayParams:
        override = self.knowledge_decay if route == "knowledge" else self.experience_decay
        return override if override is not None else self.decay

    @property
    def pure_dialogue(self) -> bool:
        return not (self.enable_knowledge_retrieval or self.enable_chat_retrieval)

    def with_toggles(self, **toggles: bool) -> EngineConfig:
        """Return a copy with ablation toggles applied.

        ``pure_dialogue=True`` switches off both retrieval routes.
        """
        updates: dict[str, Any] = {}
        for name, value in toggles.items():
            if name not in ABLATION_TOGGLES:
                raise ConfigError(f"unknown toggle: {name}")
            if name == "pure_dialogue":
                if value:
                    updates["enable_knowledge_retrieval"] = False
                    updates["enable_chat_retrieval"] = False
            else:
                updates[name] = bool(value)
        return replace(self, **updates)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["trusted_sources"] = list(self.trusted_sources)
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> EngineConfig:
        known = {f.name for f in fields(cls)}
        nested = {
            "bm25": BM25Params,
            "fusion": FusionParams,
            "bonuses": BonusConfig,
            "decay": TemporalDecayParams,
            "knowledge_decay": TemporalDecayParams,
            "experience_decay": TemporalDecayParams,
        }
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            # flat aliases used by the CLI / config files
            if key in ("lambda_round", "lambda_hours"):
                base = kwargs.get("decay", {})
                base = base if isinstance(base, dict) else asdict(base)
                kwargs["decay"] = {**base, key: value}
                continue
            if key in ("RRF_k", "rrf_k"):
                kwargs["fusion"] = {"k_rrf": value}
                continue
            if key in ("knowledge", "experience") and isinstance(value, dict):
                kwargs[f"{key}_decay"] = {
                    "lambda_round": value.get("lambda_round", data.get("lambda_round", 20.0)),
                    "lambda_hours": value.get("lambda_hours", data.get("lambda_hours", 168.0)),
                }
                continue
            if key not in known:
                raise ConfigError(f"unknown config key: {key}")
            kwargs[key] = value
        for key, typ in nested.items():
            if isinstance(kwargs.get(key), dict):
                try:
                    kwargs[key] = typ(**kwargs[key])
                except TypeError as exc:
                    raise ConfigError(f"bad {key} section: {exc}") from exc
        if "trusted_sources" in kwargs:
            kwargs["trusted_sources"] = tuple(kwargs["trusted_sources"])
        return cls(**kwargs)


def load_config(path: str | Path | None) -> EngineConfig:
    if path is None:
        return EngineConfig()
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return EngineConfig.from_dict(data)
