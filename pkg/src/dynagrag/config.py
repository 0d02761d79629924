"""Pipeline configuration with validation and JSON file loading."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigError
from .gateway import BackendConfig

CONFIG_ENV = "DYNAGRAG_CONFIG"


@dataclass
class PipelineConfig:
    chunk_tokens: int = 2400
    overlap_tokens: int = 200
    k_hops: int = 3
    top_n: int = 5
    top_node_count: int = 3
    max_overlap: int = 0
    diversity_on: bool = True
    similarity_threshold: float = 0.9
    use_llm_synonyms: bool = False
    char_budget: int = 12000
    mlp_seed: int = 42
    gcn_seed: int = 43
    mock_seed: int = 0
    prompts_dir: str | None = None
    backend: BackendConfig = field(default_factory=BackendConfig)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.chunk_tokens <= 0:
            raise ConfigError("chunk_tokens must be positive")
        if not 0 <= self.overlap_tokens < self.chunk_tokens:
            raise ConfigError("overlap_tokens must satisfy 0 <= overlap < chunk_tokens")
        if self.k_hops < 0:
            raise ConfigError("k_hops must be >= 0")
        if self.top_n < 1:
            raise ConfigError("top_n must be >= 1")
        if self.top_node_count < 1:
            raise ConfigError("top_node_count must be >= 1")
        if self.max_overlap < 0:
            raise ConfigError("max_overlap must be >= 0")
        if not 0 < self.similarity_threshold <= 1:
            raise ConfigError("similarity_threshold must be in (0, 1]")
        if self.char_budget < 64:
            raise ConfigError("char_budget is too small for a usable prompt")
        self.backend.mock_seed = self.mock_seed

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        data = dict(data)
        backend = BackendConfig(**data.pop("backend", {}))
        unknown = set(data) - {f for f in cls.__dataclass_fields__ if f != "backend"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(backend=backend, **data)

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load config from {path}: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def from_env_or_default(cls, explicit_path=None) -> "PipelineConfig":
        path = explicit_path or os.environ.get(CONFIG_ENV)
        if path:
            return cls.from_file(path)
        return cls()

    def to_dict(self) -> dict:
        return asdict(self)
