"""Run configuration, optionally loaded from a JSON file via ``--config``."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

from spectral_frg.embedding import EmbeddingConfig
from spectral_frg.errors import ConfigurationError, ContainerParseError
from spectral_frg.pruning_engine import ProbeConfig


@dataclass(frozen=True)
class RunConfig:
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    cluster_eps: float = 0.1
    norm_eq_tolerance: float = 1e-9
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    cost_table_path: str | None = None

    def __post_init__(self):
        if not self.cluster_eps > 0:
            raise ConfigurationError(f"cluster_eps must be positive, got {self.cluster_eps}")
        if not self.norm_eq_tolerance > 0:
            raise ConfigurationError(
                f"norm_eq_tolerance must be positive, got {self.norm_eq_tolerance}"
            )

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunConfig":
        known = {"embedding", "cluster_eps", "norm_eq_tolerance", "probe", "cost_table_path"}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigurationError(f"unknown config fields {unknown}")
        kwargs = dict(d)
        if "embedding" in kwargs:
            kwargs["embedding"] = EmbeddingConfig.from_dict(kwargs["embedding"])
        if "probe" in kwargs:
            try:
                kwargs["probe"] = ProbeConfig(**kwargs["probe"])
            except TypeError as exc:
                raise ConfigurationError(f"bad probe config: {exc}") from None
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ContainerParseError(f"{path}: malformed config: {exc.msg}", exc.pos) from None
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path}: config must be a JSON object")
    return RunConfig.from_dict(doc)
