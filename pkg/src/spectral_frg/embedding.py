"""Operator embeddings: spectral signatures and seeded random features.

The random-feature route maps every operator, whatever its shape, into the
same ``target_dim``-dimensional unit sphere:

1. flatten the weight tensor in row-major order;
2. sum entry ``i`` into bucket ``i mod bucket_dim``;
3. L2-normalize the bucket vector;
4. multiply by a ``target_dim x bucket_dim`` Gaussian matrix ``G``;
5. L2-normalize again.

``G`` has i.i.d. ``N(0, 1/target_dim)`` entries generated by
``numpy.random.Generator(PCG64(seed)).standard_normal((target_dim,
bucket_dim))`` divided by ``sqrt(target_dim)``, filled row by row. It depends
on the seed and the two dimensions only, so all operators share one feature
map.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Mapping

import numpy as np

from spectral_frg.errors import ConfigurationError, DegenerateEmbeddingError, OperatorLookupError
from spectral_frg.model_io import Model, OperatorDescriptor, reshape_for_augment
from spectral_frg.spectral_core import SpectralSignature, augment, svd_spectrum

METHODS = ("spectral", "random_feature")


@dataclass(frozen=True)
class EmbeddingConfig:
    method: str = "spectral"
    bucket_dim: int = 4096
    target_dim: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(
                f"embedding method {self.method!r} not in {list(METHODS)}"
            )
        if self.bucket_dim < 1 or self.target_dim < 1:
            raise ConfigurationError("embedding dimensions must be positive")
        if self.target_dim > self.bucket_dim:
            raise ConfigurationError(
                f"target_dim {self.target_dim} exceeds bucket_dim {self.bucket_dim}"
            )
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError(f"seed {self.seed} is not an unsigned 64-bit integer")

    @classmethod
    def from_dict(cls, d: Mapping) -> "EmbeddingConfig":
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigurationError(f"bad embedding config: {exc}") from None

    def to_dict(self) -> dict:
        return asdict(self)


def embed_spectral(op: OperatorDescriptor, tensors: Mapping[str, np.ndarray]) -> SpectralSignature:
    w, b = reshape_for_augment(op, tensors)
    return svd_spectrum(augment(w, b), source_name=op.name)


@lru_cache(maxsize=8)
def projection_matrix(seed: int, target_dim: int, bucket_dim: int) -> np.ndarray:
    """The shared Gaussian feature map (read-only)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    g = rng.standard_normal((target_dim, bucket_dim)) / np.sqrt(target_dim)
    g.setflags(write=False)
    return g


def bucket_vector(weights: np.ndarray, bucket_dim: int) -> np.ndarray:
    flat = np.asarray(weights, dtype=np.float64).ravel(order="C")
    idx = np.arange(flat.size) % bucket_dim
    return np.bincount(idx, weights=flat, minlength=bucket_dim)


def embed_random_feature(
    op: OperatorDescriptor, tensors: Mapping[str, np.ndarray], cfg: EmbeddingConfig
) -> np.ndarray:
    """Unit vector of length ``cfg.target_dim`` for ``op``'s weight tensor."""
    if cfg.method != "random_feature":
        raise ConfigurationError(f"embed_random_feature called with method {cfg.method!r}")
    try:
        w = tensors[op.weight_key]
    except KeyError:
        raise OperatorLookupError(f"missing weight tensor {op.weight_key!r}") from None
    v = bucket_vector(w, cfg.bucket_dim)
    n = np.linalg.norm(v)
    if not n > 0:
        raise DegenerateEmbeddingError(
            f"operator {op.name!r}: weight tensor buckets to the zero vector"
        )
    z = projection_matrix(cfg.seed, cfg.target_dim, cfg.bucket_dim) @ (v / n)
    zn = np.linalg.norm(z)
    if not zn > 0:
        raise DegenerateEmbeddingError(f"operator {op.name!r}: projection is zero")
    return z / zn


def embed(op: OperatorDescriptor, tensors, cfg: EmbeddingConfig):
    """Dispatch on ``cfg.method``; returns a signature or a unit vector."""
    if cfg.method == "spectral":
        return embed_spectral(op, tensors)
    return embed_random_feature(op, tensors, cfg)


def embed_model(model: Model, cfg: EmbeddingConfig) -> list:
    return [embed(op, model.store, cfg) for op in model.operators]
