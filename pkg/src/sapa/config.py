"""Hyperparameters of one upsampling operator."""
from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import ConfigError
from .similarity import SimilarityKind


class NormKind(str, enum.Enum):
    """Choice of h(x) in the kernel normalizer h(s_i) / sum_j h(s_j)."""

    NONE = "none"
    EXP = "exp"
    RELU = "relu"
    SIGMOID = "sigmoid"
    SOFTPLUS = "softplus"

    @classmethod
    def parse(cls, value) -> "NormKind":
        try:
            return cls(value.lower() if isinstance(value, str) else value)
        except ValueError:
            raise ConfigError(f"unknown normalizer {value!r}") from None

    @property
    def code(self) -> int:
        return _CODES[self]


_CODES = {NormKind.NONE: 0, NormKind.EXP: 1, NormKind.RELU: 2, NormKind.SIGMOID: 3, NormKind.SOFTPLUS: 4}


@dataclass(frozen=True)
class UpsamplerConfig:
    similarity: SimilarityKind = SimilarityKind.GATED
    norm: NormKind = NormKind.EXP
    kernel_size: int = 5
    embed_dim: int = 32
    ratio: int = 2

    def __post_init__(self):
        object.__setattr__(self, "similarity", SimilarityKind.parse(self.similarity))
        object.__setattr__(self, "norm", NormKind.parse(self.norm))
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel size must be odd and positive, got {self.kernel_size}")
        if self.embed_dim < 1:
            raise ConfigError(f"embed_dim must be positive, got {self.embed_dim}")
        if self.ratio < 1:
            raise ConfigError(f"ratio must be >= 1, got {self.ratio}")
