"""Closed-form FLOP and parameter model for dynamic upsamplers.

All counts are per decoder pixel (coefficients of H*W) for a x2 upsampler,
with one FLOP meaning one multiply-add. Arithmetic is exact integer.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

from .config import UpsamplerConfig
from .errors import ConfigError
from .similarity import SapaParams, SimilarityKind

OPERATORS = ("carafe", "indexnet-hin", "indexnet-m2o", "a2u", "sapa-i", "sapa-b", "sapa-g")

# operator defaults for the comparison table: (d, K)
REFERENCE_SETTINGS = {
    "carafe": (64, 5),
    "indexnet-hin": (None, None),
    "indexnet-m2o": (None, None),
    "a2u": (None, 3),
}


@dataclass(frozen=True)
class CostReport:
    name: str
    flops: int
    params: int
    stages: Tuple[Tuple[str, int, int], ...]
    implemented_params: int
    # reference constants that disagree with the total-consistent breakdown
    notes: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if sum(s[1] for s in self.stages) != self.flops or sum(s[2] for s in self.stages) != self.params:
            raise AssertionError(f"{self.name}: stage breakdown does not sum to the total")


def cost(op_kind: str, channels: int, embed_dim: int | None = None, kernel_size: int | None = None) -> CostReport:
    op = op_kind.lower()
    if op not in OPERATORS:
        raise ConfigError(f"unknown operator {op_kind!r}; choose from {', '.join(OPERATORS)}")
    c = channels
    d = embed_dim
    k = kernel_size
    if c is None or c < 1:
        raise ConfigError("channels must be positive")
    needs_d = op in ("carafe", "sapa-b", "sapa-g")
    needs_k = op in ("carafe", "a2u", "sapa-i", "sapa-b", "sapa-g")
    if needs_d and (d is None or d < 1):
        raise ConfigError(f"{op} needs a positive embed_dim")
    if needs_k and (k is None or k < 1):
        raise ConfigError(f"{op} needs a positive kernel_size")
    kk = k * k if k else 0
    notes = {}

    if op == "carafe":
        stages = [("kernel generation", c * d + 36 * kk * d, c * d + 36 * kk * d),
                  ("feature assembly", 4 * kk * c, 0)]
    elif op == "indexnet-hin":
        stages = [("kernel generation", 32 * c * c + 8 * c, 32 * c * c + 8 * c),
                  ("feature assembly", 4 * c, 0)]
    elif op == "indexnet-m2o":
        stages = [("kernel generation", 68 * c * c, 68 * c * c),
                  ("feature assembly", 4 * c, 0)]
    elif op == "a2u":
        stages = [("kernel generation", 73 * c + 4 * kk, 4 * kk * c + 2 * c),
                  ("feature assembly", 4 * kk * c, 0)]
    elif op == "sapa-i":
        # inner product runs in the full channel space (d = C)
        stages = [("inner product", 4 * kk * c, 0), ("feature assembly", 4 * kk * c, 0)]
    else:
        stages = [("feature embedding", 5 * c * d, 2 * c * d)]
        if op == "sapa-g":
            # the itemized row lists C + 8d; the reference total adds C + 5d
            stages.append(("gated addition", c + 5 * d, c))
            notes["gated addition row"] = c + 8 * d
        stages += [("inner product", 4 * kk * d, 0), ("feature assembly", 4 * kk * c, 0)]

    flops = sum(s[1] for s in stages)
    params = sum(s[2] for s in stages)
    implemented = params + 1 if op == "sapa-g" else params
    return CostReport(op, flops, params, tuple(stages), implemented, notes)


def comparison_table(channels: int, embed_dim: int = 32, kernel_size: int = 5) -> List[CostReport]:
    """Every operator at its reference default settings; SAPA uses ``embed_dim`` and ``kernel_size``."""
    rows = []
    for op in OPERATORS:
        if op.startswith("sapa"):
            rows.append(cost(op, channels, embed_dim, kernel_size))
        else:
            d, k = REFERENCE_SETTINGS[op]
            rows.append(cost(op, channels, d, k))
    return rows


def sapa_operator(kind) -> str:
    return {"inner": "sapa-i", "bilinear": "sapa-b", "gated": "sapa-g"}[SimilarityKind.parse(kind).value]


@dataclass
class MeasuredCost:
    """Multiply-adds actually executed by one forward pass."""

    total: int
    decoder_pixels: int
    by_stage: Dict[str, int]

    @property
    def per_pixel(self) -> float:
        return self.total / self.decoder_pixels


class MacCounter:
    def __init__(self):
        self.by_stage = defaultdict(int)

    def __call__(self, n, stage="other"):
        self.by_stage[stage] += int(n)

    @property
    def total(self) -> int:
        return sum(self.by_stage.values())


def measure_sapa(encoder, decoder, params: SapaParams | None, config: UpsamplerConfig) -> MeasuredCost:
    """Run the instrumented (numpy) forward and count its multiply-adds.

    Counted stages mirror the cost model: projections, gate, inner products
    and assembly. LayerNorm and kernel normalization are not counted there
    either.
    """
    from .upsampler import sapa_forward

    counter = MacCounter()
    sapa_forward(encoder, decoder, params, config, backend="python", counter=counter)
    h, w = decoder.shape[:2]
    return MeasuredCost(counter.total, h * w, dict(counter.by_stage))


def format_table(rows: List[CostReport]) -> str:
    lines = [f"{'operator':<14}{'FLOPs/px':>12}{'params':>12}{'implemented':>13}"]
    for r in rows:
        lines.append(f"{r.name:<14}{r.flops:>12,}{r.params:>12,}{r.implemented_params:>13,}")
        for stage, f, p in r.stages:
            lines.append(f"  {stage:<20}{f:>16,}{p:>12,}")
        for key, val in r.notes.items():
            lines.append(f"  ({key}: {val:,})")
    return "\n".join(lines)


def format_csv(rows: List[CostReport]) -> str:
    lines = ["operator,stage,flops_per_pixel,params,implemented_params"]
    for r in rows:
        for stage, f, p in r.stages:
            lines.append(f"{r.name},{stage},{f},{p},")
        lines.append(f"{r.name},total,{r.flops},{r.params},{r.implemented_params}")
        for key, val in r.notes.items():
            lines.append(f"{r.name},{key},{val},,")
    return "\n".join(lines)
