"""Similarity-aware point affiliation (SAPA) feature upsampling.

The window kernels run in a compiled extension when it is built and in
numpy otherwise; ``sapa.backend`` names the active one.
"""
from ._backend import DEFAULT as backend
from .complexity import CostReport, comparison_table, cost, measure_sapa
from .config import NormKind, UpsamplerConfig
from .errors import ConfigError, FormatError, NumericError, SapaError
from .gradients import GradBundle, finite_diff, gradcheck, sapa_backward
from .kernels import KernelField, generate_kernels, normalize_window
from .similarity import (
    SapaParams,
    SimilarityKind,
    gate,
    init_params,
    layer_norm,
    load_params,
    save_params,
    sim_bilinear,
    sim_gated,
    sim_inner,
)
from .tensor import Tensor, get, project_location, read_tensor, window_vector, write_tensor
from .upsampler import assemble, sapa_forward, upsample_bilinear, upsample_nearest

__all__ = [
    "ConfigError", "CostReport", "FormatError", "GradBundle", "KernelField", "NormKind",
    "NumericError", "SapaError", "SapaParams", "SimilarityKind", "Tensor", "UpsamplerConfig",
    "assemble", "backend", "comparison_table", "cost", "finite_diff", "gate", "generate_kernels",
    "get", "gradcheck", "init_params", "layer_norm", "load_params", "measure_sapa",
    "normalize_window", "project_location", "read_tensor", "sapa_backward", "sapa_forward",
    "save_params", "sim_bilinear", "sim_gated", "sim_inner", "upsample_bilinear",
    "upsample_nearest", "window_vector", "write_tensor",
]
