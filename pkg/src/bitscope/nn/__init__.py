"""Layer model, float32 trainer and the per-part inference engine."""

from .model import ARCHITECTURES, LayerSpec, Model, architecture, forward_float32, init_model
from .engine import (FULL_PRECISION, Evaluation, PartConfig, PartitionPlan, Runner, evaluate,
                     full_precision_configs, infer, parse_configs, quantize_model,
                     reference_forward)

__all__ = ["ARCHITECTURES", "LayerSpec", "Model", "architecture", "forward_float32", "init_model",
           "FULL_PRECISION", "Evaluation", "PartConfig", "PartitionPlan", "Runner", "evaluate",
           "full_precision_configs", "infer", "parse_configs", "quantize_model", "reference_forward"]
