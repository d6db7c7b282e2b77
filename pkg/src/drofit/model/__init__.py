"""Network definition, attention mask and checkpoint format."""

from .checkpoint import Checkpoint, load_checkpoint, read_header, save_checkpoint
from .config import DEFAULT_CONFIG, ModelConfig
from .mask import AttentionMask, build_attention_mask, expected_pairs, window_block
from .network import EncoderSkips, Model, ParamLeaf, build_model, parameter_shapes

__all__ = [
    "AttentionMask", "Checkpoint", "DEFAULT_CONFIG", "EncoderSkips", "Model", "ModelConfig", "ParamLeaf",
    "build_attention_mask", "build_model", "expected_pairs", "load_checkpoint", "parameter_shapes",
    "read_header", "save_checkpoint", "window_block",
]
