from raed.models.base import BOS_ID, EOS_ID, PAD_ID, AedModel, EncoderOutput, shift_right
from raed.models.checkpoint import load_checkpoint, read_tensors, save_checkpoint, write_tensors
from raed.models.registry import build_model, expected_parameter_count, match_architecture

__all__ = [
    "AedModel",
    "BOS_ID",
    "EOS_ID",
    "EncoderOutput",
    "PAD_ID",
    "build_model",
    "expected_parameter_count",
    "load_checkpoint",
    "match_architecture",
    "read_tensors",
    "save_checkpoint",
    "shift_right",
    "write_tensors",
]
