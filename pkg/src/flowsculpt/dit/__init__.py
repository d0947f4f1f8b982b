"""Frozen toy transformer velocity model and its value hooks."""

from .hooks import StepKind, ValueCache, ValueHook, mask_fuse
from .model import DiTConfig, PromptTokens, VelocityTransformer, text_embed

__all__ = [
    "DiTConfig",
    "PromptTokens",
    "StepKind",
    "ValueCache",
    "ValueHook",
    "VelocityTransformer",
    "mask_fuse",
    "text_embed",
]
