"""Prompt-aligned spatial locator: model, training, complexity accounting."""
from .complexity import complexity_report, count_model_params, format_report
from .model import PASL_TEXT_SEED, PaslConfig, PaslModel, mask_loss, mask_loss_terms, stub_embed
from .train import PaslLocator, evaluate_pasl, pool_mask, train_pasl

__all__ = [
    "PASL_TEXT_SEED",
    "PaslConfig",
    "PaslLocator",
    "PaslModel",
    "complexity_report",
    "count_model_params",
    "evaluate_pasl",
    "format_report",
    "mask_loss",
    "mask_loss_terms",
    "pool_mask",
    "stub_embed",
    "train_pasl",
]
