from .editor import (
    EditConfig,
    EditSession,
    block_resize,
    check_cache_coverage,
    detailing_step,
    edit,
    make_session,
    prepare_mask,
    run_edit,
    structuring_step,
)
from .sweep import ablation_sweep, format_sweep_table

__all__ = [
    "EditConfig",
    "EditSession",
    "ablation_sweep",
    "block_resize",
    "check_cache_coverage",
    "detailing_step",
    "edit",
    "format_sweep_table",
    "make_session",
    "prepare_mask",
    "run_edit",
    "structuring_step",
]
