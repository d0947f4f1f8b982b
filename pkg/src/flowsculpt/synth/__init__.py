"""Synthetic portrait corpus: renderer, masks, prompts, dataset files."""
from .dataset import (
    PROMPT_TEMPLATES,
    TextMaskDataset,
    TextMaskSample,
    make_dataset,
    read_pgm,
    read_ppm,
    write_pgm,
    write_ppm,
)
from .portrait import (
    ATTRIBUTE_NAMES,
    REGION_KEYWORDS,
    REGION_NAMES,
    SyntheticPortrait,
    render_portrait,
)

__all__ = [
    "ATTRIBUTE_NAMES",
    "PROMPT_TEMPLATES",
    "REGION_KEYWORDS",
    "REGION_NAMES",
    "SyntheticPortrait",
    "TextMaskDataset",
    "TextMaskSample",
    "make_dataset",
    "read_pgm",
    "read_ppm",
    "render_portrait",
    "write_pgm",
    "write_ppm",
]
