from .attributes import classify_attributes
from .scores import (
    PSNR_CAP_DB,
    ScoreMatrix,
    attr_edit,
    attr_preserve,
    mask_iou,
    psnr,
    ssim,
)

__all__ = [
    "PSNR_CAP_DB",
    "ScoreMatrix",
    "attr_edit",
    "attr_preserve",
    "classify_attributes",
    "mask_iou",
    "psnr",
    "ssim",
]
