"""Edit-quality and image-similarity scores.

Attribute accuracies operate on a ScoreMatrix of classifier outputs; the
image metrics (psnr, ssim, mask_iou) work directly on arrays.  All score
inputs live in [0, 1].
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from ..errors import InputError, ShapeError
from ..validation import check_finite


def _as_scores(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    check_finite(a, name)
    if a.size and (a.min() < 0.0 or a.max() > 1.0):
        raise InputError(f"{name}: scores must lie in [0, 1]")
    return a


@dataclass
class ScoreMatrix:
    """Per-sample edit/preservation scores with their ground truth.

    target[i] is the classifier score of sample i's edited attribute.
    preserve[i] holds the scores of the M_i attributes that should have
    been left alone, labels[i] their ground-truth booleans.  M_i may be 0.
    """

    target: np.ndarray
    preserve: List[np.ndarray] = field(default_factory=list)
    labels: List[np.ndarray] = field(default_factory=list)
    tau: float = 0.1
    tau_preserve: float = 0.5

    def __post_init__(self):
        self.target = _as_scores(self.target, "ScoreMatrix.target")
        if self.target.ndim != 1 or self.target.size == 0:
            raise InputError("ScoreMatrix: target must be a non-empty 1-d array")
        n = self.target.shape[0]
        if len(self.preserve) != len(self.labels):
            raise InputError("ScoreMatrix: preserve and labels must pair up")
        if self.preserve and len(self.preserve) != n:
            raise InputError(f"ScoreMatrix: expected {n} preserve rows, got {len(self.preserve)}")
        if not self.preserve:
            self.preserve = [np.zeros(0) for _ in range(n)]
            self.labels = [np.zeros(0) for _ in range(n)]
        rows, labs = [], []
        for i, (s, a) in enumerate(zip(self.preserve, self.labels)):
            s = _as_scores(s, f"ScoreMatrix.preserve[{i}]")
            a = np.asarray(a, dtype=np.float64)
            if s.shape != a.shape or s.ndim != 1:
                raise ShapeError(f"ScoreMatrix: row {i} scores/labels shape mismatch")
            if a.size and not np.all((a == 0.0) | (a == 1.0)):
                raise InputError(f"ScoreMatrix: labels[{i}] must be 0/1")
            rows.append(s)
            labs.append(a)
        self.preserve = rows
        self.labels = labs

    @property
    def n_samples(self) -> int:
        return int(self.target.shape[0])


def attr_edit(scores: ScoreMatrix, tau: Optional[float] = None) -> float:
    """Fraction of samples whose edited attribute crossed the threshold.

    A sample counts as a successful edit when its target score exceeds
    tau (strictly).  tau defaults to the matrix's own threshold.
    """
    t = scores.tau if tau is None else float(tau)
    return float(np.count_nonzero(scores.target > t)) / scores.n_samples


def attr_preserve(scores: ScoreMatrix, tau: Optional[float] = None) -> float:
    """Accuracy of thresholded preservation scores against their labels.

    Every (sample, attribute) pair is weighted equally: the double sum
    over correct predictions is divided by the total number of
    preservation attributes.  Requires at least one such attribute.
    """
    t = scores.tau_preserve if tau is None else float(tau)
    total = sum(int(s.size) for s in scores.preserve)
    if total == 0:
        raise InputError("attr_preserve: no preservation attributes")
    correct = 0
    for s, a in zip(scores.preserve, scores.labels):
        if s.size:
            correct += int(np.count_nonzero((s > t).astype(np.float64) == a))
    return correct / total


def _check_image(img, name: str) -> np.ndarray:
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 3 or a.shape[0] != 3:
        raise ShapeError(f"{name}: expected [3, H, W], got {a.shape}")
    check_finite(a, name)
    return a


# MSE below this prints as >= 100 dB; report the cap instead of inf.
_PSNR_MSE_FLOOR = 1e-10
PSNR_CAP_DB = 100.0


def psnr(source, edited, region: Optional[np.ndarray] = None) -> float:
    """Peak signal-to-noise ratio in dB between two [3,H,W] images in [0,1].

    With a boolean region mask [H,W], only those pixels enter the MSE.
    Identical inputs (MSE under 1e-10) return the 100 dB cap.
    """
    a = _check_image(source, "psnr: source")
    b = _check_image(edited, "psnr: edited")
    if a.shape != b.shape:
        raise ShapeError(f"psnr: shape mismatch {a.shape} vs {b.shape}")
    d2 = (a - b) ** 2
    if region is not None:
        m = np.asarray(region)
        if m.shape != a.shape[1:]:
            raise ShapeError(f"psnr: region {m.shape} does not match image {a.shape[1:]}")
        m = m.astype(bool)
        if not m.any():
            raise InputError("psnr: empty region")
        d2 = d2[:, m]
    mse = float(np.mean(d2))
    if mse < _PSNR_MSE_FLOOR:
        return PSNR_CAP_DB
    # Scalar log keeps the result a plain float; numpy's vectorized
    # log10 can differ from libm in the last ulp.
    return 10.0 * math.log10(1.0 / mse)


def _grayscale(img: np.ndarray) -> np.ndarray:
    return 0.299 * img[0] + 0.587 * img[1] + 0.114 * img[2]


def _gaussian_kernel(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-(r**2) / (2.0 * sigma**2))
    k2 = np.outer(k, k)
    return k2 / k2.sum()


def _windowed_mean(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # valid-mode 2-d correlation: one kernel dot per window
    win = np.lib.stride_tricks.sliding_window_view(x, kernel.shape)
    return np.tensordot(win, kernel, axes=([2, 3], [0, 1]))


def ssim(source, edited) -> float:
    """Mean luminance SSIM over valid 11x11 Gaussian windows.

    Images are converted to grayscale with the (0.299, 0.587, 0.114)
    weights; the window is Gaussian with sigma 1.5 and the usual
    stabilizers K1=0.01, K2=0.03 at unit dynamic range.
    """
    a = _check_image(source, "ssim: source")
    b = _check_image(edited, "ssim: edited")
    if a.shape != b.shape:
        raise ShapeError(f"ssim: shape mismatch {a.shape} vs {b.shape}")
    h, w = a.shape[1:]
    if min(h, w) < 11:
        raise InputError(f"ssim: image {h}x{w} smaller than the 11x11 window")
    x = _grayscale(a)
    y = _grayscale(b)
    k = _gaussian_kernel()
    mu_x = _windowed_mean(x, k)
    mu_y = _windowed_mean(y, k)
    xx = _windowed_mean(x * x, k) - mu_x**2
    yy = _windowed_mean(y * y, k) - mu_y**2
    xy = _windowed_mean(x * y, k) - mu_x * mu_y
    c1 = 0.01**2
    c2 = 0.03**2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (xx + yy + c2)
    return float(np.mean(num / den))


def mask_iou(pred, gt, threshold: float = 0.5) -> float:
    """Intersection over union of two thresholded masks.

    Both inputs are binarized at strictly-greater-than threshold before
    comparison.  Two empty masks agree perfectly and score 1.0.
    """
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape:
        raise ShapeError(f"mask_iou: shape mismatch {p.shape} vs {g.shape}")
    pb = p > threshold
    gb = g > threshold
    union = np.count_nonzero(pb | gb)
    if union == 0:
        return 1.0
    return float(np.count_nonzero(pb & gb)) / float(union)
