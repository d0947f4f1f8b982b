"""Scalar-loop reference implementations used by the metric tests.

Each oracle recomputes its metric with explicit Python loops and no
numpy reductions, so agreement with the vectorized implementations is
evidence of correctness rather than shared code. The psnr oracle is
exact (not approximate) when pixel values are multiples of 1/256:
every squared difference and partial sum is then a dyadic rational far
below 2^53, so all summation orders produce the same float.
"""
import math

import numpy as np


def psnr_loops(source, edited, region=None):
    a = np.asarray(source, dtype=np.float64)
    b = np.asarray(edited, dtype=np.float64)
    total = 0.0
    count = 0
    for c in range(a.shape[0]):
        for y in range(a.shape[1]):
            for x in range(a.shape[2]):
                if region is not None and not region[y, x]:
                    continue
                d = a[c, y, x] - b[c, y, x]
                total += d * d
                count += 1
    mse = total / count
    if mse < 1e-10:
        return 100.0
    return 10.0 * math.log10(1.0 / mse)


def mask_iou_loops(pred, gt, threshold=0.5):
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    inter = 0
    union = 0
    for y in range(p.shape[0]):
        for x in range(p.shape[1]):
            pb = p[y, x] > threshold
            gb = g[y, x] > threshold
            if pb and gb:
                inter += 1
            if pb or gb:
                union += 1
    if union == 0:
        return 1.0
    return inter / union


def attr_edit_loops(target, tau):
    hits = 0
    for s in target:
        if s > tau:
            hits += 1
    return hits / len(target)


def attr_preserve_loops(preserve, labels, tau):
    correct = 0
    total = 0
    for row, lab in zip(preserve, labels):
        for s, a in zip(row, lab):
            predicted = 1.0 if s > tau else 0.0
            if predicted == a:
                correct += 1
            total += 1
    return correct / total


def ssim_windows_loops(source, edited):
    """Direct per-window SSIM: explicit Gaussian sums, no convolution."""
    a = np.asarray(source, dtype=np.float64)
    b = np.asarray(edited, dtype=np.float64)
    x = 0.299 * a[0] + 0.587 * a[1] + 0.114 * a[2]
    y = 0.299 * b[0] + 0.587 * b[1] + 0.114 * b[2]
    size, sigma = 11, 1.5
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k1d = np.exp(-(r**2) / (2.0 * sigma**2))
    kernel = np.outer(k1d, k1d)
    kernel = kernel / kernel.sum()
    h, w = x.shape
    c1, c2 = 0.01**2, 0.03**2
    values = []
    for top in range(h - size + 1):
        for left in range(w - size + 1):
            mx = my = mxx = myy = mxy = 0.0
            for dy in range(size):
                for dx in range(size):
                    kv = kernel[dy, dx]
                    xv = x[top + dy, left + dx]
                    yv = y[top + dy, left + dx]
                    mx += kv * xv
                    my += kv * yv
                    mxx += kv * xv * xv
                    myy += kv * yv * yv
                    mxy += kv * xv * yv
            vx = mxx - mx * mx
            vy = myy - my * my
            vxy = mxy - mx * my
            num = (2.0 * mx * my + c1) * (2.0 * vxy + c2)
            den = (mx * mx + my * my + c1) * (vx + vy + c2)
            values.append(num / den)
    return sum(values) / len(values)


def quantized_image(rng, shape):
    """Random [3, H, W] image whose values are multiples of 1/256."""
    levels = rng.integers(0, 256, (3,) + tuple(shape))
    return levels.astype(np.float64) / 256.0
