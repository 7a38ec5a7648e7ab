"""Reconstruction quality measures: PSNR, perceptual blur, boundary crop."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import uniform_filter1d

from .errors import DimensionError, ZeroMSEError
from .images import as_image

BLUR_KERNEL_LENGTH = 9


def psnr(x, y) -> float:
    """Peak signal-to-noise ratio, -10*log10(mean squared error).

    Intended for intensities in [0, 1].  Identical images have infinite
    PSNR; this is signalled as :class:`ZeroMSEError` rather than returned.
    """
    x = as_image(x)
    y = as_image(y)
    if x.shape != y.shape:
        raise DimensionError(f"image shapes differ: {x.shape} vs {y.shape}")
    mse = np.mean((x - y) ** 2)
    if mse == 0.0:
        raise ZeroMSEError("images are identical; PSNR is infinite")
    return float(-10.0 * np.log10(mse))


def blur_effect(x) -> float:
    """Perceptual blur in [0, 1]; larger means blurrier.

    The image is blurred with a length-9 uniform kernel along each axis
    and the absolute neighbor variations of original and blurred version
    are compared: the fraction of variation NOT removed by blurring is
    the directional blur, and the final value is the maximum over the two
    directions.  An already blurry image loses little variation, giving a
    value near 1.  Zero-variation (constant) directions contribute 0.
    """
    x = as_image(x)
    if min(x.shape) < BLUR_KERNEL_LENGTH:
        raise DimensionError(
            f"image {x.shape} too small for the length-{BLUR_KERNEL_LENGTH} blur"
        )
    ratios = []
    for axis in (0, 1):
        blurred = uniform_filter1d(x, BLUR_KERNEL_LENGTH, axis=axis, mode="nearest")
        d_orig = np.abs(np.diff(x, axis=axis))
        d_blur = np.abs(np.diff(blurred, axis=axis))
        removed = np.maximum(d_orig - d_blur, 0.0)
        total = d_orig.sum()
        ratios.append(0.0 if total == 0.0 else 1.0 - removed.sum() / total)
    return float(max(ratios))


def crop_boundary(x, margin: int):
    """Central sub-image after removing ``margin`` pixels on every side."""
    x = as_image(x)
    if margin < 0:
        raise ValueError(f"margin must be >= 0, got {margin}")
    if margin == 0:
        return x.copy()
    if 2 * margin >= min(x.shape):
        raise DimensionError(
            f"margin {margin} leaves no pixels of an image of shape {x.shape}"
        )
    return x[margin:-margin, margin:-margin].copy()
