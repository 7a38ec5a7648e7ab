"""Images, patch extraction and empirical patch distributions.

An image is a plain 2-D float array of intensities, nominally in [0, 1]
(optimizer intermediates may leave that range).  A patch distribution is
the uniform empirical measure over fixed-size patches of one or more
images, stored densely with one flattened patch per row; weights are
implicitly 1/count and never materialized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError


def as_image(values) -> np.ndarray:
    """Validate ``values`` as a 2-D finite image and return it as float64."""
    img = np.asarray(values, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise DimensionError(f"expected a non-empty 2-D image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    return img


@dataclass(frozen=True)
class PatchDistribution:
    """Uniform empirical measure over equally shaped image patches.

    Attributes
    ----------
    patches : ndarray, shape (count, s1*s2)
        One patch per row, flattened column-major (row index varies
        fastest within the patch).
    patch_shape : (int, int)
        Side lengths (s1, s2) of every patch.
    """

    patches: np.ndarray
    patch_shape: tuple[int, int]

    def __post_init__(self):
        pats = np.asarray(self.patches, dtype=np.float64)
        s1, s2 = self.patch_shape
        if pats.ndim != 2 or pats.shape[0] < 1:
            raise DimensionError(f"expected (count, s) patch matrix, got {pats.shape}")
        if s1 < 1 or s2 < 1 or pats.shape[1] != s1 * s2:
            raise DimensionError(
                f"patch rows of length {pats.shape[1]} do not match shape {(s1, s2)}"
            )
        if not np.all(np.isfinite(pats)):
            raise ValueError("patches contain non-finite values")
        pats.setflags(write=False)
        object.__setattr__(self, "patches", pats)
        object.__setattr__(self, "patch_shape", (int(s1), int(s2)))

    @property
    def count(self) -> int:
        return self.patches.shape[0]


def extract_patches(img, s1: int, s2: int) -> PatchDistribution:
    """Extract every overlapping s1 x s2 patch of an image at stride 1.

    Patches are enumerated in column-major scan order over their top-left
    positions (position (i, j) gets row index i + j*(d1-s1+1)) and each
    patch is flattened column-major, mirroring a columnwise resampling of
    the image.  The count is (d1-s1+1)*(d2-s2+1).
    """
    img = as_image(img)
    d1, d2 = img.shape
    if s1 < 1 or s2 < 1:
        raise DimensionError(f"patch side lengths must be positive, got {(s1, s2)}")
    if s1 > d1 or s2 > d2:
        raise DimensionError(
            f"patch {(s1, s2)} does not fit into image of shape {(d1, d2)}"
        )
    n1, n2 = d1 - s1 + 1, d2 - s2 + 1
    win = sliding_window_view(img, (s1, s2))
    # (n1, n2, s1, s2) -> rows indexed by j*n1 + i, columns by l*s1 + k
    pats = win.transpose(1, 0, 3, 2).reshape(n1 * n2, s1 * s2)
    return PatchDistribution(pats, (s1, s2))


def patch_grid_shape(image_shape: tuple[int, int], patch_shape: tuple[int, int]):
    """Number of patch positions per axis for dense extraction."""
    (d1, d2), (s1, s2) = image_shape, patch_shape
    return d1 - s1 + 1, d2 - s2 + 1


def subsample_distribution(
    dist: PatchDistribution, count: int, seed: int
) -> PatchDistribution:
    """Uniformly sample ``min(count, N)`` patches without replacement.

    Deterministic for a fixed seed.  When ``count >= N`` the input
    distribution is returned unchanged (order preserved); otherwise the
    kept patches appear in their original relative order.
    """
    if count < 1:
        raise ValueError(f"subsample count must be >= 1, got {count}")
    if count >= dist.count:
        return dist
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(dist.count, size=count, replace=False))
    return PatchDistribution(dist.patches[idx], dist.patch_shape)


def merge_distributions(dists) -> PatchDistribution:
    """Concatenate patch distributions into one uniform measure.

    Realizes the average (1/b) * sum of the input measures when all
    inputs have equal counts; in general every patch of every input
    becomes one atom of weight 1/(total count).  Duplicates are kept as
    distinct atoms.
    """
    dists = list(dists)
    if not dists:
        raise ValueError("need at least one distribution to merge")
    shape = dists[0].patch_shape
    for d in dists[1:]:
        if d.patch_shape != shape:
            raise DimensionError(
                f"cannot merge patch shapes {shape} and {d.patch_shape}"
            )
    if len(dists) == 1:
        return dists[0]
    return PatchDistribution(np.vstack([d.patches for d in dists]), shape)


def _keys_cubic(t):
    """Keys cubic convolution kernel with a = -0.5."""
    t = np.abs(t)
    w = np.zeros_like(t)
    near = t <= 1.0
    far = (t > 1.0) & (t < 2.0)
    w[near] = (1.5 * t[near] - 2.5) * t[near] * t[near] + 1.0
    w[far] = ((-0.5 * t[far] + 2.5) * t[far] - 4.0) * t[far] + 2.0
    return w


def _cubic_weight_matrix(d_in: int, factor: int) -> np.ndarray:
    d_out = d_in * factor
    t = np.arange(d_out, dtype=np.float64) / factor
    i0 = np.floor(t).astype(int)
    frac = t - i0
    mat = np.zeros((d_out, d_in))
    rows = np.arange(d_out)
    for tap in (-1, 0, 1, 2):
        w = _keys_cubic(frac - tap)
        idx = np.clip(i0 + tap, 0, d_in - 1)  # edge replication
        np.add.at(mat, (rows, idx), w)
    return mat


def bicubic_upsample(img, factor: int) -> np.ndarray:
    """Upsample by an integer factor with separable Keys cubic convolution.

    Output pixel (I, J) interpolates the input at (I/factor, J/factor),
    so original samples are reproduced exactly at multiples of the
    factor.  Boundaries replicate the edge rows/columns.  The kernel
    partitions unity, hence constants are preserved.
    """
    img = as_image(img)
    if factor < 1:
        raise ValueError(f"upsampling factor must be >= 1, got {factor}")
    if factor == 1:
        return img.copy()
    m1 = _cubic_weight_matrix(img.shape[0], factor)
    m2 = _cubic_weight_matrix(img.shape[1], factor)
    return m1 @ img @ m2.T
