"""Procedural grain textures for self-contained experiments.

Seeded value-noise octaves are thresholded into a two-phase grain
pattern and lightly smoothed, giving stationary material-like images:
disjoint crops of one sheet share their patch statistics, which is
exactly what the patch-prior reconstruction assumes.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter


def _value_noise(shape, cell: float, rng) -> np.ndarray:
    """Bilinear interpolation of a random grid with the given cell size."""
    h, w = shape
    gh = int(h / cell) + 2
    gw = int(w / cell) + 2
    grid = rng.random((gh, gw))
    r = np.arange(h) / cell
    c = np.arange(w) / cell
    i0 = r.astype(int)
    j0 = c.astype(int)
    fr = (r - i0)[:, None]
    fc = (c - j0)[None, :]
    g00 = grid[i0][:, j0]
    g01 = grid[i0][:, j0 + 1]
    g10 = grid[i0 + 1][:, j0]
    g11 = grid[i0 + 1][:, j0 + 1]
    top = g00 * (1 - fc) + g01 * fc
    bot = g10 * (1 - fc) + g11 * fc
    return top * (1 - fr) + bot * fr


def grain_texture(
    shape,
    seed: int,
    base_cell: float = 24.0,
    octaves: int = 4,
    smooth_sigma: float = 1.0,
    low: float = 0.1,
    high: float = 0.9,
) -> np.ndarray:
    """Two-phase grain texture in [low, high].

    ``base_cell`` sets the size of the coarsest grains; each further
    octave halves the cell and the amplitude.  The summed field is
    thresholded at its median and the resulting binary pattern smoothed
    with a Gaussian of ``smooth_sigma`` so edges stay band-limited.
    """
    if octaves < 1:
        raise ValueError(f"octaves must be >= 1, got {octaves}")
    rng = np.random.default_rng(seed)
    field = np.zeros(shape)
    amp, cell = 1.0, float(base_cell)
    for _ in range(octaves):
        field += amp * _value_noise(shape, max(cell, 2.0), rng)
        amp *= 0.5
        cell /= 2.0
    binary = (field > np.median(field)).astype(np.float64)
    img = gaussian_filter(binary, smooth_sigma, mode="nearest")
    return low + (high - low) * img
