"""Superresolution forward operators, adjoints and operator estimation.

Two realizations of the blur-then-downsample map are provided: a strided
zero-padded correlation, and circular convolution followed by spectral
truncation (the Fourier downsampler).  The latter admits closed-form
identification of kernel and bias from a single registered image pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, EstimationError
from .images import as_image

STRIDED = "strided"
FOURIER = "fourier"

# Additive floor on |D(x)| when dividing spectra during estimation.
QUOTIENT_STABILIZER = 1e-5


@dataclass(frozen=True)
class ForwardOperator:
    """Blur kernel + bias + downsampling descriptor.

    ``strided`` mode correlates with the kernel at output pixel (i, j)
    anchored at input pixel (i*stride, j*stride), zero-padding on the
    right/bottom, so output dims are ceil(input/stride).  ``fourier``
    mode circularly convolves (kernel zero-padded top-left) and then
    truncates the spectrum to ``target_shape``.
    """

    kernel: np.ndarray
    bias: float = 0.0
    stride: int = 1
    mode: str = STRIDED
    target_shape: tuple[int, int] | None = None

    def __post_init__(self):
        k = as_image(self.kernel)
        k.setflags(write=False)
        object.__setattr__(self, "kernel", k)
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.mode not in (STRIDED, FOURIER):
            raise ValueError(f"unknown operator mode {self.mode!r}")
        if self.mode == FOURIER:
            if self.target_shape is None:
                raise ValueError("fourier mode requires target_shape")
            object.__setattr__(
                self, "target_shape", (int(self.target_shape[0]), int(self.target_shape[1]))
            )

    def output_shape(self, input_shape: tuple[int, int]) -> tuple[int, int]:
        if self.mode == FOURIER:
            return self.target_shape
        s = self.stride
        return (-(-input_shape[0] // s), -(-input_shape[1] // s))


@dataclass(frozen=True)
class NoiseModel:
    """Seeded additive white Gaussian noise of standard deviation sigma."""

    sigma: float
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma}")


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """Normalized Gaussian kernel sampled at pixel centers.

    Offsets are taken relative to the geometric center (size-1)/2, so
    even sizes peak on the central 2x2 block.  Entries sum to one.
    """
    if size < 1:
        raise ValueError(f"kernel size must be >= 1, got {size}")
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    c = (size - 1) / 2.0
    r = np.arange(size) - c
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    k = np.outer(g, g)
    return k / k.sum()


def _pad_kernel_topleft(kernel: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    k1, k2 = kernel.shape
    if k1 > shape[0] or k2 > shape[1]:
        raise DimensionError(f"kernel {kernel.shape} larger than image {shape}")
    out = np.zeros(shape)
    out[:k1, :k2] = kernel
    return out


def _spectral_select(spec: np.ndarray, n: int, axis: int) -> np.ndarray:
    """Keep the n lowest frequencies of one axis of an m-point spectrum.

    Index i survives as itself for i <= n/2 and as i + m - n otherwise.
    For even n the self-conjugate bin n/2 averages the two source bins so
    that Hermitian symmetry (hence a real-valued inverse transform) is
    preserved exactly.
    """
    spec = np.moveaxis(spec, axis, 0)
    m = spec.shape[0]
    if n > m:
        raise DimensionError(f"cannot keep {n} frequencies out of {m}")
    if n == m:
        return np.moveaxis(spec.copy(), 0, axis)
    i = np.arange(n)
    src = np.where(i <= n // 2, i, i + m - n)
    out = spec[src]
    if n % 2 == 0:
        out[n // 2] = 0.5 * (spec[n // 2] + spec[m - n // 2])
    return np.moveaxis(out, 0, axis)


def _spectral_embed(spec: np.ndarray, m: int, axis: int) -> np.ndarray:
    """Transpose of :func:`_spectral_select` (zero-pad the spectrum)."""
    spec = np.moveaxis(spec, axis, 0)
    n = spec.shape[0]
    if n > m:
        raise DimensionError(f"cannot embed {n} frequencies into {m}")
    if n == m:
        return np.moveaxis(spec.copy(), 0, axis)
    i = np.arange(n)
    src = np.where(i <= n // 2, i, i + m - n)
    out = np.zeros((m,) + spec.shape[1:], dtype=spec.dtype)
    out[src] = spec
    if n % 2 == 0:
        out[n // 2] = 0.5 * spec[n // 2]
        out[m - n // 2] = 0.5 * spec[n // 2]
    return np.moveaxis(out, 0, axis)


def fourier_downsample(x, target_shape: tuple[int, int]) -> np.ndarray:
    """Resample to ``target_shape`` by truncating the DFT spectrum.

    Scaled so constants are preserved; the output of a real input is real
    (the truncation keeps Hermitian-symmetric spectra Hermitian) and the
    vanishing imaginary residue is discarded.
    """
    x = as_image(x)
    m1, m2 = x.shape
    n1, n2 = int(target_shape[0]), int(target_shape[1])
    if n1 > m1 or n2 > m2:
        raise DimensionError(f"target {target_shape} exceeds source {x.shape}")
    spec = np.fft.fft2(x)
    spec = _spectral_select(spec, n1, axis=0)
    spec = _spectral_select(spec, n2, axis=1)
    y = np.fft.ifft2(spec) * ((n1 * n2) / (m1 * m2))
    return y.real


def _fourier_upsample_adjoint(g: np.ndarray, input_shape: tuple[int, int]) -> np.ndarray:
    """Adjoint of :func:`fourier_downsample` onto ``input_shape``."""
    m1, m2 = input_shape
    spec = np.fft.fft2(g)
    spec = _spectral_embed(spec, m1, axis=0)
    spec = _spectral_embed(spec, m2, axis=1)
    return np.fft.ifft2(spec).real


def _circular_conv(x: np.ndarray, kernel: np.ndarray, conjugate=False) -> np.ndarray:
    khat = np.fft.fft2(_pad_kernel_topleft(kernel, x.shape))
    if conjugate:
        khat = np.conj(khat)
    return np.fft.ifft2(khat * np.fft.fft2(x)).real


def apply_forward(x, op: ForwardOperator) -> np.ndarray:
    """Apply the forward map: blur, add bias, downsample."""
    x = as_image(x)
    if op.mode == FOURIER:
        if op.target_shape[0] > x.shape[0] or op.target_shape[1] > x.shape[1]:
            raise DimensionError(
                f"target {op.target_shape} exceeds input {x.shape}"
            )
        return fourier_downsample(_circular_conv(x, op.kernel), op.target_shape) + op.bias

    k1, k2 = op.kernel.shape
    s = op.stride
    o1, o2 = op.output_shape(x.shape)
    pad1 = max(0, (o1 - 1) * s + k1 - x.shape[0])
    pad2 = max(0, (o2 - 1) * s + k2 - x.shape[1])
    xp = np.pad(x, ((0, pad1), (0, pad2)))
    win = sliding_window_view(xp, (k1, k2))[::s, ::s]
    return np.einsum("ijkl,kl->ij", win, op.kernel, optimize=True) + op.bias


def apply_adjoint(g, op: ForwardOperator, input_shape=None) -> np.ndarray:
    """Exact adjoint of the linear part of :func:`apply_forward`.

    ``input_shape`` is the high-resolution shape to scatter back onto;
    it defaults to ``g.shape * stride``.
    """
    g = as_image(g)
    if input_shape is None:
        input_shape = (g.shape[0] * op.stride, g.shape[1] * op.stride)
    if op.output_shape(input_shape) != g.shape:
        raise DimensionError(
            f"adjoint input {g.shape} does not match operator output "
            f"{op.output_shape(input_shape)} for high-res shape {input_shape}"
        )
    if op.mode == FOURIER:
        up = _fourier_upsample_adjoint(g, input_shape)
        return _circular_conv(up, op.kernel, conjugate=True)

    s = op.stride
    d1, d2 = input_shape
    out = np.zeros(input_shape)
    for u in range(op.kernel.shape[0]):
        c1 = min(g.shape[0], (d1 - 1 - u) // s + 1) if u < d1 else 0
        if c1 <= 0:
            continue
        for v in range(op.kernel.shape[1]):
            c2 = min(g.shape[1], (d2 - 1 - v) // s + 1) if v < d2 else 0
            if c2 <= 0:
                continue
            out[u : u + c1 * s : s, v : v + c2 * s : s] += op.kernel[u, v] * g[:c1, :c2]
    return out


def add_noise(y, nm: NoiseModel) -> np.ndarray:
    """Add seeded white Gaussian noise of standard deviation sigma."""
    y = as_image(y)
    if nm.sigma == 0:
        return y.copy()
    rng = np.random.default_rng(nm.seed)
    return y + nm.sigma * rng.standard_normal(y.shape)


def estimate_operator(x_ref, y_ref, kernel_size: int):
    """Identify blur kernel and bias from one registered image pair.

    Assumes the circular Fourier model ``y = S(k (*) x + b)`` with the
    kernel supported on the top-left ``kernel_size`` square of the padded
    kernel plane.  The spectral quotient is stabilized by raising
    ``|D(x_hat)|`` by ``QUOTIENT_STABILIZER`` at fixed phase; the bias is
    read off the out-of-support mean of the back-transformed estimate and
    the kernel is reprojected to the real ``kernel_size`` square.

    Returns ``(kernel, bias)``.
    """
    x_ref = as_image(x_ref)
    y_ref = as_image(y_ref)
    m1, m2 = x_ref.shape
    n1, n2 = y_ref.shape
    if n1 > m1 or n2 > m2:
        raise DimensionError(
            f"low-res image {y_ref.shape} larger than high-res {x_ref.shape}"
        )
    if kernel_size < 1 or kernel_size > min(n1, n2):
        raise DimensionError(
            f"kernel size {kernel_size} not representable on the "
            f"low-res grid {y_ref.shape}"
        )
    if kernel_size >= min(m1, m2):
        raise DimensionError("kernel support leaves no out-of-support pixels")

    xh = np.fft.fft2(x_ref)
    if abs(xh[0, 0]) == 0:
        raise EstimationError("high-res image has zero mean (degenerate spectrum)")
    yh = np.fft.fft2(y_ref)

    dxh = _spectral_select(_spectral_select(xh, n1, 0), n2, 1)
    mag = np.abs(dxh)
    phase = np.where(mag > 0, dxh / np.where(mag > 0, mag, 1.0), 1.0)
    quotient = yh / ((mag + QUOTIENT_STABILIZER) * phase)

    scale = (m1 * m2) / (n1 * n2)
    khat = scale * _spectral_embed(_spectral_embed(quotient, m1, 0), m2, 1)
    u = np.fft.ifft2(khat).real

    support = np.zeros(x_ref.shape, dtype=bool)
    support[:kernel_size, :kernel_size] = True
    level = u[~support].mean()
    # the out-of-support plateau equals bias / DC(x); DC(x) = sum of x
    bias = level * xh[0, 0].real
    kernel = u[:kernel_size, :kernel_size] - level
    return kernel, float(bias)
