"""Image, kernel and operator persistence.

Images travel as 8-bit grayscale PNG or binary PGM (P5, maxval 255):
loading maps byte v to v/255 exactly, saving rounds clamp(t, 0, 1)*255
half-up, so byte-representable values round-trip bit-exactly.  Operator
kernels reuse the image formats through an affine byte codec whose range
is recorded in a plain-text sidecar next to bias, stride and mode.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import ConfigError
from .images import as_image
from .operators import FOURIER, STRIDED, ForwardOperator


def load_image(path) -> np.ndarray:
    """Load an 8-bit grayscale PNG or binary PGM as intensities in [0, 1]."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".png":
        with PILImage.open(path) as im:
            if im.mode != "L":
                raise ValueError(
                    f"{path}: expected 8-bit grayscale PNG, got mode {im.mode!r}"
                )
            arr = np.asarray(im, dtype=np.uint8)
    elif suffix == ".pgm":
        arr = _read_pgm(path)
    else:
        raise ValueError(f"{path}: unsupported image format {suffix!r}")
    return arr.astype(np.float64) / 255.0


def save_image(img, path):
    """Save intensities to PNG or PGM, clamping to [0, 1], rounding half-up."""
    img = as_image(img)
    path = Path(path)
    data = np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    suffix = path.suffix.lower()
    if suffix == ".png":
        PILImage.fromarray(data, mode="L").save(path)
    elif suffix == ".pgm":
        with open(path, "wb") as fh:
            fh.write(f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode("ascii"))
            fh.write(data.tobytes())
    else:
        raise ValueError(f"{path}: unsupported image format {suffix!r}")


def _read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PGM header")
        fields.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 is supported, got {maxval}")
    body = raw[pos : pos + width * height]
    if len(body) != width * height:
        raise ValueError(f"{path}: truncated PGM pixel data")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width)


def save_operator(op: ForwardOperator, out_dir, stem: str = "op"):
    """Write kernel image + sidecar; returns the written paths.

    The kernel is stored as an image of (k - kmin)/(kmax - kmin) and the
    affine range goes into the sidecar, since kernels are not confined to
    [0, 1].
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    kmin = float(op.kernel.min())
    kmax = float(op.kernel.max())
    span = kmax - kmin
    coded = (op.kernel - kmin) / span if span > 0 else np.zeros_like(op.kernel)
    kernel_path = out_dir / f"{stem}_kernel.png"
    save_image(coded, kernel_path)
    meta_path = out_dir / f"{stem}_meta.txt"
    lines = [
        f"mode = {op.mode}",
        f"stride = {op.stride}",
        f"bias = {op.bias!r}",
        f"kernel_file = {kernel_path.name}",
        f"kernel_min = {kmin!r}",
        f"kernel_max = {kmax!r}",
    ]
    if op.mode == FOURIER:
        lines.append(f"target_h = {op.target_shape[0]}")
        lines.append(f"target_w = {op.target_shape[1]}")
    meta_path.write_text("\n".join(lines) + "\n")
    return kernel_path, meta_path


def load_operator(meta_path) -> ForwardOperator:
    """Load an operator from its sidecar (kernel image resolved relatively)."""
    meta_path = Path(meta_path)
    fields = {}
    for lineno, line in enumerate(meta_path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{meta_path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    try:
        mode = fields["mode"]
        stride = int(fields["stride"])
        bias = float(fields["bias"])
        kmin = float(fields["kernel_min"])
        kmax = float(fields["kernel_max"])
        kernel_file = fields["kernel_file"]
    except KeyError as exc:
        raise ConfigError(f"{meta_path}: missing operator field {exc}") from exc
    coded = load_image(meta_path.parent / kernel_file)
    kernel = coded * (kmax - kmin) + kmin
    if mode == FOURIER:
        try:
            target = (int(fields["target_h"]), int(fields["target_w"]))
        except KeyError as exc:
            raise ConfigError(f"{meta_path}: fourier operator missing {exc}") from exc
        return ForwardOperator(kernel=kernel, bias=bias, stride=stride,
                               mode=FOURIER, target_shape=target)
    if mode != STRIDED:
        raise ConfigError(f"{meta_path}: unknown operator mode {mode!r}")
    return ForwardOperator(kernel=kernel, bias=bias, stride=stride, mode=STRIDED)
