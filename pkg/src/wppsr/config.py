"""Flat key=value run configuration: parsing, schemas, validation.

Config files hold one ``key = value`` pair per line with ``#`` comments.
Every command owns a schema; unknown keys are rejected and numeric keys
are validated against their preconditions with the key name in the error.
"""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigError

REQUIRED = object()


def _int(lo=None, hi=None):
    def parse(text):
        try:
            v = int(text)
        except ValueError:
            raise ConfigError(f"expected an integer, got {text!r}")
        if lo is not None and v < lo:
            raise ConfigError(f"must be >= {lo}, got {v}")
        if hi is not None and v > hi:
            raise ConfigError(f"must be <= {hi}, got {v}")
        return v

    return parse


def _float(lo=None, strict_lo=None):
    def parse(text):
        try:
            v = float(text)
        except ValueError:
            raise ConfigError(f"expected a number, got {text!r}")
        if lo is not None and v < lo:
            raise ConfigError(f"must be >= {lo}, got {v}")
        if strict_lo is not None and v <= strict_lo:
            raise ConfigError(f"must be > {strict_lo}, got {v}")
        return v

    return parse


def _str(choices=None):
    def parse(text):
        if choices is not None and text not in choices:
            raise ConfigError(f"must be one of {sorted(choices)}, got {text!r}")
        return text

    return parse


_DUAL_KEYS = {
    "dual_steps": (_int(lo=0), 20),
    "dual_step_size": (_float(strict_lo=0.0), 1.0),
    "dual_minibatch": (_int(lo=0), 10000),
    "dual_seed": (_int(), 0),
}

SCHEMAS = {
    "gen-data": {
        "out_dir": (_str(), REQUIRED),
        "n_images": (_int(lo=1), 64),
        "hr_size": (_int(lo=8), 100),
        "holdout_size": (_int(lo=8), 128),
        "ref_size": (_int(lo=8), 128),
        "texture_seed": (_int(), 0),
        "texture_cell": (_float(strict_lo=1.0), 24.0),
        "source_image": (_str(), ""),
        "op_mode": (_str(choices={"strided", "fourier"}), "strided"),
        "stride": (_int(lo=1), 4),
        "kernel_size": (_int(lo=1), 16),
        "kernel_sigma": (_float(strict_lo=0.0), 2.0),
        "bias": (_float(), 0.0),
        "noise_sigma": (_float(lo=0.0), 0.01),
        "noise_seed": (_int(), 0),
    },
    "estimate-op": {
        "hr": (_str(), REQUIRED),
        "lr": (_str(), REQUIRED),
        "out_dir": (_str(), REQUIRED),
        "kernel_size": (_int(lo=1), 15),
        "true_op": (_str(), ""),
    },
    "reconstruct": {
        "lr": (_str(), REQUIRED),
        "ref": (_str(), REQUIRED),
        "op": (_str(), REQUIRED),
        "out_dir": (_str(), REQUIRED),
        "lam": (_float(lo=0.0), 12.5),
        "patch_size": (_int(lo=1), 6),
        "outer_iterations": (_int(lo=0), 200),
        "step_size": (_float(strict_lo=0.0), 0.01),
        "ref_subsample": (_int(lo=1), 10000),
        "subsample_seed": (_int(), 0),
        **_DUAL_KEYS,
    },
    "train": {
        "data_dir": (_str(), REQUIRED),
        "ref": (_str(), REQUIRED),
        "op": (_str(), REQUIRED),
        "out_dir": (_str(), REQUIRED),
        "predict_lr": (_str(), ""),
        "lam": (_float(lo=0.0), 12.5),
        "patch_size": (_int(lo=1), 6),
        "batch_size": (_int(lo=1), 25),
        "epochs": (_int(lo=0), 20),
        "learning_rate": (_float(strict_lo=0.0), 1e-4),
        "depth": (_int(lo=1), 8),
        "channels": (_int(lo=1), 32),
        "ref_subsample": (_int(lo=1), 10000),
        "subsample_seed": (_int(), 0),
        "seed": (_int(), 0),
        **_DUAL_KEYS,
    },
    "eval": {
        "hr": (_str(), REQUIRED),
        "inputs": (_str(), REQUIRED),
        "out_dir": (_str(), REQUIRED),
        "crop": (_int(lo=0), 40),
    },
    "w2": {
        "image_a": (_str(), REQUIRED),
        "image_b": (_str(), REQUIRED),
        "patch_size": (_int(lo=1), 6),
        "subsample": (_int(lo=0), 0),
        "subsample_seed": (_int(), 0),
        "out_csv": (_str(), ""),
        **_DUAL_KEYS,
    },
}


def parse_config_file(path) -> dict:
    """Read a flat key=value file into a string dict."""
    path = Path(path)
    values = {}
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


def resolve_config(command: str, file_values: dict, overrides: dict) -> dict:
    """Merge file values and CLI overrides against the command schema.

    Overrides win.  Unknown keys are rejected; missing required keys and
    precondition violations raise :class:`ConfigError` naming the key.
    """
    schema = SCHEMAS[command]
    merged = dict(file_values)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    unknown = set(merged) - set(schema)
    if unknown:
        raise ConfigError(f"unknown config key(s) for {command}: {sorted(unknown)}")
    out = {}
    for key, (parse, default) in schema.items():
        if key in merged:
            try:
                out[key] = parse(str(merged[key]))
            except ConfigError as exc:
                raise ConfigError(f"config key {key!r}: {exc}") from exc
        elif default is REQUIRED:
            raise ConfigError(f"config key {key!r} is required for {command}")
        else:
            out[key] = default
    return out
