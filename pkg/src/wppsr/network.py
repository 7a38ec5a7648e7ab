"""A small convolutional superresolver with exact reverse-mode gradients.

The network adds a learned residual to a bicubic upsampling of its
input: L zero-padded 3x3 convolution layers with rectifier activations
between them and a linear last layer.  Gradients are hand-written (im2col
matmuls), so they can be verified against finite differences exactly.
Training minimizes the batch-merged energy: mean data fidelity through
the forward operator plus lambda times W2^2 between the merged patch
distribution of the batch outputs and the reference patches.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError
from .images import (
    PatchDistribution,
    as_image,
    bicubic_upsample,
    extract_patches,
    merge_distributions,
    subsample_distribution,
)
from .operators import ForwardOperator, apply_adjoint, apply_forward
from .transport import DualAscentConfig, w2_gradient_image, w2_semidual


@dataclass
class NetworkParams:
    """Convolution weights/biases of the residual branch plus the factor.

    ``weights[l]`` has shape (c_out, c_in, 3, 3); the chain must start
    and end with one channel.  Zero weights make the network equal to
    plain bicubic upsampling.
    """

    weights: list
    biases: list
    factor: int

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias vector per conv layer")
        c_in = 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            w = np.asarray(w, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            if w.ndim != 4 or w.shape[2:] != (3, 3) or w.shape[1] != c_in:
                raise DimensionError(f"layer {l}: weight shape {w.shape} breaks the chain")
            if b.shape != (w.shape[0],):
                raise DimensionError(f"layer {l}: bias shape {b.shape} mismatches")
            self.weights[l] = w
            self.biases[l] = b
            c_in = w.shape[0]
        if c_in != 1:
            raise DimensionError("last layer must output a single channel")
        if self.factor < 1:
            raise ValueError(f"factor must be >= 1, got {self.factor}")

    @property
    def depth(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class TrainConfig:
    """Training settings for the superresolver."""

    lam: float = 12.5
    batch_size: int = 25
    epochs: int = 20
    learning_rate: float = 1e-4
    patch_size: tuple[int, int] = (6, 6)
    depth: int = 8
    channels: int = 32
    reference_subsample: int = 10000
    subsample_seed: int = 0
    seed: int = 0
    dual: DualAscentConfig = field(default_factory=DualAscentConfig)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")


def init_network(depth, channels, factor, seed) -> NetworkParams:
    """He-style fan-in init with a zeroed last layer.

    The zero last layer makes the initial network exactly bicubic
    upsampling, so training starts from the classical baseline.
    """
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    rng = np.random.default_rng(seed)
    dims = [1] + [channels] * (depth - 1) + [1]
    weights, biases = [], []
    for l in range(depth):
        c_in, c_out = dims[l], dims[l + 1]
        if l == depth - 1:
            w = np.zeros((c_out, c_in, 3, 3))
        else:
            w = rng.standard_normal((c_out, c_in, 3, 3)) * np.sqrt(2.0 / (9 * c_in))
        weights.append(w)
        biases.append(np.zeros(c_out))
    return NetworkParams(weights, biases, factor)


def _im2col(x: np.ndarray) -> np.ndarray:
    """(C, H, W) -> (H*W, C*9) with zero padding 1."""
    c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))  # (C, H, W, 3, 3)
    return win.transpose(1, 2, 0, 3, 4).reshape(h * w, c * 9)


def _col2im(cols: np.ndarray, c: int, h: int, w: int) -> np.ndarray:
    """Adjoint of :func:`_im2col`."""
    r = cols.reshape(h, w, c, 3, 3)
    padded = np.zeros((c, h + 2, w + 2))
    for u in range(3):
        for v in range(3):
            padded[:, u : u + h, v : v + w] += r[:, :, :, u, v].transpose(2, 0, 1)
    return padded[:, 1 : h + 1, 1 : w + 1]


def _forward_cached(theta: NetworkParams, y: np.ndarray):
    """Forward pass returning the output and per-layer caches."""
    up = bicubic_upsample(y, theta.factor)
    h, w = up.shape
    act = up[None]
    cols_cache, preact_cache = [], []
    last = theta.depth - 1
    for l, (wt, b) in enumerate(zip(theta.weights, theta.biases)):
        cols = _im2col(act)
        z = cols @ wt.reshape(wt.shape[0], -1).T + b[None, :]
        z = z.T.reshape(wt.shape[0], h, w)
        cols_cache.append(cols)
        preact_cache.append(z)
        act = z if l == last else np.maximum(z, 0.0)
    return up + act[0], up, cols_cache, preact_cache


def forward_net(theta: NetworkParams, y) -> np.ndarray:
    """Superresolve: bicubic upsampling plus the learned residual."""
    y = as_image(y)
    out, _, _, _ = _forward_cached(theta, y)
    return out


def backward_net(theta: NetworkParams, y, upstream):
    """Exact gradients of <forward_net(theta, y), upstream> in theta.

    Returns ``(weight_grads, bias_grads)`` matching the parameter lists.
    """
    y = as_image(y)
    upstream = as_image(upstream)
    _, up, cols_cache, preact_cache = _forward_cached(theta, y)
    if upstream.shape != up.shape:
        raise DimensionError(
            f"upstream shape {upstream.shape} does not match output {up.shape}"
        )
    h, w = up.shape
    gw = [None] * theta.depth
    gb = [None] * theta.depth
    g = upstream[None]  # gradient w.r.t. the pre-activation of the last layer
    for l in range(theta.depth - 1, -1, -1):
        if l < theta.depth - 1:
            g = g * (preact_cache[l] > 0)
        c_out = theta.weights[l].shape[0]
        g_mat = g.reshape(c_out, h * w).T  # (H*W, C_out)
        gw[l] = (g_mat.T @ cols_cache[l]).reshape(theta.weights[l].shape)
        gb[l] = g_mat.sum(0)
        if l > 0:
            gcols = g_mat @ theta.weights[l].reshape(c_out, -1)
            g = _col2im(gcols, theta.weights[l].shape[1], h, w)
    return gw, gb


def merged_batch_loss(
    theta: NetworkParams,
    batch,
    op: ForwardOperator,
    ref: PatchDistribution,
    cfg: TrainConfig,
    psi_warm=None,
):
    """Batch loss and its exact parameter gradients.

    Loss = (1/b) sum_i ||f(G(y_i)) - y_i||^2
         + lam * W2^2(merged patch distribution of the G(y_i), ref).

    The transport dual is ascended from ``psi_warm`` and returned, so
    per-batch potentials can be carried across epochs.

    Returns ``(loss, (weight_grads, bias_grads), psi)``.
    """
    batch = [as_image(y) for y in batch]
    if not batch:
        raise ValueError("batch must not be empty")
    b = len(batch)
    s1, s2 = cfg.patch_size

    outs, resids, dists = [], [], []
    fidelity = 0.0
    for y in batch:
        x = forward_net(theta, y)
        r = apply_forward(x, op) - y
        fidelity += float((r**2).sum()) / b
        outs.append(x)
        resids.append(r)
        dists.append(extract_patches(x, s1, s2))

    if cfg.lam > 0:
        merged = merge_distributions(dists)
        wpp, psi, kappa = w2_semidual(merged, ref, cfg.dual, psi0=psi_warm)
    else:
        wpp, psi, kappa = 0.0, psi_warm, None
    loss = fidelity + cfg.lam * wpp

    gw_total = [np.zeros_like(w) for w in theta.weights]
    gb_total = [np.zeros_like(bb) for bb in theta.biases]
    offset = 0
    for i, (x, r, dist) in enumerate(zip(outs, resids, dists)):
        upstream = (2.0 / b) * apply_adjoint(r, op, x.shape)
        if cfg.lam > 0:
            kap_i = kappa[offset : offset + dist.count]
            offset += dist.count
            # per-patch weight in the merged measure is 1/(b*N_i)
            upstream += (cfg.lam / b) * w2_gradient_image(x, ref, kap_i, s1, s2)
        gw, gb = backward_net(theta, batch[i], upstream)
        for l in range(theta.depth):
            gw_total[l] += gw[l]
            gb_total[l] += gb[l]
    return loss, (gw_total, gb_total), psi


def train(dataset, op: ForwardOperator, ref: PatchDistribution, cfg: TrainConfig):
    """Train the superresolver on low-resolution images.

    The dataset is split into fixed disjoint batches in order; every
    epoch sweeps them once with Adam updates.  Each batch keeps its own
    dual potential, warm-started across epochs.  Deterministic for a
    fixed config.

    Returns ``(theta, trace)`` with one mean loss per epoch.
    """
    dataset = [as_image(y) for y in dataset]
    if not dataset:
        raise ValueError("dataset must not be empty")
    ref = subsample_distribution(ref, cfg.reference_subsample, cfg.subsample_seed)
    theta = init_network(cfg.depth, cfg.channels, op.stride, cfg.seed)

    batches = [
        dataset[i : i + cfg.batch_size] for i in range(0, len(dataset), cfg.batch_size)
    ]
    psis = [None] * len(batches)
    mw = [np.zeros_like(w) for w in theta.weights]
    vw = [np.zeros_like(w) for w in theta.weights]
    mb = [np.zeros_like(b) for b in theta.biases]
    vb = [np.zeros_like(b) for b in theta.biases]
    eps = 1e-8
    step = 0
    trace = []
    for epoch in range(cfg.epochs):
        epoch_losses = []
        for j, batch in enumerate(batches):
            dual_j = replace(cfg.dual, seed=cfg.dual.seed + epoch * len(batches) + j)
            cfg_j = replace(cfg, dual=dual_j)
            loss, (gw, gb), psis[j] = merged_batch_loss(
                theta, batch, op, ref, cfg_j, psi_warm=psis[j]
            )
            epoch_losses.append(loss)
            step += 1
            b1c = 1 - 0.9**step
            b2c = 1 - 0.999**step
            for l in range(theta.depth):
                mw[l] = 0.9 * mw[l] + 0.1 * gw[l]
                vw[l] = 0.999 * vw[l] + 0.001 * gw[l] ** 2
                theta.weights[l] = theta.weights[l] - cfg.learning_rate * (
                    mw[l] / b1c
                ) / (np.sqrt(vw[l] / b2c) + eps)
                mb[l] = 0.9 * mb[l] + 0.1 * gb[l]
                vb[l] = 0.999 * vb[l] + 0.001 * gb[l] ** 2
                theta.biases[l] = theta.biases[l] - cfg.learning_rate * (
                    mb[l] / b1c
                ) / (np.sqrt(vb[l] / b2c) + eps)
        trace.append(float(np.mean(epoch_losses)))
    return theta, trace


def save_params(theta: NetworkParams, path):
    """Serialize network parameters with an architecture header."""
    arrays = {"version": np.array(1), "factor": np.array(theta.factor),
              "depth": np.array(theta.depth)}
    for l in range(theta.depth):
        arrays[f"w{l}"] = theta.weights[l]
        arrays[f"b{l}"] = theta.biases[l]
    np.savez(path, **arrays)


def load_params(path) -> NetworkParams:
    """Load network parameters written by :func:`save_params`."""
    data = np.load(path)
    if int(data["version"]) != 1:
        raise ValueError(f"unsupported parameter dump version {int(data['version'])}")
    depth = int(data["depth"])
    weights = [data[f"w{l}"] for l in range(depth)]
    biases = [data[f"b{l}"] for l in range(depth)]
    return NetworkParams(weights, biases, int(data["factor"]))
