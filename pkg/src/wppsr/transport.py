"""Semi-discrete squared Wasserstein-2 distance between patch distributions.

The regularizer compares two uniform empirical measures through the dual
(Kantorovich) formulation

    W2^2(mu, nu) = max_psi  (1/N) sum_j psi^c(p_j) + (1/Nt) sum_k psi_k,

where ``psi`` carries one value per reference patch and the c-transform
is ``psi^c(p) = min_k (||p - q_k||^2 - psi_k)``.  The maximizer is found
by (stochastic) gradient ascent on ``psi``; an exact linear-programming
solver on small instances serves as the independent oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment, linprog

from .errors import CapacityError, DimensionError
from .images import PatchDistribution, as_image, extract_patches

# Exact-solver guard: N * Nt may not exceed this.
LP_CAPACITY = 1_000_000

# The ascent step size is halved every this many steps.  Runs of at most
# this length therefore use a constant step; longer runs anneal the step
# geometrically, which lets the iterate settle inside the optimal cell of
# the piecewise-linear dual (a constant step oscillates around it forever).
STEP_HALVING_INTERVAL = 25

# Dense cost blocks are capped at this many entries (~134 MB of float64).
_CHUNK_ELEMENTS = 2**24


@dataclass(frozen=True)
class DualAscentConfig:
    """Settings for the stochastic ascent on the dual potential.

    ``minibatch`` is the number of source patches sampled per step;
    0 means full batch.  ``steps``/``step_size`` default to the training
    protocol of 20 iterations at rate 1.
    """

    steps: int = 20
    step_size: float = 1.0
    minibatch: int = 10000
    seed: int = 0

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if not self.step_size > 0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")
        if self.minibatch < 0:
            raise ValueError(f"minibatch must be >= 0, got {self.minibatch}")


def _check_pair(src: PatchDistribution, ref: PatchDistribution):
    if src.patch_shape != ref.patch_shape:
        raise DimensionError(
            f"patch shapes differ: {src.patch_shape} vs {ref.patch_shape}"
        )


def _check_psi(psi, ref: PatchDistribution) -> np.ndarray:
    psi = np.asarray(psi, dtype=np.float64)
    if psi.ndim != 1 or psi.shape[0] != ref.count:
        raise DimensionError(
            f"dual potential of length {psi.shape} does not match "
            f"{ref.count} reference patches"
        )
    return psi


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise squared euclidean distances, clamped at zero."""
    d = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * (a @ b.T)
    np.maximum(d, 0.0, out=d)
    return d


def _ctransform_pass(src_rows, ref_rows, psi, ref_sq=None):
    """c-transform values and minimizing indices for a block of patches.

    Returns ``(values, kappa)`` with ``values[j] = min_k ||p_j - q_k||^2
    - psi_k`` and ``kappa[j]`` the lowest minimizing index.  Chunked so
    the dense cost block never exceeds a few hundred MB.
    """
    n = src_rows.shape[0]
    if ref_sq is None:
        ref_sq = (ref_rows * ref_rows).sum(1)
    offset = ref_sq - psi
    vals = np.empty(n)
    kappa = np.empty(n, dtype=np.int64)
    chunk = max(64, _CHUNK_ELEMENTS // max(1, ref_rows.shape[0]))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        block = src_rows[lo:hi]
        cost = block @ ref_rows.T
        cost *= -2.0
        cost += offset[None, :]
        k = np.argmin(cost, axis=1)
        kappa[lo:hi] = k
        rows = np.arange(hi - lo)
        vals[lo:hi] = cost[rows, k] + (block * block).sum(1)
    return vals, kappa


def c_transform(psi, p, ref: PatchDistribution):
    """Evaluate ``psi^c`` at a single patch.

    Returns ``(value, kappa)`` with the lowest minimizing reference index
    as the deterministic tie-break.
    """
    psi = _check_psi(psi, ref)
    p = np.asarray(p, dtype=np.float64).ravel()
    if p.shape[0] != ref.patches.shape[1]:
        raise DimensionError(
            f"patch of length {p.shape[0]} does not match reference "
            f"patch length {ref.patches.shape[1]}"
        )
    vals, kappa = _ctransform_pass(p[None, :], ref.patches, psi)
    return float(vals[0]), int(kappa[0])


def dual_objective(psi, src: PatchDistribution, ref: PatchDistribution) -> float:
    """Dual functional F(psi): mean c-transform plus mean potential."""
    _check_pair(src, ref)
    psi = _check_psi(psi, ref)
    vals, _ = _ctransform_pass(src.patches, ref.patches, psi)
    return float(vals.mean() + psi.mean())


def ascend_dual(
    src: PatchDistribution,
    ref: PatchDistribution,
    psi0,
    cfg: DualAscentConfig,
) -> np.ndarray:
    """Run ``cfg.steps`` (stochastic) supergradient steps on F.

    Per step the gradient estimate uses a fresh sample of source patches
    (all of them when ``minibatch`` is 0 or at least the source count):

        dF/dpsi_k = 1/Nt - #{j in batch : kappa_psi(j) = k} / batch_size.

    The step size is annealed by ``0.5 ** (t // STEP_HALVING_INTERVAL)``;
    for runs of at most 25 steps this is a constant step.  Deterministic
    for a fixed seed.
    """
    _check_pair(src, ref)
    psi = _check_psi(psi0, ref).copy()
    n, nt = src.count, ref.count
    if cfg.steps == 0:
        return psi
    rng = np.random.default_rng(cfg.seed)
    full = cfg.minibatch == 0 or cfg.minibatch >= n
    ref_sq = (ref.patches * ref.patches).sum(1)
    for t in range(cfg.steps):
        if full:
            rows = src.patches
            m = n
        else:
            idx = rng.choice(n, size=cfg.minibatch, replace=False)
            rows = src.patches[idx]
            m = cfg.minibatch
        _, kappa = _ctransform_pass(rows, ref.patches, psi, ref_sq)
        hist = np.bincount(kappa, minlength=nt)
        step = cfg.step_size * 0.5 ** (t // STEP_HALVING_INTERVAL)
        psi += step * (1.0 / nt - hist / m)
    return psi


def w2_semidual(
    src: PatchDistribution,
    ref: PatchDistribution,
    cfg: DualAscentConfig,
    psi0=None,
):
    """Ascended dual value of W2^2 together with the induced assignment.

    Returns ``(value, psi, kappa)`` where ``value`` is the dual objective
    at the returned potential and ``kappa[j]`` is the c-transform argmin
    of source patch j.  ``psi0`` (default zeros) enables warm starts.
    """
    _check_pair(src, ref)
    if psi0 is None:
        psi0 = np.zeros(ref.count)
    psi = ascend_dual(src, ref, psi0, cfg)
    vals, kappa = _ctransform_pass(src.patches, ref.patches, psi)
    return float(vals.mean() + psi.mean()), psi, kappa


def w2_exact_lp(src: PatchDistribution, ref: PatchDistribution):
    """Exact W2^2 between two uniform patch measures, with optimal plan.

    Solves the assignment problem when the counts agree and the dense
    transportation LP otherwise.  Intended as a test oracle on small
    instances; guarded by ``LP_CAPACITY``.

    Returns ``(value, plan)`` where ``plan`` has row sums 1/N and column
    sums 1/Nt.
    """
    _check_pair(src, ref)
    n, nt = src.count, ref.count
    if n * nt > LP_CAPACITY:
        raise CapacityError(
            f"instance of size {n} x {nt} exceeds the exact-solver cap "
            f"of {LP_CAPACITY} entries"
        )
    cost = _sq_dists(src.patches, ref.patches)
    if n == nt:
        rows, cols = linear_sum_assignment(cost)
        plan = np.zeros((n, nt))
        plan[rows, cols] = 1.0 / n
        return float(cost[rows, cols].sum() / n), plan

    # Transportation LP on the dense cost matrix.
    data = np.ones(2 * n * nt)
    row_ids = np.concatenate(
        [np.repeat(np.arange(n), nt), n + np.tile(np.arange(nt), n)]
    )
    col_ids = np.concatenate([np.arange(n * nt), np.arange(n * nt)])
    a_eq = sp.csr_matrix((data, (row_ids, col_ids)), shape=(n + nt, n * nt))
    b_eq = np.concatenate([np.full(n, 1.0 / n), np.full(nt, 1.0 / nt)])
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise CapacityError(f"transportation LP failed: {res.message}")
    plan = res.x.reshape(n, nt)
    return float(res.fun), plan


def _overlap_add(rows: np.ndarray, d1: int, d2: int, s1: int, s2: int) -> np.ndarray:
    """Adjoint of dense patch extraction: scatter patch rows back to pixels."""
    n1, n2 = d1 - s1 + 1, d2 - s2 + 1
    r = rows.reshape(n2, n1, s2, s1)
    out = np.zeros((d1, d2))
    for l in range(s2):
        for k in range(s1):
            out[k : k + n1, l : l + n2] += r[:, :, l, k].T
    return out


def w2_gradient_image(x, ref: PatchDistribution, assign, s1: int, s2: int):
    """Pixel gradient of W2^2(mu_x, ref) at a fixed assignment.

    Scatter-adds ``(2/N) * (P_j(x) - ref[assign[j]])`` back onto the
    pixel positions of patch j (the adjoint of extraction).  Valid as the
    gradient wherever the minimizing assignment is unique.
    """
    x = as_image(x)
    src = extract_patches(x, s1, s2)
    _check_pair(src, ref)
    assign = np.asarray(assign)
    if assign.ndim != 1 or assign.shape[0] != src.count:
        raise DimensionError(
            f"assignment of length {assign.shape} is stale for {src.count} patches"
        )
    if assign.min() < 0 or assign.max() >= ref.count:
        raise DimensionError("assignment indexes outside the reference distribution")
    resid = (src.patches - ref.patches[assign]) * (2.0 / src.count)
    d1, d2 = x.shape
    return _overlap_add(resid, d1, d2, s1, s2)
