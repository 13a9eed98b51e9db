"""The four local training loss terms and their analytic gradients.

All gradients are closed-form and validated against central finite
differences (see tests and the `gradcheck` CLI command). Embeddings are
L2-normalized before the alignment, uniformity, and dimension-scaling
terms; the distillation term sees raw representations and embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import model as mdl
from .numerics import DEFAULT_EPS, ParameterError, ShapeError, softmax_row

KL_FLOOR = 1e-12


@dataclass
class ScalingVector:
    """Per-client dimension scaling: alpha on the client's dimensions,
    1.0 elsewhere."""
    values: np.ndarray
    scaled_dims: frozenset[int]
    alpha: float


@dataclass
class LossWeights:
    beta: float = 1.0          # uniformity weight
    gamma: float = 1.0         # dimension-scaling weight
    delta: float = 0.1         # distillation weight
    temperature: float = 2.0   # Gaussian-potential temperature
    pd_mode: str = "KL"        # "KL" or "MSE"

    def __post_init__(self):
        if self.temperature <= 0:
            raise ParameterError(f"temperature must be positive, got {self.temperature}")
        if self.pd_mode not in ("KL", "MSE"):
            raise ParameterError(f"pd_mode must be KL or MSE, got {self.pd_mode!r}")


@dataclass
class LossReport:
    align: float
    uniform: float
    dsr: float
    distill: float
    total: float

    def as_dict(self) -> dict:
        return {"align": self.align, "uniform": self.uniform,
                "dsr": self.dsr, "distill": self.distill, "total": self.total}


def build_scaling_vector(d: int, scaled_dims, alpha: float) -> ScalingVector:
    dims = frozenset(int(i) for i in scaled_dims)
    if alpha <= 0:
        raise ParameterError(f"alpha must be positive, got {alpha}")
    if any(i < 0 or i >= d for i in dims):
        raise ParameterError(f"scaled dims {sorted(dims)} out of range for d={d}")
    values = np.ones(d)
    values[list(dims)] = alpha
    return ScalingVector(values, dims, float(alpha))


def _check_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes {a.shape} and {b.shape} differ")


def alignment_loss(z: np.ndarray, z_plus: np.ndarray):
    """Mean squared distance between positive-pair embeddings.

    Returns (value, grad wrt z, grad wrt z_plus).
    """
    z = np.asarray(z, dtype=np.float64)
    z_plus = np.asarray(z_plus, dtype=np.float64)
    _check_same_shape(z, z_plus, "alignment_loss")
    n = z.shape[0]
    diff = z - z_plus
    value = float(np.sum(diff * diff) / n)
    grad = 2.0 * diff / n
    return value, grad, -grad


def uniformity_loss(z: np.ndarray, t: float):
    """Log of the mean Gaussian potential over distinct unordered row
    pairs; nonpositive for unit-norm rows, minimized when the rows spread
    apart. Returns (value, grad wrt z)."""
    z = np.asarray(z, dtype=np.float64)
    n = z.shape[0]
    if n < 2:
        raise ParameterError(f"uniformity needs at least 2 rows, got {n}")
    # Pairwise squared distances via the Gram matrix.
    sq = np.sum(z * z, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (z @ z.T)
    np.fill_diagonal(d2, 0.0)
    d2 = np.maximum(d2, 0.0)
    w = np.exp(-t * d2)
    np.fill_diagonal(w, 0.0)
    npairs = n * (n - 1) / 2
    mean_pot = float(w.sum() / 2.0 / npairs)
    value = np.log(mean_pot)
    # d(log M)/dz_i = -(2t / (M * npairs)) * sum_j w_ij (z_i - z_j)
    row_w = w.sum(axis=1)
    grad = (-2.0 * t / (mean_pot * npairs)) * (row_w[:, None] * z - w @ z)
    return float(value), grad


def _dsr_targets(z: np.ndarray, d_k: ScalingVector, normalize_target: bool) -> np.ndarray:
    scaled = z * d_k.values[None, :]
    if not normalize_target:
        return scaled
    norms = np.linalg.norm(scaled, axis=1, keepdims=True)
    return scaled / np.maximum(norms, DEFAULT_EPS)


def dsr_loss(z: np.ndarray, d_k: ScalingVector, normalize_target: bool = True,
             target: np.ndarray | None = None):
    """Mean squared distance from each embedding to its dimension-scaled
    copy; the scaled copy is a constant target (no gradient through it).
    Pass a precomputed ``target`` to evaluate against a frozen copy, e.g.
    when finite-differencing the stop-gradient semantics.

    Returns (value, grad wrt z).
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape[1] != d_k.values.shape[0]:
        raise ShapeError(
            f"embedding dim {z.shape[1]} != scaling vector length {d_k.values.shape[0]}")
    n = z.shape[0]
    if target is None:
        target = _dsr_targets(z, d_k, normalize_target)
    diff = z - target
    value = float(np.sum(diff * diff) / n)
    grad = 2.0 * diff / n
    return value, grad


def pd_loss(h: np.ndarray, z: np.ndarray, mode: str = "KL",
            teacher: np.ndarray | None = None):
    """Distillation from embedding softmax (teacher, constant) to
    representation softmax (student). ``teacher`` overrides the softmax
    of z with frozen probabilities.

    Returns (value, grad wrt h, grad wrt z); the teacher gradient is zero
    by the stop-gradient convention.
    """
    h = np.asarray(h, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    _check_same_shape(h, z, "pd_loss")
    n = h.shape[0]
    p = softmax_row(h)
    q = softmax_row(z) if teacher is None else teacher
    if mode == "KL":
        q_safe = np.maximum(q, KL_FLOOR)
        value = float(np.sum(p * (np.log(p) - np.log(q_safe))) / n)
        g = np.log(p) - np.log(q_safe)
    elif mode == "MSE":
        diff = p - q
        value = float(np.sum(diff * diff) / n)
        g = 2.0 * diff
    else:
        raise ParameterError(f"unknown pd mode {mode!r}")
    # Softmax Jacobian: dL/dh = p * (g - sum(g * p)) rowwise.
    grad_h = p * (g - np.sum(g * p, axis=1, keepdims=True)) / n
    return value, grad_h, np.zeros_like(z)


def _normalize_with_grad(z: np.ndarray):
    """Row normalization y = z / max(|z|, eps) plus a closure mapping
    dL/dy back to dL/dz."""
    norms = np.maximum(np.linalg.norm(z, axis=1, keepdims=True), DEFAULT_EPS)
    y = z / norms

    def backward(dy: np.ndarray) -> np.ndarray:
        return (dy - y * np.sum(y * dy, axis=1, keepdims=True)) / norms

    return y, backward


@dataclass
class StopGradTargets:
    """Frozen stop-gradient targets of one total-loss evaluation: the
    dimension-scaled targets for each view and the teacher softmax
    probabilities. Used to finite-difference the stop-grad semantics."""
    dsr_targets: tuple
    teachers: tuple


def capture_stop_grad_targets(x: np.ndarray, x_plus: np.ndarray,
                              m: mdl.ModelBundle, d_k: ScalingVector,
                              normalize_dsr_target: bool = True,
                              hsd_dims: frozenset[int] | None = None) -> StopGradTargets:
    z1 = mdl.projector_forward(m, mdl.encoder_forward(m, x))
    z2 = mdl.projector_forward(m, mdl.encoder_forward(m, x_plus))
    y1, _ = _normalize_with_grad(z1)
    y2, _ = _normalize_with_grad(z2)
    if hsd_dims is not None:
        mask = np.zeros(z1.shape[1])
        mask[list(hsd_dims)] = 1.0
        m1, _ = _normalize_with_grad(y1 * mask)
        m2, _ = _normalize_with_grad(y2 * mask)
        teachers = (softmax_row(m1), softmax_row(m2))
    else:
        teachers = (softmax_row(z1), softmax_row(z2))
    return StopGradTargets(
        dsr_targets=(_dsr_targets(y1, d_k, normalize_dsr_target),
                     _dsr_targets(y2, d_k, normalize_dsr_target)),
        teachers=teachers)


def total_loss(x: np.ndarray, x_plus: np.ndarray, m: mdl.ModelBundle,
               d_k: ScalingVector, w: LossWeights,
               normalize_dsr_target: bool = True,
               hsd_dims: frozenset[int] | None = None,
               frozen: StopGradTargets | None = None):
    """Combined local objective on one augmented batch pair.

    Both views pass through encoder and projector; embeddings are
    normalized, uniformity runs on the two views concatenated, and the
    scaling and distillation terms are averaged over the views. When
    ``hsd_dims`` is given the normalized embeddings are hard-masked to
    those dimensions (and renormalized) before the alignment and
    uniformity terms, and the soft scaling term is dropped.

    Returns (LossReport, flat parameter gradient).
    """
    h1, z1, ec1, pc1 = mdl.forward_with_cache(m, x)
    h2, z2, ec2, pc2 = mdl.forward_with_cache(m, x_plus)

    yn1, back_n1 = _normalize_with_grad(z1)
    yn2, back_n2 = _normalize_with_grad(z2)

    if hsd_dims is not None:
        mask = np.zeros(z1.shape[1])
        mask[list(hsd_dims)] = 1.0
        u1, u2 = yn1 * mask, yn2 * mask
        y1, back_m1 = _normalize_with_grad(u1)
        y2, back_m2 = _normalize_with_grad(u2)
    else:
        y1, y2 = yn1, yn2

    align_val, da1, da2 = alignment_loss(y1, y2)
    cat = np.vstack([y1, y2])
    uni_val, du = uniformity_loss(cat, w.temperature)
    du1, du2 = du[: y1.shape[0]], du[y1.shape[0]:]

    dy1 = da1 + w.beta * du1
    dy2 = da2 + w.beta * du2

    if hsd_dims is not None:
        dsr_val = 0.0
        dyn1 = back_m1(dy1) * mask
        dyn2 = back_m2(dy2) * mask
    else:
        t1 = frozen.dsr_targets[0] if frozen else None
        t2 = frozen.dsr_targets[1] if frozen else None
        dsr1, dd1 = dsr_loss(y1, d_k, normalize_dsr_target, target=t1)
        dsr2, dd2 = dsr_loss(y2, d_k, normalize_dsr_target, target=t2)
        dsr_val = 0.5 * (dsr1 + dsr2)
        dyn1 = dy1 + 0.5 * w.gamma * dd1
        dyn2 = dy2 + 0.5 * w.gamma * dd2

    if frozen is not None:
        q1, q2 = frozen.teachers
    elif hsd_dims is not None:
        # Hard separation masks the embeddings before every loss, so the
        # distillation teacher is the masked embedding too.
        q1, q2 = softmax_row(y1), softmax_row(y2)
    else:
        q1 = q2 = None
    pd1, dh1_pd, _ = pd_loss(h1, z1, w.pd_mode, teacher=q1)
    pd2, dh2_pd, _ = pd_loss(h2, z2, w.pd_mode, teacher=q2)
    pd_val = 0.5 * (pd1 + pd2)

    dz1 = back_n1(dyn1)
    dz2 = back_n2(dyn2)

    grad = mdl.backward_to_params(m, ec1, pc1, 0.5 * w.delta * dh1_pd, dz1)
    grad += mdl.backward_to_params(m, ec2, pc2, 0.5 * w.delta * dh2_pd, dz2)

    total = align_val + w.beta * uni_val + w.gamma * dsr_val + w.delta * pd_val
    report = LossReport(align_val, uni_val, dsr_val, pd_val, total)
    return report, grad
