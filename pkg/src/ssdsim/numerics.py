"""Dense linear algebra, seeded randomness, and finite-difference helpers.

Matrices are plain float64 numpy arrays (2-D, row-major). Randomness comes
from numpy's PCG64 generator; Gaussian draws use numpy's ziggurat-based
``standard_normal``. All stochastic helpers are bit-reproducible for a fixed
seed across platforms.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class ParameterError(ValueError):
    """A scalar or index argument is out of its valid range."""


class NumericsError(RuntimeError):
    """An iterative numeric scheme failed to converge."""


DEFAULT_EPS = 1e-12

SVD_TOL = 1e-10
SVD_MAX_SWEEPS = 1000


def make_rng(seed) -> np.random.Generator:
    """Deterministic PCG64 generator. ``seed`` may be an int or a sequence
    of ints (mixed through numpy's SeedSequence)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def derive_rng(seed: int, *tags: int) -> np.random.Generator:
    """Generator for a named substream of ``seed``.

    The stream is keyed by (seed, *tags); the same key always yields the
    same stream, so parallel and serial client execution agree.
    """
    return make_rng([int(seed), *[int(t) for t in tags]])


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def l2_normalize_rows(m, eps: float = DEFAULT_EPS) -> np.ndarray:
    m = as_matrix(m)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    return m / np.maximum(norms, eps)


def softmax_row(v) -> np.ndarray:
    """Row-wise softmax, stabilized by max subtraction. Accepts a 1-D vector
    or a 2-D matrix (softmax per row)."""
    v = np.asarray(v, dtype=np.float64)
    shifted = v - np.max(v, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def singular_values(m) -> np.ndarray:
    """Singular values of ``m``, descending, via one-sided Jacobi.

    Columns of the working matrix are rotated pairwise until all column
    pairs are orthogonal to within SVD_TOL; the singular values are then
    the column norms. Raises NumericsError with the sweep count if the
    scheme does not converge within SVD_MAX_SWEEPS sweeps.
    """
    m = as_matrix(m)
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeError(f"need at least one row and column, got {m.shape}")
    # Work with the tall orientation so we rotate at most min(rows, cols) columns.
    a = m.copy() if m.shape[0] >= m.shape[1] else m.T.copy()
    n = a.shape[1]
    for sweep in range(SVD_MAX_SWEEPS):
        off = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                alpha = a[:, i] @ a[:, i]
                beta = a[:, j] @ a[:, j]
                gamma = a[:, i] @ a[:, j]
                denom = np.sqrt(alpha * beta)
                if denom < DEFAULT_EPS or abs(gamma) <= SVD_TOL * denom:
                    continue
                off = max(off, abs(gamma) / denom)
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.sign(zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                ai = a[:, i].copy()
                a[:, i] = c * ai - s * a[:, j]
                a[:, j] = s * ai + c * a[:, j]
        if off <= SVD_TOL:
            sigma = np.linalg.norm(a, axis=0)
            return np.sort(sigma)[::-1]
    raise NumericsError(f"Jacobi SVD did not converge after {SVD_MAX_SWEEPS} sweeps")


def finite_diff_gradient(f, x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x``."""
    if h <= 0:
        raise ParameterError(f"step must be positive, got {h}")
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        fp = f(xp)
        fm = f(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericsError(f"non-finite function value at coordinate {i}")
        grad.flat[i] = (fp - fm) / (2.0 * h)
    return grad


def rng_gaussian(rng: np.random.Generator, rows: int, cols: int,
                 mean: float = 0.0, stddev: float = 1.0) -> np.ndarray:
    if stddev < 0:
        raise ParameterError(f"stddev must be nonnegative, got {stddev}")
    return mean + stddev * rng.standard_normal((rows, cols))


def rng_dirichlet(rng: np.random.Generator, concentration) -> np.ndarray:
    """Dirichlet draw via normalized Gamma(alpha_i, 1) samples."""
    conc = np.asarray(concentration, dtype=np.float64)
    if np.any(conc <= 0):
        raise ParameterError("all concentration parameters must be positive")
    g = rng.gamma(conc)
    total = g.sum()
    if total <= 0:
        # All gammas underflowed (tiny concentrations); fall back to a
        # single categorical winner to keep the output a distribution.
        out = np.zeros_like(conc)
        out[rng.integers(len(conc))] = 1.0
        return out
    return g / total
