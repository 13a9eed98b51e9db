"""Representation-quality metrics: uniformity and its intra/inter-client
decomposition, effective rank, inter-client geometry, and linear probing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import ParameterError, ShapeError, singular_values, softmax_row


@dataclass
class EmbeddingSet:
    """Per-client matrices of embeddings (or representations), all with the
    same column count."""
    client_ids: list[int]
    matrices: list[np.ndarray]

    def __post_init__(self):
        dims = {m.shape[1] for m in self.matrices}
        if len(dims) > 1:
            raise ShapeError(f"inconsistent embedding dims across clients: {dims}")


@dataclass
class MetricsReport:
    neg_uniformity: float
    intra_terms: dict
    inter_terms: dict
    effective_rank: float
    alignment: float
    mean_inter_client_dot: float
    linear_probe_accuracy: float

    def as_dict(self) -> dict:
        return {
            "neg_uniformity": self.neg_uniformity,
            "intra_terms": {str(k): v for k, v in self.intra_terms.items()},
            "inter_terms": {f"{i},{j}": v for (i, j), v in self.inter_terms.items()},
            "effective_rank": self.effective_rank,
            "alignment": self.alignment,
            "mean_inter_client_dot": self.mean_inter_client_dot,
            "linear_probe_accuracy": self.linear_probe_accuracy,
        }


def _mean_pair_potential(a: np.ndarray, b: np.ndarray | None, t: float):
    """Mean Gaussian potential and pair count. With one argument: distinct
    unordered pairs within ``a``; with two: all cross pairs."""
    if b is None:
        n = a.shape[0]
        npairs = n * (n - 1) // 2
        if npairs == 0:
            return None, 0
        sq = np.sum(a * a, axis=1)
        d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (a @ a.T), 0.0)
        w = np.exp(-t * d2)
        total = (w.sum() - n) / 2.0  # drop the diagonal (e^0 each)
        return total / npairs, npairs
    d2 = np.maximum(
        np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T), 0.0)
    w = np.exp(-t * d2)
    return float(w.mean()), a.shape[0] * b.shape[0]


def uniformity_metric(z: np.ndarray, t: float = 2.0) -> float:
    """Negated uniformity loss, i.e. -log of the mean pair potential;
    nonnegative and higher for better-spread rows."""
    mean_pot, npairs = _mean_pair_potential(np.asarray(z, dtype=np.float64), None, t)
    if npairs == 0:
        raise ParameterError("uniformity needs at least 2 rows")
    return float(-np.log(mean_pot))


def uniformity_decomposition(e: EmbeddingSet, t: float = 2.0):
    """Split the global uniformity into within-client and cross-client
    mean potentials.

    Returns (global_uniform_loss, intra terms per client id, inter terms
    per client-id pair). The global value is the negative log of the
    pair-count-weighted combination of all block potentials, which equals
    the direct pooled computation exactly.
    """
    if not e.matrices:
        raise ParameterError("need at least one client")
    intra: dict[int, float] = {}
    inter: dict[tuple[int, int], float] = {}
    weighted_sum = 0.0
    total_pairs = 0
    for cid, m in zip(e.client_ids, e.matrices):
        pot, cnt = _mean_pair_potential(m, None, t)
        if cnt > 0:
            intra[cid] = float(pot)
            weighted_sum += pot * cnt
            total_pairs += cnt
    for a in range(len(e.matrices)):
        for b in range(a + 1, len(e.matrices)):
            pot, cnt = _mean_pair_potential(e.matrices[a], e.matrices[b], t)
            inter[(e.client_ids[a], e.client_ids[b])] = pot
            weighted_sum += pot * cnt
            total_pairs += cnt
    if total_pairs == 0:
        raise ParameterError("need at least 2 rows in total")
    global_loss = float(np.log(weighted_sum / total_pairs))
    return global_loss, intra, inter


def effective_rank(m: np.ndarray) -> float:
    """exp of the Shannon entropy of the normalized singular-value
    distribution."""
    sigma = singular_values(m)
    total = sigma.sum()
    if total <= 0:
        raise ParameterError("effective rank of an all-zero matrix is undefined")
    p = sigma / total
    nz = p[p > 0]
    return float(np.exp(-np.sum(nz * np.log(nz))))


def mean_inter_client_dot(e: EmbeddingSet) -> float:
    """Mean dot product over all cross-client row pairs."""
    if len(e.matrices) < 2:
        raise ParameterError("need at least 2 clients")
    total = 0.0
    count = 0
    for a in range(len(e.matrices)):
        for b in range(a + 1, len(e.matrices)):
            dots = e.matrices[a] @ e.matrices[b].T
            total += dots.sum()
            count += dots.size
    return float(total / count)


@dataclass
class ProbeConfig:
    epochs: int = 500
    lr: float = 0.5
    l2: float = 1e-4


def linear_probe(train_reps: np.ndarray, train_labels, test_reps: np.ndarray,
                 test_labels, cfg: ProbeConfig | None = None,
                 return_losses: bool = False):
    """Multinomial logistic regression on frozen representations.

    Single affine layer + softmax cross-entropy, full-batch gradient
    descent, zero initialization (deterministic). Classes absent from the
    training labels are simply never predicted. Returns test accuracy; with
    ``return_losses`` also the per-epoch training losses.
    """
    cfg = cfg or ProbeConfig()
    X = np.asarray(train_reps, dtype=np.float64)
    y = np.asarray(train_labels, dtype=np.int64)
    classes = np.unique(y)
    if classes.size < 2:
        raise ParameterError("probe needs at least 2 classes in training labels")
    class_to_col = {c: i for i, c in enumerate(classes)}
    Y = np.zeros((X.shape[0], classes.size))
    Y[np.arange(X.shape[0]), [class_to_col[c] for c in y]] = 1.0

    W = np.zeros((classes.size, X.shape[1]))
    b = np.zeros(classes.size)
    n = X.shape[0]
    losses = []
    for _ in range(cfg.epochs):
        logits = X @ W.T + b
        p = softmax_row(logits)
        loss = -np.sum(Y * np.log(np.maximum(p, 1e-300))) / n \
            + 0.5 * cfg.l2 * np.sum(W * W)
        losses.append(float(loss))
        g = (p - Y) / n
        W -= cfg.lr * (g.T @ X + cfg.l2 * W)
        b -= cfg.lr * g.sum(axis=0)

    test_logits = np.asarray(test_reps, dtype=np.float64) @ W.T + b
    pred = classes[np.argmax(test_logits, axis=1)]
    acc = float(np.mean(pred == np.asarray(test_labels, dtype=np.int64)))
    if return_losses:
        return acc, losses
    return acc


def alignment_metric(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared positive-pair distance (lower is better)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shapes {a.shape} and {b.shape} differ")
    return float(np.mean(np.sum((a - b) ** 2, axis=1)))
