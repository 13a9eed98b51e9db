"""The federated training loop: scaled-dimension assignment, client-local
SGD, weighted model averaging, and per-round metric logging.

Every stochastic step draws from a substream keyed on (seed, stage tag,
round, client), so serial and thread-pooled client execution produce the
same result bit for bit.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import losses as L
from . import metrics as M
from . import model as mdl
from .data import AugmentConfig, ClientPartition, Dataset, augment_pair
from .numerics import ParameterError, ShapeError, derive_rng, l2_normalize_rows

MODES = ("SSD", "AlignUniform", "DSR_only", "PD_only", "HSD")

# Substream tags for derive_rng(seed, tag, ...).
_TAG_INIT = 0
_TAG_ASSIGN = 1
_TAG_SAMPLE = 2
_TAG_CLIENT = 3
_TAG_DATA = 4
_TAG_PARTITION = 5
_TAG_EVAL = 6


@dataclass
class FedConfig:
    K: int = 4
    T: int = 20
    E: int = 2
    participation_rate: float = 1.0
    batch_size: int = 64
    learning_rate: float = 0.1
    weights: L.LossWeights = field(default_factory=L.LossWeights)
    alpha_scale: float = 10.0
    mode: str = "SSD"
    seed: int = 0
    input_dim: int = 32
    hidden_dims: tuple = (64,)
    embed_dim: int = 16
    projector_activation: str = "relu"
    normalize_dsr_target: bool = True
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    dim_assign_seed: int | None = None  # defaults to seed

    def __post_init__(self):
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 < self.participation_rate <= 1.0:
            raise ParameterError(
                f"participation_rate must be in (0,1], got {self.participation_rate}")
        if self.learning_rate < 0:
            raise ParameterError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if math.ceil(self.participation_rate * self.K) < 1:
            raise ParameterError("participation must select at least one client")


@dataclass
class ClientState:
    client_id: int
    indices: np.ndarray
    scaling: L.ScalingVector


@dataclass
class RoundLog:
    round: int
    participants: list[int]
    client_losses: dict  # client id -> mean LossReport over batches
    uniformity: float
    effective_rank: float
    mean_inter_client_dot: float
    mean_rep_norm: float
    mean_embed_norm: float

    def as_dict(self) -> dict:
        return {
            "round": self.round,
            "participants": self.participants,
            "client_losses": {str(k): v.as_dict() for k, v in self.client_losses.items()},
            "uniformity": self.uniformity,
            "effective_rank": self.effective_rank,
            "mean_inter_client_dot": self.mean_inter_client_dot,
            "mean_rep_norm": self.mean_rep_norm,
            "mean_embed_norm": self.mean_embed_norm,
        }


def assign_scaled_dimensions(d: int, K: int, rng: np.random.Generator) -> list[frozenset[int]]:
    """Random permutation of the d dimensions cut into K contiguous chunks
    of size floor(d/K); leftover dimensions stay unscaled for everyone."""
    if K < 1:
        raise ParameterError(f"K must be >= 1, got {K}")
    if K > d:
        raise ParameterError(f"cannot assign nonempty dimension sets: K={K} > d={d}")
    chunk = d // K
    perm = rng.permutation(d)
    return [frozenset(int(i) for i in perm[k * chunk:(k + 1) * chunk]) for k in range(K)]


def _effective_weights(cfg: FedConfig) -> L.LossWeights:
    w = cfg.weights
    if cfg.mode == "AlignUniform":
        return replace(w, gamma=0.0, delta=0.0)
    if cfg.mode == "DSR_only":
        return replace(w, delta=0.0)
    if cfg.mode == "PD_only":
        return replace(w, gamma=0.0)
    return w


def local_train(client: ClientState, global_model: mdl.ModelBundle,
                data: Dataset, cfg: FedConfig,
                rng: np.random.Generator) -> tuple[mdl.ModelBundle, L.LossReport]:
    """E epochs of minibatch SGD on the client's samples. The global model
    is copied, never modified. Returns the trained bundle and the mean
    loss report over all batches."""
    if client.indices.size == 0:
        raise ParameterError(f"client {client.client_id} has no samples")
    params = mdl.flatten_params(global_model)
    template = global_model
    batch = min(cfg.batch_size, client.indices.size)
    w = _effective_weights(cfg)
    hsd_dims = client.scaling.scaled_dims if cfg.mode == "HSD" else None

    sums = np.zeros(5)
    nbatches = 0
    for _ in range(cfg.E):
        order = rng.permutation(client.indices)
        for start in range(0, order.size, batch):
            idx = order[start:start + batch]
            x = data.features[idx]
            x1, x2 = augment_pair(rng, x, cfg.augment)
            model = mdl.unflatten_params(template, params)
            report, grad = L.total_loss(
                x1, x2, model, client.scaling, w,
                normalize_dsr_target=cfg.normalize_dsr_target,
                hsd_dims=hsd_dims)
            params = params - cfg.learning_rate * grad
            sums += [report.align, report.uniform, report.dsr,
                     report.distill, report.total]
            nbatches += 1
    mean = sums / max(nbatches, 1)
    return mdl.unflatten_params(template, params), L.LossReport(*mean)


def fedavg_aggregate(models: list[mdl.ModelBundle], sample_counts) -> mdl.ModelBundle:
    """Parameter-wise weighted mean with data-size weights n_k / sum n_i."""
    if not models:
        raise ParameterError("need at least one model to aggregate")
    counts = np.asarray(sample_counts, dtype=np.float64)
    if counts.size != len(models) or np.any(counts <= 0):
        raise ParameterError("need one positive count per model")
    p0 = mdl.flatten_params(models[0])
    acc = np.zeros_like(p0)
    for m, c in zip(models, counts):
        p = mdl.flatten_params(m)
        if p.size != p0.size:
            raise ShapeError("cannot aggregate bundles with different architectures")
        acc += (c / counts.sum()) * p
    return mdl.unflatten_params(models[0], acc)


def build_clients(cfg: FedConfig, partition: ClientPartition) -> list[ClientState]:
    assign_seed = cfg.seed if cfg.dim_assign_seed is None else cfg.dim_assign_seed
    dim_sets = assign_scaled_dimensions(
        cfg.embed_dim, cfg.K, derive_rng(assign_seed, _TAG_ASSIGN))
    return [
        ClientState(k, partition.assignments[k],
                    L.build_scaling_vector(cfg.embed_dim, dim_sets[k], cfg.alpha_scale))
        for k in range(cfg.K)
    ]


def _round_metrics(model: mdl.ModelBundle, data: Dataset,
                   clients: list[ClientState], t: float) -> dict:
    """Post-aggregation diagnostics on the full dataset: uniformity and
    effective rank of normalized representations, inter-client mean dot
    product of normalized embeddings, and raw norm means."""
    h = mdl.encoder_forward(model, data.features)
    z = mdl.projector_forward(model, h)
    hn = l2_normalize_rows(h)
    zn = l2_normalize_rows(z)
    embeds = M.EmbeddingSet(
        [c.client_id for c in clients], [zn[c.indices] for c in clients])
    return {
        "uniformity": M.uniformity_metric(hn, t),
        "effective_rank": M.effective_rank(hn),
        "mean_inter_client_dot": (M.mean_inter_client_dot(embeds)
                                  if len(clients) > 1 else 1.0),
        "mean_rep_norm": float(np.mean(np.linalg.norm(h, axis=1))),
        "mean_embed_norm": float(np.mean(np.linalg.norm(z, axis=1))),
    }


def run_training(cfg: FedConfig, data: Dataset,
                 partition: ClientPartition) -> tuple[mdl.ModelBundle, list[RoundLog]]:
    """Full training: init, dimension assignment, T rounds of sampled
    client training plus weighted averaging. Deterministic per config."""
    if partition.num_clients != cfg.K:
        raise ParameterError(
            f"partition has {partition.num_clients} clients, config says {cfg.K}")
    model = mdl.init_model(
        derive_rng(cfg.seed, _TAG_INIT), cfg.input_dim, list(cfg.hidden_dims),
        cfg.embed_dim, projector_activation=cfg.projector_activation)
    clients = build_clients(cfg, partition)
    n_participants = math.ceil(cfg.participation_rate * cfg.K)
    threads = int(os.environ.get("SSDSIM_THREADS", "1"))

    logs: list[RoundLog] = []
    for t in range(cfg.T):
        sample_rng = derive_rng(cfg.seed, _TAG_SAMPLE, t)
        chosen = sorted(sample_rng.choice(cfg.K, size=n_participants, replace=False).tolist())

        def train_one(k: int):
            return local_train(clients[k], model, data, cfg,
                               derive_rng(cfg.seed, _TAG_CLIENT, t, k))

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(train_one, chosen))
        else:
            results = [train_one(k) for k in chosen]

        updated = [r[0] for r in results]
        reports = {k: r[1] for k, r in zip(chosen, results)}
        counts = [clients[k].indices.size for k in chosen]
        model = fedavg_aggregate(updated, counts)

        stats = _round_metrics(model, data, clients, cfg.weights.temperature)
        logs.append(RoundLog(round=t, participants=chosen,
                             client_losses=reports, **stats))
    return model, logs
