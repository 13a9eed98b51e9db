"""Experiment orchestration and artifact emission: JSONL round logs, final
metric summaries, comparison CSVs, and rendered figures.

All files are written atomically (temp file + rename), so an interrupted
run never leaves a truncated artifact behind.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import replace

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import federation as fed
from . import metrics as M
from . import model as mdl
from .config import RunSpec, serialize_spec
from .data import (ClientPartition, Dataset, augment_pair,
                   generate_gaussian_mixture, load_binary_dataset,
                   load_csv_dataset)
from .numerics import ParameterError, derive_rng, l2_normalize_rows


def atomic_write_text(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def load_dataset(spec: RunSpec) -> Dataset:
    d = spec.data
    if d.source == "synthetic":
        rng = derive_rng(d.data_seed, fed._TAG_DATA)
        return generate_gaussian_mixture(
            rng, d.num_classes, d.samples_per_class, spec.fed.input_dim,
            d.center_spread, d.within_std)
    if d.source == "csv":
        return load_csv_dataset(d.path, d.label_column)
    if d.source == "binary":
        return load_binary_dataset(d.path)
    raise ParameterError(f"unknown data source {d.source!r}")


def make_partition(spec: RunSpec, data: Dataset) -> ClientPartition:
    from .data import dirichlet_partition
    rng = derive_rng(spec.partition.seed, fed._TAG_PARTITION)
    return dirichlet_partition(rng, data.labels, spec.fed.K,
                               spec.partition.dirichlet_alpha)


def _stratified_split(rng, labels: np.ndarray, test_fraction: float):
    train_idx, test_idx = [], []
    for cls in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        cut = max(1, int(round(test_fraction * idx.size)))
        test_idx.extend(idx[:cut].tolist())
        train_idx.extend(idx[cut:].tolist())
    return np.array(sorted(train_idx)), np.array(sorted(test_idx))


def _stratified_subset(rng, labels: np.ndarray, idx: np.ndarray, fraction: float):
    if fraction >= 1.0:
        return idx
    chosen = []
    sub_labels = labels[idx]
    for cls in np.unique(sub_labels):
        cls_idx = rng.permutation(idx[sub_labels == cls])
        take = max(1, int(round(fraction * cls_idx.size)))
        chosen.extend(cls_idx[:take].tolist())
    return np.array(sorted(chosen))


def final_metrics(spec: RunSpec, model: mdl.ModelBundle, data: Dataset,
                  partition: ClientPartition):
    """Full evaluation of a trained model.

    Uniformity, effective rank, alignment, and probing run on the chosen
    target (normalized representations by default, embeddings via config);
    the inter-client mean dot product always uses embeddings, which is
    where the dimension scaling acts. Returns (MetricsReport, extras dict
    with per-fraction probe accuracies).
    """
    ev = spec.evaluation
    h = mdl.encoder_forward(model, data.features)
    z = mdl.projector_forward(model, h)
    hn, zn = l2_normalize_rows(h), l2_normalize_rows(z)
    target = hn if ev.metric_target == "h" else zn

    neg_uniformity = M.uniformity_metric(target, spec.fed.weights.temperature)
    erank = M.effective_rank(target)

    embeds = M.EmbeddingSet(list(range(partition.num_clients)),
                            [target[a] for a in partition.assignments])
    _, intra, inter = M.uniformity_decomposition(embeds, spec.fed.weights.temperature)
    z_embeds = M.EmbeddingSet(list(range(partition.num_clients)),
                              [zn[a] for a in partition.assignments])
    inter_dot = (M.mean_inter_client_dot(z_embeds)
                 if partition.num_clients > 1 else 1.0)

    eval_rng = derive_rng(ev.eval_seed, fed._TAG_EVAL)
    x1, x2 = augment_pair(eval_rng, data.features, spec.fed.augment)
    if ev.metric_target == "h":
        v1 = l2_normalize_rows(mdl.encoder_forward(model, x1))
        v2 = l2_normalize_rows(mdl.encoder_forward(model, x2))
    else:
        v1 = l2_normalize_rows(mdl.projector_forward(model, mdl.encoder_forward(model, x1)))
        v2 = l2_normalize_rows(mdl.projector_forward(model, mdl.encoder_forward(model, x2)))
    alignment = M.alignment_metric(v1, v2)

    train_idx, test_idx = _stratified_split(eval_rng, data.labels, ev.test_fraction)
    probe_accs = {}
    for frac in ev.probe_fractions:
        sub = _stratified_subset(eval_rng, data.labels, train_idx, frac)
        probe_accs[frac] = M.linear_probe(
            target[sub], data.labels[sub], target[test_idx],
            data.labels[test_idx], ev.probe)
    main_acc = probe_accs[max(probe_accs)]

    report = M.MetricsReport(
        neg_uniformity=neg_uniformity, intra_terms=intra, inter_terms=inter,
        effective_rank=erank, alignment=alignment,
        mean_inter_client_dot=inter_dot, linear_probe_accuracy=main_acc)
    extras = {"probe_accuracy_by_fraction": {repr(k): v for k, v in probe_accs.items()}}
    return report, extras


def rounds_to_jsonl(logs: list[fed.RoundLog]) -> str:
    return "".join(json.dumps(lg.as_dict(), sort_keys=True) + "\n" for lg in logs)


def render_round_figures(logs: list[fed.RoundLog], out_dir: str) -> list[str]:
    """Training-trajectory figures next to the JSONL output."""
    if not logs:
        return []
    rounds = [lg.round for lg in logs]
    mean_total = [np.mean([r.total for r in lg.client_losses.values()]) for lg in logs]
    mean_align = [np.mean([r.align for r in lg.client_losses.values()]) for lg in logs]
    mean_uni = [np.mean([r.uniform for r in lg.client_losses.values()]) for lg in logs]

    fig, axes = plt.subplots(2, 2, figsize=(10, 7))
    axes[0, 0].plot(rounds, mean_total, label="total")
    axes[0, 0].plot(rounds, mean_align, label="align")
    axes[0, 0].plot(rounds, mean_uni, label="uniform")
    axes[0, 0].set_title("Mean client training loss")
    axes[0, 0].set_xlabel("round")
    axes[0, 0].legend()
    axes[0, 1].plot(rounds, [lg.uniformity for lg in logs])
    axes[0, 1].set_title("Representation uniformity (higher better)")
    axes[0, 1].set_xlabel("round")
    axes[1, 0].plot(rounds, [lg.effective_rank for lg in logs])
    axes[1, 0].set_title("Effective rank")
    axes[1, 0].set_xlabel("round")
    axes[1, 1].plot(rounds, [lg.mean_inter_client_dot for lg in logs])
    axes[1, 1].set_title("Mean inter-client dot product")
    axes[1, 1].set_xlabel("round")
    fig.tight_layout()
    path = os.path.join(out_dir, "rounds.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(rounds, [lg.mean_rep_norm for lg in logs], label="representation")
    ax.plot(rounds, [lg.mean_embed_norm for lg in logs], label="embedding")
    ax.set_title("Mean vector norms")
    ax.set_xlabel("round")
    ax.legend()
    fig.tight_layout()
    norm_path = os.path.join(out_dir, "norms.png")
    fig.savefig(norm_path, dpi=120)
    plt.close(fig)
    return [path, norm_path]


def execute_run(spec: RunSpec, out_dir: str | None = None, figures: bool = True) -> dict:
    """Run one experiment end to end and write all artifacts.

    Emits rounds.jsonl, final.json, model.ckpt, resolved.config, and (by
    default) PNG figures into the output directory. Returns the final
    summary dict.
    """
    out = out_dir or spec.out_dir
    os.makedirs(out, exist_ok=True)
    data = load_dataset(spec)
    partition = make_partition(spec, data)
    model, logs = fed.run_training(spec.fed, data, partition)
    report, extras = final_metrics(spec, model, data, partition)

    atomic_write_text(os.path.join(out, "rounds.jsonl"), rounds_to_jsonl(logs))
    summary = {"metrics": report.as_dict(), **extras, "mode": spec.fed.mode,
               "rounds": spec.fed.T, "clients": spec.fed.K}
    atomic_write_text(os.path.join(out, "final.json"),
                      json.dumps(summary, sort_keys=True, indent=2) + "\n")
    mdl.save_checkpoint(model, os.path.join(out, "model.ckpt"))
    atomic_write_text(os.path.join(out, "resolved.config"), serialize_spec(spec))
    if figures:
        render_round_figures(logs, out)
    return summary


COMPARE_COLUMNS = ("mode", "neg_uniformity", "effective_rank", "alignment",
                   "mean_inter_client_dot", "linear_probe_accuracy")


def execute_compare(spec: RunSpec, modes: list[str], out_dir: str,
                    figures: bool = True) -> list[dict]:
    """Run the same spec under several modes (shared data/partition/init
    seeds) and emit a comparison CSV plus a summary figure."""
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for mode in modes:
        mode_spec = replace(spec, fed=replace(spec.fed, mode=mode))
        summary = execute_run(mode_spec, os.path.join(out_dir, mode), figures=False)
        m = summary["metrics"]
        rows.append({"mode": mode,
                     **{k: m[k] for k in COMPARE_COLUMNS if k != "mode"}})

    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=COMPARE_COLUMNS)
    writer.writeheader()
    writer.writerows(rows)
    atomic_write_text(os.path.join(out_dir, "compare.csv"), buf.getvalue())

    if figures and rows:
        fig, axes = plt.subplots(1, 3, figsize=(12, 4))
        names = [r["mode"] for r in rows]
        for ax, key in zip(axes, ("neg_uniformity", "linear_probe_accuracy",
                                  "mean_inter_client_dot")):
            ax.bar(names, [r[key] for r in rows])
            ax.set_title(key)
            ax.tick_params(axis="x", rotation=30)
        fig.tight_layout()
        fig.savefig(os.path.join(out_dir, "compare.png"), dpi=120)
        plt.close(fig)
    return rows
