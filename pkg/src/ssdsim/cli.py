"""Command-line entry point.

Subcommands: run, gradcheck, partition-stats, compare. The client fan-out
thread count is taken from the SSDSIM_THREADS environment variable.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from . import losses as L
from . import model as mdl
from .config import ConfigError, RunSpec, parse_spec
from .data import dirichlet_partition
from .federation import MODES, _TAG_PARTITION
from .numerics import derive_rng, finite_diff_gradient, l2_normalize_rows, make_rng
from .report import execute_compare, execute_run, load_dataset


def _load_spec(args) -> RunSpec:
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            spec = parse_spec(fh.read())
    else:
        spec = RunSpec()
    if getattr(args, "seed", None) is not None:
        spec = replace(spec, fed=replace(spec.fed, seed=args.seed))
    if getattr(args, "mode", None) is not None:
        spec = replace(spec, fed=replace(spec.fed, mode=args.mode))
    if getattr(args, "out", None) is not None:
        spec = replace(spec, out_dir=args.out)
    return spec


def cmd_run(args) -> int:
    spec = _load_spec(args)
    summary = execute_run(spec)
    m = summary["metrics"]
    print(f"mode={spec.fed.mode} rounds={spec.fed.T} "
          f"neg_uniformity={m['neg_uniformity']:.4f} "
          f"effective_rank={m['effective_rank']:.2f} "
          f"probe_acc={m['linear_probe_accuracy']:.4f}")
    print(f"artifacts written to {spec.out_dir}")
    return 0


def _gradcheck_case(seed: int):
    """One randomized finite-difference comparison per loss family.

    Returns {family: relative error}.
    """
    rng = make_rng(seed)
    n, d = 8, 8
    results = {}

    z = l2_normalize_rows(rng.normal(size=(n, d)))
    zp = l2_normalize_rows(rng.normal(size=(n, d)))

    def rel_err(analytic, numeric):
        denom = max(np.linalg.norm(numeric), 1e-8)
        return np.linalg.norm(analytic - numeric) / denom

    _, ga, _ = L.alignment_loss(z, zp)
    num = finite_diff_gradient(
        lambda v: L.alignment_loss(v.reshape(n, d), zp)[0], z.ravel())
    results["alignment"] = rel_err(ga.ravel(), num)

    _, gu = L.uniformity_loss(z, 2.0)
    num = finite_diff_gradient(
        lambda v: L.uniformity_loss(v.reshape(n, d), 2.0)[0], z.ravel())
    results["uniformity"] = rel_err(gu.ravel(), num)

    # Stop-gradient targets are frozen at the base point before
    # finite-differencing, matching the constant-target semantics.
    dk = L.build_scaling_vector(d, {0, 1}, 10.0)
    for norm_target, tag in ((True, "dsr_normalized"), (False, "dsr_literal")):
        _, gd = L.dsr_loss(z, dk, norm_target)
        target = L._dsr_targets(z, dk, norm_target)
        num = finite_diff_gradient(
            lambda v: L.dsr_loss(v.reshape(n, d), dk, norm_target, target=target)[0],
            z.ravel())
        results[tag] = rel_err(gd.ravel(), num)

    h = rng.normal(size=(n, d))
    zt = rng.normal(size=(n, d))
    for mode in ("KL", "MSE"):
        _, gh, _ = L.pd_loss(h, zt, mode)
        num = finite_diff_gradient(
            lambda v: L.pd_loss(v.reshape(n, d), zt, mode)[0], h.ravel())
        results[f"pd_{mode.lower()}"] = rel_err(gh.ravel(), num)

    model = mdl.init_model(rng, d, [d], d)
    model = mdl.unflatten_params(model, 0.1 * rng.normal(size=model.num_params()))
    x1 = rng.normal(size=(n, d))
    x2 = rng.normal(size=(n, d))
    w = L.LossWeights(beta=1.0, gamma=1.0, delta=0.1)
    _, gt = L.total_loss(x1, x2, model, dk, w)
    frozen = L.capture_stop_grad_targets(x1, x2, model, dk)
    num = finite_diff_gradient(
        lambda v: L.total_loss(x1, x2, mdl.unflatten_params(model, v), dk, w,
                               frozen=frozen)[0].total,
        mdl.flatten_params(model))
    results["total"] = rel_err(gt, num)
    return results


def cmd_gradcheck(args) -> int:
    seeds = list(range(20))
    worst: dict[str, tuple[float, int]] = {}
    for seed in seeds:
        for family, err in _gradcheck_case(seed).items():
            if family not in worst or err > worst[family][0]:
                worst[family] = (err, seed)
    ok = True
    for family in sorted(worst):
        err, seed = worst[family]
        status = "ok" if err < 1e-4 else "FAIL"
        if err >= 1e-4:
            ok = False
        print(f"{family:16s} worst rel err {err:.3e} (seed {seed}) {status}")
    print(f"checked {len(worst)} gradient families over {len(seeds)} seeds")
    return 0 if ok else 1


def cmd_partition_stats(args) -> int:
    spec = _load_spec(args)
    data = load_dataset(spec)
    rng = derive_rng(spec.partition.seed, _TAG_PARTITION)
    part = dirichlet_partition(rng, data.labels, spec.fed.K,
                               spec.partition.dirichlet_alpha)
    num_classes = data.num_classes
    total = 0
    for k, idx in enumerate(part.assignments):
        hist = np.bincount(data.labels[idx], minlength=num_classes)
        p = hist / hist.sum()
        nz = p[p > 0]
        entropy = float(-np.sum(nz * np.log(nz)))
        total += idx.size
        print(f"client {k}: n={idx.size} hist={hist.tolist()} entropy={entropy:.4f}")
    print(f"total assigned: {total} of {data.n}")
    return 0


def cmd_compare(args) -> int:
    spec = _load_spec(args)
    modes = args.modes
    for m in modes:
        if m not in MODES:
            print(f"unknown mode {m!r}; expected one of {MODES}", file=sys.stderr)
            return 2
    rows = execute_compare(spec, modes, spec.out_dir)
    for row in rows:
        print(f"{row['mode']:14s} neg_uniformity={row['neg_uniformity']:.4f} "
              f"probe_acc={row['linear_probe_accuracy']:.4f}")
    print(f"comparison table written to {spec.out_dir}/compare.csv")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssdsim",
        description="Federated unsupervised learning simulator with soft "
                    "dimension separation and projector distillation.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="path to a run spec file")
        p.add_argument("--out", help="output directory (overrides spec)")
        p.add_argument("--seed", type=int, help="override the training seed")
        p.add_argument("--mode", choices=MODES, help="override the training mode")

    p_run = sub.add_parser("run", help="train and emit metrics/artifacts")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_gc = sub.add_parser("gradcheck", help="finite-difference checks for all losses")
    p_gc.set_defaults(func=cmd_gradcheck)

    p_ps = sub.add_parser("partition-stats", help="per-client class histograms")
    common(p_ps)
    p_ps.set_defaults(func=cmd_partition_stats)

    p_cmp = sub.add_parser("compare", help="run several modes on shared seeds")
    common(p_cmp)
    p_cmp.add_argument("--modes", nargs="+", default=["AlignUniform", "SSD"],
                       help="modes to compare")
    p_cmp.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
