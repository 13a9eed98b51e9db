"""Run specification: a flat INI-style config with sections, strict about
unknown keys, and lossless under serialize -> parse."""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field

from .data import AugmentConfig
from .federation import MODES, FedConfig
from .losses import LossWeights
from .metrics import ProbeConfig


class ConfigError(ValueError):
    """A config file key is unknown, missing, or has a bad value."""


@dataclass
class DataSpec:
    source: str = "synthetic"      # synthetic | csv | binary
    num_classes: int = 4
    samples_per_class: int = 200
    center_spread: float = 5.0
    within_std: float = 1.0
    path: str = ""
    label_column: str = "label"
    data_seed: int = 0


@dataclass
class PartitionSpec:
    dirichlet_alpha: float = 0.1
    seed: int = 0


@dataclass
class EvalSpec:
    probe_fractions: tuple = (1.0,)
    metric_target: str = "h"       # h (representations) | z (embeddings)
    test_fraction: float = 0.25
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    eval_seed: int = 0


@dataclass
class RunSpec:
    fed: FedConfig = field(default_factory=FedConfig)
    data: DataSpec = field(default_factory=DataSpec)
    partition: PartitionSpec = field(default_factory=PartitionSpec)
    evaluation: EvalSpec = field(default_factory=EvalSpec)
    out_dir: str = "out"


_BOOL = {"true": True, "false": False}


def _parse_value(raw: str, kind, key: str):
    try:
        if kind is bool:
            return _BOOL[raw.strip().lower()]
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw.strip()
        if kind == "int_list":
            return tuple(int(v) for v in raw.split(",") if v.strip())
        if kind == "float_list":
            return tuple(float(v) for v in raw.split(",") if v.strip())
    except (ValueError, KeyError):
        pass
    raise ConfigError(f"bad value for key {key!r}: {raw!r}")


# section -> key -> (kind, getter path)
_SCHEMA = {
    "federation": {
        "k": int, "t": int, "e": int, "participation_rate": float,
        "batch_size": int, "learning_rate": float, "alpha_scale": float,
        "mode": str, "seed": int, "beta": float, "gamma": float,
        "delta": float, "temperature": float, "pd_mode": str,
        "normalize_dsr_target": bool, "dim_assign_seed": int,
    },
    "model": {
        "input_dim": int, "hidden_dims": "int_list", "embed_dim": int,
        "projector_activation": str,
    },
    "augment": {"noise_stddev": float, "dropout_prob": float},
    "data": {
        "source": str, "num_classes": int, "samples_per_class": int,
        "center_spread": float, "within_std": float, "path": str,
        "label_column": str, "data_seed": int,
    },
    "partition": {"dirichlet_alpha": float, "seed": int},
    "evaluation": {
        "probe_fractions": "float_list", "metric_target": str,
        "test_fraction": float, "probe_epochs": int, "probe_lr": float,
        "probe_l2": float, "eval_seed": int,
    },
    "output": {"dir": str},
}


def parse_spec(text: str) -> RunSpec:
    cp = configparser.ConfigParser()
    cp.optionxform = str.lower
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse failure: {exc}") from None

    values: dict[str, dict] = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        values[section] = {}
        for key, raw in cp.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            values[section][key] = _parse_value(raw, _SCHEMA[section][key], key)

    fed_kv = values.get("federation", {})
    model_kv = values.get("model", {})
    aug_kv = values.get("augment", {})
    weights = LossWeights(
        beta=fed_kv.get("beta", 1.0), gamma=fed_kv.get("gamma", 1.0),
        delta=fed_kv.get("delta", 0.1),
        temperature=fed_kv.get("temperature", 2.0),
        pd_mode=fed_kv.get("pd_mode", "KL"))
    if weights.pd_mode not in ("KL", "MSE"):
        raise ConfigError(f"bad pd_mode {weights.pd_mode!r}")
    mode = fed_kv.get("mode", "SSD")
    if mode not in MODES:
        raise ConfigError(f"bad mode {mode!r}; expected one of {MODES}")
    fed = FedConfig(
        K=fed_kv.get("k", 4), T=fed_kv.get("t", 20), E=fed_kv.get("e", 2),
        participation_rate=fed_kv.get("participation_rate", 1.0),
        batch_size=fed_kv.get("batch_size", 64),
        learning_rate=fed_kv.get("learning_rate", 0.1),
        weights=weights, alpha_scale=fed_kv.get("alpha_scale", 10.0),
        mode=mode, seed=fed_kv.get("seed", 0),
        input_dim=model_kv.get("input_dim", 32),
        hidden_dims=model_kv.get("hidden_dims", (64,)),
        embed_dim=model_kv.get("embed_dim", 16),
        projector_activation=model_kv.get("projector_activation", "relu"),
        normalize_dsr_target=fed_kv.get("normalize_dsr_target", True),
        augment=AugmentConfig(
            noise_stddev=aug_kv.get("noise_stddev", 0.1),
            dropout_prob=aug_kv.get("dropout_prob", 0.1)),
        dim_assign_seed=fed_kv.get("dim_assign_seed"),
    )

    data_kv = values.get("data", {})
    data = DataSpec(**data_kv)
    if data.source not in ("synthetic", "csv", "binary"):
        raise ConfigError(f"bad data source {data.source!r}")

    part = PartitionSpec(**values.get("partition", {}))

    ev_kv = values.get("evaluation", {})
    target = ev_kv.get("metric_target", "h")
    if target not in ("h", "z"):
        raise ConfigError(f"metric_target must be 'h' or 'z', got {target!r}")
    evaluation = EvalSpec(
        probe_fractions=ev_kv.get("probe_fractions", (1.0,)),
        metric_target=target,
        test_fraction=ev_kv.get("test_fraction", 0.25),
        probe=ProbeConfig(
            epochs=ev_kv.get("probe_epochs", 500),
            lr=ev_kv.get("probe_lr", 0.5),
            l2=ev_kv.get("probe_l2", 1e-4)),
        eval_seed=ev_kv.get("eval_seed", 0),
    )

    out_dir = values.get("output", {}).get("dir", "out")
    return RunSpec(fed, data, part, evaluation, out_dir)


def serialize_spec(spec: RunSpec) -> str:
    cp = configparser.ConfigParser()
    cp.optionxform = str.lower
    f, w = spec.fed, spec.fed.weights
    cp["federation"] = {
        "k": str(f.K), "t": str(f.T), "e": str(f.E),
        "participation_rate": repr(f.participation_rate),
        "batch_size": str(f.batch_size),
        "learning_rate": repr(f.learning_rate),
        "alpha_scale": repr(f.alpha_scale), "mode": f.mode,
        "seed": str(f.seed), "beta": repr(w.beta), "gamma": repr(w.gamma),
        "delta": repr(w.delta), "temperature": repr(w.temperature),
        "pd_mode": w.pd_mode,
        "normalize_dsr_target": str(f.normalize_dsr_target).lower(),
    }
    if f.dim_assign_seed is not None:
        cp["federation"]["dim_assign_seed"] = str(f.dim_assign_seed)
    cp["model"] = {
        "input_dim": str(f.input_dim),
        "hidden_dims": ",".join(str(v) for v in f.hidden_dims),
        "embed_dim": str(f.embed_dim),
        "projector_activation": f.projector_activation,
    }
    cp["augment"] = {
        "noise_stddev": repr(f.augment.noise_stddev),
        "dropout_prob": repr(f.augment.dropout_prob),
    }
    d = spec.data
    cp["data"] = {
        "source": d.source, "num_classes": str(d.num_classes),
        "samples_per_class": str(d.samples_per_class),
        "center_spread": repr(d.center_spread),
        "within_std": repr(d.within_std), "path": d.path,
        "label_column": d.label_column, "data_seed": str(d.data_seed),
    }
    cp["partition"] = {
        "dirichlet_alpha": repr(spec.partition.dirichlet_alpha),
        "seed": str(spec.partition.seed),
    }
    e = spec.evaluation
    cp["evaluation"] = {
        "probe_fractions": ",".join(repr(v) for v in e.probe_fractions),
        "metric_target": e.metric_target,
        "test_fraction": repr(e.test_fraction),
        "probe_epochs": str(e.probe.epochs),
        "probe_lr": repr(e.probe.lr),
        "probe_l2": repr(e.probe.l2),
        "eval_seed": str(e.eval_seed),
    }
    cp["output"] = {"dir": spec.out_dir}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
