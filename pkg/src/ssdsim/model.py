"""Encoder / projector MLPs with manual forward-backward and flat-vector
parameter serialization for federated averaging."""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .numerics import ParameterError, ShapeError, rng_gaussian

CHECKPOINT_MAGIC = b"SSDM"
CHECKPOINT_VERSION = 1


@dataclass
class LayerParams:
    """One affine layer: y = x @ weight.T + bias."""
    weight: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray    # (out_dim,)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass
class ModelBundle:
    """Encoder + two-layer projector parameters.

    ``activation`` applies to encoder hidden layers, ``projector_activation``
    to the single hidden point between the projector's two affine layers
    ("relu" or "linear"). Final layers of both stacks are linear.
    """
    encoder_layers: list[LayerParams]
    projector_layers: list[LayerParams]
    activation: str = "relu"
    projector_activation: str = "relu"

    @property
    def input_dim(self) -> int:
        return self.encoder_layers[0].in_dim

    @property
    def embed_dim(self) -> int:
        return self.projector_layers[-1].out_dim

    def num_params(self) -> int:
        return sum(l.weight.size + l.bias.size
                   for l in self.encoder_layers + self.projector_layers)

    def copy(self) -> "ModelBundle":
        return ModelBundle(
            [LayerParams(l.weight.copy(), l.bias.copy()) for l in self.encoder_layers],
            [LayerParams(l.weight.copy(), l.bias.copy()) for l in self.projector_layers],
            self.activation,
            self.projector_activation,
        )


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "linear":
        return z
    raise ParameterError(f"unknown activation {name!r}")


def _act_deriv(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    if name == "linear":
        return np.ones_like(z)
    raise ParameterError(f"unknown activation {name!r}")


def init_model(rng: np.random.Generator, input_dim: int, hidden_dims: list[int],
               d: int, activation: str = "relu",
               projector_activation: str = "relu") -> ModelBundle:
    """He-initialized weights (stddev sqrt(2/in_dim)), zero biases.

    Encoder: input_dim -> hidden_dims... -> d. Projector: d -> d -> d.
    """
    dims = [input_dim, *hidden_dims, d]
    if any(v < 1 for v in dims):
        raise ParameterError(f"all dims must be >= 1, got {dims}")
    encoder = []
    for in_dim, out_dim in zip(dims[:-1], dims[1:]):
        w = rng_gaussian(rng, out_dim, in_dim, 0.0, np.sqrt(2.0 / in_dim))
        encoder.append(LayerParams(w, np.zeros(out_dim)))
    projector = []
    for _ in range(2):
        w = rng_gaussian(rng, d, d, 0.0, np.sqrt(2.0 / d))
        projector.append(LayerParams(w, np.zeros(d)))
    return ModelBundle(encoder, projector, activation, projector_activation)


def _mlp_forward(layers: list[LayerParams], activation: str, x: np.ndarray):
    """Forward through an affine stack; activation on all but the last layer.

    Returns (output, cache) where cache holds (layer_input, preactivation)
    pairs for the backward pass.
    """
    cache = []
    a = x
    for idx, layer in enumerate(layers):
        if a.shape[1] != layer.in_dim:
            raise ShapeError(
                f"layer {idx} expects {layer.in_dim} inputs, got {a.shape[1]}")
        z = a @ layer.weight.T + layer.bias
        cache.append((a, z))
        a = _act(activation, z) if idx < len(layers) - 1 else z
    return a, cache


def _mlp_backward(layers: list[LayerParams], activation: str, cache, dout: np.ndarray):
    """Backward through an affine stack.

    Returns (per-layer [(dW, db), ...] in forward order, dL/dinput).
    """
    grads = [None] * len(layers)
    g = dout
    for idx in range(len(layers) - 1, -1, -1):
        a_in, z = cache[idx]
        if idx < len(layers) - 1:
            g = g * _act_deriv(activation, z)
        grads[idx] = (g.T @ a_in, g.sum(axis=0))
        g = g @ layers[idx].weight
    return grads, g


def encoder_forward(m: ModelBundle, x: np.ndarray) -> np.ndarray:
    h, _ = _mlp_forward(m.encoder_layers, m.activation, np.asarray(x, dtype=np.float64))
    return h


def projector_forward(m: ModelBundle, h: np.ndarray) -> np.ndarray:
    z, _ = _mlp_forward(m.projector_layers, m.projector_activation,
                        np.asarray(h, dtype=np.float64))
    return z


def forward_with_cache(m: ModelBundle, x: np.ndarray):
    """Full encoder+projector pass keeping caches for backprop.

    Returns (h, z, encoder_cache, projector_cache).
    """
    x = np.asarray(x, dtype=np.float64)
    h, ec = _mlp_forward(m.encoder_layers, m.activation, x)
    z, pc = _mlp_forward(m.projector_layers, m.projector_activation, h)
    return h, z, ec, pc


def backward_to_params(m: ModelBundle, enc_cache, proj_cache,
                       dh_direct: np.ndarray, dz: np.ndarray) -> np.ndarray:
    """Parameter gradient (flat vector) given dL/dz and any dL/dh applied
    directly to the representation (in addition to the projector path)."""
    proj_grads, dh_from_proj = _mlp_backward(
        m.projector_layers, m.projector_activation, proj_cache, dz)
    enc_grads, _ = _mlp_backward(
        m.encoder_layers, m.activation, enc_cache, dh_from_proj + dh_direct)
    pieces = []
    for dw, db in enc_grads + proj_grads:
        pieces.append(dw.ravel())
        pieces.append(db)
    return np.concatenate(pieces)


def flatten_params(m: ModelBundle) -> np.ndarray:
    """Canonical flat vector: encoder layers then projector layers, each as
    row-major weight followed by bias."""
    pieces = []
    for layer in m.encoder_layers + m.projector_layers:
        pieces.append(layer.weight.ravel())
        pieces.append(layer.bias)
    return np.concatenate(pieces)


def unflatten_params(template: ModelBundle, v) -> ModelBundle:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size != template.num_params():
        raise ShapeError(
            f"expected flat vector of length {template.num_params()}, got shape {v.shape}")
    out = template.copy()
    pos = 0
    for layer in out.encoder_layers + out.projector_layers:
        n = layer.weight.size
        layer.weight = v[pos:pos + n].reshape(layer.weight.shape).copy()
        pos += n
        n = layer.bias.size
        layer.bias = v[pos:pos + n].copy()
        pos += n
    return out


def save_checkpoint(m: ModelBundle, path: str) -> None:
    """Binary checkpoint: magic, version, JSON architecture header (length
    prefixed), then the flat parameter vector as little-endian float64."""
    arch = {
        "encoder_dims": [m.encoder_layers[0].in_dim] + [l.out_dim for l in m.encoder_layers],
        "projector_dims": [m.projector_layers[0].in_dim] + [l.out_dim for l in m.projector_layers],
        "activation": m.activation,
        "projector_activation": m.projector_activation,
    }
    header = json.dumps(arch, sort_keys=True).encode("utf-8")
    payload = flatten_params(m).astype("<f8").tobytes()
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
        fh.write(header)
        fh.write(payload)
    os.replace(tmp, path)


def load_checkpoint(path: str) -> ModelBundle:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ParameterError(f"not a model checkpoint: {path}")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise ParameterError(f"unsupported checkpoint version {version}")
        arch = json.loads(fh.read(hlen).decode("utf-8"))
        flat = np.frombuffer(fh.read(), dtype="<f8").astype(np.float64)
    enc_dims = arch["encoder_dims"]
    proj_dims = arch["projector_dims"]
    encoder = [LayerParams(np.zeros((o, i)), np.zeros(o))
               for i, o in zip(enc_dims[:-1], enc_dims[1:])]
    projector = [LayerParams(np.zeros((o, i)), np.zeros(o))
                 for i, o in zip(proj_dims[:-1], proj_dims[1:])]
    template = ModelBundle(encoder, projector, arch["activation"],
                           arch["projector_activation"])
    return unflatten_params(template, flat)
