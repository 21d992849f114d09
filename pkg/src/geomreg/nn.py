"""MLP encoder/head and AdamW.

The encoder is a plain MLP whose hidden layers carry the activation and whose
final (representation) layer is linear; its output is L2-normalized row-wise,
so every representation lives on the unit hypersphere. The head is a single
affine layer producing one scalar per row.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .fileio import read_blob, write_blob

ACTIVATIONS = {"relu": ad.relu, "tanh": ad.tanh}


@dataclass
class Mlp:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str  # applied after every layer except the last

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def replace_params(self, flat: list[np.ndarray]) -> "Mlp":
        n = len(self.weights)
        return Mlp([flat[2 * i] for i in range(n)],
                   [flat[2 * i + 1] for i in range(n)], self.activation)


def init_mlp(layer_dims, activation: str, seed: int) -> Mlp:
    """Xavier-uniform weights in [-sqrt(6/(fan_in+fan_out)), +...], zero biases."""
    dims = list(layer_dims)
    if len(dims) < 2:
        raise ValueError("need at least input and output dims")
    if any(d <= 0 for d in dims):
        raise ValueError(f"non-positive layer dim in {dims}")
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        ws.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        bs.append(np.zeros(fan_out))
    return Mlp(ws, bs, activation)


def mlp_apply(param_vars: list[ad.Var], x: ad.Var, activation: str) -> ad.Var:
    """Forward pass over tape Vars; hidden layers activated, last layer linear."""
    act = ACTIVATIONS[activation]
    n = len(param_vars) // 2
    h = x
    for i in range(n):
        h = ad.add(ad.matmul(h, param_vars[2 * i]), param_vars[2 * i + 1])
        if i < n - 1:
            h = act(h)
    return h


def encode(mlp: Mlp, x: np.ndarray, dtype=np.float64) -> np.ndarray:
    """Unit-norm representations for a batch (inference path)."""
    x = np.asarray(x, dtype=dtype)
    if x.ndim != 2 or x.shape[1] != mlp.weights[0].shape[0]:
        raise ValueError(f"input of shape {x.shape} does not match encoder "
                         f"input dim {mlp.weights[0].shape[0]}")
    tape = ad.Tape(dtype=dtype)
    pv = [tape.constant(p) for p in mlp.params()]
    return ad.l2_normalize(mlp_apply(pv, tape.constant(x), mlp.activation)).data


def regress(head: Mlp, z: np.ndarray, dtype=np.float64) -> np.ndarray:
    """Scalar prediction per representation row (inference path)."""
    z = np.asarray(z, dtype=dtype)
    if z.ndim != 2 or z.shape[1] != head.weights[0].shape[0]:
        raise ValueError(f"representations of shape {z.shape} do not match "
                         f"head input dim {head.weights[0].shape[0]}")
    tape = ad.Tape(dtype=dtype)
    pv = [tape.constant(p) for p in head.params()]
    return mlp_apply(pv, tape.constant(z), head.activation).data[:, 0]


@dataclass
class AdamWState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params, **hyper) -> "AdamWState":
        st = cls(**hyper)
        st.m = [np.zeros_like(p) for p in params]
        st.v = [np.zeros_like(p) for p in params]
        return st


def adamw_step(params: list[np.ndarray], grads: list[np.ndarray],
               state: AdamWState) -> list[np.ndarray]:
    """One AdamW update with decoupled weight decay; returns new parameters."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params/grads/state length mismatch")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ValueError(f"grad shape {g.shape} != param shape {p.shape}")
        if not np.isfinite(g).all():
            raise ad.NumericError(f"non-finite gradient for parameter {i}")
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * (g * g)
        mhat = state.m[i] / c1
        vhat = state.v[i] / c2
        out.append(p - state.lr * (mhat / (np.sqrt(vhat) + state.eps)
                                   + state.weight_decay * p))
    return out


def save_checkpoint(path, encoder: Mlp, head: Mlp, meta: dict) -> None:
    header = dict(meta)
    header.update({
        "kind": "checkpoint",
        "encoder_dims": encoder.dims,
        "head_dims": head.dims,
        "activation": encoder.activation,
        "head_activation": head.activation,
    })
    arrays = {}
    for tag, mlp in (("encoder", encoder), ("head", head)):
        for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
            arrays[f"{tag}.w{i}"] = w
            arrays[f"{tag}.b{i}"] = b
    write_blob(path, header, arrays)


def load_checkpoint(path):
    header, arrays = read_blob(path)
    if header.get("kind") != "checkpoint":
        raise ValueError(f"{path}: not a checkpoint file")

    def rebuild(tag, dims, activation):
        n = len(dims) - 1
        ws = [arrays[f"{tag}.w{i}"].astype(np.float64) for i in range(n)]
        bs = [arrays[f"{tag}.b{i}"].astype(np.float64) for i in range(n)]
        mlp = Mlp(ws, bs, activation)
        for p in mlp.params():
            if not np.isfinite(p).all():
                raise ad.NumericError(f"{path}: non-finite parameters in {tag}")
        return mlp

    encoder = rebuild("encoder", header["encoder_dims"], header["activation"])
    head = rebuild("head", header["head_dims"], header["head_activation"])
    return encoder, head, header
