"""Stacked LSTM regressor with a Student-t or a three-quantile output head.

Parameters live in a flat ``dict[str, ndarray]`` whose keys encode layer, gate
and role (``"l0.W_xi"``, ``"l1.b_hf"``, ``"head.W"`` ...). Every key belongs to
exactly one :class:`GateBlock`; the prior and the anchors act per block.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Node
from .exceptions import ConfigError, InputError, ShapeError

GATES = ("i", "f", "o", "c")
QUANTILE_LEVELS = (0.1, 0.5, 0.9)


class GateBlock(str, Enum):
    INPUT = "input_i"
    FORGET = "forget_f"
    OUTPUT = "output_o"
    CANDIDATE = "candidate_c"
    HEAD = "head"


_GATE_TO_BLOCK = {
    "i": GateBlock.INPUT,
    "f": GateBlock.FORGET,
    "o": GateBlock.OUTPUT,
    "c": GateBlock.CANDIDATE,
}


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int
    num_layers: int = 4
    hidden_dim: int = 32
    head: str = "t"
    dropout_rate: float = 0.0
    window_length: int = 16
    scale_floor: float = 1e-4

    def __post_init__(self):
        problems = []
        if self.input_dim < 1:
            problems.append("input_dim must be >= 1")
        if self.num_layers < 1:
            problems.append("num_layers must be >= 1")
        if self.hidden_dim < 1:
            problems.append("hidden_dim must be >= 1")
        if self.head not in ("t", "quantile"):
            problems.append(f"head must be 't' or 'quantile', got {self.head!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            problems.append("dropout_rate must lie in [0, 1)")
        if self.window_length < 1:
            problems.append("window_length must be >= 1")
        if self.scale_floor <= 0:
            problems.append("scale_floor must be positive")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def head_outputs(self) -> int:
        return 2 if self.head == "t" else 3


def param_shapes(config: NetworkConfig) -> dict[str, tuple[int, ...]]:
    """Ordered parameter manifest: name -> shape."""
    shapes: dict[str, tuple[int, ...]] = {}
    H = config.hidden_dim
    for layer in range(config.num_layers):
        width = config.input_dim if layer == 0 else H
        for g in GATES:
            shapes[f"l{layer}.W_x{g}"] = (H, width)
            shapes[f"l{layer}.W_h{g}"] = (H, H)
            shapes[f"l{layer}.b_{g}"] = (H,)
            shapes[f"l{layer}.b_h{g}"] = (H,)
    shapes["head.W"] = (config.head_outputs, H)
    shapes["head.b"] = (config.head_outputs,)
    return shapes


def block_of(name: str) -> GateBlock:
    if name.startswith("head."):
        return GateBlock.HEAD
    role = name.split(".", 1)[1]
    # W_xi, W_hi, b_i, b_hi: the gate letter is always last
    return _GATE_TO_BLOCK[role[-1]]


def init_params(config: NetworkConfig, rng: np.random.Generator, variance: float) -> dict[str, np.ndarray]:
    std = np.sqrt(variance)
    return {name: rng.normal(0.0, std, size=shape) for name, shape in param_shapes(config).items()}


def zero_params(config: NetworkConfig) -> dict[str, np.ndarray]:
    return {name: np.zeros(shape) for name, shape in param_shapes(config).items()}


def check_params(params: dict[str, np.ndarray], config: NetworkConfig) -> None:
    expected = param_shapes(config)
    if set(params) != set(expected):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise ShapeError(f"parameter set mismatch (missing={missing}, unexpected={extra})")
    for name, shape in expected.items():
        got = np.shape(params[name].value if isinstance(params[name], Node) else params[name])
        if got != shape:
            raise ShapeError(f"{name}: expected shape {shape}, got {got}")


@dataclass
class HeadOutput:
    """Head activations for a batch.

    For a t-head ``loc`` and ``scale`` are set; for a quantile head
    ``quantiles`` holds one column per level in :data:`QUANTILE_LEVELS`.
    Fields are nodes during training and plain arrays after :meth:`numpy`.
    """

    loc: object = None
    scale: object = None
    quantiles: object = None

    def numpy(self) -> "HeadOutput":
        def arr(x):
            return x.value if isinstance(x, Node) else x

        return HeadOutput(arr(self.loc), arr(self.scale), arr(self.quantiles))


def _layer_view(params: dict, layer: int) -> dict:
    prefix = f"l{layer}."
    return {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}


def _fused_layer_weights(p: dict, batch: int):
    """Stack the four gates column-wise: (in, 4H), (H, 4H) and (B, 4H)."""
    wx = ad.concat_cols([ad.transpose(p[f"W_x{g}"]) for g in GATES])
    wh = ad.concat_cols([ad.transpose(p[f"W_h{g}"]) for g in GATES])
    bias = ad.concat([p[f"b_{g}"] + p[f"b_h{g}"] for g in GATES])
    return wx, wh, ad.broadcast_rows(bias, batch)


def _gate_kernel(z: Node, c_prev: Node) -> Node:
    """Pointwise half of the cell: pre-activations -> [h_t | c_t].

    ``z`` holds the input, forget, output and candidate pre-activations side
    by side (B, 4H). Returned as one (B, 2H) node with an analytic backward.
    """
    H = c_prev.value.shape[1]
    zv = z.value
    sig = 0.5 * (1.0 + np.tanh(0.5 * zv[:, : 3 * H]))
    i, f, o = sig[:, :H], sig[:, H : 2 * H], sig[:, 2 * H :]
    g = np.tanh(zv[:, 3 * H :])
    cp = c_prev.value
    c = f * cp + i * g
    tc = np.tanh(c)
    h = o * tc

    def backward(grad):
        gh, gc = grad[:, :H], grad[:, H:]
        dc = gc + gh * o * (1.0 - tc * tc)
        if z.requires_grad:
            dz = np.empty_like(zv)
            dz[:, :H] = dc * g * i * (1.0 - i)
            dz[:, H : 2 * H] = dc * cp * f * (1.0 - f)
            dz[:, 2 * H : 3 * H] = gh * tc * o * (1.0 - o)
            dz[:, 3 * H :] = dc * i * (1.0 - g * g)
            ad._accumulate(z, dz)
        if c_prev.requires_grad:
            ad._accumulate(c_prev, dc * f)

    return Node._result(np.concatenate([h, c], axis=1), "lstm_gates", (z, c_prev), backward)


def _cell(x_t: Node, h_prev: Node, c_prev: Node, fused) -> tuple[Node, Node]:
    wx, wh, bias = fused
    H = c_prev.value.shape[1]
    z = x_t @ wx + h_prev @ wh + bias
    state = _gate_kernel(z, c_prev)
    return ad.slice_cols(state, 0, H), ad.slice_cols(state, H, 2 * H)


def lstm_cell_step(x_t, h_prev, c_prev, layer_params: dict) -> tuple[Node, Node]:
    """One LSTM step on a batch. ``x_t`` is (B, in), states are (B, H).

    ``layer_params`` maps ``W_xg``, ``W_hg``, ``b_g``, ``b_hg`` (g in ifoc)
    to nodes or arrays in the layout of :func:`param_shapes`.
    """
    x_t, h_prev, c_prev = ad._lift(x_t), ad._lift(h_prev), ad._lift(c_prev)
    p = {k: ad._lift(v) for k, v in layer_params.items()}
    if x_t.value.ndim != 2 or x_t.value.shape[1] != p["W_xi"].value.shape[1]:
        raise ShapeError(f"input of shape {x_t.value.shape} does not match W_xi {p['W_xi'].value.shape}")
    if h_prev.value.shape != c_prev.value.shape or h_prev.value.shape[1] != p["W_hi"].value.shape[0]:
        raise ShapeError("hidden/cell state shape does not match recurrent weights")
    return _cell(x_t, h_prev, c_prev, _fused_layer_weights(p, x_t.value.shape[0]))


def _as_batch(windows) -> np.ndarray:
    arr = np.asarray(windows, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ShapeError(f"expected windows of shape (B, T, F), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError("window contains non-finite entries")
    return arr


def forward(windows, params: dict, config: NetworkConfig, masks: Optional[list] = None) -> HeadOutput:
    """Run a batch of windows (B, T, F) or a single window (T, F).

    ``params`` values may be arrays (inference) or trainable nodes. ``masks``
    is the output of :func:`sample_dropout_mask`; ``None`` disables dropout.
    """
    X = _as_batch(windows)
    B, T, F = X.shape
    if F != config.input_dim:
        raise ShapeError(f"expected {config.input_dim} features, got {F}")
    nodes = {k: ad._lift(v) for k, v in params.items()}
    H = config.hidden_dim

    inputs = [ad.constant(X[:, t, :]) for t in range(T)]
    for layer in range(config.num_layers):
        fused = _fused_layer_weights(_layer_view(nodes, layer), B)
        h = ad.constant(np.zeros((B, H)))
        c = ad.constant(np.zeros((B, H)))
        outputs = []
        for t in range(T):
            h, c = _cell(inputs[t], h, c, fused)
            outputs.append(h)
        if masks is not None:
            m = ad.constant(_tile_mask(masks[layer], B))
            last = layer == config.num_layers - 1
            outputs = [outputs[-1] * m] if last else [o * m for o in outputs]
        inputs = outputs

    top = inputs[-1]
    raw = top @ ad.transpose(nodes["head.W"]) + ad.broadcast_rows(nodes["head.b"], B)
    if config.head == "t":
        loc = ad.column(raw, 0)
        scale = ad.softplus(ad.column(raw, 1)) + config.scale_floor
        return HeadOutput(loc=loc, scale=scale)
    return HeadOutput(quantiles=raw)


def _tile_mask(mask: np.ndarray, batch: int) -> np.ndarray:
    if mask.ndim == 1:
        return np.broadcast_to(mask, (batch, mask.shape[0]))
    if mask.shape[0] != batch:
        raise ShapeError("dropout mask batch size does not match input")
    return mask


def sample_dropout_mask(config: NetworkConfig, rng: np.random.Generator, batch_size: Optional[int] = None) -> list:
    """Inverted-dropout masks, one per layer output.

    Each mask has shape (H,) or (batch_size, H) and is reused across every
    time step of a pass. Kept units carry the value ``1 / (1 - p)``.
    """
    p = config.dropout_rate
    if not 0.0 < p < 1.0:
        raise ConfigError(f"dropout masks need 0 < dropout_rate < 1, got {p}")
    shape = (config.hidden_dim,) if batch_size is None else (batch_size, config.hidden_dim)
    keep = 1.0 - p
    return [(rng.random(shape) < keep) / keep for _ in range(config.num_layers)]
