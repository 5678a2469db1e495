"""Anchored-ensemble and MC-dropout training loops.

All randomness is derived from ``(base seed, member index, purpose)`` so a
member's trajectory does not depend on which worker trains it or on how many
other members exist.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad
from .exceptions import ConfigError, InputError, ShapeError, TrainingError
from .lstm import HeadOutput, NetworkConfig, forward, param_shapes, sample_dropout_mask
from .objectives import PriorSpec, anchor_penalty, member_objective

MODES = ("anchored", "mc_dropout")
PENALTY_SCALINGS = ("per_sample", "total")

# stream identifiers mixed into every seed
_ANCHOR, _SHUFFLE, _DROPOUT, _INIT, _INFERENCE = range(5)


def member_rng(seed: int, member: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(member), int(purpose)])


@dataclass(frozen=True)
class TrainConfig:
    n_members: int = 30
    epochs: int = 300
    learning_rate: float = 1e-3
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    mode: str = "anchored"
    mc_samples: int = 30
    # "per_sample": penalty / N_train, the averaged log-posterior
    # "total": the raw penalty added to the mean data loss
    penalty_scaling: str = "per_sample"

    def __post_init__(self):
        problems = []
        if self.n_members < 1:
            problems.append("n_members must be >= 1")
        if self.epochs < 1:
            problems.append("epochs must be >= 1")
        if self.learning_rate < 0:
            problems.append("learning_rate must be >= 0")
        if self.batch_size < 1:
            problems.append("batch_size must be >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            problems.append("Adam betas must lie in [0, 1)")
        if self.adam_eps <= 0:
            problems.append("adam_eps must be positive")
        if self.mode not in MODES:
            problems.append(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mc_samples < 1:
            problems.append("mc_samples must be >= 1")
        if self.penalty_scaling not in PENALTY_SCALINGS:
            problems.append(f"penalty_scaling must be one of {PENALTY_SCALINGS}, got {self.penalty_scaling!r}")
        if problems:
            raise ConfigError("; ".join(problems))


def draw_anchors(net: NetworkConfig, prior: PriorSpec, seed: int, n_members: int) -> list[dict[str, np.ndarray]]:
    """One anchor per member and parameter, drawn from N(0, sigma_g^2 I)."""
    anchors = []
    for m in range(n_members):
        rng = member_rng(seed, m, _ANCHOR)
        draw = {}
        for name, shape in param_shapes(net).items():
            arr = rng.normal(0.0, np.sqrt(prior.variance_of(name)), size=shape)
            arr.setflags(write=False)
            draw[name] = arr
        anchors.append(draw)
    return anchors


class Adam:
    """Bias-corrected Adam acting in place on a dict of arrays."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, p in params.items():
            g = grads[k]
            if g.shape != p.shape:
                raise ShapeError(f"{k}: gradient shape {g.shape} != parameter shape {p.shape}")
            if k not in self.m:
                self.m[k] = np.zeros_like(p)
                self.v[k] = np.zeros_like(p)
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)


@dataclass
class TrainingLog:
    """Per-epoch objective terms; entry 0 is the full-data value before training."""

    data: list[float] = field(default_factory=list)
    penalty: list[float] = field(default_factory=list)
    total: list[float] = field(default_factory=list)

    def record(self, data: float, penalty: float) -> None:
        self.data.append(data)
        self.penalty.append(penalty)
        self.total.append(data + penalty)


@dataclass
class EnsembleModel:
    net: NetworkConfig
    train: TrainConfig
    prior: PriorSpec
    nu: float
    members: list
    anchors: Optional[list] = None
    logs: list = field(default_factory=list)

    @property
    def mode(self) -> str:
        return self.train.mode


ProgressFn = Callable[[int, int, float, float], None]


def stderr_progress(member: int, epoch: int, data: float, penalty: float) -> None:
    print(f"member={member} epoch={epoch} data={data:.6g} penalty={penalty:.6g}", file=sys.stderr, flush=True)


def penalty_weight(config: TrainConfig, n_train: int) -> float:
    return 1.0 / n_train if config.penalty_scaling == "per_sample" else 1.0


def evaluate_objective(
    X, y, params, anchors, prior, net, nu, weight: float = 1.0, chunk: int = 1024
) -> tuple[float, float]:
    """Full-dataset (data term, penalty) at ``params`` without building gradients."""
    n = len(y)
    total = 0.0
    for start in range(0, n, chunk):
        sl = slice(start, start + chunk)
        obj = member_objective(X[sl], y[sl], params, None, prior, net, nu)
        total += float(obj.data.value) * len(y[sl])
    penalty = 0.0 if anchors is None else weight * float(anchor_penalty(params, anchors, prior).value)
    return total / n, penalty


def train_member(
    member: int,
    X: np.ndarray,
    y: np.ndarray,
    anchors: Optional[dict],
    net: NetworkConfig,
    config: TrainConfig,
    prior: PriorSpec,
    nu: float = 4.0,
    progress: Optional[ProgressFn] = None,
) -> tuple[dict[str, np.ndarray], TrainingLog]:
    """Minimise the member objective with Adam over shuffled minibatches.

    With ``anchors`` the member starts at, and is pulled towards, its anchor.
    Without anchors (dropout mode) it starts from a prior draw, is trained with
    fresh dropout masks per batch and carries no penalty.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(X) == 0 or len(X) != len(y):
        raise InputError("training data must be non-empty with one target per window")
    dropout = anchors is None
    if dropout:
        init_rng = member_rng(config.seed, member, _INIT)
        params = {
            name: init_rng.normal(0.0, np.sqrt(prior.variance_of(name)), size=shape)
            for name, shape in param_shapes(net).items()
        }
        mask_rng = member_rng(config.seed, member, _DROPOUT)
    else:
        params = {k: np.array(v, dtype=np.float64) for k, v in anchors.items()}
    shuffle_rng = member_rng(config.seed, member, _SHUFFLE)
    adam = Adam(config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    log = TrainingLog()
    n = len(y)
    weight = penalty_weight(config, n)
    log.record(*evaluate_objective(X, y, params, anchors, prior, net, nu, weight))

    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        data_sum = pen_sum = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            leaves = {k: ad.Node(v, requires_grad=True) for k, v in params.items()}
            masks = sample_dropout_mask(net, mask_rng, len(idx)) if dropout else None
            obj = member_objective(X[idx], y[idx], leaves, anchors, prior, net, nu, masks, weight)
            if not np.isfinite(obj.total.value):
                raise TrainingError(f"member {member}: objective diverged in epoch {epoch}")
            ad.backward(obj.total)
            grads = {k: leaf.grad for k, leaf in leaves.items()}
            if not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingError(f"member {member}: non-finite gradient in epoch {epoch}")
            adam.step(params, grads)
            data_sum += float(obj.data.value) * len(idx)
            pen_sum += float(obj.penalty.value) * len(idx)
        log.record(data_sum / n, pen_sum / n)
        if not np.isfinite(log.total[-1]):
            raise TrainingError(f"member {member}: objective diverged in epoch {epoch}")
        if progress is not None:
            progress(member, epoch, log.data[-1], log.penalty[-1])
    return params, log


def train_ensemble(
    X: np.ndarray,
    y: np.ndarray,
    net: NetworkConfig,
    config: TrainConfig,
    prior: Optional[PriorSpec] = None,
    nu: float = 4.0,
    n_jobs: Optional[int] = None,
    progress: Optional[ProgressFn] = None,
) -> EnsembleModel:
    """Train every member (anchored mode) or the single dropout network."""
    prior = prior or PriorSpec()
    if config.mode == "mc_dropout":
        if not net.dropout_rate > 0:
            raise ConfigError("mc_dropout mode requires dropout_rate > 0")
        params, log = train_member(0, X, y, None, net, config, prior, nu, progress)
        return EnsembleModel(net, config, prior, nu, [params], None, [log])

    if net.dropout_rate != 0:
        raise ConfigError("anchored mode trains without dropout; set dropout_rate = 0")
    anchors = draw_anchors(net, prior, config.seed, config.n_members)

    def run(m):
        try:
            return train_member(m, X, y, anchors[m], net, config, prior, nu, progress)
        except TrainingError as exc:
            raise TrainingError(f"ensemble member {m} failed: {exc}") from exc

    if n_jobs is not None and n_jobs != 1 and config.n_members > 1:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(delayed(run)(m) for m in range(config.n_members))
    else:
        results = [run(m) for m in range(config.n_members)]
    return EnsembleModel(
        net, config, prior, nu,
        members=[p for p, _ in results],
        anchors=anchors,
        logs=[log for _, log in results],
    )


def predict_members(model: EnsembleModel, X, mc_dropout: bool = True, chunk: int = 1024) -> list[HeadOutput]:
    """Per-member head outputs (anchored) or per-pass outputs (dropout).

    Dropout passes draw one mask per layer and pass from a fixed inference
    stream, so repeated calls return identical values. ``mc_dropout=False``
    runs the same number of passes with masks switched off.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[1:] != (model.net.window_length, model.net.input_dim):
        raise InputError(
            f"expected windows of shape (N, {model.net.window_length}, {model.net.input_dim}), got {X.shape}"
        )
    if model.mode == "anchored":
        runs = [(p, None) for p in model.members]
    else:
        rng = member_rng(model.train.seed, 0, _INFERENCE)
        params = model.members[0]
        runs = []
        for _ in range(model.train.mc_samples):
            masks = sample_dropout_mask(model.net, rng)
            runs.append((params, masks if mc_dropout else None))
    return [_chunked_forward(X, p, model.net, masks, chunk) for p, masks in runs]


def _chunked_forward(X, params, net, masks, chunk) -> HeadOutput:
    parts = [forward(X[s:s + chunk], params, net, masks).numpy() for s in range(0, len(X), chunk)]
    if net.head == "t":
        return HeadOutput(
            loc=np.concatenate([p.loc for p in parts]),
            scale=np.concatenate([p.scale for p in parts]),
        )
    return HeadOutput(quantiles=np.concatenate([p.quantiles for p in parts]))
