"""Training losses and the anchored per-member objective."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Node
from .exceptions import ConfigError, ContractError, ShapeError
from .lstm import QUANTILE_LEVELS, GateBlock, NetworkConfig, block_of, forward

DEFAULT_PRIOR_VARIANCE = 0.01


@dataclass(frozen=True)
class TNllConfig:
    nu: float = 4.0
    scale_floor: float = 1e-4

    def __post_init__(self):
        if not self.nu > 0:
            raise ConfigError(f"nu must be positive, got {self.nu}")
        if not self.scale_floor > 0:
            raise ConfigError("scale_floor must be positive")


@dataclass(frozen=True)
class PriorSpec:
    """Isotropic Gaussian prior per gate block, centred at zero."""

    variances: Mapping[GateBlock, float] = field(
        default_factory=lambda: {b: DEFAULT_PRIOR_VARIANCE for b in GateBlock}
    )

    def __post_init__(self):
        missing = [b.value for b in GateBlock if b not in self.variances]
        if missing:
            raise ConfigError(f"prior variance missing for blocks {missing}")
        bad = [b.value for b, v in self.variances.items() if not v > 0]
        if bad:
            raise ConfigError(f"prior variance must be positive for blocks {bad}")

    @classmethod
    def shared(cls, variance: float) -> "PriorSpec":
        return cls({b: float(variance) for b in GateBlock})

    def variance_of(self, name: str) -> float:
        return self.variances[block_of(name)]


def _check_scale(s: Node, floor: float) -> None:
    if np.any(s.value < floor):
        raise ContractError(f"scale below floor {floor}")


def t_nll(y, mu, s, nu: float, scale_floor: float = 1e-4, include_constants: bool = False) -> Node:
    """Elementwise Student-t negative log-likelihood.

    Without constants this is ``log s + (nu+1)/2 * log(1 + (y-mu)^2 / (nu s^2))``.
    ``include_constants`` adds the gamma-function and ``log(nu*pi)/2`` terms so
    values are comparable across different ``nu``.
    """
    if not nu > 0:
        raise ConfigError("nu must be positive")
    y, mu, s = ad._lift(y), ad._lift(mu), ad._lift(s)
    _check_scale(s, scale_floor)
    z2 = ad.square(y - mu) / (ad.square(s) * nu)
    out = ad.log(s) + ad.log(z2 + 1.0) * (0.5 * (nu + 1.0))
    if include_constants:
        const = 0.5 * math.log(nu * math.pi) + math.lgamma(0.5 * nu) - math.lgamma(0.5 * (nu + 1.0))
        out = out + const
    return out


def gaussian_nll(y, mu, s, scale_floor: float = 1e-4, include_constants: bool = False) -> Node:
    """``log s + (y-mu)^2 / (2 s^2)``, plus ``log(2 pi)/2`` if requested."""
    y, mu, s = ad._lift(y), ad._lift(mu), ad._lift(s)
    _check_scale(s, scale_floor)
    out = ad.log(s) + ad.square(y - mu) / (ad.square(s) * 2.0)
    if include_constants:
        out = out + 0.5 * math.log(2.0 * math.pi)
    return out


def pinball_loss(y, q_hat, tau: float) -> Node:
    if not 0.0 < tau < 1.0:
        raise ConfigError(f"quantile level must lie in (0, 1), got {tau}")
    u = ad._lift(y) - ad._lift(q_hat)
    # tau*u for u >= 0 and (tau-1)*u otherwise
    return u * tau + ad.relu(-u)


def multi_quantile_loss(y, quantiles) -> Node:
    """Per-sample pinball loss averaged over the three head quantiles."""
    q = ad._lift(quantiles)
    y = ad._lift(y)
    total = None
    for j, tau in enumerate(QUANTILE_LEVELS):
        term = pinball_loss(y, ad.column(q, j), tau)
        total = term if total is None else total + term
    return total * (1.0 / len(QUANTILE_LEVELS))


def anchor_penalty(params: Mapping[str, object], anchors: Mapping[str, np.ndarray], prior: PriorSpec) -> Node:
    """Sum over blocks of ``||W_g - anchor_g||^2 / (2 sigma_g^2)``."""
    if set(params) != set(anchors):
        raise ShapeError("parameter and anchor partitions differ")
    nodes, diffs, weights = [], [], []
    for name, p in params.items():
        p = ad._lift(p)
        a = np.asarray(anchors[name])
        if a.shape != p.value.shape:
            raise ShapeError(f"{name}: anchor shape {a.shape} != parameter shape {p.value.shape}")
        nodes.append(p)
        diffs.append(p.value - a)
        weights.append(0.5 / prior.variance_of(name))
    value = float(np.sum([w * np.dot(d.ravel(), d.ravel()) for d, w in zip(diffs, weights)]))

    def backward(g):
        for p, d, w in zip(nodes, diffs, weights):
            ad._accumulate(p, (2.0 * w * g) * d)

    return Node._result(np.array(value), "anchor_penalty", tuple(nodes), backward)


def data_term(windows, targets, params, net: NetworkConfig, nu: float, masks: Optional[list] = None) -> Node:
    """Mean per-sample loss of the head over a batch."""
    targets = np.asarray(targets, dtype=np.float64)
    if targets.size == 0:
        raise ContractError("empty batch")
    out = forward(windows, params, net, masks)
    y = ad.constant(targets.reshape(-1))
    if net.head == "t":
        per_sample = t_nll(y, out.loc, out.scale, nu, net.scale_floor)
    else:
        per_sample = multi_quantile_loss(y, out.quantiles)
    return ad.mean(per_sample)


@dataclass
class ObjectiveValue:
    total: Node
    data: Node
    penalty: Node


def member_objective(
    windows,
    targets,
    params,
    anchors: Optional[Mapping[str, np.ndarray]],
    prior: PriorSpec,
    net: NetworkConfig,
    nu: float = 4.0,
    masks: Optional[list] = None,
    penalty_weight: float = 1.0,
) -> ObjectiveValue:
    """Mean data loss plus the anchor penalty (omitted when ``anchors`` is None).

    ``penalty_weight`` multiplies the penalty; training passes ``1/N`` to
    average the prior over the training set like the data term.
    """
    data = data_term(windows, targets, params, net, nu, masks)
    if anchors is None:
        penalty = ad.constant(0.0)
    else:
        penalty = anchor_penalty(params, anchors, prior)
        if penalty_weight != 1.0:
            penalty = penalty * penalty_weight
    return ObjectiveValue(total=data + penalty, data=data, penalty=penalty)
