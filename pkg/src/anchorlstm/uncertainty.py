"""Aggregating ensemble outputs into point predictions and intervals."""

from __future__ import annotations

from dataclasses import dataclass, replace
from statistics import NormalDist

import numpy as np
from scipy.special import betainc

from .exceptions import ConfigError, ShapeError
from .lstm import HeadOutput

Z_90 = NormalDist().inv_cdf(0.90)  # 1.2816
Z_95 = NormalDist().inv_cdf(0.95)  # 1.6449


def student_t_cdf(x: float, nu: float) -> float:
    """CDF of the standard Student-t via the regularized incomplete beta."""
    if not nu > 0:
        raise ConfigError("nu must be positive")
    x = float(x)
    tail = 0.5 * float(betainc(0.5 * nu, 0.5, nu / (nu + x * x)))
    return 1.0 - tail if x > 0 else tail


def student_t_quantile(p: float, nu: float) -> float:
    """Inverse CDF of the standard Student-t, by bisection on :func:`student_t_cdf`."""
    if not 0.0 < p < 1.0:
        raise ConfigError(f"probability must lie in (0, 1), got {p}")
    if not nu > 0:
        raise ConfigError("nu must be positive")
    if p == 0.5:
        return 0.0
    # solve in the lower tail, where the CDF is computed without cancellation
    q = min(p, 1.0 - p)
    lo, hi = -1.0, 0.0
    while student_t_cdf(lo, nu) > q:
        hi = lo
        lo *= 2.0
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if student_t_cdf(mid, nu) > q:
            hi = mid
        else:
            lo = mid
    x = hi if abs(student_t_cdf(hi, nu) - q) <= abs(student_t_cdf(lo, nu) - q) else lo
    return -x if p > 0.5 else x


@dataclass(frozen=True)
class PredictiveSummary:
    """Student-t ensemble summary; every array has one entry per input."""

    mean: np.ndarray
    scale_sq_mean: np.ndarray
    epistemic_var: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    nu: float
    alpha: float

    @property
    def aleatoric(self) -> np.ndarray:
        return np.sqrt(self.nu / (self.nu - 2.0) * self.scale_sq_mean)

    @property
    def epistemic(self) -> np.ndarray:
        return np.sqrt(self.epistemic_var)

    @property
    def total_std(self) -> np.ndarray:
        return np.sqrt(self.nu / (self.nu - 2.0) * self.scale_sq_mean + self.epistemic_var)

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    def affine(self, a: float, b: float) -> "PredictiveSummary":
        """Summary of the targets mapped through ``y -> a*y + b`` (``a > 0``)."""
        if not a > 0:
            raise ConfigError("affine scale must be positive")
        return replace(
            self,
            mean=a * self.mean + b,
            scale_sq_mean=a * a * self.scale_sq_mean,
            epistemic_var=a * a * self.epistemic_var,
            lo=a * self.lo + b,
            hi=a * self.hi + b,
        )


@dataclass(frozen=True)
class QuantileSummary:
    """Quantile-head ensemble summary at the fixed 90% level."""

    mean: np.ndarray
    q10: np.ndarray
    q50: np.ndarray
    q90: np.ndarray
    epistemic_var: np.ndarray
    aleatoric: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    alpha: float = 0.1

    @property
    def epistemic(self) -> np.ndarray:
        return np.sqrt(self.epistemic_var)

    @property
    def total_std(self) -> np.ndarray:
        band = (self.q90 - self.q10) / (2.0 * Z_90)
        return np.sqrt(band * band + self.epistemic_var)

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    def affine(self, a: float, b: float) -> "QuantileSummary":
        if not a > 0:
            raise ConfigError("affine scale must be positive")
        return replace(
            self,
            mean=a * self.mean + b,
            q10=a * self.q10 + b,
            q50=a * self.q50 + b,
            q90=a * self.q90 + b,
            epistemic_var=a * a * self.epistemic_var,
            aleatoric=a * self.aleatoric,
            lo=a * self.lo + b,
            hi=a * self.hi + b,
        )


def _stack(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise ShapeError(f"{name} must be (members, inputs)")
    return arr


def _moments(arr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and population variance over axis 0, taken about the first member.

    Shifting first makes identical members give their common value and a
    variance of exactly zero.
    """
    d = arr - arr[0]
    return arr[0] + d.mean(axis=0), d.var(axis=0)


def summarize_t(loc, scale, nu: float, alpha: float = 0.1) -> PredictiveSummary:
    """Combine member locations/scales, each shaped (members, inputs).

    Half-width is ``t_{1-alpha/2,nu} * sqrt(mean s^2 + (nu-2)/nu * var(mu))``:
    the epistemic variance is converted to the t scale so that the total
    variance of the interval matches that of the member mixture.
    """
    if not nu > 2:
        raise ConfigError(f"variance decomposition needs nu > 2, got {nu}")
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    loc = _stack(loc, "loc")
    scale = _stack(scale, "scale")
    if loc.shape != scale.shape:
        raise ShapeError("loc and scale must have the same shape")
    mean, epi = _moments(loc)
    s2, _ = _moments(scale * scale)
    half = student_t_quantile(1.0 - alpha / 2.0, nu) * np.sqrt(s2 + (nu - 2.0) / nu * epi)
    return PredictiveSummary(mean, s2, epi, mean - half, mean + half, float(nu), float(alpha))


def summarize_quantile(quantiles) -> QuantileSummary:
    """Combine member (q10, q50, q90) triples shaped (members, inputs, 3).

    Crossed quantiles are sorted per member first. The averaged band is
    widened on both sides by ``z_0.95`` times the spread of member medians.
    """
    q = np.asarray(quantiles, dtype=np.float64)
    if q.ndim == 2:
        q = q[None]
    if q.ndim != 3 or q.shape[2] != 3 or q.shape[0] < 1:
        raise ShapeError("quantiles must be (members, inputs, 3)")
    q = np.sort(q, axis=2)
    q10, q50, q90 = q[..., 0], q[..., 1], q[..., 2]
    m10, _ = _moments(q10)
    m50, epi = _moments(q50)
    m90, _ = _moments(q90)
    half_band, _ = _moments((q90 - q10) / 2.0)
    sigma = np.sqrt(epi)
    lo = m10 - Z_95 * sigma
    hi = m90 + Z_95 * sigma
    return QuantileSummary(
        mean=m50,
        q10=m10,
        q50=m50,
        q90=m90,
        epistemic_var=epi,
        aleatoric=half_band,
        lo=lo,
        hi=hi,
    )


def summarize(outputs: list[HeadOutput], head: str, nu: float = 4.0, alpha: float = 0.1):
    """Dispatch on head kind; ``outputs`` is what ``predict_members`` returns."""
    if head == "t":
        return summarize_t([o.loc for o in outputs], [o.scale for o in outputs], nu, alpha)
    if not np.isclose(alpha, 0.1):
        raise ConfigError("quantile heads produce 90% intervals only (alpha = 0.1)")
    return summarize_quantile(np.stack([o.quantiles for o in outputs]))
