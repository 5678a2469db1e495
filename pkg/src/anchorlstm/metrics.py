"""Point-accuracy metrics and interval calibration diagnostics."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from statistics import NormalDist

import numpy as np

from .exceptions import EvaluationError, InputError

REPORT_KEYS = ("rmse", "mae", "r2", "ev", "coverage", "cov_low", "cov_high", "width", "stvar")


def _pair(y, y_hat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    if y.size == 0 or y.size != y_hat.size:
        raise InputError(f"need equal non-empty lengths, got {y.size} and {y_hat.size}")
    return y, y_hat


def rmse(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    err = np.abs(y - y_hat)
    peak = err.max()
    if peak == 0:
        return 0.0
    # scaled so squaring neither underflows nor overflows
    return float(peak * np.sqrt(np.mean((err / peak) ** 2)))


def mae(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def r2_ev(y, y_hat) -> tuple[float, float]:
    """Coefficient of determination and explained variance."""
    y, y_hat = _pair(y, y_hat)
    var_y = np.var(y)
    if var_y == 0:
        raise EvaluationError("targets are constant; R^2 is undefined")
    resid = y - y_hat
    r2 = 1.0 - np.mean(resid ** 2) / var_y
    ev = 1.0 - np.var(resid) / var_y
    return float(r2), float(ev)


def wilson_interval(successes: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    if n < 1 or not 0 <= successes <= n:
        raise InputError("need 0 <= successes <= n and n >= 1")
    z = NormalDist().inv_cdf(0.5 + confidence / 2.0)
    p = successes / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    # clip so the bounds always bracket p despite rounding at p in {0, 1}
    return max(0.0, min(centre - half, p)), min(1.0, max(centre + half, p))


@dataclass(frozen=True)
class CoverageResult:
    coverage: float
    low: float
    high: float
    n: int
    nominal: float

    @property
    def calibrated(self) -> bool:
        return self.low <= self.nominal <= self.high


def coverage_test(y, lo, hi, nominal: float = 0.9, test_confidence: float = 0.95) -> CoverageResult:
    y = np.asarray(y, dtype=np.float64).ravel()
    lo = np.asarray(lo, dtype=np.float64).ravel()
    hi = np.asarray(hi, dtype=np.float64).ravel()
    if y.size == 0 or not y.size == lo.size == hi.size:
        raise InputError("targets and interval bounds must have equal non-zero length")
    if np.any(lo > hi):
        raise InputError("malformed interval: lower bound above upper bound")
    k = int(np.count_nonzero((y >= lo) & (y <= hi)))
    low, high = wilson_interval(k, y.size, test_confidence)
    return CoverageResult(k / y.size, low, high, int(y.size), float(nominal))


def standardized_variance(y, mean, total_std) -> float:
    """Population variance of ``(y - mean) / total_std``; ideal value 1."""
    y, mean = _pair(y, mean)
    sd = np.asarray(total_std, dtype=np.float64).ravel()
    if sd.size != y.size:
        raise InputError("total_std length differs from targets")
    if np.any(sd <= 0):
        raise InputError("total standard deviation must be positive")
    return float(np.var((y - mean) / sd))


def mean_width(lo, hi) -> float:
    lo = np.asarray(lo, dtype=np.float64).ravel()
    hi = np.asarray(hi, dtype=np.float64).ravel()
    if lo.size == 0 or lo.size != hi.size:
        raise InputError("need equal non-empty interval arrays")
    return float(np.mean(hi - lo))


@dataclass(frozen=True)
class MetricsReport:
    rmse: float
    mae: float
    r2: float
    ev: float


@dataclass(frozen=True)
class CalibrationReport:
    nominal: float
    coverage: float
    cov_low: float
    cov_high: float
    width: float
    stvar: float
    n: int

    @property
    def calibrated(self) -> bool:
        return self.cov_low <= self.nominal <= self.cov_high


def evaluate(y, summary, test_confidence: float = 0.95) -> tuple[MetricsReport, CalibrationReport]:
    """Score a predictive summary (t or quantile) against targets in the same units."""
    r2, ev = r2_ev(y, summary.mean)
    metrics = MetricsReport(rmse(y, summary.mean), mae(y, summary.mean), r2, ev)
    cov = coverage_test(y, summary.lo, summary.hi, 1.0 - summary.alpha, test_confidence)
    calib = CalibrationReport(
        nominal=cov.nominal,
        coverage=cov.coverage,
        cov_low=cov.low,
        cov_high=cov.high,
        width=mean_width(summary.lo, summary.hi),
        stvar=standardized_variance(y, summary.mean, summary.total_std),
        n=cov.n,
    )
    return metrics, calib


def report_dict(metrics: MetricsReport, calib: CalibrationReport) -> dict:
    out = asdict(metrics)
    out.update({k: getattr(calib, k) for k in ("coverage", "cov_low", "cov_high", "width", "stvar")})
    out["nominal"] = calib.nominal
    out["n"] = calib.n
    out["calibrated"] = calib.calibrated
    return out


def report_json(metrics: MetricsReport, calib: CalibrationReport) -> str:
    return json.dumps(report_dict(metrics, calib), indent=2, sort_keys=True)


def report_text(metrics: MetricsReport, calib: CalibrationReport) -> str:
    d = report_dict(metrics, calib)
    lines = []
    for key in ("nominal", "n") + REPORT_KEYS + ("calibrated",):
        v = d[key]
        lines.append(f"{key} = {v:.6g}" if isinstance(v, float) else f"{key} = {str(v).lower()}")
    return "\n".join(lines)
