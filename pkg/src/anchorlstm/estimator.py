"""scikit-learn compatible front end for the ensemble."""

from __future__ import annotations

from typing import Mapping, Optional, Union

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import ConfigError, InputError
from .lstm import GateBlock, NetworkConfig
from .objectives import PriorSpec, TNllConfig
from .training import EnsembleModel, TrainConfig, predict_members, stderr_progress, train_ensemble
from .uncertainty import summarize

METHODS = {
    "tnll-anchor": ("t", "anchored"),
    "tnll-dropout": ("t", "mc_dropout"),
    "quantile-anchor": ("quantile", "anchored"),
    "quantile-dropout": ("quantile", "mc_dropout"),
}


def check_windows(X, y=None):
    """Validate a (N, T, F) window array and optional length-N targets."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3 or min(X.shape) < 1:
        raise InputError(f"expected non-empty windows of shape (N, T, F), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InputError("windows contain non-finite values")
    if y is None:
        return X
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.shape[0] != X.shape[0]:
        raise InputError(f"{X.shape[0]} windows but {y.shape[0]} targets")
    if not np.all(np.isfinite(y)):
        raise InputError("targets contain non-finite values")
    return X, y


class AnchoredLSTMRegressor(RegressorMixin, BaseEstimator):
    """Ensemble of LSTM regressors with a Student-t or quantile head.

    ``method`` picks the head and the source of epistemic spread:
    ``tnll-anchor`` (default), ``tnll-dropout``, ``quantile-anchor`` or
    ``quantile-dropout``. ``fit`` takes windows of shape (N, T, F), scaled to
    [0, 1], and one target per window.

    Anchored methods train ``n_members`` networks, each regularised towards
    its own draw from the prior. Dropout methods train a single network with
    ``dropout_rate`` and average ``mc_samples`` stochastic passes.

    ``penalty_scaling="per_sample"`` divides the anchor penalty by the number
    of training windows; ``"total"`` adds it unscaled to the mean loss.
    """

    def __init__(
        self,
        method: str = "tnll-anchor",
        n_members: int = 30,
        num_layers: int = 4,
        hidden_dim: int = 32,
        nu: float = 4.0,
        prior_variance: Union[float, Mapping[str, float]] = 0.01,
        epochs: int = 300,
        learning_rate: float = 1e-3,
        batch_size: int = 32,
        dropout_rate: float = 0.1,
        mc_samples: int = 30,
        scale_floor: float = 1e-4,
        random_state: int = 0,
        penalty_scaling: str = "per_sample",
        n_jobs: Optional[int] = None,
        verbose: int = 0,
    ):
        self.method = method
        self.n_members = n_members
        self.num_layers = num_layers
        self.hidden_dim = hidden_dim
        self.nu = nu
        self.prior_variance = prior_variance
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.dropout_rate = dropout_rate
        self.mc_samples = mc_samples
        self.scale_floor = scale_floor
        self.random_state = random_state
        self.penalty_scaling = penalty_scaling
        self.n_jobs = n_jobs
        self.verbose = verbose

    # -- configuration -------------------------------------------------

    def _prior(self) -> PriorSpec:
        if isinstance(self.prior_variance, Mapping):
            return PriorSpec({GateBlock(k): float(v) for k, v in self.prior_variance.items()})
        return PriorSpec.shared(self.prior_variance)

    def _configs(self, window_length: int, input_dim: int):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {sorted(METHODS)}")
        head, mode = METHODS[self.method]
        if mode == "mc_dropout" and not self.dropout_rate > 0:
            raise ConfigError("dropout methods require dropout_rate > 0")
        net = NetworkConfig(
            input_dim=input_dim,
            num_layers=self.num_layers,
            hidden_dim=self.hidden_dim,
            head=head,
            dropout_rate=self.dropout_rate if mode == "mc_dropout" else 0.0,
            window_length=window_length,
            scale_floor=self.scale_floor,
        )
        train = TrainConfig(
            n_members=self.n_members if mode == "anchored" else 1,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            seed=self.random_state,
            mode=mode,
            mc_samples=self.mc_samples,
            penalty_scaling=self.penalty_scaling,
        )
        if head == "t":
            TNllConfig(self.nu, self.scale_floor)
        return net, train

    # -- estimator API -------------------------------------------------

    def fit(self, X, y):
        X, y = check_windows(X, y)
        net, train = self._configs(X.shape[1], X.shape[2])
        self.ensemble_ = train_ensemble(
            X, y, net, train, self._prior(), self.nu,
            n_jobs=self.n_jobs,
            progress=stderr_progress if self.verbose else None,
        )
        self.n_features_in_ = X.shape[2]
        self.window_length_ = X.shape[1]
        return self

    @classmethod
    def from_ensemble(cls, ensemble: EnsembleModel, **params) -> "AnchoredLSTMRegressor":
        """Wrap an already trained ensemble (e.g. one loaded from disk)."""
        est = cls(**params)
        est.ensemble_ = ensemble
        est.n_features_in_ = ensemble.net.input_dim
        est.window_length_ = ensemble.net.window_length
        return est

    def predict_members(self, X, mc_dropout: bool = True):
        check_is_fitted(self, "ensemble_")
        return predict_members(self.ensemble_, check_windows(X), mc_dropout=mc_dropout)

    def predict_interval(self, X, alpha: float = 0.1):
        """:class:`PredictiveSummary` (t-head) or :class:`QuantileSummary`."""
        outputs = self.predict_members(X)
        return summarize(outputs, self.ensemble_.net.head, self.ensemble_.nu, alpha)

    def predict(self, X):
        return self.predict_interval(X).mean
