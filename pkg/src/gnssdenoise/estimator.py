"""Scikit-learn style facade over the denoiser and the classical filters.

``GraphDenoiser`` wraps dataset assembly, training and batched inference
behind the familiar ``fit`` / ``transform`` API so the model slots into
pipelines and grid searches; ``MovingFilter`` exposes the moving
mean/median baselines as a stateless transformer with the same window
conventions.
"""

from __future__ import annotations

from dataclasses import asdict

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import network as net
from . import training as tr
from .metrics import BASELINE_KINDS, baseline_filter
from .synthetic import Dataset, WINDOW_DAYS

__all__ = ["GraphDenoiser", "MovingFilter", "check_window_array"]


def check_window_array(X, name: str = "X", n_stations: int | None = None,
                       window: int | None = None,
                       allow_nan: bool = True) -> np.ndarray:
    """Validate a window batch and return it as float64 [B, N, T, 2].

    Accepts a single window [N, T, 2] and promotes it to a batch of one.
    NaN marks data gaps; infinities are always rejected.
    """
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[-1] != 2:
        raise ValueError(
            f"{name} must be [batch, stations, days, 2] or "
            f"[stations, days, 2]; got shape {np.asarray(X).shape}")
    if n_stations is not None and arr.shape[1] != n_stations:
        raise ValueError(f"{name} has {arr.shape[1]} stations, "
                         f"expected {n_stations}")
    if window is not None and arr.shape[2] != window:
        raise ValueError(f"{name} spans {arr.shape[2]} days, "
                         f"expected {window}")
    if np.isinf(arr).any():
        raise ValueError(f"{name} contains infinite values")
    if not allow_nan and np.isnan(arr).any():
        raise ValueError(f"{name} contains NaN values")
    return arr


class GraphDenoiser(BaseEstimator, TransformerMixin):
    """Graph-recurrent + attention denoiser with a transformer-style API.

    ``fit(X, y)`` trains on noisy windows ``X`` (mm, NaN = gap) against
    clean target windows ``y``; ``transform(X)`` returns denoised
    windows in mm. All constructor arguments are hyperparameters in the
    scikit-learn sense: stored verbatim, resolved at ``fit`` time.
    """

    def __init__(self, embed_dim: int = 32, hidden_dim: int = 128,
                 attn_dim: int = 128, heads: int = 4, ffn_dim: int = 0,
                 attn_dropout: float = 0.1, out_dropout: float = 0.5,
                 positional_encoding: bool = False, ablation: str = "full",
                 learning_rate: float = 1e-3, batch_size: int = 128,
                 max_epochs: int = 200, patience: int = 10,
                 val_fraction: float = 0.1, seed: int = 0):
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.attn_dim = attn_dim
        self.heads = heads
        self.ffn_dim = ffn_dim
        self.attn_dropout = attn_dropout
        self.out_dropout = out_dropout
        self.positional_encoding = positional_encoding
        self.ablation = ablation
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.val_fraction = val_fraction
        self.seed = seed

    # -- training -----------------------------------------------------

    def _assemble_dataset(self, X, y, validation_data) -> Dataset:
        X = check_window_array(X, "X")
        y = check_window_array(y, "y", n_stations=X.shape[1],
                               window=X.shape[2], allow_nan=False)
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} samples, y has "
                             f"{y.shape[0]}")
        if validation_data is not None:
            Xv, yv = validation_data
            Xv = check_window_array(Xv, "validation X",
                                    n_stations=X.shape[1],
                                    window=X.shape[2])
            yv = check_window_array(yv, "validation y",
                                    n_stations=X.shape[1],
                                    window=X.shape[2], allow_nan=False)
            if Xv.shape[0] != yv.shape[0] or Xv.shape[0] == 0:
                raise ValueError("validation_data must hold matching, "
                                 "non-empty window batches")
            n_train = X.shape[0]
            observed = np.concatenate([X, Xv], axis=0)
            clean = np.concatenate([y, yv], axis=0)
        else:
            n_val = max(1, int(round(self.val_fraction * X.shape[0])))
            n_train = X.shape[0] - n_val
            if n_train < 1:
                raise ValueError(
                    f"{X.shape[0]} samples leave no training data after "
                    f"holding out {n_val} for validation; pass more "
                    f"samples or explicit validation_data")
            observed, clean = X, y
        total = observed.shape[0]
        noise = observed - clean  # NaN at gaps; scale uses known cells
        mask = np.isnan(observed).any(axis=-1).astype(np.float32)
        manifest = {
            "n_samples": total,
            "n_stations": int(observed.shape[1]),
            "window_days": int(observed.shape[2]),
            "splits": {"train": [0, n_train],
                       "val": [n_train, total],
                       "test": [total, total]},
        }
        return Dataset(manifest=manifest,
                       noise=noise.astype(np.float32),
                       clean=clean.astype(np.float32),
                       observed=observed.astype(np.float32),
                       mask=mask)

    def fit(self, X, y, validation_data=None, out_dir: str | None = None):
        """Train the denoiser.

        ``X``: noisy windows [B, N, 60, 2] in mm, NaN marking gaps.
        ``y``: gap-free clean targets of the same shape.
        ``validation_data``: optional ``(X_val, y_val)`` pair; when
        omitted, the trailing ``val_fraction`` of ``X`` is held out.
        """
        dataset = self._assemble_dataset(X, y, validation_data)
        model_config = net.ModelConfig(
            n_stations=dataset.manifest["n_stations"],
            window=dataset.manifest["window_days"],
            embed_dim=self.embed_dim, hidden_dim=self.hidden_dim,
            attn_dim=self.attn_dim, heads=self.heads,
            ffn_dim=self.ffn_dim, attn_dropout=self.attn_dropout,
            out_dropout=self.out_dropout,
            positional_encoding=self.positional_encoding,
            ablation=self.ablation)
        train_config = tr.TrainConfig(
            learning_rate=self.learning_rate, batch_size=self.batch_size,
            max_epochs=self.max_epochs, patience=self.patience,
            seed=self.seed, ablation=self.ablation)
        params, config, log = tr.train(dataset, model_config, train_config,
                                       out_dir=out_dir)
        self.params_ = params
        self.config_ = config
        self.input_scale_ = log.input_scale
        self.log_ = log
        self.n_stations_ = config.n_stations
        return self

    # -- inference ----------------------------------------------------

    def transform(self, X) -> np.ndarray:
        """Denoise windows; returns estimates in mm, same shape as X."""
        check_is_fitted(self, "params_")
        X = check_window_array(X, "X", n_stations=self.n_stations_,
                               window=self.config_.window)
        return net.denoise_windows(self.params_, self.config_, X,
                                   self.input_scale_,
                                   batch_size=self.batch_size)

    def predict(self, X) -> np.ndarray:
        """Alias of :meth:`transform`."""
        return self.transform(X)

    def score(self, X, y) -> float:
        """Negative mean squared error (greater is better)."""
        y = check_window_array(y, "y", allow_nan=False)
        estimate = self.transform(X)
        return -float(np.mean((estimate - y) ** 2))

    # -- persistence --------------------------------------------------

    def save(self, directory: str) -> None:
        check_is_fitted(self, "params_")
        extra = {"input_scale": self.input_scale_,
                 "estimator_params": self.get_params(),
                 "trainlog": self.log_.to_json()}
        net.save_checkpoint(directory, self.params_, self.config_, extra)

    @classmethod
    def load(cls, directory: str) -> "GraphDenoiser":
        params, config, extra = net.load_checkpoint(directory)
        stored = extra.get("estimator_params", {})
        est = cls(**{k: v for k, v in stored.items()
                     if k in cls().get_params()})
        est.embed_dim = config.embed_dim
        est.hidden_dim = config.hidden_dim
        est.attn_dim = config.attn_dim
        est.heads = config.heads
        est.ablation = config.ablation
        est.params_ = params
        est.config_ = config
        est.input_scale_ = float(extra["input_scale"])
        est.log_ = None
        est.n_stations_ = config.n_stations
        return est


class MovingFilter(BaseEstimator, TransformerMixin):
    """Stateless moving mean/median smoother over the day axis.

    Gap-aware: NaN cells are excluded from each window's statistic and
    the window shrinks at the edges, matching the classical baselines
    the denoiser is compared against.
    """

    def __init__(self, kind: str = "median", width: int = 15):
        self.kind = kind
        self.width = width

    def fit(self, X, y=None):
        if self.kind not in BASELINE_KINDS:
            raise ValueError(f"kind {self.kind!r} not in {BASELINE_KINDS}")
        if self.width < 1 or self.width % 2 == 0:
            raise ValueError(f"width must be odd and positive, "
                             f"got {self.width}")
        self.n_features_in_ = None  # stateless; attribute marks fitted
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "n_features_in_")
        X = check_window_array(X, "X")
        return baseline_filter(X, self.kind, self.width)
