"""Training loop: Adam with gradient-norm clipping, early stopping on
validation MSE, and a fully seeded, reproducible schedule.

The loss is the plain mean of squared error over every batch element,
station, day and component, computed in physical units (mm) so that
logged values are directly comparable across configurations.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field, asdict, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from . import network as net
from .synthetic import Dataset


@dataclass
class TrainConfig:
    """Optimization hyperparameters; defaults match the full-scale setup."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 5.0
    batch_size: int = 128
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0
    ablation: str = "full"

    def __post_init__(self):
        if self.ablation not in net.ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}")
        if not 0 < self.batch_size:
            raise ValueError("batch_size must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")


@dataclass
class EpochStats:
    epoch: int
    train_mse: float
    val_mse: float
    seconds: float


@dataclass
class TrainLog:
    """Everything needed to audit a run: per-epoch losses, the untrained
    validation MSE, and where early stopping landed."""

    epoch0_val_mse: float
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0
    best_val_mse: float = float("inf")
    stopped_early: bool = False
    input_scale: float = 1.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1)


class Adam:
    """Adam with bias correction and global gradient-norm clipping."""

    def __init__(self, params: dict[str, Tensor], config: TrainConfig):
        self.params = params
        self.cfg = config
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.last_grad_norm = 0.0
        self.max_grad_norm = 0.0

    def step(self) -> None:
        """Consume .grad of every parameter and update in place."""
        cfg = self.cfg
        sq = 0.0
        for p in self.params.values():
            if p.grad is not None:
                sq += float((p.grad * p.grad).sum())
        norm = float(np.sqrt(sq))
        self.last_grad_norm = norm
        self.max_grad_norm = max(self.max_grad_norm, norm)
        factor = cfg.clip_norm / norm if norm > cfg.clip_norm else 1.0
        self.t += 1
        bc1 = 1.0 - cfg.beta1 ** self.t
        bc2 = 1.0 - cfg.beta2 ** self.t
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if factor != 1.0:
                g = g * factor
            self.m[k] = cfg.beta1 * self.m[k] + (1.0 - cfg.beta1) * g
            self.v[k] = cfg.beta2 * self.v[k] + (1.0 - cfg.beta2) * (g * g)
            mhat = self.m[k] / bc1
            vhat = self.v[k] / bc2
            p.data -= cfg.learning_rate * (mhat / (np.sqrt(vhat) + cfg.eps))
            p.zero_grad()


def batch_loss(params: dict[str, Tensor], model_config: net.ModelConfig,
               prepared: np.ndarray, clean_mm: np.ndarray, input_scale: float,
               train: bool = False,
               rng: np.random.Generator | None = None) -> Tensor:
    """Mean squared error in mm between the rescaled network output and
    the clean displacement, averaged over every array element."""
    est = net.forward(params, model_config, prepared, train=train, rng=rng)
    est_mm = ad.scale(est, float(input_scale))
    diff = ad.sub(est_mm, ad.tensor(np.asarray(clean_mm, dtype=np.float64)))
    return ad.mean_all(ad.mul(diff, diff))


def _evaluate_mse(params, model_config, prepared, clean, input_scale,
                  batch_size) -> float:
    """Evaluation-mode MSE over a whole split, batched."""
    total = 0.0
    count = 0
    for lo in range(0, prepared.shape[0], batch_size):
        xb = prepared[lo:lo + batch_size]
        est = net.forward(params, model_config, xb).data * input_scale
        diff = est - clean[lo:lo + batch_size]
        total += float((diff * diff).sum())
        count += diff.size
    return total / count


def noise_scale(dataset: Dataset) -> float:
    """Global standard deviation of the training-split noise, the single
    scalar used to standardize network inputs."""
    idx = dataset.split_indices("train")
    # nanstd: gap cells carry no noise information when the noise field
    # was reconstructed as observed minus clean
    scale = float(np.nanstd(np.asarray(dataset.noise[idx], dtype=np.float64)))
    if not np.isfinite(scale) or scale <= 0:
        raise ValueError(f"degenerate training-noise scale {scale}")
    return scale


def train(dataset: Dataset, model_config: net.ModelConfig | None = None,
          train_config: TrainConfig | None = None,
          out_dir: str | None = None,
          progress=None) -> tuple[dict[str, Tensor], net.ModelConfig, TrainLog]:
    """Train on the dataset's train split, early-stopping on val MSE.

    Returns the best parameters (by validation MSE), the resolved model
    config and the training log. When ``out_dir`` is given, a checkpoint
    and ``trainlog.json`` are written there.
    """
    tcfg = train_config or TrainConfig()
    n_stations = dataset.observed.shape[1]
    window = dataset.observed.shape[2]
    if model_config is None:
        model_config = net.ModelConfig(n_stations=n_stations, window=window)
    if model_config.n_stations != n_stations or model_config.window != window:
        raise ValueError(
            f"model config expects {model_config.n_stations} stations x "
            f"{model_config.window} days, dataset has {n_stations} x {window}")
    model_config = replace(model_config, ablation=tcfg.ablation)

    scale = noise_scale(dataset)
    train_idx = dataset.split_indices("train")
    val_idx = dataset.split_indices("val")
    prep_train = net.prepare_windows(
        np.asarray(dataset.observed[train_idx], dtype=np.float64), scale)
    prep_val = net.prepare_windows(
        np.asarray(dataset.observed[val_idx], dtype=np.float64), scale)
    clean_train = np.asarray(dataset.clean[train_idx], dtype=np.float64)
    clean_val = np.asarray(dataset.clean[val_idx], dtype=np.float64)

    params = net.init_params(model_config, np.random.default_rng([tcfg.seed, 0]))
    drop_rng = np.random.default_rng([tcfg.seed, 1])
    optimizer = Adam(params, tcfg)

    log = TrainLog(epoch0_val_mse=_evaluate_mse(
        params, model_config, prep_val, clean_val, scale, tcfg.batch_size))
    log.input_scale = scale
    best_val = log.epoch0_val_mse
    best_epoch = 0
    best_params = {k: p.data.copy() for k, p in params.items()}
    since_best = 0

    n_train = len(train_idx)
    for epoch in range(1, tcfg.max_epochs + 1):
        t0 = time.perf_counter()
        order = np.random.default_rng([tcfg.seed, 2, epoch]).permutation(n_train)
        sse = 0.0
        seen = 0
        for bi, lo in enumerate(range(0, n_train, tcfg.batch_size)):
            sel = order[lo:lo + tcfg.batch_size]
            try:
                with ad.Tape() as tape:
                    loss = batch_loss(params, model_config, prep_train[sel],
                                      clean_train[sel], scale,
                                      train=True, rng=drop_rng)
                    value = float(loss.data)
                    if not np.isfinite(value):
                        raise FloatingPointError(f"non-finite loss {value}")
                    tape.backward(loss)
            except FloatingPointError as exc:
                raise RuntimeError(
                    f"training aborted at epoch {epoch} batch {bi}: {exc}; "
                    f"max gradient norm so far "
                    f"{optimizer.max_grad_norm:.6g}") from exc
            optimizer.step()
            size = sel.size * np.prod(clean_train.shape[1:])
            sse += value * size
            seen += size
        val_mse = _evaluate_mse(params, model_config, prep_val, clean_val,
                                scale, tcfg.batch_size)
        stats = EpochStats(epoch=epoch, train_mse=sse / seen, val_mse=val_mse,
                           seconds=time.perf_counter() - t0)
        log.epochs.append(stats)
        if progress is not None:
            progress(stats)
        if val_mse < best_val:
            best_val = val_mse
            best_epoch = epoch
            best_params = {k: p.data.copy() for k, p in params.items()}
            since_best = 0
        else:
            since_best += 1
            if since_best >= tcfg.patience:
                log.stopped_early = True
                break

    log.best_epoch = best_epoch
    log.best_val_mse = best_val
    final = {k: ad.parameter(v) for k, v in best_params.items()}
    if out_dir is not None:
        extra = {
            "seed": tcfg.seed,
            "ablation": tcfg.ablation,
            "input_scale": scale,
            "best_epoch": best_epoch,
            "best_val_mse": best_val,
            "epoch0_val_mse": log.epoch0_val_mse,
            "epochs_run": len(log.epochs),
            "train_config": asdict(tcfg),
        }
        net.save_checkpoint(out_dir, final, model_config, extra)
        with open(os.path.join(out_dir, "trainlog.json"), "w") as fh:
            fh.write(log.to_json())
    return final, model_config, log
