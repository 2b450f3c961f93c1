"""Evaluation metrics, classical moving-filter baselines, and the
SNR-binned error curve.

Sample arrays are laid out [stations, days, components] (single window)
or [samples, stations, days, components] (a split). Squared/absolute
errors are reported as unnormalized per-sample sums; their mean and
population standard deviation summarize a model. The amplitude-relative
denoising error and the per-sample SNR are computed only over stations
that recorded displacement in every component, so samples without any
event are excluded from the SNR curve by construction.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass

import numpy as np

BASELINE_KINDS = ("mean", "median")
BASELINE_WIDTHS = (3, 7, 15)


# ---------------------------------------------------------------------------
# per-sample error sums


def sample_metrics(d: np.ndarray, d_hat: np.ndarray) -> dict[str, float]:
    """Unnormalized squared- and absolute-error sums for one window."""
    d = np.asarray(d, dtype=np.float64)
    d_hat = np.asarray(d_hat, dtype=np.float64)
    if d.shape != d_hat.shape:
        raise ValueError(f"shape mismatch: {d.shape} vs {d_hat.shape}")
    diff = d - d_hat
    return {"se": float((diff * diff).sum()), "ae": float(np.abs(diff).sum())}


def aggregate_metrics(se: np.ndarray, ae: np.ndarray) -> dict[str, float]:
    """Mean and population standard deviation of the per-sample sums."""
    se = np.asarray(se, dtype=np.float64)
    ae = np.asarray(ae, dtype=np.float64)
    if se.size == 0 or ae.size == 0:
        raise ValueError("aggregate_metrics needs at least one sample")
    return {
        "mse": float(se.mean()),
        "sigma_se": float(se.std()),
        "mae": float(ae.mean()),
        "sigma_ae": float(ae.std()),
    }


# ---------------------------------------------------------------------------
# displacement-recording stations, SNR and relative error


def recording_stations(clean: np.ndarray) -> np.ndarray:
    """Boolean mask of stations with nonzero displacement in every
    component."""
    peak = np.abs(np.asarray(clean, dtype=np.float64)).max(axis=1)  # [N, C]
    return (peak > 0.0).all(axis=1)


def _fields(sample_or_clean, noise):
    if noise is None:
        return (np.asarray(sample_or_clean.clean, dtype=np.float64),
                np.asarray(sample_or_clean.noise, dtype=np.float64))
    return (np.asarray(sample_or_clean, dtype=np.float64),
            np.asarray(noise, dtype=np.float64))


def average_snr(sample_or_clean, noise: np.ndarray | None = None) -> float | None:
    """Average signal-to-noise ratio of one window, in dB.

    Mean over recording stations and components of
    10·log10(Σ_t ξ² / Σ_t n²) with ξ the noisy observation. Returns
    None when no station recorded displacement in every component
    (the sample is then excluded from SNR statistics).
    """
    clean, noise_arr = _fields(sample_or_clean, noise)
    keep = recording_stations(clean)
    if not keep.any():
        return None
    xi = clean[keep] + noise_arr[keep]
    sig_pow = (xi * xi).sum(axis=1)          # [S', C]
    noise_pow = (noise_arr[keep] ** 2).sum(axis=1)
    if (noise_pow == 0.0).any():
        raise ValueError("zero noise power at a recording station")
    return float(np.mean(10.0 * np.log10(sig_pow / noise_pow)))


def denoising_error(sample_or_clean, d_hat: np.ndarray,
                    noise: np.ndarray | None = None) -> float:
    """Amplitude-relative absolute error of one window's estimate.

    Per recording station and component, the time-summed absolute error
    divided by the peak displacement amplitude, normalized by
    days · stations · components. Scale-free: rescaling the pair
    (d, d̂) by any positive constant leaves it unchanged.
    """
    if noise is None and hasattr(sample_or_clean, "clean"):
        clean = np.asarray(sample_or_clean.clean, dtype=np.float64)
    else:
        clean = np.asarray(sample_or_clean, dtype=np.float64)
    d_hat = np.asarray(d_hat, dtype=np.float64)
    if clean.shape != d_hat.shape:
        raise ValueError(f"shape mismatch: {clean.shape} vs {d_hat.shape}")
    keep = recording_stations(clean)
    n_keep = int(keep.sum())
    if n_keep == 0:
        raise ValueError("no station recorded displacement in all components")
    d = clean[keep]
    peak = np.abs(d).max(axis=1)             # [S', C]
    assert (peak > 0.0).all(), "recording station with zero peak amplitude"
    err = np.abs(d - d_hat[keep]).sum(axis=1) / peak
    n_t, n_c = clean.shape[1], clean.shape[2]
    return float(err.sum() / (n_t * n_keep * n_c))


# ---------------------------------------------------------------------------
# moving-filter baselines


def baseline_filter(xi: np.ndarray, kind: str, k: int) -> np.ndarray:
    """Centered moving mean/median along the time axis.

    ``xi`` is [..., days, components]; gap days (NaN) are excluded from
    every window statistic, windows shrink at the edges, and a window
    with no valid data yields 0. The result is gap-free.
    """
    if kind not in BASELINE_KINDS:
        raise ValueError(f"kind must be one of {BASELINE_KINDS}, got {kind!r}")
    k = int(k)
    if k < 1 or k % 2 == 0:
        raise ValueError(f"kernel size must be odd and positive, got {k}")
    x = np.asarray(xi, dtype=np.float64)
    if x.ndim < 2:
        raise ValueError("need at least [days, components] axes")
    half = k // 2
    moved = np.moveaxis(x, -2, -1)           # [..., components, days]
    pad = np.concatenate([
        np.full(moved.shape[:-1] + (half,), np.nan),
        moved,
        np.full(moved.shape[:-1] + (half,), np.nan)], axis=-1)
    windows = np.lib.stride_tricks.sliding_window_view(pad, k, axis=-1)
    reducer = np.nanmean if kind == "mean" else np.nanmedian
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN windows
        out = reducer(windows, axis=-1)
    out = np.where(np.isfinite(out), out, 0.0)
    return np.moveaxis(out, -1, -2)


def make_baseline(kind: str, k: int):
    """A predictor callable over [samples, N, T, C] noisy windows."""
    def predict(observed: np.ndarray) -> np.ndarray:
        return baseline_filter(observed, kind, k)
    predict.__name__ = f"moving_{'avg' if kind == 'mean' else 'med'}_{k}"
    return predict


# ---------------------------------------------------------------------------
# reports


@dataclass
class MetricsReport:
    """Everything a Table-style row and an SNR curve need."""

    model_id: str
    n_samples: int
    mse: float
    sigma_se: float
    mae: float
    sigma_ae: float
    se: np.ndarray
    ae: np.ndarray
    snr_db: np.ndarray          # per sample; NaN where excluded
    rel_error: np.ndarray       # per sample; NaN where excluded
    mean_rel_error: float       # mean over included samples
    bin_low_db: np.ndarray      # strictly increasing bin lower edges
    bin_high_db: np.ndarray     # matching upper edges
    bin_mean_error: np.ndarray  # per bin
    bin_count: np.ndarray       # per bin, sums to included count

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "n_samples": self.n_samples,
            "mse": self.mse, "sigma_se": self.sigma_se,
            "mae": self.mae, "sigma_ae": self.sigma_ae,
            "mean_rel_error": self.mean_rel_error,
            "bins": [
                {"low_db": float(self.bin_low_db[i]),
                 "high_db": float(self.bin_high_db[i]),
                 "mean_error": float(self.bin_mean_error[i]),
                 "count": int(self.bin_count[i])}
                for i in range(len(self.bin_count))],
        }


def snr_binning(snr_db: np.ndarray, errors: np.ndarray,
                width_db: float = 1.0):
    """Bin per-sample relative errors by SNR into fixed-width dB bins.

    NaN entries (excluded samples) are dropped; empty bins are removed
    so every reported bin carries data. Returns (edges, mean, count).
    """
    snr_db = np.asarray(snr_db, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    ok = np.isfinite(snr_db) & np.isfinite(errors)
    empty = np.zeros(0)
    if not ok.any():
        return empty, empty, empty, np.zeros(0, dtype=np.int64)
    s, e = snr_db[ok], errors[ok]
    lo = np.floor(s.min() / width_db) * width_db
    hi = np.ceil(s.max() / width_db) * width_db
    if hi <= lo:
        hi = lo + width_db
    edges = np.arange(lo, hi + 0.5 * width_db, width_db)
    idx = np.clip(np.digitize(s, edges) - 1, 0, len(edges) - 2)
    count = np.bincount(idx, minlength=len(edges) - 1)
    sums = np.bincount(idx, weights=e, minlength=len(edges) - 1)
    keep = count > 0
    mean_err = sums[keep] / count[keep]
    return (edges[:-1][keep], edges[1:][keep], mean_err,
            count[keep].astype(np.int64))


def evaluate_predictions(model_id: str, clean: np.ndarray, noise: np.ndarray,
                         estimates: np.ndarray,
                         bin_width_db: float = 1.0) -> MetricsReport:
    """Score a stack of estimates against the ground truth."""
    clean = np.asarray(clean, dtype=np.float64)
    estimates = np.asarray(estimates, dtype=np.float64)
    if clean.shape != estimates.shape:
        raise ValueError(
            f"shape mismatch: {clean.shape} vs {estimates.shape}")
    n = clean.shape[0]
    se = np.empty(n)
    ae = np.empty(n)
    snr = np.full(n, np.nan)
    rel = np.full(n, np.nan)
    for i in range(n):
        m = sample_metrics(clean[i], estimates[i])
        se[i], ae[i] = m["se"], m["ae"]
        s = average_snr(clean[i], noise[i])
        if s is not None:
            snr[i] = s
            rel[i] = denoising_error(clean[i], estimates[i], noise[i])
    agg = aggregate_metrics(se, ae)
    lows, highs, bin_mean, bin_count = snr_binning(snr, rel, bin_width_db)
    included = np.isfinite(rel)
    mean_rel = float(rel[included].mean()) if included.any() else float("nan")
    return MetricsReport(
        model_id=model_id, n_samples=n,
        mse=agg["mse"], sigma_se=agg["sigma_se"],
        mae=agg["mae"], sigma_ae=agg["sigma_ae"],
        se=se, ae=ae, snr_db=snr, rel_error=rel,
        mean_rel_error=mean_rel,
        bin_low_db=lows, bin_high_db=highs,
        bin_mean_error=bin_mean, bin_count=bin_count)


def evaluate_model(predict, dataset, split: str = "test",
                   model_id: str | None = None,
                   bin_width_db: float = 1.0) -> MetricsReport:
    """Run a predictor over a dataset split and score it.

    ``predict`` maps noisy windows [B, N, T, C] (NaN gaps, mm) to
    estimates of the clean displacement with the same shape.
    """
    idx = dataset.split_indices(split)
    observed = np.asarray(dataset.observed[idx], dtype=np.float64)
    clean = np.asarray(dataset.clean[idx], dtype=np.float64)
    noise = np.asarray(dataset.noise[idx], dtype=np.float64)
    estimates = np.asarray(predict(observed), dtype=np.float64)
    name = model_id or getattr(predict, "__name__", "model")
    return evaluate_predictions(name, clean, noise, estimates, bin_width_db)


def format_report_rows(reports) -> str:
    """Table-style text: one row per model, error means ± deviations."""
    lines = [f"{'model':<24} {'MSE':>12} {'sigma_SE':>12} "
             f"{'MAE':>12} {'sigma_AE':>12} {'rel_err':>10}"]
    for r in reports:
        lines.append(
            f"{r.model_id:<24} {r.mse:>12.6g} {r.sigma_se:>12.6g} "
            f"{r.mae:>12.6g} {r.sigma_ae:>12.6g} {r.mean_rel_error:>10.4g}")
    return "\n".join(lines) + "\n"


def write_report(report: MetricsReport, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=1)


def write_snr_curve(report: MetricsReport, path: str) -> None:
    """Fig-style curve: one CSV row per populated SNR bin."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_center_db", "mean_error", "count"])
        for i in range(len(report.bin_count)):
            center = 0.5 * (report.bin_low_db[i] + report.bin_high_db[i])
            writer.writerow([f"{center:.9g}",
                             f"{report.bin_mean_error[i]:.9g}",
                             int(report.bin_count[i])])
