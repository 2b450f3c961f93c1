"""Surrogate noise synthesis for multi-station GNSS residuals.

The generative model is fitted on real (or synthesized) detrended
residual series and reproduces three properties of the source data:

* the spatial covariance across station/component channels, through a
  principal-component basis;
* the amplitude spectrum of each principal-component score series,
  through Fourier phase randomization (magnitudes kept, phases drawn
  uniformly with Hermitian symmetry);
* the data-gap statistics, through an empirical gap-run-length
  histogram and per-station gap rates.

A built-in fallback synthesizer produces plausible residuals (power-law
temporal spectrum, exponentially decaying spatial correlation) so the
whole pipeline can run without any external data.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .okada import StationNetwork, project_local

MIN_FIT_SPAN_DAYS = 365
MAX_GAP_FRACTION = 0.5


def _gap_runs(gap_flags: np.ndarray) -> list[int]:
    """Lengths of consecutive-True runs in a 1-D boolean array."""
    runs, count = [], 0
    for g in gap_flags:
        if g:
            count += 1
        elif count:
            runs.append(count)
            count = 0
    if count:
        runs.append(count)
    return runs


def _interpolate_gaps(series: np.ndarray, gaps: np.ndarray) -> np.ndarray:
    """Linearly interpolate gapped entries of a 1-D series (edges held)."""
    if not gaps.any():
        return series
    if gaps.all():
        raise ValueError("series is entirely gaps")
    out = series.copy()
    idx = np.arange(series.size)
    out[gaps] = np.interp(idx[gaps], idx[~gaps], series[~gaps])
    return out


class SpatialNoiseModel(BaseEstimator):
    """PCA + phase-randomization surrogate of station-network noise.

    Parameters
    ----------
    eigenvalue_cutoff : float
        Principal components with eigenvalue below ``cutoff x largest``
        are dropped (guards rank-deficient covariances).

    Attributes (after fit)
    ----------------------
    basis_ : [2 N_s, K] orthonormal principal directions over channels
        (channel = station index * 2 + component index).
    spectra_ : [K, n_rfft] FFT magnitudes of each component's score series.
    span_ : fitting-span length in days.
    gap_fraction_ : per-station fraction of gapped days, [N_s].
    gap_run_lengths_ : pooled gap-run-length samples (empirical histogram).
    """

    def __init__(self, eigenvalue_cutoff: float = 1e-10):
        self.eigenvalue_cutoff = eigenvalue_cutoff

    def fit(self, residuals: np.ndarray, y=None) -> "SpatialNoiseModel":
        """Fit on residuals [N_s, T_full, 2] in mm; NaN marks a gap.

        Requires T_full >= 365 and < 50% gaps per station. Gaps are
        linearly interpolated before fitting and recorded in the gap
        histogram.
        """
        residuals = np.asarray(residuals, dtype=np.float64)
        if residuals.ndim != 3 or residuals.shape[2] != 2:
            raise ValueError(f"residuals must be [N_s, T, 2], got {residuals.shape}")
        n_sta, span, _ = residuals.shape
        if span < MIN_FIT_SPAN_DAYS:
            raise ValueError(f"fitting span {span} days < {MIN_FIT_SPAN_DAYS}")

        gaps = ~np.all(np.isfinite(residuals), axis=2)  # [N_s, T]
        frac = gaps.mean(axis=1)
        if np.any(frac >= MAX_GAP_FRACTION):
            worst = int(np.argmax(frac))
            raise ValueError(
                f"station index {worst} has {frac[worst]:.0%} gaps "
                f"(limit {MAX_GAP_FRACTION:.0%})")

        filled = np.empty_like(residuals)
        run_lengths: list[int] = []
        for j in range(n_sta):
            run_lengths.extend(_gap_runs(gaps[j]))
            for k in range(2):
                col = residuals[j, :, k]
                bad = ~np.isfinite(col)
                filled[j, :, k] = _interpolate_gaps(
                    np.where(bad, 0.0, col), bad)

        channels = filled.transpose(1, 0, 2).reshape(span, 2 * n_sta)
        mean = channels.mean(axis=0)
        centered = channels - mean
        cov = centered.T @ centered / span
        evals, evecs = np.linalg.eigh(cov)
        order = np.argsort(evals)[::-1]
        evals, evecs = evals[order], evecs[:, order]
        if evals[0] <= 0.0:
            raise ValueError("degenerate covariance: residuals carry no variance")
        keep = evals > self.eigenvalue_cutoff * evals[0]
        evecs = evecs[:, keep]

        scores = centered @ evecs  # [span, K]
        self.n_stations_ = n_sta
        self.span_ = span
        self.basis_ = evecs
        self.eigenvalues_ = evals[keep]
        self.spectra_ = np.abs(np.fft.rfft(scores, axis=0)).T  # [K, n_rfft]
        self.gap_fraction_ = frac
        self.gap_run_lengths_ = np.asarray(run_lengths, dtype=np.int64)
        return self

    # -- surrogate synthesis -------------------------------------------------

    def _surrogate_scores(self, rng: np.random.Generator) -> np.ndarray:
        """Full-span phase-randomized score series, [span, K].

        The amplitude spectrum of each column equals the stored one
        exactly (up to FFT round-off); only phases are random. DC and
        Nyquist bins get a random sign so the series stays real.
        """
        check_is_fitted(self, "basis_")
        n = self.span_
        k = self.basis_.shape[1]
        n_bins = self.spectra_.shape[1]
        phases = rng.uniform(0.0, 2.0 * np.pi, size=(k, n_bins))
        z = self.spectra_ * np.exp(1j * phases)
        z[:, 0] = self.spectra_[:, 0] * rng.choice([-1.0, 1.0], size=k)
        if n % 2 == 0:
            z[:, -1] = self.spectra_[:, -1] * rng.choice([-1.0, 1.0], size=k)
        return np.fft.irfft(z, n=n, axis=1).T

    def sample(self, length: int, rng: np.random.Generator) -> np.ndarray:
        """Draw one surrogate window, [N_s, length, 2] mm.

        All channels are cropped jointly at a random offset of the same
        full-span surrogate, preserving spatial coherence.
        """
        check_is_fitted(self, "basis_")
        if length > self.span_:
            raise ValueError(f"window length {length} exceeds span {self.span_}")
        scores = self._surrogate_scores(rng)
        start = int(rng.integers(0, self.span_ - length + 1))
        window = scores[start:start + length] @ self.basis_.T  # [length, 2 N_s]
        return window.reshape(length, self.n_stations_, 2).transpose(1, 0, 2)

    def sample_gap_mask(self, length: int, rng: np.random.Generator) -> np.ndarray:
        """Draw a boolean gap mask [N_s, length] from the fitted gap stats.

        Per station, gap runs arrive at the empirical rate (expected
        masked fraction matches the station's fitted fraction) with run
        lengths resampled from the pooled histogram.
        """
        check_is_fitted(self, "basis_")
        mask = np.zeros((self.n_stations_, length), dtype=bool)
        if self.gap_run_lengths_.size == 0:
            return mask
        mean_run = float(self.gap_run_lengths_.mean())
        for j in range(self.n_stations_):
            expected_runs = self.gap_fraction_[j] * length / mean_run
            for _ in range(rng.poisson(expected_runs)):
                run = int(rng.choice(self.gap_run_lengths_))
                run = min(run, length)
                start = int(rng.integers(0, length - run + 1))
                mask[j, start:start + run] = True
        return mask


def synthesize_residuals(network: StationNetwork, span_days: int = 2000,
                         rng: np.random.Generator | None = None,
                         amplitude_mm: float = 1.5,
                         spectral_index: float = -0.8,
                         efolding_km: float = 150.0,
                         gap_fraction: float = 0.02,
                         mean_gap_days: float = 3.0) -> np.ndarray:
    """Fallback residual synthesizer: [N_s, span_days, 2] mm with NaN gaps.

    Temporal structure is power-law noise (PSD proportional to
    f^spectral_index), spatial structure an exponential correlation
    exp(-distance / efolding_km) imposed by a Cholesky factor; the two
    components are independent. Optionally injects NaN gap runs so the
    fitted model has nontrivial gap statistics.
    """
    if rng is None:
        rng = np.random.default_rng()
    n_sta = network.count
    coords = network.coords()
    origin = coords.mean(axis=0)
    xy = project_local(network, origin[0], origin[1])
    dist = np.linalg.norm(xy[:, None, :] - xy[None, :, :], axis=2)
    corr = np.exp(-dist / efolding_km)
    chol = np.linalg.cholesky(corr + 1e-9 * np.eye(n_sta))

    freqs = np.fft.rfftfreq(span_days, d=1.0)
    shaping = np.empty_like(freqs)
    shaping[1:] = freqs[1:] ** (spectral_index / 2.0)
    shaping[0] = shaping[1]  # keep the DC gain finite
    out = np.empty((n_sta, span_days, 2))
    for comp in range(2):
        white = rng.standard_normal((n_sta, span_days))
        shaped = np.fft.irfft(np.fft.rfft(white, axis=1) * shaping, n=span_days, axis=1)
        shaped /= shaped.std(axis=1, keepdims=True)
        out[:, :, comp] = amplitude_mm * (chol @ shaped)

    if gap_fraction > 0.0:
        for j in range(n_sta):
            expected_runs = gap_fraction * span_days / mean_gap_days
            for _ in range(rng.poisson(expected_runs)):
                run = max(1, int(rng.geometric(1.0 / mean_gap_days)))
                run = min(run, span_days // 4)
                start = int(rng.integers(0, span_days - run + 1))
                out[j, start:start + run, :] = np.nan
    return out
