"""Continuous-series path: ingest per-station daily CSV files, slide the
denoiser along the span with stride 1, convert to displacement rates,
aggregate the middle 20 days of every window, and emit plot-ready CSV.

Window-local days 20..39 (0-based) are the retained middle segment, so
an interior calendar day accumulates exactly 20 window rates. Border
days carry smaller provenance and are emitted rather than dropped.
"""

from __future__ import annotations

import csv
import datetime
import os
from dataclasses import dataclass

import numpy as np

from . import network as net
from .network import AdjacencyReport
from .okada import StationNetwork
from .synthetic import WINDOW_DAYS

RETAIN_LO = 20          # first retained window-local day (0-based)
RETAIN_HI = 39          # last retained window-local day, inclusive
GAP_ZERO_FRACTION = 0.5  # station-windows gappier than this are zeroed
DISPLAY_THRESHOLD = 0.01  # mm/day
CSV_FORMAT = "%.9g"


@dataclass
class ContinuousSeries:
    """Aligned multi-station daily series, detrended, gaps as NaN."""

    station_ids: list[str]
    start_date: datetime.date
    values: np.ndarray            # [N, T, 2] east/north mm

    @property
    def span_days(self) -> int:
        return self.values.shape[1]

    def dates(self) -> list[datetime.date]:
        return [self.start_date + datetime.timedelta(days=int(t))
                for t in range(self.span_days)]


@dataclass
class RateField:
    """Per-station daily displacement rates plus per-day provenance."""

    station_ids: list[str]
    start_date: datetime.date
    rates: np.ndarray             # [N, T, 2] mm/day, NaN where uncovered
    provenance: np.ndarray        # [T] windows averaged per day

    def dates(self) -> list[datetime.date]:
        return [self.start_date + datetime.timedelta(days=int(t))
                for t in range(self.rates.shape[1])]


def _parse_date(text: str) -> datetime.date:
    return datetime.date.fromisoformat(text.strip())


def read_station_series(path):
    """One station's raw file: date,east_mm,north_mm; empty cells = gap."""
    dates = []
    east = []
    north = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header] != ["date", "east_mm", "north_mm"]:
            raise ValueError(f"{path}: expected header date,east_mm,north_mm")
        for row in reader:
            if not row:
                continue
            dates.append(_parse_date(row[0]))
            east.append(float(row[1]) if row[1].strip() else np.nan)
            north.append(float(row[2]) if row[2].strip() else np.nan)
    if not dates:
        raise ValueError(f"{path}: no data rows")
    for prev, cur in zip(dates, dates[1:]):
        if (cur - prev).days != 1:
            raise ValueError(
                f"{path}: non-daily cadence between {prev} and {cur}; "
                "mark gaps with empty value cells, not missing rows")
    return dates[0], np.column_stack([east, north])


def detrend_series(values: np.ndarray) -> np.ndarray:
    """Remove a per-station, per-component global linear trend.

    The fit uses valid days only; gaps stay NaN.
    """
    out = np.array(values, dtype=np.float64)
    n_sta, span, n_c = out.shape
    t = np.arange(span, dtype=np.float64)
    for s in range(n_sta):
        for c in range(n_c):
            y = out[s, :, c]
            good = np.isfinite(y)
            if good.sum() >= 2:
                slope, intercept = np.polyfit(t[good], y[good], 1)
                out[s, good, c] = y[good] - (intercept + slope * t[good])
            elif good.sum() == 1:
                out[s, good, c] = 0.0
    return out


def ingest(series_dir: str, network: StationNetwork) -> ContinuousSeries:
    """Load every station's file onto a union daily grid and detrend.

    Files are ``<station id>.csv`` inside ``series_dir`` and must cover
    exactly the network's stations.
    """
    found = {os.path.splitext(name)[0]: os.path.join(series_dir, name)
             for name in sorted(os.listdir(series_dir))
             if name.endswith(".csv")}
    wanted = list(network.ids)
    unknown = sorted(set(found) - set(wanted))
    missing = sorted(set(wanted) - set(found))
    if unknown:
        raise ValueError(f"series for unknown stations: {unknown}")
    if missing:
        raise ValueError(f"missing series for stations: {missing}")
    loaded = {sid: read_station_series(found[sid]) for sid in wanted}
    start = min(first for first, _ in loaded.values())
    end = max(first + datetime.timedelta(days=len(vals) - 1)
              for first, vals in loaded.values())
    span = (end - start).days + 1
    values = np.full((len(wanted), span, 2), np.nan)
    for i, sid in enumerate(wanted):
        first, vals = loaded[sid]
        lo = (first - start).days
        values[i, lo:lo + len(vals)] = vals
    return ContinuousSeries(station_ids=wanted, start_date=start,
                            values=detrend_series(values))


# ---------------------------------------------------------------------------
# sliding inference


def load_denoiser(checkpoint_dir: str, batch_size: int = 32):
    """A predictor closure over a trained checkpoint.

    Maps noisy windows [B, N, T, C] (NaN gaps, mm) to clean-displacement
    estimates of the same shape, in evaluation mode.
    """
    params, config, extra = net.load_checkpoint(checkpoint_dir)
    scale = float(extra["input_scale"])

    def predict(observed: np.ndarray) -> np.ndarray:
        return net.denoise_windows(params, config, observed, scale,
                                   batch_size=batch_size)

    predict.__name__ = f"checkpoint:{os.path.basename(os.path.normpath(checkpoint_dir))}"
    predict.n_stations = config.n_stations
    return predict


def sliding_denoise(values: np.ndarray, predict, stride: int = 1,
                    batch_size: int = 64) -> np.ndarray:
    """Denoise every 60-day window of [N, T, C] at the given stride.

    Station-windows with more than 50% gap days are blanked entirely so
    the model's input preparation zeroes them. Returns window estimates
    [n_windows, N, 60, C]; window w starts at day w·stride.
    """
    values = np.asarray(values, dtype=np.float64)
    n_sta, span, n_c = values.shape
    if span < WINDOW_DAYS:
        raise ValueError(
            f"span {span} days is shorter than one {WINDOW_DAYS}-day window")
    if stride < 1:
        raise ValueError("stride must be at least 1")
    starts = range(0, span - WINDOW_DAYS + 1, stride)
    windows = np.stack([values[:, w:w + WINDOW_DAYS] for w in starts])
    gap_frac = np.isnan(windows).any(axis=3).mean(axis=2)   # [W, N]
    windows[gap_frac > GAP_ZERO_FRACTION] = np.nan
    estimates = []
    for lo in range(0, windows.shape[0], batch_size):
        estimates.append(np.asarray(predict(windows[lo:lo + batch_size]),
                                    dtype=np.float64))
    return np.concatenate(estimates, axis=0)


def aggregate_rates(window_estimates: np.ndarray, station_ids,
                    start_date: datetime.date,
                    stride: int = 1) -> RateField:
    """First-difference each window, keep its middle 20 days, average
    per calendar day across the covering windows."""
    if stride != 1:
        raise ValueError("rate aggregation is defined for stride 1")
    est = np.asarray(window_estimates, dtype=np.float64)
    n_win, n_sta, t_win, n_c = est.shape
    if t_win != WINDOW_DAYS:
        raise ValueError(f"windows must be {WINDOW_DAYS} days, got {t_win}")
    span = n_win + WINDOW_DAYS - 1
    sums = np.zeros((n_sta, span, n_c))
    counts = np.zeros(span, dtype=np.int64)
    rates = est[:, :, 1:] - est[:, :, :-1]     # rate at local day t = d[t]-d[t-1]
    for w in range(n_win):
        local = slice(RETAIN_LO, RETAIN_HI + 1)
        days = slice(w + RETAIN_LO, w + RETAIN_HI + 1)
        sums[:, days] += rates[w][:, RETAIN_LO - 1:RETAIN_HI]
        counts[days] += 1
    out = np.full((n_sta, span, n_c), np.nan)
    covered = counts > 0
    out[:, covered] = sums[:, covered] / counts[covered, None]
    return RateField(station_ids=list(station_ids), start_date=start_date,
                     rates=out, provenance=counts)


def denoise_series(series: ContinuousSeries, predict,
                   stride: int = 1) -> RateField:
    """ingest → windows → rates, end to end."""
    estimates = sliding_denoise(series.values, predict, stride=stride)
    if stride != 1:
        raise ValueError("rate aggregation needs stride 1")
    return aggregate_rates(estimates, series.station_ids, series.start_date)


# ---------------------------------------------------------------------------
# emission


def _format_cell(value: float) -> str:
    return "" if not np.isfinite(value) else CSV_FORMAT % value


def _write_rate_matrix(path: str, field: RateField, component: int,
                       threshold: float = 0.0) -> None:
    dates = [d.isoformat() for d in field.dates()]
    keep = np.isfinite(field.rates[:, :, component])
    if threshold > 0.0:
        keep &= np.abs(field.rates[:, :, component]) > threshold
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["station"] + dates)
        for i, sid in enumerate(field.station_ids):
            row = [sid]
            for t in range(field.rates.shape[1]):
                row.append(_format_cell(field.rates[i, t, component])
                           if keep[i, t] else "")
            writer.writerow(row)


def read_rate_matrix(path: str):
    """Parse a rate matrix CSV back to (station_ids, dates, values)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        dates = [_parse_date(d) for d in header[1:]]
        ids = []
        rows = []
        for row in reader:
            ids.append(row[0])
            rows.append([float(cell) if cell.strip() else np.nan
                         for cell in row[1:]])
    return ids, dates, np.asarray(rows, dtype=np.float64)


def emit_outputs(field: RateField, report: AdjacencyReport | None,
                 out_dir: str,
                 display_threshold: float = DISPLAY_THRESHOLD) -> list[str]:
    """Write rate matrices, display copies, provenance, and (optionally)
    the adjacency edge list + diagonal. Returns the paths written."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    components = (("east", 0), ("north", 1))
    for name, c in components:
        path = os.path.join(out_dir, f"rates_{name}.csv")
        _write_rate_matrix(path, field, c)
        written.append(path)
        path = os.path.join(out_dir, f"rates_{name}_display.csv")
        _write_rate_matrix(path, field, c, threshold=display_threshold)
        written.append(path)
    path = os.path.join(out_dir, "provenance.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "windows_averaged"])
        for d, n in zip(field.dates(), field.provenance):
            writer.writerow([d.isoformat(), int(n)])
    written.append(path)
    if report is not None:
        written.extend(write_adjacency(report, field.station_ids, out_dir))
    return written


def write_edge_list(report: AdjacencyReport, station_ids,
                    path: str) -> str:
    """Deduplicated supra-threshold edges, strongest first."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["station_a", "station_b", "strength"])
        for i, j, s in report.strong_edges:
            writer.writerow([station_ids[i], station_ids[j], CSV_FORMAT % s])
    return path


def write_diagonal(report: AdjacencyReport, station_ids, path: str) -> str:
    """Per-station self-connection strengths."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["station", "self_strength"])
        for sid, v in zip(station_ids, report.diagonal):
            writer.writerow([sid, CSV_FORMAT % v])
    return path


def write_adjacency(report: AdjacencyReport, station_ids,
                    out_dir: str) -> list[str]:
    """Edge list (deduplicated, strongest first) and diagonal CSVs."""
    os.makedirs(out_dir, exist_ok=True)
    edge_path = write_edge_list(
        report, station_ids, os.path.join(out_dir, "adjacency_edges.csv"))
    diag_path = write_diagonal(
        report, station_ids, os.path.join(out_dir, "adjacency_diagonal.csv"))
    return [edge_path, diag_path]


def write_station_series(directory: str, station_ids, start_date,
                         values: np.ndarray) -> None:
    """Emit per-station daily CSV files (the ingest input format)."""
    os.makedirs(directory, exist_ok=True)
    for i, sid in enumerate(station_ids):
        path = os.path.join(directory, f"{sid}.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["date", "east_mm", "north_mm"])
            for t in range(values.shape[1]):
                day = start_date + datetime.timedelta(days=t)
                writer.writerow([day.isoformat(),
                                 _format_cell(values[i, t, 0]),
                                 _format_cell(values[i, t, 1])])
