"""Command-line interface.

Subcommands cover the full workflow: ``generate`` a synthetic window
dataset, ``train`` the denoiser, ``evaluate`` it (or a classical
``baseline``) on a held-out split, ``denoise`` continuous daily series
into aggregated rate fields, and ``graph-export`` the learned
station-connectivity graph.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import pipeline as pl
from .configio import parse_kv_file, resolve_configs
from .metrics import (BASELINE_KINDS, evaluate_model, format_report_rows,
                      make_baseline, write_report, write_snr_curve)
from .network import adjacency_report, load_checkpoint
from .noise import SpatialNoiseModel, synthesize_residuals
from .okada import StationNetwork
from .synthetic import generate_dataset, make_demo_network, read_dataset
from .training import train

__all__ = ["main", "build_parser"]


def _cmd_generate(args) -> int:
    network = make_demo_network(n_stations=args.stations, seed=args.seed)
    if args.residuals:
        series = pl.ingest(args.residuals, network)
        residuals = series.values
        source = args.residuals
    else:
        residuals = synthesize_residuals(
            network, span_days=args.span,
            rng=np.random.default_rng(args.seed))
        source = f"synthetic fallback ({args.span} days)"
    model = SpatialNoiseModel().fit(residuals)
    dataset = generate_dataset(network, model, args.samples, args.seed)
    from .synthetic import write_dataset
    write_dataset(dataset, args.out, network)
    print(f"fitted noise model on {source}")
    print(f"wrote {dataset.n_samples} samples for {args.stations} "
          f"stations to {args.out}")
    for name, (lo, hi) in dataset.manifest["splits"].items():
        print(f"split {name}: {hi - lo} samples")
    return 0


def _cmd_train(args) -> int:
    dataset = read_dataset(args.dataset)
    pairs = parse_kv_file(args.config) if args.config else {}
    model_config, train_config = resolve_configs(
        pairs, n_stations=dataset.observed.shape[1],
        window=dataset.observed.shape[2])
    if args.ablation is not None:
        train_config = dataclasses.replace(train_config,
                                           ablation=args.ablation)
    if args.seed is not None:
        train_config = dataclasses.replace(train_config, seed=args.seed)

    def progress(stats):
        print(f"epoch={stats.epoch} train_mse={stats.train_mse:.6g} "
              f"val_mse={stats.val_mse:.6g} seconds={stats.seconds:.2f}",
              flush=True)

    print(f"training ablation={train_config.ablation} "
          f"seed={train_config.seed} batch={train_config.batch_size} "
          f"max_epochs={train_config.max_epochs}", flush=True)
    _, _, log = train(dataset, model_config, train_config,
                      out_dir=args.out, progress=progress)
    print(f"epoch0_val_mse={log.epoch0_val_mse:.6g} "
          f"best_epoch={log.best_epoch} "
          f"best_val_mse={log.best_val_mse:.6g} "
          f"stopped_early={log.stopped_early}")
    print(f"checkpoint written to {args.out}")
    return 0


def _write_evaluation(report, args) -> None:
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    write_report(report, args.out)
    curve = args.curve or os.path.join(out_dir, "snr_curve.csv")
    write_snr_curve(report, curve)
    print(format_report_rows([report]))
    print(f"report written to {args.out}; SNR curve to {curve}")


def _cmd_evaluate(args) -> int:
    dataset = read_dataset(args.dataset)
    predict = pl.load_denoiser(args.checkpoint, batch_size=args.batch_size)
    if predict.n_stations != dataset.observed.shape[1]:
        raise ValueError(
            f"checkpoint expects {predict.n_stations} stations but the "
            f"dataset has {dataset.observed.shape[1]}")
    report = evaluate_model(predict, dataset, split=args.split)
    _write_evaluation(report, args)
    return 0


def _cmd_baseline(args) -> int:
    dataset = read_dataset(args.dataset)
    predict = make_baseline(args.kind, args.k)
    report = evaluate_model(predict, dataset, split=args.split)
    _write_evaluation(report, args)
    return 0


def _cmd_denoise(args) -> int:
    network = StationNetwork.from_csv(args.stations)
    predict = pl.load_denoiser(args.checkpoint, batch_size=args.batch_size)
    if predict.n_stations != len(network.ids):
        raise ValueError(
            f"checkpoint expects {predict.n_stations} stations but "
            f"{args.stations} lists {len(network.ids)}")
    series = pl.ingest(args.series, network)
    print(f"ingested {len(series.station_ids)} stations, "
          f"{series.span_days} days from {series.start_date}", flush=True)
    field = pl.denoise_series(series, predict, stride=args.stride)
    params, _, _ = load_checkpoint(args.checkpoint)
    report = adjacency_report(params, threshold=args.graph_threshold)
    paths = pl.emit_outputs(field, report, args.out,
                            display_threshold=args.display_threshold)
    for path in paths:
        print(f"wrote {path}")
    return 0


def _cmd_graph_export(args) -> int:
    params, config, _ = load_checkpoint(args.checkpoint)
    report = adjacency_report(params, threshold=args.threshold)
    if args.stations:
        ids = StationNetwork.from_csv(args.stations).ids
        if len(ids) != config.n_stations:
            raise ValueError(
                f"checkpoint expects {config.n_stations} stations but "
                f"{args.stations} lists {len(ids)}")
    else:
        ids = [f"S{i:03d}" for i in range(config.n_stations)]
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    pl.write_edge_list(report, ids, args.out)
    stem, ext = os.path.splitext(args.out)
    diag_path = pl.write_diagonal(report, ids, f"{stem}_diagonal{ext or '.csv'}")
    print(f"{report.n_strong} edges above {args.threshold:g} "
          f"written to {args.out}; diagonal to {diag_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gnssdenoise",
        description="Graph-recurrent attention denoising of daily "
                    "multi-station displacement series.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate",
                       help="generate a synthetic window dataset")
    p.add_argument("--out", required=True, help="dataset directory")
    p.add_argument("--stations", type=int, default=20)
    p.add_argument("--samples", type=int, default=4000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--residuals", default=None,
                   help="directory of per-station residual CSVs to fit "
                        "the noise model on (default: synthesize)")
    p.add_argument("--span", type=int, default=2000,
                   help="days of synthetic residuals when no --residuals")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("train", help="train the denoiser")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", default=None,
                   help="flat key=value settings file")
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--ablation", default=None,
                   choices=["full", "no_transformer",
                            "spatial_attention_only",
                            "temporal_attention_only"])
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate",
                       help="evaluate a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="JSON report path")
    p.add_argument("--curve", default=None,
                   help="SNR-binned error CSV path (default: "
                        "snr_curve.csv next to the report)")
    p.add_argument("--split", default="test",
                   choices=["train", "val", "test"])
    p.add_argument("--batch-size", type=int, default=64)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("baseline",
                       help="evaluate a moving mean/median filter")
    p.add_argument("--kind", required=True, choices=list(BASELINE_KINDS))
    p.add_argument("--k", required=True, type=int,
                   help="odd window width in days")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="JSON report path")
    p.add_argument("--curve", default=None)
    p.add_argument("--split", default="test",
                   choices=["train", "val", "test"])
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("denoise",
                       help="denoise continuous series into daily rates")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--series", required=True,
                   help="directory of per-station daily CSVs")
    p.add_argument("--stations", required=True, help="station list CSV")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--display-threshold", type=float, default=0.01,
                   help="|rate| mm/day cutoff for the display CSVs")
    p.add_argument("--graph-threshold", type=float, default=0.008)
    p.add_argument("--batch-size", type=int, default=64)
    p.set_defaults(func=_cmd_denoise)

    p = sub.add_parser("graph-export",
                       help="export the learned station graph")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--threshold", type=float, default=0.008)
    p.add_argument("--out", required=True, help="edge-list CSV path")
    p.add_argument("--stations", default=None,
                   help="station list CSV for names (default: indices)")
    p.set_defaults(func=_cmd_graph_export)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
