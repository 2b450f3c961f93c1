"""Config-file parsing and end-to-end CLI smoke tests.

The workflow fixtures run the real subcommands in-process on a tiny
dataset and a micro model so the whole chain (generate -> train ->
evaluate/baseline -> denoise/graph-export) is exercised in seconds.
"""

import datetime
import json
import subprocess
import sys

import numpy as np
import pytest

from gnssdenoise import pipeline as pl
from gnssdenoise.cli import main
from gnssdenoise.configio import parse_kv_file, resolve_configs
from gnssdenoise.synthetic import read_stations

MICRO_CONFIG = """\
# micro settings for smoke tests
embed_dim = 2
hidden_dim = 2
attn_dim = 2
heads = 1
ffn_dim = 4          # trailing comment
attn_dropout = 0.0
out_dropout = 0.0
batch_size = 8
max_epochs = 2
patience = 5
learning_rate = 1e-3
"""


# ---------------------------------------------------------------------------
# configio


def test_parse_kv_file(tmp_path):
    path = tmp_path / "settings.cfg"
    path.write_text(MICRO_CONFIG)
    pairs = parse_kv_file(str(path))
    assert pairs["hidden_dim"] == "2"
    assert pairs["ffn_dim"] == "4"
    assert pairs["learning_rate"] == "1e-3"
    assert len(pairs) == 11


def test_parse_kv_file_rejects_malformed(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("hidden_dim\n")
    with pytest.raises(ValueError, match="key = value"):
        parse_kv_file(str(path))
    path.write_text("a = 1\na = 2\n")
    with pytest.raises(ValueError, match="duplicate"):
        parse_kv_file(str(path))


def test_resolve_configs_types_and_unknown_keys():
    mcfg, tcfg = resolve_configs(
        {"hidden_dim": "7", "learning_rate": "0.01", "ablation":
         "no_transformer", "positional_encoding": "true"}, n_stations=4)
    assert mcfg.hidden_dim == 7 and isinstance(mcfg.hidden_dim, int)
    assert tcfg.learning_rate == 0.01
    assert mcfg.ablation == tcfg.ablation == "no_transformer"
    assert mcfg.positional_encoding is True
    with pytest.raises(ValueError, match="unknown config keys"):
        resolve_configs({"nonsense": "1"}, n_stations=4)
    with pytest.raises(ValueError, match="derived from the dataset"):
        resolve_configs({"n_stations": "9"}, n_stations=4)
    with pytest.raises(ValueError, match="not a boolean"):
        resolve_configs({"positional_encoding": "maybe"}, n_stations=4)
    with pytest.raises(ValueError, match="not a valid int"):
        resolve_configs({"hidden_dim": "tiny"}, n_stations=4)


# ---------------------------------------------------------------------------
# CLI workflow


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cliflow")
    dataset = root / "dataset"
    rc = main(["generate", "--out", str(dataset), "--stations", "4",
               "--samples", "30", "--seed", "3", "--span", "400"])
    assert rc == 0
    config = root / "micro.cfg"
    config.write_text(MICRO_CONFIG)
    ckpt = root / "ckpt"
    rc = main(["train", "--dataset", str(dataset), "--config", str(config),
               "--out", str(ckpt), "--seed", "1"])
    assert rc == 0
    return root


def test_generate_outputs(workdir):
    dataset = workdir / "dataset"
    manifest = json.loads((dataset / "manifest.json").read_text())
    assert manifest["n_samples"] == 30
    assert (dataset / "observed.bin").exists()
    network = read_stations(str(dataset))
    assert len(network.ids) == 4


def test_train_checkpoint(workdir, capsys):
    ckpt = workdir / "ckpt"
    assert (ckpt / "manifest.json").exists()
    log = json.loads((ckpt / "trainlog.json").read_text())
    assert len(log["epochs"]) == 2
    assert log["epoch0_val_mse"] > 0


def test_evaluate_and_baseline(workdir, capsys):
    dataset = workdir / "dataset"
    out = workdir / "eval" / "report.json"
    rc = main(["evaluate", "--checkpoint", str(workdir / "ckpt"),
               "--dataset", str(dataset), "--out", str(out),
               "--split", "test"])
    assert rc == 0
    report = json.loads(out.read_text())
    assert report["n_samples"] == 3  # 10% test split of 30
    assert (workdir / "eval" / "snr_curve.csv").exists()
    captured = capsys.readouterr().out
    assert "MSE" in captured

    rc = main(["baseline", "--kind", "median", "--k", "15",
               "--dataset", str(dataset),
               "--out", str(workdir / "eval" / "baseline.json")])
    assert rc == 0
    base = json.loads((workdir / "eval" / "baseline.json").read_text())
    assert base["model_id"] == "moving_med_15"
    assert base["mae"] > 0


def test_denoise_and_graph_export(workdir, capsys):
    dataset = workdir / "dataset"
    network = read_stations(str(dataset))
    rng = np.random.default_rng(5)
    series_dir = workdir / "series"
    vals = rng.normal(size=(4, 90, 2))
    pl.write_station_series(str(series_dir), network.ids,
                            datetime.date(2021, 1, 1), vals)
    stations_csv = workdir / "stations.csv"
    network.to_csv(str(stations_csv))
    out = workdir / "rates"
    rc = main(["denoise", "--checkpoint", str(workdir / "ckpt"),
               "--series", str(series_dir), "--stations",
               str(stations_csv), "--out", str(out)])
    assert rc == 0
    for name in ["rates_east.csv", "rates_north.csv",
                 "rates_east_display.csv", "rates_north_display.csv",
                 "provenance.csv", "adjacency_edges.csv",
                 "adjacency_diagonal.csv"]:
        assert (out / name).exists(), name
    ids, dates, values = pl.read_rate_matrix(str(out / "rates_east.csv"))
    assert ids == network.ids
    assert values.shape == (4, 90)

    edges = workdir / "graph" / "edges.csv"
    rc = main(["graph-export", "--checkpoint", str(workdir / "ckpt"),
               "--threshold", "0.008", "--out", str(edges),
               "--stations", str(stations_csv)])
    assert rc == 0
    header = edges.read_text().splitlines()[0]
    assert header == "station_a,station_b,strength"
    assert (workdir / "graph" / "edges_diagonal.csv").exists()


def test_cli_error_paths(workdir, capsys):
    rc = main(["evaluate", "--checkpoint", "/nonexistent",
               "--dataset", str(workdir / "dataset"),
               "--out", str(workdir / "x.json")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_invalid_ablation_choice(workdir):
    with pytest.raises(SystemExit):
        main(["train", "--dataset", str(workdir / "dataset"),
              "--out", str(workdir / "ckpt3"), "--ablation", "bogus"])


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "gnssdenoise.cli",
                           "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for sub in ["generate", "train", "evaluate", "baseline", "denoise",
                "graph-export"]:
        assert sub in proc.stdout
