import json
import os
import subprocess
import sys

import numpy as np
import pytest

from tmcseg.cli import main
from tmcseg.data import BinaryImage, save_bitmap
from tmcseg.nn import load_params


def run_cli(*argv):
    return main([str(a) for a in argv])


def gen_small(out, preset="cattle40", side=8, **extra):
    args = ["gen-data", "--out", out, "--preset", preset, "--side", side]
    for k, v in extra.items():
        args += [f"--{k}", v]
    assert run_cli(*args) == 0


# --- gen-data ---------------------------------------------------------------------

def test_gen_data_writes_run_layout(tmp_path, capsys):
    out = tmp_path / "run"
    gen_small(out)
    assert (out / "archive.txt").exists()
    assert (out / "config.json").exists()
    assert (out / "images" / "truth.pbm").exists()
    assert (out / "images" / "observations.pgm").exists()
    assert (out / "images" / "mask.pgm").exists()
    assert "64 steps" in capsys.readouterr().out
    config = json.loads((out / "config.json").read_text())
    assert config["data"]["fraction_unobserved"] == 0.4
    assert config["data"]["noise"] == "cattle"


def test_gen_data_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    gen_small(a, seed="3")
    gen_small(b, seed="3")
    assert (a / "archive.txt").read_bytes() == (b / "archive.txt").read_bytes()
    assert (a / "images" / "truth.pbm").read_bytes() == \
        (b / "images" / "truth.pbm").read_bytes()


def test_gen_data_accepts_a_bitmap(tmp_path):
    img = BinaryImage(np.tri(8, dtype=np.uint8))
    save_bitmap(img, tmp_path / "truth.pbm")
    out = tmp_path / "run"
    assert run_cli("gen-data", "--out", out, "--bitmap",
                   tmp_path / "truth.pbm") == 0
    assert (out / "images" / "truth.pbm").read_bytes() == \
        (tmp_path / "truth.pbm").read_bytes()


def test_gen_data_rejects_bad_inputs(tmp_path, capsys):
    assert run_cli("gen-data", "--out", tmp_path / "x",
                   "--preset", "horse40") == 2
    assert "preset" in capsys.readouterr().err
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"data": {"sides": 8}}')
    assert run_cli("gen-data", "--out", tmp_path / "y", "--config", cfg) == 2
    assert "unknown key" in capsys.readouterr().err
    cfg.write_text('{"dataset": {}}')
    assert run_cli("gen-data", "--out", tmp_path / "z", "--config", cfg) == 2
    assert "unknown sections" in capsys.readouterr().err


def test_config_file_and_set_overrides(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"data": {"side": 16, "fraction_unobserved": 0.5}}')
    out = tmp_path / "run"
    assert run_cli("gen-data", "--out", out, "--config", cfg,
                   "--set", "data.side=8") == 0
    written = json.loads((out / "config.json").read_text())
    assert written["data"]["side"] == 8  # --set wins over the file
    assert written["data"]["fraction_unobserved"] == 0.5


# --- train ------------------------------------------------------------------------

def test_train_requires_an_archive(tmp_path, capsys):
    assert run_cli("train", "--out", tmp_path / "empty", "--model", "dmtmc",
                   "--epochs", 1) == 2
    assert "archive" in capsys.readouterr().err


def test_train_writes_checkpoint_and_trace_with_preset_widths(tmp_path):
    out = tmp_path / "run"
    gen_small(out)
    assert run_cli("train", "--out", out, "--model", "vsl", "--epochs", 2,
                   "--seed", 1) == 0
    ckpt = out / "checkpoints" / "vsl.json"
    kind, dims, params, meta = load_params(ckpt)
    assert kind == "vsl"
    assert dims["hidden_units"] == 41
    assert meta == {"seed": 1, "step": 2}
    trace = (out / "traces" / "vsl.csv").read_text().splitlines()
    assert trace[0].startswith("epoch,elbo,")
    assert len(trace) == 3


def test_train_zero_epochs_smoke(tmp_path):
    out = tmp_path / "run"
    gen_small(out)
    assert run_cli("train", "--out", out, "--model", "svrnn", "--epochs", 0) == 0
    assert (out / "checkpoints" / "svrnn.json").exists()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_abort_exits_three(tmp_path, capsys):
    out = tmp_path / "run"
    (out / "checkpoints").mkdir(parents=True)
    header = {"n": 4, "d_x": 1, "x_loc": 0.0, "x_scale": 1.0, "provenance": None}
    lines = ["tmcseg-sequence-v1", json.dumps(header)]
    for t in range(4):
        lines.append(f"{t} 1e308 {t % 2} L")
    (out / "archive.txt").write_text("\n".join(lines) + "\n")
    assert run_cli("train", "--out", out, "--model", "dmtmc",
                   "--epochs", 15) == 3
    assert "non-finite" in capsys.readouterr().err


# --- segment ----------------------------------------------------------------------

def trained_run(tmp_path, kinds=("dmtmc",), epochs=2):
    out = tmp_path / "run"
    gen_small(out)
    for kind in kinds:
        assert run_cli("train", "--out", out, "--model", kind,
                       "--epochs", epochs) == 0
    return out


def test_segment_scores_and_renders(tmp_path, capsys):
    out = trained_run(tmp_path)
    assert run_cli("segment", "--out", out, "--samples", 4, "--seed", 7) == 0
    printed = capsys.readouterr().out
    assert "error rate" in printed
    record = json.loads((out / "results" / "dmtmc.json").read_text())
    assert 0.0 <= record["error_rate"] <= 1.0
    assert record["n_samples"] == 4
    assert (out / "images" / "decode-dmtmc.pbm").exists()
    assert (out / "images" / "panel.pgm").exists()


def test_segment_is_deterministic_given_seed(tmp_path):
    out = trained_run(tmp_path)
    snapshots = []
    for _ in range(2):
        assert run_cli("segment", "--out", out, "--samples", 4, "--seed", 9) == 0
        record = json.loads((out / "results" / "dmtmc.json").read_text())
        record.pop("seconds")
        snapshots.append((record,
                          (out / "images" / "decode-dmtmc.pbm").read_bytes(),
                          (out / "images" / "panel.pgm").read_bytes()))
    assert snapshots[0] == snapshots[1]


def test_segment_panel_has_six_tiles_for_three_models(tmp_path):
    out = trained_run(tmp_path, kinds=("dmtmc", "vsl", "svrnn"), epochs=1)
    assert run_cli("segment", "--out", out, "--samples", 2) == 0
    header = (out / "images" / "panel.pgm").read_bytes().split(b"\n")[:2]
    width = int(header[1].split()[0])
    assert width == 6 * 8 + 5  # six 8-wide tiles, one-pixel gaps


def test_segment_rejects_mismatched_checkpoint(tmp_path, capsys):
    from tmcseg.models import TmcConfig, make_model
    out = trained_run(tmp_path)
    bad = out / "checkpoints" / "bad.json"
    make_model(TmcConfig(kind="dmtmc", d_x=2), seed=0).save(bad)
    assert run_cli("segment", "--out", out, "--checkpoint", bad) == 2
    assert "does not match" in capsys.readouterr().err


# --- repro-table ------------------------------------------------------------------

def test_repro_table_runs_resumably(tmp_path, capsys):
    out = tmp_path / "table"
    argv = ["repro-table", "--out", out, "--side", 8, "--epochs", 1,
            "--seeds", 1, "--kinds", "dmtmc,vsl", "--scenarios",
            "cattle-40,camel-60", "--jobs", 1]
    assert run_cli(*argv) == 0
    first = capsys.readouterr().out
    assert "Cattle 40%" in first and "Camel 60%" in first
    assert (out / "table.csv").exists()
    assert (out / "table.txt").exists()
    assert (out / "per_seed.csv").exists()
    ckpt = out / "cells" / "cattle-40-dmtmc-s0" / "checkpoints" / "dmtmc.json"
    stamp = ckpt.stat().st_mtime_ns
    assert run_cli(*argv) == 0  # resumes: finished cells are not retrained
    assert ckpt.stat().st_mtime_ns == stamp
    rows = (out / "per_seed.csv").read_text().splitlines()
    assert len(rows) == 5  # header + 2 scenarios x 2 kinds


def test_repro_table_parallel_jobs(tmp_path):
    out = tmp_path / "table"
    assert run_cli("repro-table", "--out", out, "--side", 8, "--epochs", 1,
                   "--seeds", 1, "--kinds", "dmtmc", "--scenarios", "camel-40",
                   "--jobs", 2) == 0
    assert (out / "table.csv").exists()


def test_repro_table_rejects_unknown_cells(tmp_path, capsys):
    assert run_cli("repro-table", "--out", tmp_path / "t", "--scenarios",
                   "horse-40") == 2
    assert "scenario" in capsys.readouterr().err
    assert run_cli("repro-table", "--out", tmp_path / "t", "--kinds", "hmm") == 2


# --- oracle and entry points --------------------------------------------------------

def test_oracle_reports_exact_smoother_error(tmp_path, capsys):
    out = tmp_path / "run"
    gen_small(out, side=16)
    assert run_cli("oracle", "--out", out) == 0
    printed = capsys.readouterr().out
    assert "error rate" in printed and "loglik" in printed


def test_module_entry_point_runs(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "tmcseg", "gen-data", "--out",
         str(tmp_path / "run"), "--preset", "camel40", "--side", "8"],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "hidden" in proc.stdout


def test_bad_flags_exit_two():
    with pytest.raises(SystemExit) as err:
        main(["train", "--model", "dmtmc"])  # --out is required
    assert err.value.code == 2
