"""Command-line interface: formats, determinism, config precedence, exits."""

import csv
import hashlib
import json

import numpy as np
import pytest

import lppmin.dp as dp
from lppmin.cli import EXIT_INVALID, EXIT_OK, EXIT_TRUNCATED, EXIT_USAGE, main


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def read_csv(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    return rows[0], rows[1:]


# -- min-action and dump-path -------------------------------------------------

def test_min_action_json(tmp_path):
    out = tmp_path / "ma.json"
    rc = main(["min-action", "--n", "60", "--seed", "3", "--with-path",
               "--out", str(out)])
    assert rc == EXIT_OK
    data = json.loads(out.read_text())
    assert set(data) >= {"value", "endpoint", "unique", "n", "path"}
    assert data["n"] == 60 and len(data["path"]) == 61
    assert data["path"][-1] == data["endpoint"]


def test_min_action_fixed_endpoint_and_table(tmp_path):
    out = tmp_path / "ma.json"
    tab = tmp_path / "table.bin"
    rc = main(["min-action", "--n", "40", "--k", "10", "--seed", "3",
               "--out", str(out), "--dump-table", str(tab)])
    assert rc == EXIT_OK
    data = json.loads(out.read_text())
    assert data["endpoint"] == 10
    loaded = dp.ActionTable.load(tab)
    assert loaded.duration == 40
    assert loaded.value(40, 10) == data["value"]


def test_dump_path_csv(tmp_path):
    out = tmp_path / "p.csv"
    rc = main(["dump-path", "--n", "50", "--seed", "2", "--out", str(out)])
    assert rc == EXIT_OK
    header, rows = read_csv(out)
    assert header == ["t", "x"]
    assert len(rows) == 51
    assert rows[0] == ["0", "0"]
    xs = [int(r[1]) for r in rows]
    assert max(abs(a - b) for a, b in zip(xs, xs[1:])) <= 1


# -- analysis commands --------------------------------------------------------

def test_shape_outputs_and_determinism(tmp_path):
    out = tmp_path / "est.csv"
    argv = ["shape", "--n-ladder", "60,120", "--replicas", "6",
            "--seed", "4", "--out", str(out)]
    assert main(argv) == EXIT_OK
    header, rows = read_csv(out)
    assert header == ["alpha", "n", "lambda_hat", "stderr", "replicas"]
    assert all(r[4] == "6" for r in rows)
    fig = tmp_path / "est.png"
    assert fig.exists()

    h_csv, h_fig = sha(out), sha(fig)
    out.unlink()
    fig.unlink()
    assert main(argv) == EXIT_OK
    assert sha(out) == h_csv
    assert sha(fig) == h_fig


def test_shape_svg_deterministic(tmp_path):
    out = tmp_path / "est.csv"
    argv = ["shape", "--n-ladder", "50,100", "--replicas", "4",
            "--seed", "4", "--out", str(out), "--svg"]
    assert main(argv) == EXIT_OK
    fig = tmp_path / "est.svg"
    assert fig.exists() and fig.read_bytes().startswith(b"<?xml")
    h = sha(fig)
    fig.unlink()
    assert main(argv) == EXIT_OK
    assert sha(fig) == h


def test_shape_truncation_exit_and_marker(tmp_path):
    out = tmp_path / "est.csv"
    rc = main(["shape", "--n-ladder", "60,120", "--replicas", "30",
               "--seed", "4", "--budget", "120000", "--out", str(out)])
    assert rc == EXIT_TRUNCATED
    assert out.read_text().rstrip().endswith("# truncated")


def test_config_file_and_cli_precedence(tmp_path):
    cfgfile = tmp_path / "run.ini"
    out = tmp_path / "cfg_est.csv"
    cfgfile.write_text(
        "[env]\nkappa = 0.0\nc = 1.0\nfamily = uniform\nseed = 9\n"
        "[shape]\nn-ladder = 40,80\nreplicas = 4\n"
        f"[run]\nout = {out}\n"
    )
    assert main(["shape", "--config", str(cfgfile)]) == EXIT_OK
    _, rows = read_csv(out)
    assert all(r[4] == "4" for r in rows)

    # the command line wins over the config file
    assert main(["shape", "--config", str(cfgfile), "--replicas", "6"]) == EXIT_OK
    _, rows = read_csv(out)
    assert all(r[4] == "6" for r in rows)


def test_pointprocess_json(tmp_path):
    out = tmp_path / "pp.json"
    rc = main(["pointprocess", "--n", "1500", "--replicas", "100",
               "--seed", "6", "--out", str(out)])
    assert rc == EXIT_OK
    data = json.loads(out.read_text())
    assert len(data["rectangles"]) == 6
    for entry in data["rectangles"]:
        assert set(entry) >= {"rectangle", "lambda", "mean", "var",
                              "avoid_emp", "avoid_theory", "z", "z_avoid"}
        assert entry["lambda"] > 0


def test_pointprocess_custom_rectangle(tmp_path):
    out = tmp_path / "pp.json"
    rc = main(["pointprocess", "--n", "1200", "--replicas", "100",
               "--seed", "6", "--rect=-1,1,0,2", "--out", str(out)])
    assert rc == EXIT_OK
    data = json.loads(out.read_text())
    assert len(data["rectangles"]) == 1
    assert data["rectangles"][0]["rectangle"] == [-1.0, 1.0, 0.0, 2.0]


def test_freepath_csv_and_figure(tmp_path):
    out = tmp_path / "fp.csv"
    rc = main(["freepath", "--n-grid", "100,320,1000,3200", "--replicas", "4",
               "--seed", "8", "--out", str(out)])
    assert rc == EXIT_OK
    header, rows = read_csv(out)
    assert header == ["n", "ell", "d", "tau", "settled", "action"]
    assert len(rows) == 16
    assert (tmp_path / "fp.png").exists()


def test_limitlaw_json(tmp_path):
    out = tmp_path / "ll.json"
    rc = main(["limitlaw", "--n", "300", "--replicas", "25", "--s", "0.5",
               "--seed", "10", "--out", str(out)])
    assert rc == EXIT_OK
    data = json.loads(out.read_text())
    assert set(data) >= {"n", "replicas", "s", "h", "ks", "quantiles",
                         "tau_diag", "settled_fraction"}
    assert data["n"] == 300 and data["s"] == 0.5
    assert 0.0 < data["ks"] < 1.0
    assert (tmp_path / "ll.png").exists()


def test_loops_validate_and_items(tmp_path):
    out = tmp_path / "loops.json"
    rc = main(["loops", "--n", "40", "--ell", "3", "--seed", "12",
               "--validate", "--out", str(out)])
    assert rc == EXIT_OK
    data = json.loads(out.read_text())
    assert data["ok"] is True
    assert len(data["items"]) == 13
    assert all(item["ok"] for item in data["items"])


def test_variance_csv_deterministic(tmp_path):
    out = tmp_path / "var.csv"
    argv = ["variance", "--max-x", "300", "--b-replicas", "20",
            "--seed", "14", "--out", str(out)]
    assert main(argv) == EXIT_OK
    header, rows = read_csv(out)
    assert header == ["i", "x", "d", "mean", "variance", "b_replicas", "horizon"]
    assert len(rows) >= 3
    assert rows[0][1] == "0"
    h = sha(out)
    out.unlink()
    assert main(argv) == EXIT_OK
    assert sha(out) == h


# -- failure modes ------------------------------------------------------------

def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2


def test_bad_family_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["shape", "--family", "nosuch"])
    assert exc.value.code == 2


def test_bad_kappa_reported_as_usage(tmp_path):
    rc = main(["min-action", "--n", "10", "--kappa", "-2.0",
               "--out", str(tmp_path / "x.json")])
    assert rc == EXIT_USAGE


def test_threads_must_be_positive():
    assert main(["min-action", "--n", "10", "--threads", "0"]) == EXIT_USAGE


def test_missing_required_n():
    assert main(["min-action"]) == EXIT_USAGE


def test_missing_config_file():
    assert main(["shape", "--config", "/nonexistent/cfg.ini"]) == EXIT_USAGE
