import json
import subprocess
import sys

import numpy as np
import pytest

from randmag import io
from randmag.cli import main
from randmag.gauge import FluxField
from randmag.lattice import BoxRegion


def run(tmp_path, *argv):
    return main([argv[0], "--out", str(tmp_path), *argv[1:]])


def test_spectrum_example(tmp_path):
    assert run(tmp_path, "spectrum", "--L", "4", "--b", "0.7853981633974483", "--seed", "42") == 0
    rows = io.read_csv(tmp_path / "spectrum_L4_seed42.csv")
    w = np.array([float(r["eigenvalue"]) for r in rows])
    assert len(w) == 81 and w.min() >= 0 and w.max() <= 8
    assert list(rows[0]) == ["sample_index", "k", "eigenvalue"]
    side = json.loads((tmp_path / "spectrum_L4_seed42.json").read_text())
    assert side["master_seed"] == 42 and "started" not in side
    man = json.loads((tmp_path / "manifest_spectrum_seed42.json").read_text())
    assert str(tmp_path / "spectrum_L4_seed42.csv") in man["outputs"]
    assert man["config_hash"] == io.config_hash(man["config"])


def test_spectrum_bad_L(tmp_path, capsys):
    assert run(tmp_path, "spectrum", "--L", "0") == 2
    assert "positive" in capsys.readouterr().err


def test_spectrum_flux_file_and_vectors(tmp_path):
    box = BoxRegion.centered(1)
    f = tmp_path / "f.json"
    FluxField.constant(box, np.pi / 2).dump(f)
    assert run(tmp_path, "spectrum", "--L", "1", "--flux-file", str(f), "--vectors", "--method", "householder") == 0
    rows = io.read_csv(tmp_path / "spectrum_L1_seed0.csv")
    V = io.read_eigenvectors(tmp_path / "spectrum_L1_seed0_vectors.c16", 9)
    assert V.shape == (9, 9)
    assert np.allclose(V.conj().T @ V, np.eye(9), atol=1e-10)
    # constant flux differs from any sampled field
    assert run(tmp_path / "s", "spectrum", "--L", "1") == 0
    other = io.read_csv(tmp_path / "s" / "spectrum_L1_seed0.csv")
    assert [r["eigenvalue"] for r in rows] != [r["eigenvalue"] for r in other]
    assert run(tmp_path, "spectrum", "--L", "2", "--flux-file", str(f)) == 2


def test_verify_single_suite(tmp_path, capsys):
    assert run(tmp_path, "verify", "--suite", "lemma41", "--L", "3", "--trials", "5") == 0
    out = capsys.readouterr().out
    assert out.startswith("PASS lemma41") and out.count("\n") == 1
    man = json.loads((tmp_path / "manifest_verify_seed0.json").read_text())
    assert man["suites"] == {"lemma41": "pass"}


def test_verify_fault_exit_code(tmp_path, capsys):
    code = run(tmp_path, "verify", "--suite", "symmetry", "--L", "2", "--trials", "2", "--inject-fault", "antisymmetry")
    assert code == 3
    assert "replay: --suite symmetry --L 2 --seed 0 --index 0" in capsys.readouterr().out
    rows = io.read_csv(tmp_path / "verify_L2_seed0.csv")
    assert rows[0]["passed"] == "false" and rows[0]["replay_index"] == "0"


def test_verify_unknown_suite(tmp_path):
    assert run(tmp_path, "verify", "--suite", "nope") == 2


def test_wegner_example(tmp_path, capsys):
    argv = ["wegner", "--L", "4,6", "--eta", "0.02,0.05", "--E", "0.4", "--samples", "10", "--seed", "7", "--plot-data"]
    assert run(tmp_path, *argv) == 0
    rows = io.read_csv(tmp_path / "wegner_L4-6_seed7.csv")
    assert len(rows) == 4 and list(rows[0])[:3] == ["L", "E", "eta"]
    side = json.loads((tmp_path / "wegner_L4-6_seed7.json").read_text())
    assert "fitted_C" in side and side["config"]["samples"] == 10
    assert (tmp_path / "wegner_L4-6_seed7_plot.csv").exists()
    assert "fitted C" in capsys.readouterr().out


def test_wegner_refuses_window_above_threshold(tmp_path, capsys):
    assert run(tmp_path, "wegner", "--E", "0.99", "--eta", "0.1", "--samples", "2") == 2
    assert "E + eta/2 <= E*" in capsys.readouterr().err
    assert run(tmp_path, "wegner", "--E-star", "1.2", "--samples", "2") == 2


def test_ids_example(tmp_path):
    assert run(tmp_path, "ids", "--L", "3", "--samples", "5", "--b", "1.2") == 0
    rows = io.read_csv(tmp_path / "ids_L3_seed0.csv")
    assert len(rows) == 161 and float(rows[-1]["k_hat"]) == 1.0
    assert (tmp_path / "lifshitz_L3_seed0.csv").exists()


def test_localize_example(tmp_path):
    assert run(tmp_path, "localize", "--L", "3,4", "--window", "0.15", "--samples", "3") == 0
    rows = io.read_csv(tmp_path / "localize_L3-4_seed0.csv")
    assert list(rows[0])[0] == "kind"


def test_regularity_command(tmp_path):
    assert run(tmp_path, "regularity", "--L", "2,3", "--samples", "2") == 0
    rows = io.read_csv(tmp_path / "regularity_L2-3_seed0.csv")
    assert [r["L"] for r in rows] == ["2", "3"]


def test_dry_run_writes_nothing(tmp_path, capsys):
    assert run(tmp_path / "d", "wegner", "--dry-run", "--samples", "3") == 0
    cfg = json.loads(capsys.readouterr().out)
    assert cfg["samples"] == 3
    assert not (tmp_path / "d").exists()


def test_config_precedence(tmp_path, capsys):
    c = tmp_path / "c.json"
    c.write_text(json.dumps({"samples": 9, "b": 1.0, "L_list": [3]}))
    assert main(["ids", "--config", str(c), "--samples", "4", "--dry-run"]) == 0
    cfg = json.loads(capsys.readouterr().out)
    assert (cfg["samples"], cfg["b"], cfg["L_list"], cfg["eta_grid"]) == (4, 1.0, [3], [0.02, 0.05, 0.1])
    c.write_text(json.dumps({"bogus": 1}))
    assert main(["ids", "--config", str(c), "--dry-run"]) == 2


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(io.ENV_OUTPUT_DIR, str(tmp_path / "env"))
    assert main(["spectrum", "--L", "1"]) == 0
    assert (tmp_path / "env" / "spectrum_L1_seed0.csv").exists()


@pytest.mark.parametrize("cmd", [
    ["wegner", "--L", "2,3", "--E", "0.8", "--eta", "0.05,0.1", "--samples", "6"],
    ["ids", "--L", "2,3", "--samples", "6"],
    ["localize", "--L", "3", "--samples", "4", "--n-states", "2"],
    ["regularity", "--L", "2", "--samples", "4"],
])
def test_outputs_byte_identical_across_workers(tmp_path, cmd):
    assert main([*cmd, "--out", str(tmp_path / "a"), "--workers", "1"]) == 0
    assert main([*cmd, "--out", str(tmp_path / "b"), "--workers", "2"]) == 0
    csvs = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    assert csvs
    for name in csvs:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "randmag", "spectrum", "--L", "1", "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "9 eigenvalues" in r.stdout
    r = subprocess.run([sys.executable, "-m", "randmag", "spectrum"], capture_output=True, text=True)
    assert r.returncode == 2
