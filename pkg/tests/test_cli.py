import csv
import json
import subprocess
import sys

import pytest

from lsmjoin.cli import main


def write_config(tmp_path, **workload):
    spec = dict(n_r=400, n_s=400, e=48, d_s=2, eps_r=0.5, eps_s=0.5, seed=1)
    spec.update(workload)
    cfg = {"workload": spec, "storage": {"write_buffer_bytes": 16384}, "budget": 32768}
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_generate(tmp_path, capsys):
    out = tmp_path / "gen"
    assert main(["generate", "--config", write_config(tmp_path), "--out", str(out), "--seed", "5"]) == 0
    assert (out / "R.csv").read_text().count("\n") == 400
    truth = json.loads((out / "ground_truth.json").read_text())
    assert truth["rows_nonprimary"] > 0
    assert "wrote 400 R" in capsys.readouterr().out


def test_run_predict_compare(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "run"
    assert main(["run", "--config", cfg, "--out", str(out), "--methods", "INLJ-P,SJ-N,HJ-N,SJ-PS"]) == 0
    with open(out / "report.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["method"] for r in rows] == ["INLJ-P", "SJ-N", "HJ-N", "SJ-PS/S-Comp/cov"]
    assert json.loads((out / "report.json").read_text())[0]["method"] == "INLJ-P"
    assert "spearman_rho=" in capsys.readouterr().out

    assert main(["predict", "--config", cfg, "--out", str(out), "--methods", "INLJ-P,SJ-N,HJ-N,SJ-PS"]) == 0
    with open(out / "predict.csv") as fh:
        reader = csv.DictReader(fh)
        preds = list(reader)
    assert reader.fieldnames[:3] == ["method", "predicted_io", "predicted_build_io"]
    assert "probe_hit_S" in reader.fieldnames and len(preds) == 4

    assert main(["compare", "--report", str(out / "report.csv"), "--predictions", str(out / "predict.csv"),
                 "--out", str(out)]) == 0
    result = json.loads((out / "compare.json").read_text())
    assert result["methods"] == 4 and -1 <= result["spearman_rho"] <= 1


def test_run_from_csv(tmp_path):
    cfg = write_config(tmp_path)
    gen = tmp_path / "gen"
    assert main(["generate", "--config", cfg, "--out", str(gen)]) == 0
    out = tmp_path / "run"
    args = ["run", "--config", cfg, "--out", str(out), "--methods", "HJ-N",
            "--r-csv", str(gen / "R.csv"), "--s-csv", str(gen / "S.csv")]
    assert main(args) == 0
    truth = json.loads((gen / "ground_truth.json").read_text())
    with open(out / "report.csv") as fh:
        (row,) = list(csv.DictReader(fh))
    assert int(row["rows"]) == truth["rows_nonprimary"]


def test_bad_input_exit_code(tmp_path, capsys):
    assert main(["predict", "--config", write_config(tmp_path), "--out", str(tmp_path), "--methods", "HJ-SS"]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["compare", "--report", str(tmp_path / "missing.csv")]) == 2
    with pytest.raises(SystemExit):
        main(["bogus"])


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "lsmjoin.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "generate" in proc.stdout and "compare" in proc.stdout
