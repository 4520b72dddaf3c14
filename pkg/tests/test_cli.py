import csv
import io as _io
import json
import subprocess
import sys

import numpy as np
import pytest

from gpwarp import io
from gpwarp.cli import main
from gpwarp.geometry import Grid, SparseCorrespondence, Volume


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def files(tmp_path):
    """Small blob phantom, bump landmarks and the bump-warped target."""
    d = tmp_path
    main(["synth", "phantom", "--dims", "12", "12", "12", "--seed", "1", "--out", str(d / "src.vjson")])
    bump = ["--center", "6", "6", "6", "--amplitude", "1.5", "0", "0", "--radius", "3"]
    main(["synth", "deformation", "--grid-like", str(d / "src.vjson"), "--pullback", *bump,
          "--out", str(d / "truth.vjson")])
    main(["warp", "--field", str(d / "truth.vjson"), "--source", str(d / "src.vjson"),
          "--out", str(d / "tgt.vjson")])
    main(["synth", "landmarks", "--grid-like", str(d / "src.vjson"), *bump, "--n", "40",
          "--seed", "2", "--out", str(d / "lm.csv")])
    return d


def test_tune_mean_example(tmp_path, capsys):
    c = SparseCorrespondence.from_displacements([[0, 0, 0], [5, 0, 0]], [[1, 0, 0], [-1, 0, 0]])
    io.write_landmarks(c, tmp_path / "l.csv")
    code, out, _ = run(capsys, "tune", "--method", "mean", "--landmarks", tmp_path / "l.csv")
    assert code == 0
    data = json.loads(out)
    assert data["method"] == "mean"
    assert data["sigma"] == pytest.approx(1 / 3, abs=1e-15)
    assert data["length_scale"] == 25.0
    code, out, _ = run(capsys, "tune", "--method", "mean", "--landmarks", tmp_path / "l.csv",
                       "--length-scale-sqrt")
    assert json.loads(out)["length_scale"] == 5.0


def test_tune_nml_and_dgs(files, capsys):
    code, out, _ = run(capsys, "tune", "--method", "nml", "--landmarks", files / "lm.csv",
                       "--length-scale-sqrt")
    assert code == 0
    data = json.loads(out)
    assert data["nml"] <= data["init_nml"]
    code, out, _ = run(capsys, "tune", "--method", "dgs", "--landmarks", files / "lm.csv",
                       "--source", files / "src.vjson", "--target", files / "tgt.vjson",
                       "--length-scale-sqrt", "--out", files / "p.json")
    assert code == 0 and out == ""
    data = json.loads((files / "p.json").read_text())
    assert len(data["rmse_table"]) == 9
    best = min(data["rmse_table"], key=lambda c: (c["rmse"], c["length_scale"], c["sigma"]))
    assert (best["sigma"], best["length_scale"]) == (data["sigma"], data["length_scale"])


def test_dgs_requires_images(files, capsys):
    code, _, err = run(capsys, "tune", "--method", "dgs", "--landmarks", files / "lm.csv")
    assert code == 2 and "requires --source" in err


def test_interpolate_warp_evaluate_pipeline(files, capsys):
    d = files
    assert main(["tune", "--method", "dgs", "--landmarks", str(d / "lm.csv"), "--source",
                 str(d / "src.vjson"), "--target", str(d / "tgt.vjson"), "--length-scale-sqrt",
                 "--out", str(d / "p.json")]) == 0
    code, _, _ = run(capsys, "interpolate", "--method", "gp", "--landmarks", d / "lm.csv",
                     "--grid-like", d / "src.vjson", "--params", d / "p.json",
                     "--out", d / "gp.vjson", "--uncertainty-pgm", d / "u.pgm", "--chunk-size", 100)
    assert code == 0
    field = io.read_field(d / "gp.vjson")
    assert field.uncertainty is not None
    assert (d / "u.pgm").read_bytes().startswith(b"P5\n12 12\n255\n")
    code, _, _ = run(capsys, "interpolate", "--method", "bspline", "--landmarks", d / "lm.csv",
                     "--grid-like", d / "src.vjson", "--out", d / "bs.vjson")
    assert code == 0
    assert io.read_field(d / "bs.vjson").uncertainty is None
    for name in ("gp", "bs"):
        assert run(capsys, "warp", "--field", d / f"{name}.vjson", "--source", d / "src.vjson",
                   "--out", d / f"w_{name}.vjson")[0] == 0
    code, out, _ = run(capsys, "evaluate", "--metric", "mismatch", "--a", d / "w_gp.vjson",
                       "--b", d / "tgt.vjson")
    assert code == 0
    rows = list(csv.reader(_io.StringIO(out)))
    assert rows[0] == ["metric", "value"] and rows[1][0] == "mismatch"
    code, out, _ = run(capsys, "evaluate", "--metric", "mismatch", "--a", d / "src.vjson",
                       "--b", d / "tgt.vjson")
    assert float(rows[1][1]) < float(out.splitlines()[1].split(",")[1])


def test_evaluate_mhd(tmp_path, capsys):
    io.write_points([[0, 0, 0]], tmp_path / "a.csv")
    io.write_points([[3, 4, 0]], tmp_path / "b.csv")
    code, out, _ = run(capsys, "evaluate", "--metric", "mhd", "--a", tmp_path / "a.csv",
                       "--b", tmp_path / "b.csv")
    assert code == 0 and out == "metric,value\nmhd,5\n"


def test_evaluate_grid_mismatch_exit_2(tmp_path, capsys):
    io.write_volume(Volume(Grid([2, 2, 2]), np.zeros(8)), tmp_path / "a.vjson")
    io.write_volume(Volume(Grid([3, 2, 2]), np.zeros(12)), tmp_path / "b.vjson")
    code, _, err = run(capsys, "evaluate", "--metric", "rmse", "--a", tmp_path / "a.vjson",
                       "--b", tmp_path / "b.vjson")
    assert code == 2 and "grid mismatch" in err


def test_missing_file_exit_2(tmp_path, capsys):
    code, _, err = run(capsys, "tune", "--method", "mean", "--landmarks", tmp_path / "nope.csv")
    assert code == 2 and err.startswith("gpwarp: error:")


def test_bspline_singular_exit_3(tmp_path, capsys):
    io.write_volume(Volume(Grid([10, 10, 10]), np.zeros(1000)), tmp_path / "g.vjson")
    c = SparseCorrespondence.from_displacements([[1, 1, 1], [5, 5, 5]], [[1, 0, 0], [0, 1, 0]])
    io.write_landmarks(c, tmp_path / "l.csv")
    code, _, err = run(capsys, "interpolate", "--method", "bspline", "--landmarks",
                       tmp_path / "l.csv", "--grid-like", tmp_path / "g.vjson", "--lambda", 0,
                       "--out", tmp_path / "f.vjson")
    assert code == 3 and "positive lambda" in err


def test_unknown_flag_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["tune", "--bogus"])
    assert exc.value.code == 2


def test_synth_outputs(tmp_path, capsys):
    assert main(["synth", "phantom", "--dims", "4", "4", "4", "--kind", "gradient_ramp",
                 "--out", str(tmp_path / "r.vjson")]) == 0
    vol = io.read_volume(tmp_path / "r.vjson")
    assert vol.samples[vol.grid.linear_index((1, 2, 3))] == 14.0
    assert main(["synth", "landmarks", "--dims", "10", "10", "10", "--center", "5", "5", "5",
                 "--amplitude", "1", "0", "0", "--radius", "2", "--n", "50", "--fraction", "0.2",
                 "--out", str(tmp_path / "l.csv")]) == 0
    assert io.read_landmarks(tmp_path / "l.csv").n == 10


def test_benchmark_small(capsys):
    args = ["benchmark", "--size", "16", "--features", "200", "--seed", "5"]
    code, out, _ = run(capsys, *args)
    assert code == 0
    rows = list(csv.DictReader(_io.StringIO(out)))
    assert len(rows) == 12
    assert {r["method"] for r in rows} == {"mean", "nml", "dgs", "bspline"}
    assert all(r["wall_ms"] == "" for r in rows)
    # DGS scores cells by RMSE, so only that metric is guaranteed not to regress
    err = {r["method"]: float(r["value"]) for r in rows if r["metric"] == "rmse"}
    assert err["dgs"] <= err["mean"]
    assert run(capsys, *args)[1] == out
    code, timed, _ = run(capsys, *args, "--timing", "--methods", "mean")
    assert all(float(r["wall_ms"]) >= 0 for r in csv.DictReader(_io.StringIO(timed)))


@pytest.mark.parametrize("cmd", [[], ["tune"], ["interpolate"], ["warp"], ["evaluate"],
                                 ["synth"], ["synth", "phantom"], ["synth", "deformation"],
                                 ["synth", "landmarks"], ["benchmark"]])
def test_help(cmd):
    res = subprocess.run([sys.executable, "-m", "gpwarp", *cmd, "--help"], capture_output=True,
                         text=True)
    assert res.returncode == 0
    assert "usage:" in res.stdout
