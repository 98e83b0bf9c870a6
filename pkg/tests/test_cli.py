import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from ebars.cli import EXIT_DATA, DataError, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main, read_numeric_csv
from ebars.experiments import gen_swiss_roll

QUICK = ["--burnin", "50", "--steps", "100"]


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def _curve_csv(path, m=80, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    x = rng.random(m) * scale
    y = np.abs(x / scale - 0.5) + 0.05 * rng.standard_normal(m)
    return _write(path, ["x1", "y"], np.column_stack([x, y]))


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- fit ----------------------------------------------------------------------------------------


def test_toy_csv_end_to_end(tmp_path):
    src = _write(tmp_path / "toy.csv", ["x1", "y"], [[0.2, 1.0], [0.5, 0.0], [0.8, 1.0]])
    out = tmp_path / "out"
    assert main(["fit", str(src), "--degree", "1", "--out", str(out), *QUICK]) == EXIT_OK
    for name in ("samples.csv", "predictions.csv", "intensity.csv", "knot_summary.json", "fit.png",
                 "manifest.json"):
        assert (out / name).stat().st_size > 0
    samples = _rows(out / "samples.csv")
    assert len(samples) == 100
    assert {"step", "log_posterior", "k_total", "k_x1", "knots_x1"} <= set(samples[0])


def test_toy_csv_default_degree_cannot_initialise(tmp_path):
    src = _write(tmp_path / "toy.csv", ["x1", "y"], [[0.2, 1.0], [0.5, 0.0], [0.8, 1.0]])
    assert main(["fit", str(src), "--out", str(tmp_path / "o"), *QUICK]) == EXIT_NUMERIC


def test_fit_seed_reproducible(tmp_path):
    src = _curve_csv(tmp_path / "d.csv")
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        assert main(["fit", str(src), "--seed", "7", "--no-plots", "--out", str(out), *QUICK]) == EXIT_OK
        outs.append(out)
    for name in ("samples.csv", "predictions.csv", "intensity.csv", "knot_summary.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    out = tmp_path / "c"
    main(["fit", str(src), "--seed", "8", "--no-plots", "--out", str(out), *QUICK])
    assert (out / "samples.csv").read_bytes() != (outs[0] / "samples.csv").read_bytes()


def test_fixed_k(tmp_path):
    src = _curve_csv(tmp_path / "d.csv")
    out = tmp_path / "o"
    assert main(["fit", str(src), "--fixed-k", "2", "--no-plots", "--out", str(out), *QUICK]) == EXIT_OK
    samples = _rows(out / "samples.csv")
    assert {r["k_total"] for r in samples} == {"2"}
    assert all(len(r["knots_x1"].split()) == 2 for r in samples)


def test_locations_written_with_full_precision(tmp_path):
    src = _curve_csv(tmp_path / "d.csv")
    out = tmp_path / "o"
    main(["fit", str(src), "--candidates", "7", "--no-plots", "--out", str(out), *QUICK])
    locs = {float(v) for r in _rows(out / "samples.csv") for v in r["knots_x1"].split()}
    grid = np.arange(1, 8) / 8
    assert locs <= set(grid.tolist())


def test_manifest_contents(tmp_path):
    src = _curve_csv(tmp_path / "d.csv")
    out = tmp_path / "o"
    main(["fit", str(src), "--seed", "3", "--no-plots", "--out", str(out), *QUICK])
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "fit"
    assert man["seeds"]["chain"] == 3
    assert len(man["inputs"]["data"]["sha256"]) == 64
    assert man["config"]["gamma"] == 1.0 and man["config"]["mode"] == "exact"
    assert "numpy" in json.dumps(man)


def test_fit_with_test_csv_and_rescale(tmp_path):
    src = _curve_csv(tmp_path / "d.csv", scale=10.0)
    out = tmp_path / "o"
    assert main(["fit", str(src), "--no-plots", "--out", str(out), *QUICK]) == EXIT_DATA
    test = _write(tmp_path / "t.csv", ["x1"], [[1.0], [5.0], [9.0]])
    assert main(["fit", str(src), "--rescale", "--test", str(test), "--no-plots", "--out", str(out),
                 *QUICK]) == EXIT_OK
    pred = _rows(out / "predictions.csv")
    assert [float(r["x1"]) for r in pred] == pytest.approx([0.1, 0.5, 0.9], abs=0.02)
    assert all(np.isfinite(float(r["mean"])) for r in pred)


def test_malformed_csv(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("x1,y\n0.1,1\n0.2,abc\n")
    assert main(["fit", str(bad), "--out", str(tmp_path / "o")]) == EXIT_DATA
    nohead = tmp_path / "nohead.csv"
    nohead.write_text("0.1,1\n0.2,2\n")
    with pytest.raises(DataError):
        read_numeric_csv(nohead)
    assert main(["fit", str(nohead), "--out", str(tmp_path / "o")]) == EXIT_DATA
    missing = tmp_path / "nope.csv"
    assert main(["fit", str(missing), "--out", str(tmp_path / "o")]) == EXIT_DATA


def test_bad_flag_values_are_usage_errors(tmp_path):
    src = _curve_csv(tmp_path / "d.csv")
    assert main(["fit", str(src), "--gamma", "2", "--out", str(tmp_path / "o")]) == EXIT_USAGE
    assert main(["fit", str(src), "--degree", "x", "--out", str(tmp_path / "o")]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE


def test_output_dir_from_environment(tmp_path, monkeypatch):
    src = _curve_csv(tmp_path / "d.csv")
    monkeypatch.setenv("EBARS_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["fit", str(src), "--no-plots", *QUICK]) == EXIT_OK
    assert (tmp_path / "env" / "manifest.json").exists()


def test_two_dimensional_fit(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.random((150, 2))
    y = np.where(X[:, 0] > 0.5, 1.0, 0.0) + 0.1 * rng.standard_normal(150)
    src = _write(tmp_path / "s.csv", ["x1", "x2", "y"], np.column_stack([X, y]))
    out = tmp_path / "o"
    assert main(["fit", str(src), "--candidates", "10,10", "--degree", "1", "--no-plots", "--out", str(out),
                 *QUICK]) == EXIT_OK
    assert json.loads((out / "manifest.json").read_text())["config"]["mode"] == "ebic"
    assert {"x1", "x2", "mean", "sd"} <= set(_rows(out / "predictions.csv")[0])


# -- experiment --------------------------------------------------------------------------------------


def test_missing_experiment_name(capsys):
    assert main(["experiment"]) == EXIT_USAGE
    err = capsys.readouterr().err
    assert "usage" in err and "knots-k1" in err


def test_unknown_experiment_lists_available(capsys):
    assert main(["experiment", "knots-k9"]) == EXIT_USAGE
    err = capsys.readouterr().err
    for name in ("knots-k1", "knots-k2", "knots-k4", "gamma-sweep", "gmsd-spiral", "gmsd-swiss"):
        assert name in err


def test_knots_experiment_csv(tmp_path):
    out = tmp_path / "o"
    argv = ["experiment", "knots-k1", "--m", "200", "--reps", "2", "--seed", "1", "--out", str(out), *QUICK]
    assert main(argv) == EXIT_OK
    rows = _rows(out / "knots_k1.csv")
    assert [r["rep"] for r in rows] == ["0", "1", "mean", "sd", "median"]
    assert "abs_err_knot1" in rows[0]
    assert (out / "knots_k1.png").exists()
    first = (out / "knots_k1.csv").read_bytes()
    assert main(argv + ["--jobs", "2"]) == EXIT_OK
    assert (out / "knots_k1.csv").read_bytes() == first


def test_spiral_emit_data_round_trips_through_denoise(tmp_path):
    out = tmp_path / "exp"
    assert main(["experiment", "gmsd-spiral", "--m", "600", "--reps", "1", "--emit-data", "--no-plots",
                 "--out", str(out), *QUICK]) == EXIT_OK
    data = out / "gmsd_spiral_data_rep0.csv"
    header, pts = read_numeric_csv(data)
    assert header == ["x1", "x2"] and pts.shape == (600, 2)
    man = json.loads((out / "gmsd_spiral_manifest.json").read_text())
    assert man["manifold"]["params"]["b"] == 0.5
    assert man["config"]["options"]["neighbors"] == 15
    den = tmp_path / "den"
    assert main(["denoise", str(data), "--oracle", "spiral", "--neighbors", "15", "--out", str(den),
                 *QUICK]) == EXIT_OK
    _, d = read_numeric_csv(den / "denoised.csv")
    _, u = read_numeric_csv(den / "embedding.csv")
    assert d.shape == (600, 2) and u.shape == (600, 1)
    g = json.loads((den / "gmsd.json").read_text())
    assert g["gmsd_denoised"] < g["gmsd_input"]
    assert (den / "denoise.png").exists()


# -- denoise ----------------------------------------------------------------------------------------


def test_denoise_disconnected_graph(tmp_path, capsys):
    pts = [[0.0, 0.0], [0.01, 0.0], [5.0, 5.0], [5.01, 5.0], [5.02, 5.0]]
    src = _write(tmp_path / "p.csv", ["a", "b"], pts)
    assert main(["denoise", str(src), "--neighbors", "1", "--out", str(tmp_path / "o")]) == EXIT_DATA
    err = capsys.readouterr().err
    assert "[3, 2]" in err and "--neighbors" in err


def test_denoise_swiss_roll_two_dim(tmp_path):
    X, _ = gen_swiss_roll(400, 0.3, 2)
    src = _write(tmp_path / "s.csv", ["x1", "x2", "x3"], X)
    out = tmp_path / "o"
    assert main(["denoise", str(src), "--intrinsic-dim", "2", "--candidates", "6,6", "--no-plots",
                 "--out", str(out), *QUICK]) == EXIT_OK
    header, u = read_numeric_csv(out / "embedding.csv")
    assert header == ["u1", "u2"] and u.shape == (400, 2)
    assert not (out / "gmsd.json").exists()
    assert main(["denoise", str(src), "--intrinsic-dim", "4", "--out", str(out)]) == EXIT_USAGE


def test_denoise_deterministic(tmp_path):
    t = np.random.default_rng(1).random(150)
    src = _write(tmp_path / "c.csv", ["a", "b"], np.column_stack([t, np.sin(3 * t)]))
    for tag in ("a", "b"):
        main(["denoise", str(src), "--seed", "4", "--no-plots", "--out", str(tmp_path / tag), *QUICK])
    assert (tmp_path / "a" / "denoised.csv").read_bytes() == (tmp_path / "b" / "denoised.csv").read_bytes()


def test_console_script_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "ebars.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "0.1.0" in res.stdout
    res = subprocess.run([sys.executable, "-m", "ebars.cli", "experiment"], capture_output=True, text=True)
    assert res.returncode == EXIT_USAGE and "usage" in res.stderr
