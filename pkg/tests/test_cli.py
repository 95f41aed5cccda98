"""End-to-end command-line behaviour: files, exit codes, determinism."""
import csv
import json
import math

import numpy as np
import pytest

from suglg.cli import cli_main
from suglg.dataio import parse_dataset, write_dataset
from suglg.model import CensorInterval, SpatialDataset
from suglg.spatial import LocationSet


def _write_small_dataset(path, n=9, seed=2, censor_one=True):
    rng = np.random.default_rng(seed)
    locs = LocationSet(rng.uniform(0.0, 4.0, size=(n, 2)))
    vals = rng.normal(0.3, 0.8, size=n)
    exact = {i: float(vals[i]) for i in range(n)}
    censored = {}
    if censor_one:
        low = min(exact, key=exact.get)
        censored[low] = CensorInterval(-math.inf, exact.pop(low) + 0.1)
    ds = SpatialDataset(locs, np.ones((n, 1)), exact, censored)
    write_dataset(ds, str(path))
    return ds


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


FAST = ["--iters", "260", "--burnin", "80", "--thin", "3", "--preset", "quick"]


# ---------------------------------------------------------------------------
# simulate


def test_simulate_emits_study_design(tmp_path):
    out = tmp_path / "sim"
    assert cli_main(["simulate", "--seed", "42", "--out", str(out)]) == 0
    ds = parse_dataset(str(out / "dataset.csv"))
    assert ds.n == 97
    assert len(ds.censored) == 17
    assert all(c.lo == -math.inf for c in ds.censored.values())

    header, rows = _read_csv(out / "holdout.csv")
    assert len(rows) == 16
    got = {(float(r[1]), float(r[2])) for r in rows}
    want = {(x, y) for x in (0.24, 0.42, 0.56, 0.8)
            for y in (0.2, 0.4, 0.6, 0.8)}
    assert got == want

    _, latent_rows = _read_csv(out / "latents.csv")
    assert len(latent_rows) == 97 + 16

    truth = json.loads((out / "truth.json").read_text())
    assert truth["kind"] == "SUGLG"
    assert truth["outlier_sites"] == [29, 37, 59, 78, 84]
    assert truth["params"] == {
        "beta0": 0.0, "alpha": 3.0, "sigma2": 1.0, "omega2": 0.1,
        "nu": 1.0, "theta_w": 0.5, "theta_lambda": 0.5,
    }


def test_simulate_flags_control_censoring_and_outliers(tmp_path):
    out = tmp_path / "clean"
    rc = cli_main(["simulate", "--seed", "42", "--out", str(out),
                   "--censor-count", "0", "--outlier-shift", "0"])
    assert rc == 0
    ds = parse_dataset(str(out / "dataset.csv"))
    assert not ds.censored

    shifted = tmp_path / "shifted"
    assert cli_main(["simulate", "--seed", "42", "--out", str(shifted),
                     "--censor-count", "0", "--outlier-shift", "2.0"]) == 0
    ds2 = parse_dataset(str(shifted / "dataset.csv"))
    for i in range(97):
        want = ds.exact[i] + (2.0 if i in (29, 37, 59, 78, 84) else 0.0)
        assert math.isclose(ds2.exact[i], want, rel_tol=1e-15)


# ---------------------------------------------------------------------------
# fit


def test_fit_is_byte_reproducible(tmp_path):
    data = tmp_path / "d.csv"
    _write_small_dataset(data)
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "model": "SUGLG", "data": str(data), "iters": 260, "burnin": 80,
        "thin": 3, "preset": "quick",
    }))
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    for out in (out1, out2):
        rc = cli_main(["fit", "--config", str(cfg), "--seed", "7",
                       "--out", str(out)])
        assert rc == 0
    assert (out1 / "chain.csv").read_bytes() == (out2 / "chain.csv").read_bytes()
    assert (out1 / "summary.json").read_bytes() == (out2 / "summary.json").read_bytes()


def test_fit_summary_recomputes_from_chain(tmp_path):
    data = tmp_path / "d.csv"
    _write_small_dataset(data)
    out = tmp_path / "fit"
    rc = cli_main(["fit", "--data", str(data), "--model", "SUG", "--seed", "11",
                   "--out", str(out), *FAST])
    assert rc == 0
    header, rows = _read_csv(out / "chain.csv")
    summary = json.loads((out / "summary.json").read_text())
    assert summary["kind"] == "SUG"
    assert summary["retained"] == len(rows) == (260 - 80) // 3
    assert header[-1] == "log_conditional"
    names = header[:-1]
    assert list(summary["params"]) == names
    mat = np.array([[float(v) for v in r] for r in rows])
    for j, name in enumerate(names):
        col = mat[:, j]
        got = summary["params"][name]
        q = np.quantile(col, [0.025, 0.5, 0.975])
        assert got["mean"] == float(col.mean())
        assert got["sd"] == float(col.std(ddof=1))
        assert (got["q2.5"], got["q50"], got["q97.5"]) == tuple(map(float, q))
    # the one censored site is summarised too
    assert len(summary["censored_sites"]) == 1


def test_fit_save_lambda_adds_columns(tmp_path):
    data = tmp_path / "d.csv"
    ds = _write_small_dataset(data)
    out = tmp_path / "fit"
    rc = cli_main(["fit", "--data", str(data), "--model", "GLG", "--seed", "5",
                   "--out", str(out), "--save-lambda", *FAST])
    assert rc == 0
    header, rows = _read_csv(out / "chain.csv")
    lam_cols = [h for h in header if h.startswith("lambda_")]
    assert lam_cols == [f"lambda_{i}" for i in range(ds.n)]
    idx = header.index("lambda_0")
    lam = np.array([[float(v) for v in r[idx:]] for r in rows])
    assert np.all(lam > 0)


def test_config_file_with_flag_overrides(tmp_path):
    data = tmp_path / "d.csv"
    _write_small_dataset(data, censor_one=False)
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "model": "GLG", "seed": 3, "data": str(data),
        "iters": 120, "burnin": 40, "thin": 2, "preset": "quick",
    }))
    out = tmp_path / "fit"
    rc = cli_main(["fit", "--config", str(cfg), "--model", "GAUS",
                   "--iters", "200", "--out", str(out)])
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["kind"] == "GAUS"  # flag beats config
    assert summary["seed"] == 3  # config supplies what flags omit
    assert summary["length"] == 200
    assert summary["burn_in"] == 40
    assert summary["retained"] == (200 - 40) // 2


def test_fit_rainfall_reports_five_censored_stations(tmp_path):
    out = tmp_path / "rain"
    rc = cli_main(["fit", "--data", "rainfall", "--model", "GAUS", "--seed", "9",
                   "--out", str(out), *FAST])
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["censored_sites"]) == 5
    for stats in summary["censored_sites"].values():
        assert 0.0 <= stats["mean"] < 0.5


# ---------------------------------------------------------------------------
# predict


def test_predict_grid_and_explicit_locations(tmp_path):
    data = tmp_path / "d.csv"
    # seed chosen so no bounding-box grid node lands on an observed site
    _write_small_dataset(data, seed=3, censor_one=False)
    out = tmp_path / "grid"
    rc = cli_main(["predict", "--data", str(data), "--model", "GAUS",
                   "--seed", "13", "--out", str(out), "--grid", "3", "4", *FAST])
    assert rc == 0
    header, rows = _read_csv(out / "predictions.csv")
    assert header == ["x", "y", "mean", "sd", "q2.5", "q50", "q97.5"]
    assert len(rows) == 12
    for r in rows:
        lo, mid, hi = float(r[4]), float(r[5]), float(r[6])
        assert lo <= mid <= hi
        assert float(r[3]) > 0

    locs = tmp_path / "new.csv"
    locs.write_text("x,y\n0.5,0.5\n3.5,3.5\n")
    out2 = tmp_path / "pts"
    rc = cli_main(["predict", "--data", str(data), "--model", "GAUS",
                   "--seed", "13", "--out", str(out2), "--new-locs", str(locs),
                   *FAST])
    assert rc == 0
    _, rows2 = _read_csv(out2 / "predictions.csv")
    assert [(float(r[0]), float(r[1])) for r in rows2] == [(0.5, 0.5), (3.5, 3.5)]


def test_predict_is_byte_reproducible(tmp_path):
    data = tmp_path / "d.csv"
    _write_small_dataset(data, seed=3)
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        rc = cli_main(["predict", "--data", str(data), "--model", "SUGLG",
                       "--seed", "21", "--out", str(out), "--grid", "2", "2",
                       *FAST])
        assert rc == 0
        outs.append((out / "predictions.csv").read_bytes())
    assert outs[0] == outs[1]


# ---------------------------------------------------------------------------
# compare / sensitivity / outliers


def test_compare_scores_all_four_kinds(tmp_path):
    data = tmp_path / "d.csv"
    _write_small_dataset(data, n=10)
    rng = np.random.default_rng(8)
    hold = SpatialDataset(
        LocationSet(rng.uniform(0.0, 4.0, size=(4, 2))), np.ones((4, 1)),
        {i: float(v) for i, v in enumerate(rng.normal(0.3, 0.8, 4))})
    hold_path = tmp_path / "h.csv"
    write_dataset(hold, str(hold_path))
    out = tmp_path / "cmp"
    rc = cli_main(["compare", "--data", str(data), "--holdout", str(hold_path),
                   "--seed", "31", "--out", str(out), *FAST])
    assert rc == 0
    rep = json.loads((out / "comparison.json").read_text())
    kinds = {"GAUS", "SUG", "GLG", "SUGLG"}
    assert set(rep["dic"]) == set(rep["lpml"]) == set(rep["rmse"]) == kinds
    assert all(v >= 0 for v in rep["rmse"].values())
    assert rep["best_dic"] == min(rep["dic"], key=rep["dic"].get)
    assert rep["best_lpml"] == max(rep["lpml"], key=rep["lpml"].get)


def test_sensitivity_uses_configured_alternates(tmp_path):
    data = tmp_path / "d.csv"
    _write_small_dataset(data, n=8, censor_one=False)
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "data": str(data), "model": "GAUS", "seed": 17,
        "iters": 200, "burnin": 60, "thin": 2, "preset": "quick",
        "alternates": [
            {"name": "flat_mean", "c0": 100.0},
            {"name": "tight_skew", "c1": 10.0},
        ],
    }))
    out = tmp_path / "sens"
    rc = cli_main(["sensitivity", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    rep = json.loads((out / "sensitivity.json").read_text())
    assert set(rep["per_alternate"]) == {"flat_mean", "tight_skew"}
    names = set(rep["max"])
    assert {"beta0", "sigma2", "omega2", "theta_w"} == names
    for p in names:
        per = [rep["per_alternate"][a][p] for a in rep["per_alternate"]]
        assert math.isclose(rep["max"][p], max(per), rel_tol=1e-12)
        assert all(v >= 0 for v in per)
    assert rep["largest"] in names


def test_outliers_scores_every_site(tmp_path):
    data = tmp_path / "d.csv"
    ds = _write_small_dataset(data, n=8)
    out = tmp_path / "outl"
    rc = cli_main(["outliers", "--data", str(data), "--model", "SUGLG",
                   "--seed", "23", "--out", str(out), *FAST])
    assert rc == 0
    header, rows = _read_csv(out / "outliers.csv")
    assert header == ["site", "x", "y", "score"]
    assert [int(r[0]) for r in rows] == list(range(ds.n))
    assert all(float(r[3]) > 0 for r in rows)


# ---------------------------------------------------------------------------
# exit codes


def test_usage_errors_exit_one(tmp_path, capsys):
    data = tmp_path / "d.csv"
    _write_small_dataset(data, n=6)
    assert cli_main(["fit", "--data", str(data)]) == 1  # no seed
    assert "seed" in capsys.readouterr().err
    assert cli_main(["fit", "--data", str(data), "--seed", "1",
                     "--model", "BOGUS"]) == 1
    assert cli_main(["fit", "--data", str(data), "--seed", "1",
                     "--preset", "huge"]) == 1
    assert cli_main(["frobnicate", "--seed", "1"]) == 1  # unknown subcommand
    assert cli_main(["fit", "--data", str(data), "--seed", "1",
                     "--bogus-flag"]) == 1
    assert cli_main(["fit", "--seed", "1"]) == 1  # no data source
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"seed": 1, "volume": 11}))
    assert cli_main(["fit", "--config", str(cfg), "--data", str(data)]) == 1
    assert "volume" in capsys.readouterr().err


def test_data_and_numeric_errors_exit_two(tmp_path, capsys):
    assert cli_main(["fit", "--data", str(tmp_path / "missing.csv"),
                     "--seed", "1", *FAST]) == 2
    capsys.readouterr()

    bad = tmp_path / "bad.csv"
    bad.write_text("id,x,y,value,cens_lo,cens_hi\na,0,0,1.5,0,2\n")
    assert cli_main(["fit", "--data", str(bad), "--seed", "1", *FAST]) == 2
    assert "line 2" in capsys.readouterr().err

    dup = tmp_path / "dup.csv"
    dup.write_text("id,x,y,value,cens_lo,cens_hi\n"
                   "a,0,0,1.5,,\nb,0,0,0.7,,\n")
    assert cli_main(["fit", "--data", str(dup), "--seed", "1", *FAST]) == 2

    data = tmp_path / "d.csv"
    _write_small_dataset(data, n=6)
    rc = cli_main(["outliers", "--data", str(data), "--model", "GAUS",
                   "--seed", "1", *FAST])
    assert rc == 2
    assert "mixture" in capsys.readouterr().err

    rc = cli_main(["predict", "--data", str(data), "--seed", "1",
                   "--new-locs", str(tmp_path / "nowhere.csv"), *FAST])
    assert rc == 2


def test_help_exits_zero(capsys):
    assert cli_main(["--help"]) == 0
    assert "simulate" in capsys.readouterr().out
