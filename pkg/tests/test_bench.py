import json

import numpy as np
import pytest

from hardsum import bench
from hardsum.bench import SweepConfig, fit_curve, fit_exponent, lower_bound_curve, main


def test_fit_exponent_recovers_power_law():
    xs = np.array([2.0, 4.0, 8.0, 16.0, 32.0])
    slope, icpt, se = fit_exponent(xs, 3.0 * xs**0.75)
    assert slope == pytest.approx(0.75, abs=1e-12)
    assert icpt == pytest.approx(np.log(3.0))
    assert se == pytest.approx(0.0, abs=1e-10)


def test_fit_exponent_needs_four_points():
    with pytest.raises(ValueError):
        fit_exponent([1, 2, 2, 3], [1, 2, 3, 4])


def test_cvx_bound_exponents():
    c = lower_bound_curve("CVX", "n", [16, 64, 256, 1024], L=1.0, sigma=1.0, eps=1e-6)
    assert fit_curve(c)["slope"] == pytest.approx(0.75, abs=0.02)
    c = lower_bound_curve("CVX", "eps", [1e-8, 1e-7, 1e-6, 1e-5], n=16, L=1.0, sigma=1.0)
    assert fit_curve(c)["slope"] == pytest.approx(-0.5, abs=0.02)


def test_avg_nc_bound_vs_eps():
    c = lower_bound_curve("AVG-NC", "eps", [1e-5, 3e-5, 1e-4, 3e-4], n=16, L=1.0, sigma=1.0, delta=1.0)
    assert fit_curve(c)["slope"] == pytest.approx(-2.0, abs=0.02)


def test_csv_round_trip_and_header(tmp_path):
    cfg = SweepConfig("SC", [8], [{"L": 1.0, "sigma": 1e-2, "delta": 1.0}], [2e-3], solvers=["gd", "sgd"], seeds=2)
    rows = bench.run_sweep([cfg])
    text = bench.rows_to_csv(rows)
    assert text.splitlines()[0] == ",".join(bench.CSV_HEADER)
    p = tmp_path / "r.csv"
    p.write_text(text)
    back = bench.read_rows(p)
    assert len(back) == 4
    assert not bench.sweep_failures(back)


def test_sweep_is_reproducible(tmp_path):
    cfg = {"family": "CVX", "n": [8, 16], "settings": [{"L": 1.0, "sigma": 1.0, "delta": None}],
           "eps": [2e-3], "solvers": ["sgd", "svrg"], "seeds": 2}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["sweep", "--config", str(path), "--out", str(a), "--seed", "4"]) == 0
    assert main(["sweep", "--config", str(path), "--out", str(b), "--seed", "4"]) == 0
    assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()
    meta = json.loads((a / "results.meta.json").read_text())
    assert meta["csv_schema"] == bench.CSV_SCHEMA
    rows = bench.read_rows(a / "results.csv")
    for r in rows:
        if r["status"] == "ok":
            assert float(r["ratio"]) >= 1.0


def test_sweep_skips_rejected_rows():
    cfg = SweepConfig("SC", [16], [{"L": 1.0, "sigma": 2.0, "delta": 1.0}], [1e-3], solvers=["gd"], seeds=1)
    rows = bench.run_sweep([cfg])
    assert rows[0]["status"].startswith("skipped")
    assert not bench.sweep_failures(rows)


def test_cli_run_omega_and_audit(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["run", "--family", "OMEGA-N", "--n", "64", "--delta", "1.0", "--eps", "0.125",
                 "--solver", "gd", "--out", str(out)])
    assert code == 0
    res = json.loads((out / "result.json").read_text())
    assert res["lower_bound"] == 32
    assert res["ifo_to_target"] >= 32
    assert res["first_certified_failure"] >= 32
    assert (out / "trace.jsonl").read_text().count("\n") == res["ifo_used"]
    assert main(["audit", str(out)]) == 0


def test_cli_audit_flags_corruption(tmp_path):
    out = tmp_path / "run"
    assert main(["run", "--family", "SC", "--n", "4", "--sigma", "0.02", "--delta", "1", "--eps", "1e-3",
                 "--solver", "gd", "--out", str(out)]) == 0
    data = dict(np.load(out / "points.npz"))
    data["points"][3] = np.random.default_rng(0).standard_normal(data["points"].shape[1])
    np.savez(tmp_path / "bad.npz", **data)
    assert main(["audit", str(tmp_path / "bad.npz")]) == 1


def test_cli_make_instance(tmp_path):
    assert main(["make-instance", "--family", "CVX", "--n", "8", "--sigma", "1", "--eps", "1e-3",
                 "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "instance.json").read_text())
    assert doc["family"] == "CVX" and doc["schema"] == "hardsum.instance/1"


def test_cli_rejects_bad_preconditions():
    assert main(["make-instance", "--family", "SC", "--n", "8", "--sigma", "5", "--delta", "1",
                 "--eps", "1e-3"]) != 0


def test_cli_fit(tmp_path):
    code = main(["fit", "--family", "SC", "--predictor", "n", "--values", "16", "64", "256", "1024",
                 "--sigma", "1e-4", "--delta", "1", "--eps", "1e-6", "--out", str(tmp_path)])
    assert code == 0
    doc = json.loads((tmp_path / "fit.json").read_text())
    assert "fit_log_normalized" in doc
    plot = json.loads((tmp_path / "fit.plot.json").read_text())
    assert plot["x"]["scale"] == "log"
