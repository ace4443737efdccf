import dataclasses
import json

import numpy as np
import pytest

from hkgf import acceptance
from hkgf.cli import main

GAUSS = {"gamma": [[1.0, 0.0], [0.0, 4.0]], "n": [0.0, 1.0]}
START = {"sigma": [[2.0, 0.3], [0.3, 1.0]], "m": [1.0, -1.0]}


def write(tmp_path, obj, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def csv(path):
    header = path.read_text().splitlines()[0].split(",")
    return header, np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


@pytest.fixture
def dataset(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.standard_normal((60, 2))
    y = (rng.uniform(size=60) < 1 / (1 + np.exp(-X @ [1.0, -1.0]))).astype(int)
    rows = "\n".join(f"{a},{b},{c}" for (a, b), c in zip(X, y))
    (tmp_path / "data.csv").write_text("x_1,x_2,y\n" + rows + "\n")
    return "data.csv"


def test_flow(tmp_path):
    cfg = {"target": GAUSS, "initial": dict(START, kappa=2.0), "alpha": 1, "beta": 0.5, "dt": 0.01,
           "t_end": 2.0, "track_eigen": True}
    out = tmp_path / "out"
    assert main(["flow", "--config", write(tmp_path, cfg), "--out", str(out)]) == 0
    header, data = csv(out / "trajectory.csv")
    assert header[0] == "t" and "b_2" in header and data.shape[0] == 201
    summary = json.loads((out / "summary.json").read_text())
    assert 0 < summary["final_energy"] < 0.1 and summary["n_points"] == 201


def test_flow_equilibrium_constant(tmp_path):
    cfg = {"target": GAUSS, "initial": {"sigma": GAUSS["gamma"], "m": GAUSS["n"]}, "alpha": 1, "beta": 1,
           "dt": 0.1, "t_end": 1.0}
    assert main(["flow", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 0
    _, data = csv(tmp_path / "o" / "trajectory.csv")
    assert np.ptp(data[:, 1:], axis=0).max() == 0


def test_flow_high_dimension(tmp_path):
    d = 100
    rng = np.random.default_rng(4)
    g = np.exp(rng.uniform(-1, 1, d))
    cfg = {"target": {"gamma": np.diag(g).tolist(), "n": rng.standard_normal(d).tolist()},
           "initial": {"sigma": np.eye(d).tolist(), "m": np.zeros(d).tolist()},
           "alpha": 1, "beta": 1, "dt": 0.01, "t_end": 1.0, "track_mass": False, "save_every": 10}
    assert main(["flow", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 0
    header, data = csv(tmp_path / "o" / "trajectory.csv")
    E = data[:, header.index("h_cov")] + data[:, header.index("h_mean")]
    assert np.all(np.diff(E) < 0)


def test_flow_logistic(tmp_path, dataset):
    cfg = {"target": {"kind": "logistic", "data": dataset, "reg_lambda": 0.1},
           "initial": {"sigma": [[0.1, 0], [0, 0.1]], "m": [0, 0]}, "alpha": 0.1, "beta": 0.1,
           "dt": 0.1, "t_end": 1.0, "estimator": {"mode": "gauss_hermite"}}
    assert main(["flow", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 0


def test_malformed_config(tmp_path, caplog):
    assert main(["flow", "--config", write(tmp_path, {"alpha": 1}), "--out", str(tmp_path / "o")]) == 1
    bad = {"target": GAUSS, "initial": START, "alpha": -1, "beta": 1}
    assert main(["flow", "--config", write(tmp_path, bad), "--out", str(tmp_path / "o")]) == 1
    assert "/alpha" in caplog.text
    (tmp_path / "broken.json").write_text("{not json")
    assert main(["flow", "--config", str(tmp_path / "broken.json")]) == 1
    assert main(["flow", "--config", str(tmp_path / "missing.json")]) == 1
    nonspd = {"target": GAUSS, "initial": {"sigma": [[1, 2], [2, 1]], "m": [0, 0]}, "alpha": 1, "beta": 1}
    assert main(["flow", "--config", write(tmp_path, nonspd), "--out", str(tmp_path / "o")]) == 1


def test_descent_compare(tmp_path):
    cfg = {"target": {"gamma": [[4, 0], [0, 4]], "n": [0, 0]},
           "initial": {"sigma": [[0.01, 0], [0, 0.01]], "m": [5, 5]},
           "alpha": 1, "beta": 1, "tau": 0.01, "n_steps": 300, "compare": True}
    out = tmp_path / "o"
    assert main(["descent", "--config", write(tmp_path, cfg), "--out", str(out)]) == 0
    header, data = csv(out / "comparison.csv")
    assert header == ["k", "t", "kl_hk", "kl_fr", "kl_bw"] and data.shape == (301, 5)
    header, data = csv(out / "descent.csv")
    assert header[:2] == ["k", "kl_estimate"] and header[-1] == "kappa"


def test_descent_logistic_without_mass(tmp_path, dataset):
    cfg = {"target": {"kind": "logistic", "data": dataset, "reg_lambda": 0.01},
           "initial": {"sigma": [[0.01, 0], [0, 0.01]], "m": [0, 0]},
           "alpha": 0.01, "beta": 0.5, "tau": 0.05, "n_steps": 100, "n_mc": 10}
    out = tmp_path / "o"
    assert main(["descent", "--config", write(tmp_path, cfg), "--out", str(out)]) == 0
    header, data = csv(out / "descent.csv")
    assert np.all(data[:, header.index("kappa")] == 1.0)
    cfg["target"]["data"] = "nowhere.csv"
    assert main(["descent", "--config", write(tmp_path, cfg), "--out", str(out)]) == 1


def test_descent_numerical_failure(tmp_path):
    cfg = {"target": {"gamma": [[0.001]], "n": [0]}, "initial": {"sigma": [[1]], "m": [0]},
           "alpha": 1, "beta": 0, "tau": 1.0, "n_steps": 3}
    assert main(["descent", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2


def test_seed_determinism(tmp_path, dataset):
    cfg = {"target": {"kind": "logistic", "data": dataset, "reg_lambda": 0.01},
           "initial": {"sigma": [[0.01, 0], [0, 0.01]], "m": [0, 0]},
           "alpha": 0.01, "beta": 0.5, "tau": 0.05, "n_steps": 50, "n_mc": 4}
    path = write(tmp_path, cfg)
    outs = []
    for name, seed in (("a", "3"), ("b", "3"), ("c", "4")):
        assert main(["descent", "--config", path, "--out", str(tmp_path / name), "--seed", seed]) == 0
        outs.append((tmp_path / name / "descent.csv").read_text())
    assert outs[0] == outs[1] and outs[0] != outs[2]


def test_decay_report(tmp_path):
    cfg = {"target": GAUSS, "initial": START, "alpha": 1, "beta": 0.5}
    assert main(["decay-report", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "decay_report.json").read_text())
    assert rep["passed"] and set(rep["reports"]) == {"refined", "pl_global", "pl_sublevel"}
    assert rep["rates"]["nu_cov"] == pytest.approx(1.0)


def test_convexity_scan(tmp_path):
    cfg = {"target": GAUSS, "alpha": 1, "beta": 1, "n_samples": 500, "witness_distances": [1, 10, 100]}
    assert main(["convexity-scan", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "scan.json").read_text())
    q = [w["quotient"] for w in rep["witness_sequence"]]
    assert q[0] > q[1] > q[2]


def test_geodesic(tmp_path):
    cfg = {"initial": {"sigma": [[1, 0], [0, 1]], "m": [0, 0]},
           "costate": {"S": [[0.1, 0], [0, -0.1]], "mu": [0.1, 0]},
           "alpha": 1, "beta": 1, "s_end": 1, "ds": 0.01, "target": GAUSS}
    assert main(["geodesic", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 0
    header, data = csv(tmp_path / "o" / "geodesic.csv")
    assert header[-2:] == ["hamiltonian", "energy"] and data.shape[0] == 101
    assert json.loads((tmp_path / "o" / "geodesic.json").read_text())["hamiltonian_drift"] < 1e-8


def test_multi_run_jobs(tmp_path):
    runs = [{"target": GAUSS, "initial": START, "alpha": a, "beta": 1, "dt": 0.05, "t_end": 1.0} for a in (0, 1)]
    path = write(tmp_path, {"runs": runs})
    assert main(["flow", "--config", path, "--out", str(tmp_path / "o"), "--jobs", "2"]) == 0
    assert main(["flow", "--config", path, "--out", str(tmp_path / "s")]) == 0
    for i in range(2):
        a = (tmp_path / "o" / f"run_{i:03d}" / "trajectory.csv").read_text()
        assert a == (tmp_path / "s" / f"run_{i:03d}" / "trajectory.csv").read_text()


def test_verify_filter(tmp_path, capsys):
    assert main(["verify", "--filter", "onsager_reduction,2", "--out", str(tmp_path)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 2 and all(line.startswith("[PASS]") for line in lines)
    rep = json.loads((tmp_path / "verify.json").read_text())
    assert [r["number"] for r in rep] == [2, 3]
    assert main(["verify", "--filter", "no_such_criterion"]) == 1


def test_tampered_rate_detected(monkeypatch, capsys):
    real = acceptance.refined_rates

    def tampered(*args, **kwargs):
        r = real(*args, **kwargs)
        return dataclasses.replace(r, nu_cov=2.0 * r.nu_cov)

    monkeypatch.setattr(acceptance, "refined_rates", tampered)
    assert main(["verify", "--filter", "refined_decay"]) == 2
    assert "[FAIL]" in capsys.readouterr().out
