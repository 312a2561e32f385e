import json
import math

import numpy as np
import pytest
from click.testing import CliRunner
from scipy import stats

from levytail.cli import main, read_density
from levytail.errors import InvalidInput
from levytail.levy_model import GridParams, discretize, jump_spec


def _model(tmp_path, name, **data):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(data))
    return str(path)


def _cp_exp(tmp_path, lam=1.0):
    return _model(tmp_path, f"cp{lam}", family="exponential", params={"rate": 1.0}, total_mass=lam,
                  grid={"x_min": 0, "x_max": 40, "dx": 0.01})


def _gauss(tmp_path):
    return _model(tmp_path, "gauss", family="zero", total_mass=0, gaussian=1.0,
                  grid={"x_min": -8, "x_max": 8, "dx": 0.01})


def _pareto(tmp_path):
    return _model(tmp_path, "pareto", family="pareto", params={"alpha": 1.5, "x_floor": 1.0},
                  total_mass=0.5, grid={"x_min": 0, "x_max": 10000, "dx": 0.1})


def _run(*args):
    return CliRunner().invoke(main, [str(a) for a in args])


def _csv(path):
    return np.genfromtxt(path, delimiter=",", names=True)


def test_synth_compound_poisson_mass(tmp_path):
    res = _run("synth", "--model", _cp_exp(tmp_path), "--out", tmp_path / "o")
    assert res.exit_code == 0, res.output
    d = _csv(tmp_path / "o" / "density.csv")
    assert d["mass"].sum() == pytest.approx(1 - math.exp(-1.0), abs=1e-6)
    atoms = json.loads((tmp_path / "o" / "atoms.json").read_text())["atoms"]
    assert atoms == [{"p": pytest.approx(math.exp(-1.0), rel=1e-12), "x": 0.0}]
    meta = json.loads((tmp_path / "o" / "meta.json").read_text())
    assert meta["truncation"]["tail_bound"] < 1e-12 and "leakage" in meta


def test_synth_gaussian(tmp_path):
    res = _run("synth", "--model", _gauss(tmp_path), "--out", tmp_path / "o")
    assert res.exit_code == 0, res.output
    d = _csv(tmp_path / "o" / "density.csv")
    assert np.abs(d["f"] - stats.norm.pdf(d["x"])).max() < 1e-8
    assert json.loads((tmp_path / "o" / "atoms.json").read_text()) == {"atoms": []}


def test_synth_grid_override(tmp_path):
    res = _run("synth", "--model", _gauss(tmp_path), "--out", tmp_path / "o",
               "--grid-dx", 0.05, "--grid-max", 6)
    assert res.exit_code == 0, res.output
    d = _csv(tmp_path / "o" / "density.csv")
    assert d["x"][0] == -6.0 and d["x"][-1] == 6.0 and d["x"][1] - d["x"][0] == pytest.approx(0.05)


def test_csv_uses_17_digits(tmp_path):
    _run("synth", "--model", _cp_exp(tmp_path), "--out", tmp_path / "o")
    row = (tmp_path / "o" / "density.csv").read_text().splitlines()[2]
    assert row.split(",")[1] == format(float(row.split(",")[1]), ".17g")


def test_malformed_model_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    res = _run("synth", "--model", bad, "--out", tmp_path / "o")
    assert res.exit_code == 2 and "malformed JSON" in res.output


def test_unknown_key_exit_2(tmp_path):
    res = _run("synth", "--model", _model(tmp_path, "m", family="exponential", colour="red"),
               "--out", tmp_path / "o")
    assert res.exit_code == 2


def test_missing_model_exit_2(tmp_path):
    assert _run("synth", "--out", tmp_path / "o").exit_code == 2
    assert _run("synth", "--model", tmp_path / "none.json", "--out", tmp_path / "o").exit_code == 2


def test_diagnose_pareto_passes(tmp_path):
    res = _run("diagnose", "--model", _pareto(tmp_path), "--out", tmp_path / "o",
               "--property", "subexp", "--property", "long_tailed", "--property", "tail_equiv")
    assert res.exit_code == 0, res.output
    rep = json.loads((tmp_path / "o" / "diagnostics.json").read_text())
    assert {k: v["outcome"] for k, v in rep.items()} == {
        "subexp": "pass", "long_tailed": "pass", "tail_equiv": "pass"}
    assert rep["tail_equiv"]["target"] == pytest.approx(0.5 / (1 - math.exp(-0.5)))
    for name in rep:
        curve = _csv(tmp_path / "o" / f"curve_{name}.csv")
        assert curve.size == rep[name]["curve_points"] > 0


def test_diagnose_gaussian_fails(tmp_path):
    res = _run("diagnose", "--model", _gauss(tmp_path), "--out", tmp_path / "o")
    assert res.exit_code == 0, res.output
    rep = json.loads((tmp_path / "o" / "diagnostics.json").read_text())
    assert rep["subexp"]["outcome"] == "fail"


def test_diagnose_from_density_file(tmp_path):
    _run("synth", "--model", _pareto(tmp_path), "--out", tmp_path / "s")
    res = _run("diagnose", "--density", tmp_path / "s", "--out", tmp_path / "o")
    assert res.exit_code == 0, res.output
    rep = json.loads((tmp_path / "o" / "diagnostics.json").read_text())
    assert rep["subexp"]["outcome"] == "pass"


def test_diagnose_needs_model_for_tail_equiv(tmp_path):
    _run("synth", "--model", _pareto(tmp_path), "--out", tmp_path / "s")
    res = _run("diagnose", "--density", tmp_path / "s", "--out", tmp_path / "o",
               "--property", "tail_equiv")
    assert res.exit_code == 2


def test_diagnose_infeasible_grid_exit_4(tmp_path):
    tiny = _model(tmp_path, "tiny", family="pareto", params={"alpha": 1.5, "x_floor": 1.0},
                  total_mass=0.5, grid={"x_min": 0, "x_max": 3, "dx": 0.5})
    res = _run("diagnose", "--model", tiny, "--out", tmp_path / "o")
    assert res.exit_code == 4 and "GridInfeasible" in res.output


def test_recover_round_trip(tmp_path):
    _run("synth", "--model", _cp_exp(tmp_path, 0.5), "--out", tmp_path / "s")
    res = _run("recover", "--density", tmp_path / "s", "--lambda", 0.5, "--out", tmp_path / "o")
    assert res.exit_code == 0, res.output
    g = _csv(tmp_path / "o" / "jumps.csv")["g"]
    ref = discretize(jump_spec("exponential", rate=1.0), GridParams(0.0, 40.0, 0.01)).values
    assert np.abs(g - ref).max() / ref.max() < 1e-6


def test_recover_boundary_rate(tmp_path):
    _run("synth", "--model", _cp_exp(tmp_path, 0.69), "--out", tmp_path / "s")
    res = _run("recover", "--density", tmp_path / "s", "--lambda", 0.69, "--out", tmp_path / "o")
    assert res.exit_code == 0, res.output


def test_recover_diverges_exit_5(tmp_path):
    _run("synth", "--model", _cp_exp(tmp_path), "--out", tmp_path / "s")
    res = _run("recover", "--density", tmp_path / "s", "--lambda", 0.7, "--out", tmp_path / "o")
    assert res.exit_code == 5


def test_read_density_rejects_bad_files(tmp_path):
    p = tmp_path / "density.csv"
    p.write_text("x,f\n0,1\n1,1\n3,1\n")
    with pytest.raises(InvalidInput):
        read_density(p)
    p.write_text("a,b\n0,1\n1,1\n2,1\n")
    with pytest.raises(InvalidInput):
        read_density(p)


def test_fit_and_experiment(tmp_path):
    res = _run("fit", "--family", "cp_weibull_scale", "--n", 500, "--seed", 3, "--out", tmp_path / "f")
    assert res.exit_code == 0, res.output
    fit = json.loads((tmp_path / "f" / "fit.json").read_text())
    assert fit["converged"] and abs(fit["theta_hat"][0] - 1.0) < 0.2
    res = _run("experiment", "--family", "cp_exponential_rate", "--n", 200, "--n", 400,
               "--reps", 2, "--skip-checks", "--out", tmp_path / "e")
    assert res.exit_code == 0, res.output
    assert len((tmp_path / "e" / "experiment.csv").read_text().splitlines()) == 5
    summary = json.loads((tmp_path / "e" / "experiment.json").read_text())
    assert len(summary["medians"]) == 2


def test_fit_from_data_file(tmp_path):
    data = tmp_path / "x.csv"
    data.write_text("\n".join(str(v) for v in np.random.default_rng(0).normal(0, 2, 300)))
    res = _run("fit", "--family", "gaussian_scale", "--data", data, "--out", tmp_path / "f")
    assert res.exit_code == 0, res.output
    fit = json.loads((tmp_path / "f" / "fit.json").read_text())
    assert fit["theta_hat"][0] == pytest.approx(2.0, abs=0.2)
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert _run("fit", "--data", empty, "--out", tmp_path / "g").exit_code == 2


def test_experiment_hypothesis_failure_exit_4(tmp_path):
    res = _run("experiment", "--family", "gaussian_scale", "--n", 100, "--reps", 1,
               "--out", tmp_path / "e")
    assert res.exit_code == 4


def test_outputs_byte_identical(tmp_path):
    cmds = [("synth", "--model", _cp_exp(tmp_path)),
            ("diagnose", "--model", _pareto(tmp_path), "--property", "subexp"),
            ("fit", "--n", 300, "--seed", 9)]
    for i, cmd in enumerate(cmds):
        outs = []
        for rep in range(2):
            d = tmp_path / f"run{i}_{rep}"
            assert _run(*cmd, "--out", d).exit_code == 0
            outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
        assert outs[0] == outs[1]
