"""Acceptance criteria 1 to 10, one test each.

Every test records a ``criterion N: PASS|FAIL`` line with the measured
values; the lines are printed in the terminal summary.
"""

import json
import math

import numpy as np
import pytest
from click.testing import CliRunner
from scipy import stats

from conftest import ACCEPTANCE_LINES
from levytail.charfn import (
    cf_power,
    cf_window,
    gaussian_cf,
    invert_cf,
    invert_cf_to_density,
    lattice_cf,
)
from levytail.cli import main
from levytail.convolution import (
    compound_poisson_density,
    convolve,
    kesten_bound_profile,
    kesten_ratio_curve,
    recover_jump_density,
)
from levytail.counterexample import DESK_PRESET, build_positive_levy, demonstrate_failure
from levytail.diagnostics import (
    Outcome,
    ani_check,
    compound_poisson_target,
    convolution_root_ratio,
    steutel_ratio,
    subexp_check,
    tail_equivalence,
)
from levytail.errors import SeriesDiverges
from levytail.levy_model import GridParams, discretize, jump_spec, normalize_g1
from levytail.mle import consistency_experiment

pytestmark = pytest.mark.acceptance

TAIL = GridParams(0.0, 1e4, 0.1)


def _record(num: int, ok: bool, detail: str) -> None:
    line = f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[num] = line
    print(line)
    assert ok, line


def _d(name, grid=TAIL, **params):
    return discretize(jump_spec(name, **params), grid, check_tol=None)


@pytest.fixture(scope="module")
def pareto15():
    return _d("pareto", alpha=1.5, x_floor=1.0)


def test_criterion_01_compound_poisson_tail_equivalence(pareto15):
    parts, ok = [], True
    for lam in (0.5, 1.0, math.log(2.0)):
        target = lam / (1.0 - math.exp(-lam))
        v = tail_equivalence(compound_poisson_density(lam, pareto15), pareto15,
                             compound_poisson_target(lam)).verdict
        rel = abs(v.limit_estimate - target) / target
        ok &= rel < 0.05 and v.trend_slope < 0
        parts.append(f"lam={lam:.4g} limit={v.limit_estimate:.5f} target={target:.5f} "
                     f"rel={rel:.1e} slope={v.trend_slope:.2f}")
    _record(1, ok, "; ".join(parts))


ROUND_TRIP = {
    "exponential": (jump_spec("exponential", rate=1.0), GridParams(0.0, 40.0, 0.01)),
    "pareto": (jump_spec("pareto", alpha=1.5, x_floor=1.0), TAIL),
    "weibull": (jump_spec("weibull", shape=0.5, scale=1.0), GridParams(0.0, 400.0, 0.01)),
}


def test_criterion_02_inverse_series_round_trip():
    worst, ok = 0.0, True
    for spec, grid in ROUND_TRIP.values():
        g = discretize(spec, grid, check_tol=None)
        for lam in (0.1, 0.3, 0.5, 0.69):
            h = recover_jump_density(compound_poisson_density(lam, g).cont, lam)
            err = float(np.abs(h.values[:g.n] - g.values).max() / g.values.max())
            worst = max(worst, err)
    ok &= worst < 1e-6
    try:
        recover_jump_density(g, 0.7)
        raised = False
    except SeriesDiverges:
        raised = True
    ok &= raised
    _record(2, ok, f"max relative sup error={worst:.2e} (tol 1e-6); lam=0.7 raises={raised}")


def test_criterion_03_fourier_inversion():
    grid = GridParams(-8.0, 8.0, 0.01)
    f = invert_cf_to_density(cf_window(gaussian_cf(), grid), grid)
    e_norm = float(np.abs(f.values - stats.norm.pdf(f.x)).max())
    grid = GridParams(0.0, 40.0, 0.01)
    # |phi| decays like z^-2, so the window edge sits at 1e-11 instead of the default
    cf = cf_window(lambda z: (1.0 - 1j * np.asarray(z)) ** -2.0, grid, threshold=1e-11)
    f = invert_cf_to_density(cf, grid, threshold=1e-11)
    e_gamma = float(np.abs(f.values - stats.gamma(2).pdf(f.x)).max())
    _record(3, e_norm < 1e-8 and e_gamma < 1e-6,
            f"gaussian sup error={e_norm:.1e} (tol 1e-8); gamma(2,1) sup error={e_gamma:.1e} (tol 1e-6)")


def test_criterion_04_fractional_powers(pareto15):
    parts, ok = [], True
    for alpha in (0.5, 2.0):
        v = steutel_ratio(0.5, pareto15, alpha).verdict
        rel = abs(v.limit_estimate - alpha) / alpha
        ok &= rel < 0.10
        parts.append(f"alpha={alpha} limit={v.limit_estimate:.4f} rel={rel:.1e}")
    f = compound_poisson_density(0.5, pareto15)
    half = invert_cf(cf_power(lattice_cf(f), 0.5), TAIL)
    sq = convolve(half, half)
    err = float(np.abs(sq.weighted().evaluate(f.cont.x) - f.weighted().values).max())
    err = max(err, abs(sq.atom - f.atom))
    ok &= err < 1e-6
    parts.append(f"square-root self-convolution sup error={err:.1e} (tol 1e-6)")
    _record(4, ok, "; ".join(parts))


@pytest.fixture(scope="module")
def semistable_g_plus():
    return normalize_g1(build_positive_levy(DESK_PRESET), GridParams(0.0, 3000.0, 0.005))[0]


def test_criterion_05_subexponential_suite(semistable_g_plus):
    parts, ok = [], True
    heavy = {"pareto(1.5)": _d("pareto", alpha=1.5, x_floor=1.0),
             "weibull(0.5)": _d("weibull", shape=0.5, scale=1.0),
             "lognormal(0,1)": _d("lognormal", mu=0.0, sigma=1.0)}
    for name, f in heavy.items():
        v = subexp_check(f).verdict
        a = ani_check(f).verdict
        good = v.passed and abs(v.limit_estimate - 2.0) / 2.0 < 0.05 and a.passed
        ok &= good
        parts.append(f"{name} subexp={v.outcome.value}({v.limit_estimate:.4f}) ani={a.outcome.value}")
    light = {"gaussian": _d("normal", GridParams(-10.0, 10.0, 0.01), mu=0.0, sigma=1.0),
             "exponential": _d("exponential", GridParams(0.0, 60.0, 0.01), rate=1.0)}
    for name, f in light.items():
        rep = subexp_check(f)
        r = rep.curve.ratios
        diverging = bool(r[-1] > 10.0 * r[0] or rep.curve.divergent)
        good = rep.verdict.outcome is Outcome.FAIL and diverging
        ok &= good
        parts.append(f"{name} subexp={rep.verdict.outcome.value} ratio {r[0]:.3g}->{r[-1]:.3g}")
    a = ani_check(semistable_g_plus).verdict
    ok &= a.outcome is Outcome.FAIL
    parts.append(f"semistable g+ ani={a.outcome.value}")
    _record(5, ok, "; ".join(parts))


def test_criterion_06_convolution_roots(pareto15):
    parts, ok = [], True
    for n in (2, 3):
        v = convolution_root_ratio(pareto15, n).verdict
        rel = abs(v.limit_estimate - n) / n
        ok &= rel < 0.05
        parts.append(f"n={n} limit={v.limit_estimate:.4f} rel={rel:.1e}")
    _record(6, ok, "; ".join(parts))


def test_criterion_07_kesten_bound():
    f = _d("pareto", GridParams(0.0, 1000.0, 0.1), alpha=2.0, x_floor=1.0)
    prof = kesten_bound_profile(f, 0.1, 8)
    sup = prof.sup_ratio
    ratio = float(sup[1:].max() / sup[1])
    gauss = _d("normal", GridParams(-10.0, 10.0, 0.01), mu=0.0, sigma=1.0)
    _, r = kesten_ratio_curve(gauss, 2, 0.1)
    growth = float(r[-1] / r[0])
    _record(7, ratio < 10.0 and growth >= 10.0,
            f"pareto(2,1) max sup ratio / n=2 value={ratio:.3f} (< 10); "
            f"gaussian n=2 ratio growth={growth:.3g} (>= 10)")


def test_criterion_08_counterexample_signature():
    rep = demonstrate_failure(DESK_PRESET)
    a, b = rep.ratio_f_fbar[:3], rep.ratio_g2_g[:3]
    inc_a = bool(np.all(np.diff(a) > 0))
    inc_b = bool(np.all(np.diff(b) > 0))
    ald_fail = rep.ald.verdict.outcome is Outcome.FAIL
    _record(8, inc_a and inc_b and ald_fail,
            f"f/fbar={np.round(a, 4).tolist()} increasing={inc_a}; "
            f"g2/g={np.round(b, 4).tolist()} increasing={inc_b}; ald={rep.ald.verdict.outcome.value}")


def test_criterion_09_mle_consistency():
    rep = consistency_experiment("cp_weibull_scale", [1.0], n_grid=(500, 2000, 8000), reps=20,
                                 seed=0)
    med = rep.medians()
    ok = bool(np.all(np.diff(med) < 0) and med[-1] < 0.1)
    _record(9, ok, f"median |theta_hat - 1| at n=500,2000,8000: {np.round(med, 5).tolist()}")


def _model(tmp_path, name, **data):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(data))
    return str(path)


def test_criterion_10_cli_determinism(tmp_path):
    cp = _model(tmp_path, "cp", family="exponential", params={"rate": 1.0}, total_mass=0.5,
                grid={"x_min": 0, "x_max": 40, "dx": 0.01})
    pareto = _model(tmp_path, "pareto", family="pareto", params={"alpha": 1.5, "x_floor": 1.0},
                    total_mass=0.5, grid={"x_min": 0, "x_max": 10000, "dx": 0.1})
    runner = CliRunner()
    assert runner.invoke(main, ["synth", "--model", cp, "--out", str(tmp_path / "src")]).exit_code == 0
    commands = {
        "synth": ["synth", "--model", cp],
        "diagnose": ["diagnose", "--model", pareto, "--property", "subexp",
                     "--property", "tail_equiv", "--property", "ani"],
        "recover": ["recover", "--density", str(tmp_path / "src"), "--lambda", "0.5"],
        "counterexample": ["counterexample", "--k-max", "1"],
        "fit": ["fit", "--n", "500", "--seed", "4"],
        "experiment": ["experiment", "--family", "cp_exponential_rate", "--n", "200",
                       "--reps", "2", "--seed", "4", "--skip-checks"],
    }
    same = {}
    for name, args in commands.items():
        outs = []
        for rep in range(2):
            d = tmp_path / f"{name}_{rep}"
            res = runner.invoke(main, args + ["--out", str(d)])
            assert res.exit_code == 0, res.output
            outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
        same[name] = outs[0] == outs[1] and len(outs[0]) > 0
    _record(10, all(same.values()), " ".join(f"{k}={'identical' if v else 'DIFFERENT'}"
                                             for k, v in same.items()))
