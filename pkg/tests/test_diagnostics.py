import json
import math

import numpy as np
import pytest

from levytail.convolution import compound_poisson_density
from levytail.counterexample import DESK_PRESET, build_positive_levy
from levytail.diagnostics import (
    Outcome,
    RatioCurve,
    VerdictConfig,
    ald_check,
    ani_check,
    compound_poisson_target,
    convolution_root_ratio,
    estimate_limit,
    insensitivity_scale,
    interval_mass,
    local_interval_mass,
    long_tail_check,
    positive_part,
    run_property,
    steutel_ratio,
    subexp_check,
    subexp_plus_check,
    tail_equivalence,
)
from levytail.errors import HypothesisViolated, InvalidInput, ZeroPositiveMass
from levytail.levy_model import (
    GeneralizedDensity,
    GridFunction,
    GridParams,
    JumpDensitySpec,
    TwoSidedMixture,
    discretize,
    jump_spec,
    make_family,
    normalize_g1,
)

TAIL = GridParams(0.0, 1e4, 0.1)


def _d(name, grid=TAIL, **params):
    return discretize(jump_spec(name, **params), grid, check_tol=None)


@pytest.fixture(scope="module")
def heavy():
    return {
        "pareto": _d("pareto", alpha=1.5, x_floor=1.0),
        "weibull": _d("weibull", shape=0.5, scale=1.0),
        "lognormal": _d("lognormal", mu=0.0, sigma=1.0),
    }


@pytest.fixture(scope="module")
def light():
    return {
        "gaussian": _d("normal", GridParams(-10.0, 10.0, 0.01), mu=0.0, sigma=1.0),
        "exponential": _d("exponential", GridParams(0.0, 60.0, 0.01), rate=1.0),
    }


@pytest.fixture(scope="module")
def pareto2():
    return _d("pareto", alpha=2.0, x_floor=1.0)


def test_estimate_limit_recovers_intercept():
    x = np.geomspace(100, 1e4, 129)
    for basis in (lambda t: 1 / np.log(t), lambda t: t ** -0.5, lambda t: 1 / t):
        limit, slope = estimate_limit(x, 2.0 + 3.0 * basis(x))
        assert limit == pytest.approx(2.0, abs=1e-9)
        assert slope < 0


def test_estimate_limit_flat_curve():
    x = np.geomspace(100, 1e4, 65)
    limit, slope = estimate_limit(x, np.full(x.size, 1.3))
    assert limit == pytest.approx(1.3) and slope == -math.inf


def test_ratio_curve_requires_increasing_x():
    with pytest.raises(InvalidInput):
        RatioCurve(np.array([1.0, 1.0]), np.array([1.0, 1.0]), 1.0, -1.0)


def test_long_tail_pareto(pareto2):
    assert long_tail_check(pareto2, (1.0,)).verdict.passed


def test_long_tail_exponential_fails(light):
    rep = long_tail_check(light["exponential"], (1.0,))
    assert rep.verdict.outcome is Outcome.FAIL
    np.testing.assert_allclose(rep.curve.ratios, math.exp(-1.0), rtol=1e-9)


def test_long_tail_zero_shift(light):
    rep = long_tail_check(light["exponential"], (0.0,))
    assert rep.verdict.passed and np.all(rep.curve.ratios == 1.0)


@pytest.mark.parametrize("name", ["pareto", "weibull", "lognormal"])
def test_subexponential_chain_heavy(heavy, name):
    f = heavy[name]
    assert long_tail_check(f).verdict.passed
    rep = subexp_check(f)
    assert rep.verdict.passed
    assert rep.verdict.limit_estimate == pytest.approx(2.0, rel=0.05)
    assert ani_check(f).verdict.passed


@pytest.mark.parametrize("name", ["gaussian", "exponential"])
def test_subexponential_chain_light(light, name):
    f = light[name]
    assert long_tail_check(f, (1.0,)).verdict.outcome is Outcome.FAIL
    assert subexp_check(f).verdict.outcome is Outcome.FAIL


def test_gaussian_subexp_ratio_closed_form(light):
    rep = subexp_check(light["gaussian"])
    x, r = rep.curve.x_points, rep.curve.ratios
    sel = x < 6
    np.testing.assert_allclose(r[sel], 2 ** -0.5 * np.exp(x[sel] ** 2 / 4), rtol=1e-3)


def test_monotone_light_tails_are_ani(light):
    # a.n.i. and al.d. only need monotone tails
    for f in light.values():
        assert ani_check(f).verdict.passed
        assert ald_check(f).verdict.passed


def test_subexp_handles_atom(heavy):
    gd = GeneralizedDensity(0.4, heavy["pareto"])
    assert subexp_check(gd).verdict.limit_estimate == pytest.approx(2.0, rel=0.01)


def test_subexp_plus_one_sided_matches(heavy):
    a, b = subexp_check(heavy["pareto"]).verdict, subexp_plus_check(heavy["pareto"]).verdict
    assert a.outcome is b.outcome and a.limit_estimate == pytest.approx(b.limit_estimate, rel=1e-12)


def test_subexp_plus_two_sided():
    fam = TwoSidedMixture(make_family("exponential", {"rate": 1.0}),
                          make_family("pareto", {"alpha": 1.5, "x_floor": 1.0}), 0.5)
    f = discretize(JumpDensitySpec(fam), GridParams(-60.0, 1e4, 0.1), check_tol=None)
    assert subexp_plus_check(f).verdict.passed


def test_subexp_plus_zero_positive_mass():
    f = GridFunction(-5.0, 0.1, np.r_[np.ones(40), np.zeros(11)])
    with pytest.raises(ZeroPositiveMass):
        positive_part(f)


def test_ani_noisy_pareto(pareto2):
    rng = np.random.default_rng(0)
    noisy = GridFunction(pareto2.x_min, pareto2.dx, pareto2.values * rng.uniform(0.99, 1.01, pareto2.n),
                         pareto2.tail_kind)
    v = ani_check(noisy).verdict
    assert v.outcome in (Outcome.PASS, Outcome.INCONCLUSIVE)
    assert v.rel_error <= 0.01


@pytest.fixture(scope="module")
def semistable_g_plus():
    return normalize_g1(build_positive_levy(DESK_PRESET), GridParams(0.0, 3000.0, 0.005))[0]


def test_ani_fails_on_semistable(semistable_g_plus):
    assert ani_check(semistable_g_plus).verdict.outcome is Outcome.FAIL


def test_ald_fails_on_semistable(semistable_g_plus):
    rep = ald_check(semistable_g_plus)
    assert rep.verdict.outcome is Outcome.FAIL
    assert rep.extra["growth"] > VerdictConfig().ald_fail_growth


def test_ald_monotone_is_one(pareto2):
    rep = ald_check(pareto2)
    assert rep.verdict.passed
    assert rep.verdict.limit_estimate <= 1.0


@pytest.mark.parametrize("lam", [0.5, 1.0, math.log(2.0)])
def test_tail_equivalence_compound_poisson(heavy, lam):
    g = heavy["pareto"]
    v = tail_equivalence(compound_poisson_density(lam, g), g, compound_poisson_target(lam)).verdict
    assert v.passed and v.trend_slope < 0


def test_compound_poisson_targets():
    assert compound_poisson_target(1.0) == pytest.approx(1.58198, abs=1e-5)
    assert compound_poisson_target(math.log(2.0)) == pytest.approx(1.38629, abs=1e-5)


def test_tail_equivalence_self(heavy):
    rep = tail_equivalence(heavy["pareto"], heavy["pareto"], 1.0)
    assert rep.verdict.passed and np.all(rep.curve.ratios == 1.0)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_convolution_root_pareto(heavy, n):
    v = convolution_root_ratio(heavy["pareto"], n).verdict
    assert v.passed and v.limit_estimate == pytest.approx(n, rel=0.05)


def test_convolution_root_weibull(heavy):
    assert convolution_root_ratio(heavy["weibull"], 2).verdict.passed


def test_convolution_root_monotone_in_n(heavy):
    est = [convolution_root_ratio(heavy["lognormal"], n).verdict.limit_estimate for n in (1, 2, 3, 4)]
    assert np.all(np.diff(est) > 0)


def test_convolution_root_bad_n(heavy):
    with pytest.raises(InvalidInput):
        convolution_root_ratio(heavy["pareto"], 9)


@pytest.mark.parametrize("alpha", [0.5, 2.0])
def test_steutel(heavy, alpha):
    v = steutel_ratio(0.5, heavy["pareto"], alpha).verdict
    assert v.limit_estimate == pytest.approx(alpha, rel=0.10)


def test_steutel_identity(heavy):
    rep = steutel_ratio(0.5, heavy["pareto"], 1.0)
    # the damped lattice inversion amplifies round-off towards the grid end
    assert np.abs(rep.curve.ratios - 1.0).max() < 1e-4


def test_steutel_half_matches_halved_rate():
    # mu^(1/2) of CP(lam, g) is CP(lam/2, g)
    g = _d("pareto", GridParams(0.0, 2000.0, 0.1), alpha=1.5, x_floor=1.0)
    rep = steutel_ratio(0.5, g, 0.5)
    half = compound_poisson_density(0.25, g).weighted()
    base = compound_poisson_density(0.5, g).weighted()
    x = rep.curve.x_points
    np.testing.assert_allclose(rep.curve.ratios, half.evaluate(x) / base.evaluate(x), rtol=1e-5)


def test_steutel_hypothesis(heavy):
    with pytest.raises(HypothesisViolated):
        steutel_ratio(0.8, heavy["pareto"], 0.5)


def test_local_interval_mass_pareto(pareto2):
    rep = local_interval_mass(pareto2, 1.0)
    assert rep.equivalence.verdict.passed
    assert rep.long_tail.limit_estimate == pytest.approx(1.0, rel=0.01)
    assert rep.subexp.limit_estimate == pytest.approx(2.0, rel=0.05)


def test_local_interval_mass_exponential(light):
    rep = local_interval_mass(light["exponential"], 1.0)
    assert rep.equivalence.verdict.outcome is Outcome.FAIL
    assert rep.equivalence.verdict.limit_estimate == pytest.approx(1 - math.exp(-1), rel=1e-4)


def test_local_interval_mass_rejects_empty_interval(pareto2):
    with pytest.raises(InvalidInput):
        local_interval_mass(pareto2, 0.0)


def test_interval_mass_matches_closed_form(light):
    f = light["exponential"]
    x = np.array([1.0, 10.0, 50.0])
    np.testing.assert_allclose(interval_mass(f, x, 1.0), np.exp(-x) * (1 - math.exp(-1)), rtol=1e-4)


@pytest.mark.parametrize("name", ["pareto", "weibull", "lognormal"])
def test_verdicts_scale_invariant(name):
    params = {"pareto": {"alpha": 1.5, "x_floor": 1.0}, "weibull": {"shape": 0.5, "scale": 1.0},
              "lognormal": {"mu": 0.0, "sigma": 1.0}}[name]
    a = subexp_check(_d(name, GridParams(0.0, 1e4, 0.1), **params)).verdict.limit_estimate
    b = subexp_check(_d(name, GridParams(0.0, 1e4, 0.05), **params)).verdict.limit_estimate
    assert abs(a - b) / abs(a) < 0.01


def test_verdicts_deterministic(heavy):
    a = subexp_check(heavy["weibull"]).to_json()
    b = subexp_check(heavy["weibull"]).to_json()
    assert a == b


def test_report_json_schema(heavy):
    d = json.loads(subexp_check(heavy["pareto"]).to_json())
    assert {"property", "outcome", "limit_estimate", "target", "rel_error", "window", "curve"} <= set(d)
    assert d["property"] == "subexp" and d["target"] == 2.0


def test_insensitivity_scale_reports(heavy):
    x, h = insensitivity_scale(heavy["pareto"])
    assert x.size == h.size and np.all(h >= 0)
    # the flat-enough neighbourhood widens along a power-law tail
    assert h[h.size // 2] > h[0]


def test_run_property_dispatch(heavy):
    assert run_property("subexp", heavy["pareto"]).verdict.passed
    with pytest.raises(ValueError):
        run_property("nope", heavy["pareto"])
