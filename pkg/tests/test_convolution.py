import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from levytail.convolution import (
    SeriesTruncation,
    compound_poisson_density,
    convolve,
    convolve_grid,
    kesten_bound_profile,
    kesten_ratio_curve,
    nfold,
    nfold_sequential,
    poisson_tail,
    recover_jump_density,
)
from levytail.errors import (
    IncompatibleGrids,
    InvalidInput,
    SeriesDiverges,
    TruncationInsufficient,
)
from levytail.levy_model import (
    GeneralizedDensity,
    GridFunction,
    GridParams,
    discretize,
    jump_spec,
)

EXP_GRID = GridParams(0.0, 40.0, 0.001)


def _density(name, grid, **params):
    return GeneralizedDensity.from_density(discretize(jump_spec(name, **params), grid, check_tol=None))


def _sup(a: GridFunction, b: GridFunction) -> float:
    assert a.dx == b.dx
    lo = min(a.x_min, b.x_min)
    n = int(round((max(a.x_max, b.x_max) - lo) / a.dx)) + 1
    va, vb = np.zeros(n), np.zeros(n)
    ia, ib = int(round((a.x_min - lo) / a.dx)), int(round((b.x_min - lo) / a.dx))
    va[ia:ia + a.n] = a.values
    vb[ib:ib + b.n] = b.values
    return float(np.abs(va - vb).max())


def _random_density(seed: int, n: int = 64, x_min: float = 0.0, dx: float = 0.1) -> GeneralizedDensity:
    rng = np.random.default_rng(seed)
    vals = rng.random(n)
    vals /= vals.sum() * dx
    return GeneralizedDensity(float(rng.uniform(0, 0.5)), GridFunction(x_min, dx, vals))


def test_dirac_is_identity():
    f = _density("exponential", GridParams(0.0, 20.0, 0.01), rate=1.0)
    out = convolve(GeneralizedDensity.dirac(dx=0.01), f)
    assert out.atom == 0.0
    assert _sup(out.cont, f.cont) < 1e-15


def test_exponential_self_convolution_is_gamma2():
    f = _density("exponential", EXP_GRID, rate=1.0)
    out = convolve(f, f)
    assert out.cont.evaluate(1.0) == pytest.approx(math.exp(-1.0), rel=1e-5)


def test_atom_product():
    f = _random_density(1)
    a = GeneralizedDensity(0.5, f.cont)
    assert convolve(a, a).atom == 0.25


def test_nfold_one_is_identity():
    f = _random_density(2)
    assert nfold(f, 1) is f


def test_nfold_exponential_three():
    f = _density("exponential", EXP_GRID, rate=1.0)
    assert nfold(f, 3).cont.evaluate(2.0) == pytest.approx(2.0 * math.exp(-2.0), rel=1e-5)


def test_nfold_uniform_triangle_peak():
    f = _density("uniform", GridParams(0.0, 1.0, 0.001), lo=0.0, hi=1.0)
    assert nfold(f, 2).cont.evaluate(1.0) == pytest.approx(1.0, rel=2e-3)


def test_nfold_rejects_bad_n():
    with pytest.raises(InvalidInput):
        nfold(_random_density(3), 0)


def test_incompatible_grids():
    with pytest.raises(IncompatibleGrids):
        convolve(_random_density(1, dx=0.1), _random_density(2, dx=0.2))


def test_linear_not_circular():
    # two point masses at the far ends: the product must land beyond both arrays
    a = GridFunction(0.0, 1.0, np.r_[np.zeros(7), 1.0])
    out = convolve_grid(a, a)
    assert out.n == 15 and out.values[-1] == pytest.approx(1.0) and out.values[:-1].max() < 1e-15


@given(st.integers(0, 10_000), st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_mass_multiplicativity(s1, s2):
    f, g = _random_density(s1, 50), _random_density(s2, 80, x_min=-3.0)
    h = convolve(f, g)
    assert h.total() == pytest.approx(f.total() * g.total(), abs=2e-9)


@given(st.integers(0, 10_000), st.integers(0, 10_000), st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_commutative_and_associative(s1, s2, s3):
    f, g, h = _random_density(s1, 40), _random_density(s2, 30, x_min=-1.0), _random_density(s3, 20)
    fg, gf = convolve(f, g), convolve(g, f)
    assert fg.atom == gf.atom and _sup(fg.cont, gf.cont) < 1e-10
    left, right = convolve(fg, h), convolve(f, convolve(g, h))
    assert left.atom == pytest.approx(right.atom, abs=1e-15)
    assert _sup(left.cont, right.cont) < 1e-10


@pytest.mark.parametrize("n", range(2, 9))
def test_nfold_matches_sequential(n):
    f = _random_density(11, 60)
    a, b = nfold(f, n), nfold_sequential(f, n)
    assert a.atom == pytest.approx(b.atom, abs=1e-15)
    assert _sup(a.cont, b.cont) < 1e-10


def test_poisson_truncation_bound():
    t = SeriesTruncation.poisson(1.0)
    assert t.tail_bound < 1e-12
    assert poisson_tail(1.0, t.n_max - 1) >= 1e-12
    with pytest.raises(TruncationInsufficient):
        SeriesTruncation.poisson(300.0)


def test_geometric_truncation():
    t = SeriesTruncation.geometric(0.5)
    assert t.tail_bound < 1e-12
    with pytest.raises(SeriesDiverges):
        SeriesTruncation.geometric(1.0)


def test_compound_poisson_atom():
    g = discretize(jump_spec("exponential", rate=1.0), GridParams(0.0, 40.0, 0.01))
    assert compound_poisson_density(1.0, g).atom == pytest.approx(0.367879, abs=1e-6)


def test_compound_poisson_against_gamma_oracle():
    lam = 0.5
    g = discretize(jump_spec("exponential", rate=1.0), EXP_GRID)
    cp = compound_poisson_density(lam, g)
    # independent oracle: analytic gamma densities summed to n = 30
    oracle = sum(lam ** n / math.factorial(n) * stats.gamma(n).pdf(1.0) for n in range(1, 31))
    oracle /= math.expm1(lam)
    assert cp.cont.evaluate(1.0) == pytest.approx(oracle, rel=1e-5)
    assert cp.cont.mass() + cp.cont.leakage == pytest.approx(1.0, abs=1e-10)


def test_compound_poisson_vanishing_rate():
    g = discretize(jump_spec("exponential", rate=1.0), GridParams(0.0, 40.0, 0.01))
    cp = compound_poisson_density(1e-8, g)
    assert cp.atom == pytest.approx(1.0, abs=1e-7)
    assert cp.q * cp.cont.total() < 1e-7


def test_compound_poisson_rejects_weak_truncation():
    g = discretize(jump_spec("exponential", rate=1.0), GridParams(0.0, 10.0, 0.1))
    with pytest.raises(TruncationInsufficient):
        compound_poisson_density(1.0, g, SeriesTruncation(2, 0.1))


ROUND_TRIP = {
    "exponential": (jump_spec("exponential", rate=1.0), GridParams(0.0, 40.0, 0.01)),
    "pareto": (jump_spec("pareto", alpha=1.5, x_floor=1.0), GridParams(0.0, 1e4, 0.1)),
    "weibull": (jump_spec("weibull", shape=0.5, scale=1.0), GridParams(0.0, 400.0, 0.01)),
}


@pytest.mark.parametrize("lam", [0.1, 0.3, 0.5, 0.69])
@pytest.mark.parametrize("family", sorted(ROUND_TRIP))
def test_round_trip(family, lam):
    spec, grid = ROUND_TRIP[family]
    g = discretize(spec, grid, check_tol=None)
    report = {}
    h = recover_jump_density(compound_poisson_density(lam, g).cont, lam, report=report)
    assert _sup(h, g) / g.values.max() < 1e-6
    assert report["clamped"] < 1e-9


@pytest.mark.parametrize("lam", [0.1, 0.3])
def test_series_method_agrees(lam):
    spec, grid = ROUND_TRIP["exponential"]
    g = discretize(spec, grid, check_tol=None)
    f1 = compound_poisson_density(lam, g).cont
    report = {}
    a = recover_jump_density(f1, lam, method="series", report=report)
    b = recover_jump_density(f1, lam)
    assert _sup(a, b) / g.values.max() < 1e-10
    assert report["n_terms"] == SeriesTruncation.geometric(math.expm1(lam)).n_max


def test_recover_diverges_above_log2():
    g = discretize(jump_spec("exponential", rate=1.0), GridParams(0.0, 10.0, 0.1))
    with pytest.raises(SeriesDiverges):
        recover_jump_density(g, 0.7)


def test_recover_narrow_gaussian_two_term():
    lam = 0.1
    f1 = discretize(jump_spec("normal", mu=0.0, sigma=0.1), GridParams(-2.0, 2.0, 0.005))
    report = {}
    h = recover_jump_density(f1, lam, report=report)
    # two-term expansion: (c f1 - c^2/2 f1*f1) / lam with c = e^lam - 1
    c = math.expm1(lam)
    two = convolve_grid(f1, f1)
    oracle = (c * f1.values - 0.5 * c * c * two.evaluate(f1.x)) / lam
    # f1 is not a compound Poisson law, so the tails of g go negative and are
    # clamped; the signed mass is still 1
    assert h.mass() - report["clamped"] == pytest.approx(1.0, abs=1e-4)
    assert 0 < report["clamped"] < 1e-3
    assert np.abs(h.values - oracle).max() / f1.values.max() < 5e-3


def test_kesten_n1_trivial():
    f = discretize(jump_spec("pareto", alpha=2.0, x_floor=1.0), GridParams(0.0, 1000.0, 0.1))
    prof = kesten_bound_profile(f, 0.1, 1)
    assert prof.sup_ratio[0] == pytest.approx(1 / 1.1, rel=1e-12)


def test_kesten_pareto_bounded():
    f = discretize(jump_spec("pareto", alpha=2.0, x_floor=1.0), GridParams(0.0, 1000.0, 0.1))
    prof = kesten_bound_profile(f, 0.1, 8)
    assert prof.sup_ratio[1:].max() < 10 * prof.sup_ratio[1]
    assert prof.excluded == 0


def test_kesten_gaussian_grows():
    f = discretize(jump_spec("normal", mu=0.0, sigma=1.0), GridParams(-10.0, 10.0, 0.01))
    x, r = kesten_ratio_curve(f, 2, 0.1)
    assert r[-1] / r[0] >= 10
    # analytic: f*f / f = 2^-1/2 exp(x^2/4)
    mid = len(x) // 2
    assert r[mid] * 1.1 ** 2 == pytest.approx(2 ** -0.5 * math.exp(x[mid] ** 2 / 4), rel=1e-3)


def test_kesten_rejects_large_n():
    f = discretize(jump_spec("pareto", alpha=2.0, x_floor=1.0), GridParams(0.0, 10.0, 0.1))
    with pytest.raises(InvalidInput):
        kesten_bound_profile(f, 0.1, 13)
