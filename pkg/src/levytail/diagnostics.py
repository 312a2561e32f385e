"""Finite-grid verdicts for tail properties of densities.

Every check produces a :class:`RatioCurve` (a ratio read out at log-spaced
grid nodes) and a :class:`Verdict`.  The limit of a curve is estimated from
the last decade of the read-out window: the ratio is regressed on a constant
plus one decay profile (``1/log x``, ``x**-0.5`` or ``1/x``), the profile
with the smallest BIC is kept (a constant alone competes too), and the
intercept is the limit.  A verdict passes only when the estimate is close to
the target *and* the curve is still moving towards it (negative log-log
slope of ``|ratio - limit|``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .charfn import cf_power, compound_poisson_cf, invert_cf
from .convolution import compound_poisson_density, convolve_grid, nfold
from .errors import (
    GridInfeasible,
    HypothesisViolated,
    InvalidInput,
    WindowUnderflow,
    ZeroPositiveMass,
)
from .levy_model import GeneralizedDensity, GridFunction

FLOOR = 1e-300
POINTS_PER_DECADE = 64


class Property(str, Enum):
    LONG_TAILED = "long_tailed"
    SUBEXP = "subexp"
    SUBEXP_PLUS = "subexp_plus"
    ANI = "ani"
    ALD = "ald"
    TAIL_EQUIV = "tail_equiv"
    CONV_ROOT = "conv_root"
    STEUTEL = "steutel"
    LOCAL_MASS = "local_mass"


class Outcome(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class VerdictConfig:
    pass_rel: float = 0.05
    fail_rel: float = 0.20
    ald_pass_growth: float = 0.02
    ald_fail_growth: float = 0.05
    ald_blocks_per_decade: float = 3.0
    decades: float = 2.0
    points_per_decade: int = POINTS_PER_DECADE
    floor: float = FLOOR


DEFAULT_CONFIG = VerdictConfig()
MIN_DECADE_NODES = 8


@dataclass(frozen=True, eq=False)
class RatioCurve:
    x_points: np.ndarray
    ratios: np.ndarray
    limit_estimate: float
    trend_slope: float
    divergent: bool = False

    def __post_init__(self):
        x = np.asarray(self.x_points, dtype=float)
        if x.size > 1 and np.any(np.diff(x) <= 0):
            raise InvalidInput("x_points must be strictly increasing")
        object.__setattr__(self, "x_points", x)
        object.__setattr__(self, "ratios", np.asarray(self.ratios, dtype=float))

    def to_list(self) -> list[list[float]]:
        return [[float(a), float(b)] for a, b in zip(self.x_points, self.ratios)]


@dataclass(frozen=True)
class Verdict:
    property: Property
    outcome: Outcome
    limit_estimate: float
    target: float
    rel_error: float
    window: tuple[float, float]
    trend_slope: float = math.nan

    @property
    def passed(self) -> bool:
        return self.outcome is Outcome.PASS


@dataclass(frozen=True, eq=False)
class DiagnosticsReport:
    verdict: Verdict
    curves: tuple[RatioCurve, ...] = field(default_factory=tuple)
    extra: dict = field(default_factory=dict)

    @property
    def curve(self) -> RatioCurve | None:
        return self.curves[0] if self.curves else None

    def to_dict(self) -> dict:
        v = self.verdict
        out = {
            "property": v.property.value,
            "outcome": v.outcome.value,
            "limit_estimate": _jsonable(v.limit_estimate),
            "target": _jsonable(v.target),
            "rel_error": _jsonable(v.rel_error),
            "window": [_jsonable(v.window[0]), _jsonable(v.window[1])],
            "curve": [[_jsonable(a), _jsonable(b)] for a, b in
                      (self.curve.to_list() if self.curve is not None else [])],
        }
        if self.extra:
            out["extra"] = {k: _jsonable(val) for k, val in self.extra.items()}
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _jsonable(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, (list, tuple)):
        return [_jsonable(u) for u in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(u) for u in v.tolist()]
    return v


# ---------------------------------------------------------------------------
# Read-out and limit estimation
# ---------------------------------------------------------------------------

def readout_window(f: GridFunction, cfg: VerdictConfig = DEFAULT_CONFIG,
                   x_hi: float | None = None) -> tuple[float, float]:
    """``[x_hi / 10**decades, x_hi]`` with ``x_hi`` the last node where f is
    above the underflow floor.

    Raises
    ------
    GridInfeasible
        When the window spans less than a decade or its last decade holds
        fewer than ``MIN_DECADE_NODES`` grid nodes, so no limit can be read.
    """
    x = f.x
    pos = (x > 0) & (f.values > cfg.floor)
    if not np.any(pos):
        raise WindowUnderflow("density underflows on the whole positive grid")
    last = float(x[pos][-1])
    hi = min(last, x_hi) if x_hi is not None else last
    first = float(x[pos][0])
    lo = max(first, hi / 10.0 ** cfg.decades)
    if lo >= hi:
        raise WindowUnderflow("read-out window is empty")
    if hi < 10.0 * lo * (1.0 - 1e-12) or 0.9 * hi / f.dx + 1.0 < MIN_DECADE_NODES:
        raise GridInfeasible(f"read-out window [{lo:g}, {hi:g}] with dx={f.dx:g} is too short "
                             "for a limit estimate; extend or refine the grid")
    return lo, hi


def readout_indices(f: GridFunction, window: tuple[float, float],
                    cfg: VerdictConfig = DEFAULT_CONFIG) -> np.ndarray:
    lo, hi = window
    n_pts = max(8, int(round(cfg.points_per_decade * math.log10(hi / lo))) + 1)
    xs = np.geomspace(lo, hi, n_pts)
    idx = np.unique(np.clip(np.rint((xs - f.x_min) / f.dx).astype(np.int64), 0, f.n - 1))
    return idx


def estimate_limit(x: np.ndarray, r: np.ndarray, weights: np.ndarray | None = None
                   ) -> tuple[float, float]:
    """Limit of a ratio curve from the last decade of ``x``.

    Weighted least squares of ``r`` against ``1/log x``, ``x**-0.5`` and
    ``1/x`` (plus a constant-only model); the model with the smallest
    Bayesian information criterion supplies the intercept.  Returns
    ``(limit, trend_slope)``.
    """
    x = np.asarray(x, dtype=float)
    r = np.asarray(r, dtype=float)
    ok = np.isfinite(r) & (x > 1.0)
    x, r = x[ok], r[ok]
    if x.size == 0:
        return math.nan, math.nan
    sel = x >= x[-1] / 10.0
    x, r = x[sel], r[sel]
    if x.size < 3:
        return float(r[-1]), math.nan
    w = np.ones_like(x) if weights is None else np.asarray(weights)[ok][sel]
    sw = np.sqrt(w)
    n = x.size
    mean = float(np.average(r, weights=w))
    rss0 = float(np.sum(w * (r - mean) ** 2))
    scale = max(abs(mean), 1.0)
    # a flat (pure-noise) curve keeps its weighted mean
    best = (_bic(rss0, n, 1, scale), mean)
    for basis in _BASES:
        u = basis(x)
        if np.ptp(u) == 0:
            continue
        A = np.column_stack([np.ones_like(u), u]) * sw[:, None]
        coef, *_ = np.linalg.lstsq(A, r * sw, rcond=None)
        rss = float(np.sum((A @ coef - r * sw) ** 2))
        crit = _bic(rss, n, 2, scale)
        # ties go to the earlier (simpler or slower) model
        if crit < best[0] - 1e-9:
            best = (crit, float(coef[0]))
    limit = best[1]
    return limit, _trend_slope(x, r, limit)


def _bic(rss: float, n: int, k: int, scale: float) -> float:
    # floor the residual at round-off so exact fits do not win by -inf
    rss = max(rss, n * (1e-13 * scale) ** 2)
    return n * math.log(rss / n) + k * math.log(n)


# decay profiles for ratio - limit: logarithmic, square-root and inverse power
_BASES = (
    lambda x: 1.0 / np.log(x),
    lambda x: x ** -0.5,
    lambda x: 1.0 / x,
)


def _trend_slope(x: np.ndarray, r: np.ndarray, limit: float) -> float:
    dev = np.abs(r - limit)
    scale = max(abs(limit), 1.0)
    noise = 1e-9 * scale
    if np.all(dev <= noise):
        return -math.inf
    ok = dev > noise
    if np.count_nonzero(ok) < 3:
        return -math.inf
    slope = np.polyfit(np.log(x[ok]), np.log(dev[ok]), 1)[0]
    return float(slope)


def make_curve(x: np.ndarray, r: np.ndarray) -> RatioCurve:
    limit, slope = estimate_limit(x, r)
    divergent = not math.isfinite(limit) or (np.isfinite(r).any() and np.nanmax(np.abs(r)) > 1e12)
    return RatioCurve(x, r, limit, slope, divergent)


def _relative_error(limit: float, target: float) -> float:
    if not math.isfinite(limit):
        return math.inf
    return abs(limit - target) / max(abs(target), 1e-300)


def judge(prop: Property, curve: RatioCurve, target: float, window: tuple[float, float],
          cfg: VerdictConfig = DEFAULT_CONFIG) -> Verdict:
    """Pass: relative error below ``pass_rel`` with a converging curve.
    Fail: relative error at least ``fail_rel``, or a curve moving away from
    its limit while already outside the pass band."""
    rel = _relative_error(curve.limit_estimate, target)
    slope = curve.trend_slope
    if curve.divergent or rel >= cfg.fail_rel:
        outcome = Outcome.FAIL
    elif rel < cfg.pass_rel and (slope < 0 or math.isnan(slope) and rel < 1e-12):
        outcome = Outcome.PASS
    elif slope > 0 and rel >= cfg.pass_rel:
        outcome = Outcome.FAIL
    else:
        outcome = Outcome.INCONCLUSIVE
    return Verdict(prop, outcome, curve.limit_estimate, target, rel, window, slope)


def _combine(prop: Property, verdicts: list[Verdict], target: float,
             window: tuple[float, float]) -> Verdict:
    """All must pass to pass; any failure fails."""
    worst = max(verdicts, key=lambda v: v.rel_error)
    if any(v.outcome is Outcome.FAIL for v in verdicts):
        outcome = Outcome.FAIL
    elif all(v.outcome is Outcome.PASS for v in verdicts):
        outcome = Outcome.PASS
    else:
        outcome = Outcome.INCONCLUSIVE
    return Verdict(prop, outcome, worst.limit_estimate, target, worst.rel_error, window,
                   worst.trend_slope)


# ---------------------------------------------------------------------------
# Exact lattice sums at read-out nodes
# ---------------------------------------------------------------------------

def _conv_at(a: GridFunction, b: GridFunction, x: np.ndarray) -> np.ndarray:
    """``(a * b)(x)`` by direct lattice sums, linearly interpolated between
    the two neighbouring lattice nodes of the convolution."""
    dx = a.dx
    x0 = a.x_min + b.x_min
    t = (np.asarray(x, dtype=float) - x0) / dx
    k_lo = np.floor(t + 1e-9).astype(np.int64)
    frac = np.clip(t - k_lo, 0.0, 1.0)
    out = np.empty(t.size)
    av, bv = a.values, b.values
    cache: dict[int, float] = {}

    def at(k: int) -> float:
        if k not in cache:
            i0 = max(0, k - (bv.size - 1))
            i1 = min(av.size - 1, k)
            if i1 < i0:
                cache[k] = 0.0
            else:
                cache[k] = dx * float(np.dot(av[i0:i1 + 1], bv[k - i1:k - i0 + 1][::-1]))
        return cache[k]

    for j, (k, fr) in enumerate(zip(k_lo, frac)):
        v = at(int(k))
        if fr > 1e-9:
            v = (1.0 - fr) * v + fr * at(int(k) + 1)
        out[j] = v
    return out


def _nfold_at(f: GridFunction, n: int, x: np.ndarray) -> np.ndarray:
    if n == 1:
        return f.evaluate(x)
    one_sided = f.x_min >= 0
    window = (f.x_min, f.x_max) if one_sided else None
    base = f if n == 2 else nfold(GeneralizedDensity.from_density(f), n - 1, window).cont
    return _conv_at(base, f, x)


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------

def _positive_readout(f: GridFunction, cfg: VerdictConfig, x_hi: float | None = None):
    window = readout_window(f, cfg, x_hi)
    idx = readout_indices(f, window, cfg)
    x = f.x[idx]
    fx = f.values[idx]
    keep = fx > cfg.floor
    if not np.any(keep):
        raise WindowUnderflow("density underflows across the read-out window")
    return window, idx[keep], x[keep], fx[keep]


def long_tail_check(f: GridFunction, y_set=(1.0, 5.0, 10.0),
                    cfg: VerdictConfig = DEFAULT_CONFIG) -> DiagnosticsReport:
    """``f(x + y) / f(x) -> 1`` for each shift ``y``."""
    y_max = max(max(y_set), 0.0)
    window, _, x, fx = _positive_readout(f, cfg, f.x_max - y_max)
    curves, verdicts = [], []
    for y in y_set:
        r = f.evaluate(x + y) / fx
        c = make_curve(x, r)
        curves.append(c)
        verdicts.append(judge(Property.LONG_TAILED, c, 1.0, window, cfg))
    return DiagnosticsReport(_combine(Property.LONG_TAILED, verdicts, 1.0, window), tuple(curves),
                             {"y": list(map(float, y_set))})


def _as_generalized(f) -> GeneralizedDensity:
    return f if isinstance(f, GeneralizedDensity) else GeneralizedDensity.from_density(f)


def convolution_root_ratio(f, n: int, cfg: VerdictConfig = DEFAULT_CONFIG,
                           prop: Property = Property.CONV_ROOT) -> DiagnosticsReport:
    """``f^{*n}(x) / f(x) -> n``; atoms are handled exactly:
    the continuous part of ``(p delta + q f)^{*n}`` is
    ``sum_k C(n,k) p^(n-k) q^k f^{*k}``."""
    if not (isinstance(n, (int, np.integer)) and 1 <= n <= 8):
        raise InvalidInput("n must be an integer in [1, 8]")
    gd = _as_generalized(f)
    cont = gd.cont
    window, _, x, fx = _positive_readout(cont, cfg)
    p, q = gd.atom, gd.q
    num = np.zeros_like(x)
    for k in range(1, n + 1):
        w = math.comb(n, k) * p ** (n - k) * q ** k
        if w == 0:
            continue
        num += w * _nfold_at(cont, k, x)
    r = num / (q * fx)
    curve = make_curve(x, r)
    return DiagnosticsReport(judge(prop, curve, float(n), window, cfg), (curve,), {"n": n})


def subexp_check(f, cfg: VerdictConfig = DEFAULT_CONFIG) -> DiagnosticsReport:
    """``f^{*2}(x) / f(x) -> 2``."""
    return convolution_root_ratio(f, 2, cfg, Property.SUBEXP)


def positive_part(f) -> GeneralizedDensity:
    """``f_+ = 1{x >= 0} f / F(0, inf)``; an atom at 0 stays in the positive part."""
    gd = _as_generalized(f)
    cont = gd.cont
    x = cont.x
    keep = x >= 0
    mass_pos = gd.q * cont.dx * cont.values[keep].sum() + gd.atom
    if gd.q * cont.mass() > 0 and not np.any(keep & (cont.values > 0)) and gd.atom == 0:
        raise ZeroPositiveMass("no mass on the positive half-line")
    if mass_pos <= 0:
        raise ZeroPositiveMass("no mass on the positive half-line")
    if not np.any(keep):
        raise ZeroPositiveMass("grid has no non-negative nodes")
    cropped = cont.crop(0.0, None)
    # leakage sits beyond the right end of the grid, so it belongs to F(0, inf)
    pos_cont = cropped.mass() + cont.leakage
    mass_pos += gd.q * cont.leakage
    atom = gd.atom / mass_pos
    if not gd.q * cropped.mass() > 0:
        raise ZeroPositiveMass("no continuous mass on the positive half-line")
    vals = cropped.values / pos_cont
    return GeneralizedDensity(atom, GridFunction(cropped.x_min, cropped.dx, vals,
                                                 cropped.tail_kind, cont.leakage / pos_cont))


def subexp_plus_check(f, cfg: VerdictConfig = DEFAULT_CONFIG) -> DiagnosticsReport:
    """Subexponentiality of the positive-part density."""
    rep = subexp_check(positive_part(f), cfg)
    v = rep.verdict
    return DiagnosticsReport(Verdict(Property.SUBEXP_PLUS, v.outcome, v.limit_estimate, v.target,
                                     v.rel_error, v.window, v.trend_slope), rep.curves, rep.extra)


NOISE_REL = 1e-12


def _x0_positive(f: GridFunction, floor: float) -> int:
    """Index of the first node after which f stays positive.

    Values below ``NOISE_REL * max f`` ahead of the bulk are treated as
    round-off from the transforms, not as the start of the support.
    """
    v = f.values
    pos_start = int(np.searchsorted(f.x, 0.0))
    bad = np.nonzero(~(v > floor))[0]
    bad = bad[bad >= pos_start]
    start = pos_start if bad.size == 0 else int(bad[-1]) + 1
    above = np.nonzero(v[start:] > NOISE_REL * np.max(v, initial=0.0))[0]
    return start + int(above[0]) if above.size else start


def _suffix_sup_ratio(f: GridFunction, strict: bool) -> np.ndarray:
    """``sup_{t >= x} f(t) / f(x)`` (or ``t > x`` when strict), grid only."""
    v = f.values
    suf = np.maximum.accumulate(v[::-1])[::-1]
    if strict:
        suf = np.concatenate([suf[1:], [0.0]])
    with np.errstate(divide="ignore", invalid="ignore"):
        return suf / v


def _block_extreme(x: np.ndarray, vals: np.ndarray, idx: np.ndarray, mode: str
                   ) -> np.ndarray:
    """Max (or min) of ``vals`` between consecutive read-out nodes."""
    out = np.empty(idx.size)
    edges = np.concatenate([[idx[0]], idx])
    for j in range(idx.size):
        seg = vals[edges[j]:idx[j] + 1]
        seg = seg[np.isfinite(seg)] if mode == "min" else seg
        if seg.size == 0:
            out[j] = np.nan
        else:
            out[j] = np.max(seg) if mode == "max" else np.min(seg)
    return out


def ani_check(f: GridFunction, cfg: VerdictConfig = DEFAULT_CONFIG) -> DiagnosticsReport:
    """Suffix-sup and windowed-inf ratios, both with target 1."""
    i0 = _x0_positive(f, cfg.floor)
    if i0 >= f.n - 2:
        raise WindowUnderflow("density is not positive on a tail window")
    window, idx, x, _ = _positive_readout(f, cfg)
    idx_ok = idx >= i0
    idx, x = idx[idx_ok], x[idx_ok]
    sup_r = _suffix_sup_ratio(f, strict=False)
    v = f.values
    inf_run = np.full(f.n, np.nan)
    inf_run[i0:] = np.minimum.accumulate(v[i0:])
    with np.errstate(divide="ignore", invalid="ignore"):
        inf_r = inf_run / v
    c_sup, c_inf = make_curve(x, sup_r[idx]), make_curve(x, inf_r[idx])
    v1 = judge(Property.ANI, c_sup, 1.0, window, cfg)
    v2 = judge(Property.ANI, c_inf, 1.0, window, cfg)
    return DiagnosticsReport(_combine(Property.ANI, [v1, v2], 1.0, window), (c_sup, c_inf),
                             {"x0": float(f.x[i0])})


def ald_check(f: GridFunction, cfg: VerdictConfig = DEFAULT_CONFIG) -> DiagnosticsReport:
    """``K(x) = sup_{y>0} f(x+y)/f(x)`` along the window.

    Passes when the block maxima of K are finite and show no growth with
    log x; the reported limit is the largest K seen.
    """
    i0 = _x0_positive(f, cfg.floor)
    window, idx, x, _ = _positive_readout(f, cfg)
    idx_ok = idx >= i0
    idx, x = idx[idx_ok], x[idx_ok]
    k_r = np.maximum(_suffix_sup_ratio(f, strict=True), 0.0)
    # maxima of K over every stretch between read-out nodes
    kb = _block_extreme(f.x, k_r, idx, "max")
    k_max = float(np.max(kb)) if np.all(np.isfinite(kb)) else math.inf
    # growth of the envelope over coarse log-blocks (several per decade)
    lx = np.log(x)
    n_blocks = max(3, int(round(cfg.ald_blocks_per_decade * (lx[-1] - lx[0]) / math.log(10))))
    edges = np.linspace(lx[0], lx[-1] + 1e-12, n_blocks + 1)
    env_x, env_k = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        sel = (lx >= a) & (lx < b)
        if np.any(sel):
            j = np.argmax(kb[sel])
            env_x.append(lx[sel][j])
            env_k.append(kb[sel][j])
    env_k = np.asarray(env_k)
    if not math.isfinite(k_max) or env_k.size < 3:
        growth = math.inf if not math.isfinite(k_max) else 0.0
    else:
        slope = np.polyfit(np.asarray(env_x), env_k, 1)[0]
        growth = float(slope / max(np.mean(env_k), 1e-300))
    curve = RatioCurve(x, kb, k_max, growth, not math.isfinite(k_max))
    if growth <= cfg.ald_pass_growth:
        outcome = Outcome.PASS
    elif growth > cfg.ald_fail_growth:
        outcome = Outcome.FAIL
    else:
        outcome = Outcome.INCONCLUSIVE
    v = Verdict(Property.ALD, outcome, k_max, 1.0, _relative_error(k_max, 1.0), window, growth)
    return DiagnosticsReport(v, (curve,), {"growth": growth})


def tail_equivalence(f, g, target: float, cfg: VerdictConfig = DEFAULT_CONFIG
                     ) -> DiagnosticsReport:
    """``f(x) / g(x) -> target``."""
    fc = f.cont if isinstance(f, GeneralizedDensity) else f
    gc = g.cont if isinstance(g, GeneralizedDensity) else g
    hi = min(fc.x_max, gc.x_max)
    window, _, x, fx = _positive_readout(fc, cfg, hi)
    gx = gc.evaluate(x)
    if not np.any(gx > cfg.floor):
        raise WindowUnderflow("reference density underflows across the window")
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(gx > cfg.floor, fx / gx, np.nan)
    curve = make_curve(x, r)
    return DiagnosticsReport(judge(Property.TAIL_EQUIV, curve, float(target), window, cfg),
                             (curve,))


def compound_poisson_target(lam: float) -> float:
    """``lam / (1 - exp(-lam))``."""
    return lam / -math.expm1(-lam)


def steutel_ratio(lam: float, g: GridFunction, alpha: float,
                  cfg: VerdictConfig = DEFAULT_CONFIG) -> DiagnosticsReport:
    """Ratio of the continuous parts of the alpha-th convolution power of a
    compound Poisson law and of the law itself, target ``alpha``."""
    if not lam < math.log(2.0):
        raise HypothesisViolated(f"lambda={lam} violates lambda < log 2")
    if not alpha > 0:
        raise InvalidInput("alpha must be positive")
    base = compound_poisson_density(lam, g)
    cf = compound_poisson_cf(lam, g)
    powered = invert_cf(cf_power(cf, alpha), g.grid)
    fb = base.weighted()
    fa = powered.weighted()
    window, _, x, fx = _positive_readout(fb, cfg)
    r = fa.evaluate(x) / fx
    curve = make_curve(x, r)
    return DiagnosticsReport(judge(Property.STEUTEL, curve, float(alpha), window, cfg), (curve,),
                             {"lambda": lam, "alpha": alpha})


@dataclass(frozen=True, eq=False)
class LocalMassReport:
    """Interval masses ``F(x + Delta) = F(x + c) - F(x)`` and their ratios."""

    c: float
    equivalence: DiagnosticsReport  # F(x + Delta) / f(x) against c
    long_tail: RatioCurve  # F(x + y + Delta) / F(x + Delta)
    subexp: RatioCurve  # (F * F)(x + Delta) / F(x + Delta)


def interval_mass(f: GridFunction, x: np.ndarray, c: float) -> np.ndarray:
    """``F(x + c) - F(x)`` from right-cumulative grid sums."""
    x = np.asarray(x, dtype=float)
    out = f.grid_sf(x) - f.grid_sf(x + c)
    return np.maximum(out, 0.0)


def local_interval_mass(f: GridFunction, c: float, y: float = 1.0,
                        cfg: VerdictConfig = DEFAULT_CONFIG) -> LocalMassReport:
    if not c > 0:
        raise InvalidInput("interval length c must be positive")
    window, _, x, fx = _positive_readout(f, cfg, f.x_max - c - y)
    m = interval_mass(f, x, c)
    eq_curve = make_curve(x, m / fx)
    eq = DiagnosticsReport(judge(Property.LOCAL_MASS, eq_curve, float(c), window, cfg), (eq_curve,),
                           {"c": c})
    lt_curve = make_curve(x, interval_mass(f, x + y, c) / m)
    one_sided = f.x_min >= 0
    f2 = convolve_grid(f, f, (f.x_min, f.x_max) if one_sided else None)
    sx_curve = make_curve(x, interval_mass(f2, x, c) / m)
    return LocalMassReport(c, eq, lt_curve, sx_curve)


def insensitivity_scale(f: GridFunction, x: np.ndarray | None = None, rel: float = 0.01,
                        cfg: VerdictConfig = DEFAULT_CONFIG) -> tuple[np.ndarray, np.ndarray]:
    """Largest ``h`` with ``sup_{|y|<=h} |f(x+y) - f(x)| < rel f(x)`` at the
    read-out nodes (reporting only)."""
    if x is None:
        window = readout_window(f, cfg)
        idx = readout_indices(f, window, cfg)
    else:
        idx = np.clip(np.rint((np.asarray(x) - f.x_min) / f.dx).astype(np.int64), 0, f.n - 1)
    v = f.values
    hs = np.empty(idx.size)
    for j, i in enumerate(idx):
        ref = v[i]
        h = 0
        while True:
            lo, hi = i - h - 1, i + h + 1
            if lo < 0 or hi >= v.size:
                break
            if abs(v[lo] - ref) >= rel * ref or abs(v[hi] - ref) >= rel * ref:
                break
            h += 1
            if h > v.size:
                break
        hs[j] = h * f.dx
    return f.x[idx], hs


def run_property(name: str, f, cfg: VerdictConfig = DEFAULT_CONFIG, **kw) -> DiagnosticsReport:
    """Dispatch by property name (used by the command line)."""
    prop = Property(name)
    if prop is Property.LONG_TAILED:
        return long_tail_check(_cont(f), kw.get("y_set", (1.0, 5.0, 10.0)), cfg)
    if prop is Property.SUBEXP:
        return subexp_check(f, cfg)
    if prop is Property.SUBEXP_PLUS:
        return subexp_plus_check(f, cfg)
    if prop is Property.ANI:
        return ani_check(_cont(f), cfg)
    if prop is Property.ALD:
        return ald_check(_cont(f), cfg)
    if prop is Property.CONV_ROOT:
        return convolution_root_ratio(f, int(kw.get("n", 3)), cfg)
    if prop is Property.TAIL_EQUIV:
        return tail_equivalence(f, kw["reference"], kw["target"], cfg)
    if prop is Property.STEUTEL:
        return steutel_ratio(kw["lam"], kw["g"], kw.get("alpha", 0.5), cfg)
    if prop is Property.LOCAL_MASS:
        return local_interval_mass(_cont(f), kw.get("c", 1.0), cfg=cfg).equivalence
    raise InvalidInput(f"unknown property {name!r}")


def _cont(f) -> GridFunction:
    return f.cont if isinstance(f, GeneralizedDensity) else f
