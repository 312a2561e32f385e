"""A two-sided compound Poisson law whose absolutely continuous part is not
subexponential although its positive half is.

The positive half has the (normalized, restricted to x > 1) Levy density of
a semistable law with log-periodic dips; the negative half has jumps spread
uniformly over blocks ``(-2 b**n_k delta, -b**n_k delta]`` sitting exactly
one dip-width to the left of the dips.  Convolving the halves fills the
dips, so along ``b**n_k x0`` the ratio of the two-sided density to the
positive-half one is unbounded asymptotically.  On grids that fit in memory
the dips are narrow next to the typical jump, and multi-jump terms already
fill them in the positive half, so that ratio need not grow over the first
few k; ``g^{*2} / g`` shows the growth directly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .convolution import compound_poisson_density, convolve
from .diagnostics import DiagnosticsReport, ald_check
from .errors import GridInfeasible, InvalidParams
from .levy_model import (
    GeneralizedDensity,
    GridFunction,
    GridParams,
    JumpDensitySpec,
    Semistable,
    TailKind,
    _Family,
    discretize,
    normalize_g1,
)

MEMORY_BUDGET_NODES = 20_000_000


@dataclass(frozen=True)
class SemistableParams:
    x0: float = 1.5
    b: float = 2.0
    delta: float = 0.05
    gamma: float = 0.5
    n_k: tuple[int, ...] = (1, 2, 3)
    renormalize: bool = True

    def __post_init__(self):
        if not self.x0 > 1:
            raise InvalidParams("x0 must exceed 1")
        if not self.b > self.x0:
            raise InvalidParams("b must exceed x0")
        gap = min(self.x0 - 1.0, self.b - self.x0)
        if not 0 < 2 * self.delta < gap:
            raise InvalidParams("need 0 < 2 delta < (x0 - 1) ^ (b - x0)")
        if not 0 < self.gamma < 1:
            raise InvalidParams("gamma must lie in (0, 1)")
        nk = tuple(int(n) for n in self.n_k)
        if not nk or any(n < 1 for n in nk) or any(b <= a for a, b in zip(nk, nk[1:])):
            raise InvalidParams("n_k must be a strictly increasing sequence of positive integers")
        object.__setattr__(self, "n_k", nk)
        if self.block_sum() > 1.0 + 1e-12 and not self.renormalize:
            raise InvalidParams("sum of n_k**-0.5 exceeds 1; set renormalize=True")

    def block_sum(self) -> float:
        return float(sum(n ** -0.5 for n in self.n_k))

    def to_dict(self) -> dict:
        return {"x0": self.x0, "b": self.b, "delta": self.delta, "gamma": self.gamma,
                "n_k": list(self.n_k), "renormalize": self.renormalize}


DESK_PRESET = SemistableParams()


class NegativeBlocks(_Family):
    """Piecewise-constant density on ``(-2 b**n delta, -b**n delta]`` blocks."""

    name = "negative_blocks"

    def __init__(self, b: float, delta: float, n_k, weights):
        self.b, self.delta = float(b), float(delta)
        self.n_k = tuple(int(n) for n in n_k)
        self.weights = np.asarray(weights, dtype=float)
        self.lo = np.array([-2.0 * self.b ** n * self.delta for n in self.n_k])
        self.hi = np.array([-self.b ** n * self.delta for n in self.n_k])
        self.heights = self.weights / (self.hi - self.lo)
        self.support = (float(self.lo.min()), float(self.hi.max()))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for lo, hi, h in zip(self.lo, self.hi, self.heights):
            out = out + np.where((x > lo) & (x <= hi), h, 0.0)
        return out

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for lo, hi, h in zip(self.lo, self.hi, self.heights):
            out = out + h * np.clip(x - lo, 0.0, hi - lo)
        return out

    def sf(self, x):
        return float(self.weights.sum()) - self.cdf(x)

    def breakpoints(self):
        return sorted(set(self.lo.tolist()) | set(self.hi.tolist()))

    def params(self):
        return {"b": self.b, "delta": self.delta, "n_k": list(self.n_k),
                "weights": self.weights.tolist()}


def build_positive_levy(p: SemistableParams) -> JumpDensitySpec:
    """Semistable Levy density ``x**(-gamma-1) a(log x)`` on x > 0."""
    return JumpDensitySpec(Semistable(p.x0, p.b, p.delta, p.gamma))


def build_negative_levy(p: SemistableParams) -> JumpDensitySpec:
    """Block density on the negative half-line.

    Block k carries mass ``n_k**-0.5`` (divided by the block sum when the
    parameters ask for renormalization)."""
    w = np.array([n ** -0.5 for n in p.n_k])
    total = w.sum()
    if p.renormalize:
        w = w / total
        total = 1.0
    # family weights are normalized; total_mass carries the Levy mass
    fam = NegativeBlocks(p.b, p.delta, p.n_k, w / w.sum())
    return JumpDensitySpec(fam, float(total))


def block_masses(p: SemistableParams) -> np.ndarray:
    """Mass of every negative block, integrated from the density."""
    spec = build_negative_levy(p)
    fam = spec.family
    return spec.total_mass * np.array([fam.cdf(hi) - fam.cdf(lo) for lo, hi in zip(fam.lo, fam.hi)])


@dataclass(frozen=True, eq=False)
class FailureReport:
    params: SemistableParams
    points: list  # [k, x, ratio_f_fbar, ratio_g2_g]
    ald: DiagnosticsReport
    dx: float

    @property
    def ratio_f_fbar(self) -> np.ndarray:
        return np.array([p[2] for p in self.points])

    @property
    def ratio_g2_g(self) -> np.ndarray:
        return np.array([p[3] for p in self.points])

    def increasing(self) -> bool:
        a, b = self.ratio_f_fbar, self.ratio_g2_g
        return bool(np.all(np.diff(a) > 0) and np.all(np.diff(b) > 0))

    def to_dict(self) -> dict:
        return {"params": self.params.to_dict(), "dx": self.dx,
                "points": [[int(k), float(x), float(r1), float(r2)] for k, x, r1, r2 in self.points],
                "ald": self.ald.to_dict()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _reflect(f: GridFunction) -> GridFunction:
    return GridFunction(-f.x_max, f.dx, f.values[::-1], TailKind.none(), f.leakage)


def demonstrate_failure(p: SemistableParams = DESK_PRESET, k_max: int | None = None,
                        dx: float | None = None, ald_periods: int = 10,
                        budget: int = MEMORY_BUDGET_NODES) -> FailureReport:
    """Ratios ``f / fbar`` and ``g^{*2} / g`` at the dip points ``b**n_k x0``.

    Both halves are compound Poisson with rate 1; ``f`` is the continuous
    part of their convolution and ``fbar`` the continuous part of the
    positive half.  ``g = (g_+ + g_-) / 2`` with ``g_+`` the normalized
    positive jump density.
    """
    k_max = len(p.n_k) if k_max is None else int(k_max)
    if not 1 <= k_max <= len(p.n_k):
        raise InvalidParams("k_max must lie in [1, len(n_k)]")
    dx = dx if dx is not None else p.delta / 10.0
    ratio = p.delta / dx
    if abs(ratio - round(ratio)) > 1e-9 * ratio:
        raise InvalidParams("dx must divide delta")
    ns = p.n_k[:k_max]
    x_pts = [p.b ** n * p.x0 for n in ns]
    neg_extent = 2.0 * p.b ** max(p.n_k) * p.delta
    x_hi = 2.0 * max(x_pts) + 20.0 * neg_extent + 10.0
    x_hi = math.ceil(x_hi / dx) * dx
    ald_hi = p.b ** (max(ns) + ald_periods) * p.x0
    n_nodes = int(x_hi / dx) + int(ald_hi / dx) + int(20 * neg_extent / dx)
    if n_nodes > budget:
        raise GridInfeasible(f"grids need {n_nodes} nodes, above the budget {budget}")

    pos_spec = build_positive_levy(p)
    g_plus, _ = normalize_g1(pos_spec, GridParams(0.0, x_hi, dx))
    neg_spec = build_negative_levy(p)
    neg_grid = GridParams(0.0, math.ceil(20.0 * neg_extent / dx) * dx, dx)
    # reflect the negative jumps onto (0, inf), build the series, reflect back
    g_minus_refl = discretize(_reflected_spec(neg_spec), neg_grid, check_tol=None)
    g_minus_refl = g_minus_refl.scaled(1.0 / g_minus_refl.total())
    cp_plus = compound_poisson_density(1.0, g_plus)
    cp_minus_refl = compound_poisson_density(1.0, g_minus_refl)
    cp_minus = GeneralizedDensity(cp_minus_refl.atom, _reflect(cp_minus_refl.cont))
    joint = convolve(cp_minus, cp_plus)

    # g = (g_+ + g_-)/2 on one lattice, and its square by direct sums
    g_minus = _reflect(g_minus_refl)
    lo = g_minus.x_min
    n = int(round((g_plus.x_max - lo) / dx)) + 1
    vals = np.zeros(n)
    off_p = int(round((g_plus.x_min - lo) / dx))
    vals[off_p:off_p + g_plus.n] += 0.5 * g_plus.values
    vals[:g_minus.n] += 0.5 * g_minus.values
    g = GridFunction(lo, dx, vals)

    points = []
    for k, (nk, x) in enumerate(zip(ns, x_pts), start=1):
        f_x = float(joint.cont.evaluate(x)) * joint.q
        fbar_x = float(cp_plus.cont.evaluate(x)) * cp_plus.q
        g2 = float(_conv_point(g, x))
        gx = float(g.evaluate(x))
        # (1 - e^-2) f against (1 - e^-1) fbar, so the reference level is 1
        points.append([k, x, f_x / fbar_x, g2 / gx])

    g_ald = discretize(pos_spec, GridParams(1.0, math.ceil(ald_hi / dx) * dx, dx), check_tol=None)
    ald = ald_check(g_ald)
    return FailureReport(p, points, ald, dx)


def _conv_point(g: GridFunction, x: float) -> float:
    k = int(round((x - 2.0 * g.x_min) / g.dx))
    v = g.values
    i0 = max(0, k - (v.size - 1))
    i1 = min(v.size - 1, k)
    if i1 < i0:
        return 0.0
    return g.dx * float(np.dot(v[i0:i1 + 1], v[k - i1:k - i0 + 1][::-1]))


class _Reflected(_Family):
    def __init__(self, base: _Family):
        self.base = base
        self.name = base.name + "_reflected"
        self.support = (-base.support[1], -base.support[0])

    def pdf(self, x):
        return self.base.pdf(-np.asarray(x, dtype=float))

    def cdf(self, x):
        return 1.0 - self.base.cdf(-np.asarray(x, dtype=float))

    def breakpoints(self):
        return sorted(-b for b in self.base.breakpoints())

    def params(self):
        return self.base.params()


def _reflected_spec(spec: JumpDensitySpec) -> JumpDensitySpec:
    return JumpDensitySpec(_Reflected(spec.family), 1.0)
