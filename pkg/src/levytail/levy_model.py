"""Levy-density families, the Levy triplet, and grid discretization.

Densities live on uniform grids as *cell averages*: ``values[k]`` is the mass
of the cell ``[x_k - dx/2, x_k + dx/2)`` divided by ``dx``.  With that
convention ``dx * values.sum()`` is the exact grid mass, and lattice
convolutions of grid functions stay closed (the n-fold convolution of a
lattice variable is again a lattice variable), which is what the
series/inverse-series machinery relies on.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np
from scipy import integrate, stats

from .errors import (
    DivergentLevyMeasure,
    EmptyTail,
    GridTooCoarse,
    InvalidInput,
    InvalidParams,
)

DEFAULT_CUTOFF_EPS = 1e-3
DEFAULT_GRID_TOL = 5e-2

# Gauss-Legendre nodes for cell averages of families without a closed-form CDF.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridParams:
    x_min: float
    x_max: float
    dx: float

    def __post_init__(self):
        if not (self.dx > 0 and math.isfinite(self.dx)):
            raise InvalidInput(f"grid spacing must be positive, got {self.dx}")
        if not (math.isfinite(self.x_min) and math.isfinite(self.x_max)):
            raise InvalidInput("grid extent must be finite")
        if self.x_max < self.x_min:
            raise InvalidInput("x_max must be >= x_min")

    @property
    def n(self) -> int:
        return int(round((self.x_max - self.x_min) / self.dx)) + 1

    @property
    def nodes(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n)


@dataclass(frozen=True)
class TailKind:
    """Right-tail extrapolation policy beyond the last grid node.

    ``power_law`` carries the decay exponent of the density (f ~ x**-param),
    ``exponential`` the decay rate (f ~ exp(-param * x)).
    """

    kind: str = "none"
    param: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "power_law", "exponential"):
            raise InvalidInput(f"unknown tail kind {self.kind!r}")

    @classmethod
    def none(cls) -> "TailKind":
        return cls("none")

    @classmethod
    def power_law(cls, exponent: float) -> "TailKind":
        return cls("power_law", float(exponent))

    @classmethod
    def exponential(cls, rate: float) -> "TailKind":
        return cls("exponential", float(rate))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "param": self.param}


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Non-negative function on a uniform grid, with tail metadata.

    ``leakage`` is the mass (in the units of ``values``) lying outside the
    grid.  For a probability density ``mass() + leakage == 1``.
    """

    x_min: float
    dx: float
    values: np.ndarray
    tail_kind: TailKind = field(default_factory=TailKind)
    leakage: float = 0.0

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True).ravel()
        if vals.size == 0:
            raise InvalidInput("grid function needs at least one value")
        if not self.dx > 0:
            raise InvalidInput("dx must be positive")
        if np.any(~np.isfinite(vals)):
            raise InvalidInput("grid values must be finite")
        if np.any(vals < 0):
            raise InvalidInput("grid values must be non-negative")
        if self.leakage < 0:
            raise InvalidInput("leakage must be non-negative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "x_min", float(self.x_min))
        object.__setattr__(self, "dx", float(self.dx))
        object.__setattr__(self, "leakage", float(self.leakage))

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n)

    @property
    def x_max(self) -> float:
        return self.x_min + self.dx * (self.n - 1)

    @property
    def grid(self) -> GridParams:
        return GridParams(self.x_min, self.x_max, self.dx)

    def mass(self) -> float:
        return float(self.dx * self.values.sum())

    def trapezoid_mass(self) -> float:
        return float(integrate.trapezoid(self.values, dx=self.dx))

    def simpson_mass(self) -> float:
        if self.n < 3:
            return self.trapezoid_mass()
        return float(integrate.simpson(self.values, dx=self.dx))

    def total(self) -> float:
        return self.mass() + self.leakage

    def is_density(self, tol: float = 1e-6) -> bool:
        return abs(self.total() - 1.0) <= tol

    def with_values(self, values, **changes) -> "GridFunction":
        return replace(self, values=values, **changes)

    def scaled(self, c: float) -> "GridFunction":
        return replace(self, values=self.values * c, leakage=self.leakage * c)

    def index_of(self, x: float) -> float:
        return (x - self.x_min) / self.dx

    def evaluate(self, x) -> np.ndarray:
        """Linear interpolation on the grid, declared tail beyond ``x_max``,
        zero below ``x_min``."""
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.x, self.values, left=0.0, right=0.0)
        out = np.where(x < self.x_min - 1e-12 * self.dx, 0.0, out)
        beyond = x > self.x_max
        if np.any(beyond):
            out = np.where(beyond, self.extrapolate(np.where(beyond, x, self.x_max)), out)
        return out

    def extrapolate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v_last = self.values[-1]
        tk = self.tail_kind
        if tk.kind == "power_law" and self.x_max > 0:
            return v_last * (x / self.x_max) ** (-tk.param)
        if tk.kind == "exponential":
            return v_last * np.exp(-tk.param * (x - self.x_max))
        return np.zeros_like(x)

    def right_tail_mass(self, tilt: float = 0.0) -> float:
        """Mass of the declared tail continuation beyond the last cell,
        optionally weighted by ``exp(tilt * x)``.  Returns ``inf`` when the
        weighted tail does not integrate."""
        v = self.values[-1]
        if v == 0.0 or self.tail_kind.kind == "none":
            return 0.0
        tk = self.tail_kind
        xn = self.x_max
        if tk.kind == "exponential":
            rate = tk.param - tilt
            if rate <= 0:
                return math.inf
            rho = math.exp(-rate * self.dx)
            return v * math.exp(tilt * xn) * self.dx * rho / (1.0 - rho)
        # power law
        p = tk.param
        if tilt > 0 or (tilt == 0 and p <= 1) or xn <= 0:
            return math.inf
        edge = xn + 0.5 * self.dx
        if tilt == 0:
            return v * xn ** p * edge ** (1.0 - p) / (p - 1.0)
        val, _ = integrate.quad(lambda t: np.exp(tilt * t) * (t / xn) ** (-p), edge, np.inf)
        return v * val

    def cell_edges_cdf(self) -> np.ndarray:
        """Cumulative grid mass at the right edge of each cell."""
        return self.dx * np.cumsum(self.values)

    def _within_cell(self, x: np.ndarray):
        """Cell index, position ``t`` in cell units and the mass of cell k
        to the left of ``x`` under the linear reconstruction."""
        v = self.values
        dx = self.dx
        t = (x - (self.x_min - 0.5 * dx)) / dx
        k = np.clip(np.floor(t).astype(int), 0, self.n - 1)
        s = np.clip(t - k, 0.0, 1.0)  # position inside cell k, in [0, 1]
        vp = np.concatenate([[v[0]], v, [v[-1]]])
        slope = 0.5 * (vp[k + 2] - vp[k])  # per cell width
        # integral of v_k + slope*(u - 1/2) over u in [0, s]
        part = dx * (v[k] * s + 0.5 * slope * (s * s - s))
        return k, t, part

    def cdf(self, x) -> np.ndarray:
        """Cumulative mass from the left edge of the grid up to ``x``.

        Inside a cell the density is reconstructed linearly from the
        neighbouring cell averages (mass preserving).
        """
        x = np.asarray(x, dtype=float)
        cum = np.concatenate([[0.0], self.cell_edges_cdf()])
        k, t, part = self._within_cell(x)
        out = cum[k] + part
        out = np.where(t <= 0, 0.0, out)
        return np.where(t >= self.n, cum[-1], out)

    def grid_sf(self, x) -> np.ndarray:
        """Grid mass to the right of ``x`` (declared tail excluded).

        Summed from the right, so it keeps full relative precision deep in
        the tail where ``1 - cdf`` would cancel.
        """
        x = np.asarray(x, dtype=float)
        cell = self.dx * self.values
        rev = np.concatenate([np.cumsum(cell[::-1])[::-1], [0.0]])
        k, t, part = self._within_cell(x)
        out = rev[k + 1] + np.maximum(cell[k] - part, 0.0)
        out = np.where(t <= 0, rev[0], out)
        return np.where(t >= self.n, 0.0, out)

    def crop(self, lo: float | None = None, hi: float | None = None) -> "GridFunction":
        """Restrict to nodes in ``[lo, hi]``; dropped mass moves to leakage."""
        i0 = 0 if lo is None else max(0, int(math.ceil(self.index_of(lo) - 1e-9)))
        i1 = self.n if hi is None else min(self.n, int(math.floor(self.index_of(hi) + 1e-9)) + 1)
        if i1 <= i0:
            raise InvalidInput("crop window contains no grid node")
        if i0 == 0 and i1 == self.n:
            return self
        kept = self.values[i0:i1]
        dropped = self.dx * (self.values[:i0].sum() + self.values[i1:].sum())
        return GridFunction(self.x_min + i0 * self.dx, self.dx, kept, self.tail_kind,
                            self.leakage + dropped)

    def extend(self, x_lo: float, x_hi: float) -> "GridFunction":
        """Zero-pad so that the grid covers ``[x_lo, x_hi]`` (same lattice)."""
        n_left = max(0, int(math.ceil(self.index_of(x_lo) * -1 - 1e-9)))
        n_right = max(0, int(math.ceil((x_hi - self.x_max) / self.dx - 1e-9)))
        if n_left == 0 and n_right == 0:
            return self
        vals = np.concatenate([np.zeros(n_left), self.values, np.zeros(n_right)])
        return replace(self, x_min=self.x_min - n_left * self.dx, values=vals)

    def on_lattice(self, tol: float = 1e-9) -> bool:
        """True when the origin is a lattice node."""
        r = self.x_min / self.dx
        return abs(r - round(r)) <= tol * max(1.0, abs(r))

    def to_dict(self) -> dict:
        return {"x_min": self.x_min, "dx": self.dx, "values": self.values.tolist(),
                "tail_kind": self.tail_kind.to_dict(), "leakage": self.leakage}


def zero_grid_function(grid: GridParams) -> GridFunction:
    return GridFunction(grid.x_min, grid.dx, np.zeros(grid.n))


@dataclass(frozen=True, eq=False)
class GeneralizedDensity:
    """``atom * delta_0 + (1 - atom) * cont`` with ``cont`` a proper density."""

    atom: float
    cont: GridFunction

    def __post_init__(self):
        if not (-1e-12 <= self.atom <= 1 + 1e-12):
            raise InvalidInput(f"atom weight must lie in [0, 1], got {self.atom}")
        object.__setattr__(self, "atom", float(min(max(self.atom, 0.0), 1.0)))

    @property
    def q(self) -> float:
        return 1.0 - self.atom

    def total(self) -> float:
        return self.atom + self.q * self.cont.total()

    def weighted(self) -> GridFunction:
        """The continuous component as a sub-probability density q*f."""
        return self.cont.scaled(self.q)

    @classmethod
    def from_density(cls, f: GridFunction) -> "GeneralizedDensity":
        return cls(0.0, f)

    @classmethod
    def dirac(cls, grid: GridParams | None = None, dx: float = 1.0) -> "GeneralizedDensity":
        g = grid or GridParams(0.0, 0.0, dx)
        return cls(1.0, zero_grid_function(g))


# ---------------------------------------------------------------------------
# Families
# ---------------------------------------------------------------------------

class _Family:
    """Shape of a jump density.  Finite families are probability densities."""

    name = ""
    finite = True
    support = (-math.inf, math.inf)

    def pdf(self, x):
        raise NotImplementedError

    def cdf(self, x):  # closed form when available
        return None

    def ppf(self, u):
        return None

    def breakpoints(self) -> list[float]:
        return []

    def tail_kind(self, grid: GridParams | None = None) -> TailKind:
        return TailKind.none()

    def params(self) -> dict:
        raise NotImplementedError


class _ScipyFamily(_Family):
    _dist: Any = None

    def pdf(self, x):
        return self._dist.pdf(x)

    def cdf(self, x):
        return self._dist.cdf(x)

    def sf(self, x):
        return self._dist.sf(x)

    def ppf(self, u):
        return self._dist.ppf(u)


def _check_positive(**kw):
    for k, v in kw.items():
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise InvalidParams(f"{k} must be a positive finite number, got {v!r}")


class Exponential(_ScipyFamily):
    name = "exponential"
    support = (0.0, math.inf)

    def __init__(self, rate: float = 1.0):
        _check_positive(rate=rate)
        self.rate = float(rate)
        self._dist = stats.expon(scale=1.0 / rate)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, self.rate * np.exp(-self.rate * np.maximum(x, 0.0)), 0.0)

    def breakpoints(self):
        return [0.0]

    def tail_kind(self, grid=None):
        return TailKind.exponential(self.rate)

    def params(self):
        return {"rate": self.rate}


class Pareto(_ScipyFamily):
    name = "pareto"

    def __init__(self, alpha: float, x_floor: float = 1.0):
        _check_positive(alpha=alpha, x_floor=x_floor)
        self.alpha = float(alpha)
        self.x_floor = float(x_floor)
        self.support = (self.x_floor, math.inf)
        self._dist = stats.pareto(b=alpha, scale=x_floor)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.alpha * self.x_floor ** self.alpha * x ** (-self.alpha - 1.0)
        return np.where(x >= self.x_floor, out, 0.0)

    def breakpoints(self):
        return [self.x_floor]

    def tail_kind(self, grid=None):
        return TailKind.power_law(self.alpha + 1.0)

    def params(self):
        return {"alpha": self.alpha, "x_floor": self.x_floor}


def _fitted_power_law(family: _Family, grid: GridParams | None) -> TailKind:
    """Local log-log decay exponent of the density at the end of the grid."""
    if grid is None or grid.x_max <= 0:
        return TailKind.power_law(2.0)
    x2 = grid.x_max
    x1 = max(0.95 * x2, x2 - 5 * grid.dx, 1e-300)
    f1, f2 = float(family.pdf(x1)), float(family.pdf(x2))
    if f1 <= 0 or f2 <= 0 or x1 <= 0 or x2 <= x1:
        return TailKind.power_law(2.0)
    p = -(math.log(f2) - math.log(f1)) / (math.log(x2) - math.log(x1))
    return TailKind.power_law(max(p, 1.0 + 1e-6))


class Weibull(_ScipyFamily):
    name = "weibull"
    support = (0.0, math.inf)

    def __init__(self, shape: float, scale: float = 1.0):
        _check_positive(shape=shape, scale=scale)
        self.shape = float(shape)
        self.scale = float(scale)
        self._dist = stats.weibull_min(c=shape, scale=scale)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        u = np.maximum(x, 0.0) / self.scale
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = self.shape / self.scale * u ** (self.shape - 1.0) * np.exp(-u ** self.shape)
        return np.where((x >= 0) & np.isfinite(out), out, 0.0)

    def breakpoints(self):
        return [0.0]

    def tail_kind(self, grid=None):
        if self.shape >= 1:
            return TailKind.none()
        return _fitted_power_law(self, grid)

    def params(self):
        return {"shape": self.shape, "scale": self.scale}


class Lognormal(_ScipyFamily):
    name = "lognormal"
    support = (0.0, math.inf)

    def __init__(self, mu: float = 0.0, sigma: float = 1.0):
        _check_positive(sigma=sigma)
        self.mu = float(mu)
        self.sigma = float(sigma)
        self._dist = stats.lognorm(s=sigma, scale=math.exp(mu))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (np.log(x) - self.mu) / self.sigma
            out = np.exp(-0.5 * z * z) / (x * self.sigma * math.sqrt(2.0 * math.pi))
        return np.where(x > 0, out, 0.0)

    def breakpoints(self):
        return [0.0]

    def tail_kind(self, grid=None):
        return _fitted_power_law(self, grid)

    def params(self):
        return {"mu": self.mu, "sigma": self.sigma}


class Normal(_ScipyFamily):
    name = "normal"

    def __init__(self, mu: float = 0.0, sigma: float = 1.0):
        _check_positive(sigma=sigma)
        self.mu = float(mu)
        self.sigma = float(sigma)
        self._dist = stats.norm(loc=mu, scale=sigma)

    def pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mu) / self.sigma
        return np.exp(-0.5 * z * z) / (self.sigma * math.sqrt(2.0 * math.pi))

    def params(self):
        return {"mu": self.mu, "sigma": self.sigma}


class Uniform(_ScipyFamily):
    name = "uniform"

    def __init__(self, lo: float = 0.0, hi: float = 1.0):
        if not hi > lo:
            raise InvalidParams("uniform needs hi > lo")
        self.lo = float(lo)
        self.hi = float(hi)
        self.support = (self.lo, self.hi)
        self._dist = stats.uniform(loc=lo, scale=hi - lo)

    def breakpoints(self):
        return [self.lo, self.hi]

    def params(self):
        return {"lo": self.lo, "hi": self.hi}


class Zero(_Family):
    """The zero Levy density (no jumps)."""

    name = "zero"
    support = (0.0, 0.0)

    def pdf(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def cdf(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def params(self):
        return {}


class TwoSidedMixture(_Family):
    """``weight * left(-x) + (1 - weight) * right(x)``: the left component is
    reflected onto the negative half-line."""

    name = "two_sided_mixture"

    def __init__(self, left: _Family, right: _Family, weight: float = 0.5):
        if not (0.0 <= weight <= 1.0):
            raise InvalidParams("mixture weight must lie in [0, 1]")
        if not (left.finite and right.finite):
            raise InvalidParams("mixture components must be finite densities")
        self.left = left
        self.right = right
        self.weight = float(weight)
        self.support = (-left.support[1], right.support[1])

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return self.weight * self.left.pdf(-x) + (1.0 - self.weight) * self.right.pdf(x)

    def cdf(self, x):
        lc, rc = self.left.cdf(np.negative(x)), self.right.cdf(x)
        if lc is None or rc is None:
            return None
        return self.weight * (1.0 - lc) + (1.0 - self.weight) * rc

    def breakpoints(self):
        return sorted({-b for b in self.left.breakpoints()} | set(self.right.breakpoints()))

    def tail_kind(self, grid=None):
        return self.right.tail_kind(grid)

    def params(self):
        return {"left": family_to_dict(self.left), "right": family_to_dict(self.right),
                "weight": self.weight}


class Semistable(_Family):
    """Levy density ``x**(-gamma-1) * a(log x)`` on ``x > 0`` with a
    log-periodic modulation ``a`` of period ``log b``.

    Within one period (``x`` in ``[1, b)``) the modulation is
    ``-1/log|x - x0|`` for ``|x - x0| < 2*delta`` (zero at ``x0``), climbs
    linearly to 1 over a ramp of width ``delta/2`` and equals 1 elsewhere.
    """

    name = "semistable"
    finite = False
    support = (0.0, math.inf)

    def __init__(self, x0: float, b: float, delta: float, gamma: float):
        if not (1.0 < x0 < b):
            raise InvalidParams("semistable needs 1 < x0 < b")
        gap = min(x0 - 1.0, b - x0)
        if not (0.0 < 2.0 * delta < gap):
            raise InvalidParams("semistable needs 0 < 2*delta < (x0-1) ^ (b-x0)")
        if 2.0 * delta >= 1.0:
            raise InvalidParams("semistable dip needs 2*delta < 1")
        if not (0.0 < gamma < 1.0):
            raise InvalidParams("semistable needs gamma in (0, 1)")
        self.x0, self.b, self.delta, self.gamma = float(x0), float(b), float(delta), float(gamma)
        self.ramp = min(0.5 * delta, 0.5 * (gap - 2.0 * delta))
        self._edge = -1.0 / math.log(2.0 * delta)

    def base_point(self, x):
        """Map ``x > 0`` into the base period ``[1, b)``."""
        x = np.asarray(x, dtype=float)
        lb = math.log(self.b)
        with np.errstate(divide="ignore"):
            n = np.floor(np.log(np.where(x > 0, x, 1.0)) / lb)
        y = x / self.b ** n
        # guard the floor against rounding at period boundaries
        y = np.where(y >= self.b, y / self.b, y)
        y = np.where(y < 1.0, y * self.b, y)
        return y

    def modulation(self, x):
        """The periodic factor evaluated at ``log x``."""
        y = self.base_point(x)
        u = np.abs(y - self.x0)
        d2 = 2.0 * self.delta
        with np.errstate(divide="ignore"):
            dip = np.where(u > 1e-13 * self.x0, -1.0 / np.log(np.maximum(u, 1e-300)), 0.0)
        ramp = self._edge + (1.0 - self._edge) * (u - d2) / self.ramp
        out = np.where(u < d2, dip, np.where(u < d2 + self.ramp, ramp, 1.0))
        return out

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        pos = x > 0
        xs = np.where(pos, x, 1.0)
        with np.errstate(over="ignore", invalid="ignore"):
            return np.where(pos, xs ** (-self.gamma - 1.0) * self.modulation(xs), 0.0)

    def dip_points(self, x_lo: float, x_hi: float) -> list[float]:
        pts = []
        if x_hi <= 0:
            return pts
        lo = max(x_lo, 1e-300)
        n0 = math.floor(math.log(lo / self.x0) / math.log(self.b)) - 1
        n1 = math.ceil(math.log(x_hi / self.x0) / math.log(self.b)) + 1
        for n in range(n0, n1 + 1):
            p = self.x0 * self.b ** n
            if x_lo <= p <= x_hi:
                pts.append(p)
        return pts

    def tail_kind(self, grid=None):
        return TailKind.power_law(self.gamma + 1.0)

    def params(self):
        return {"x0": self.x0, "b": self.b, "delta": self.delta, "gamma": self.gamma}


class Tabulated(_Family):
    name = "tabulated"

    def __init__(self, table: GridFunction):
        self.table = table
        self.support = (table.x_min - 0.5 * table.dx,
                        math.inf if table.tail_kind.kind != "none" else table.x_max + 0.5 * table.dx)

    def pdf(self, x):
        return self.table.evaluate(x)

    def tail_kind(self, grid=None):
        return self.table.tail_kind

    def params(self):
        return {"x_min": self.table.x_min, "dx": self.table.dx,
                "values": self.table.values.tolist(),
                "tail_kind": self.table.tail_kind.to_dict()}


_FAMILIES: dict[str, Callable[..., _Family]] = {
    "exponential": Exponential,
    "pareto": Pareto,
    "weibull": Weibull,
    "lognormal": Lognormal,
    "normal": Normal,
    "uniform": Uniform,
    "zero": Zero,
    "semistable": Semistable,
}


def make_family(name: str, params: dict | None = None) -> _Family:
    params = dict(params or {})
    if name == "two_sided_mixture":
        return _make_mixture(params)
    if name == "tabulated":
        return _make_tabulated(params)
    if name not in _FAMILIES:
        raise InvalidInput(f"unknown family {name!r}")
    try:
        return _FAMILIES[name](**params)
    except TypeError as exc:
        raise InvalidInput(f"bad parameters for family {name!r}: {exc}") from None


def _sub_family(d: Any) -> _Family:
    if not isinstance(d, dict) or set(d) - {"family", "params"} or "family" not in d:
        raise InvalidInput("mixture component must be an object {family, params}")
    return make_family(d["family"], d.get("params", {}))


def _make_mixture(params: dict) -> _Family:
    unknown = set(params) - {"left", "right", "weight"}
    if unknown:
        raise InvalidInput(f"unknown mixture keys: {sorted(unknown)}")
    return TwoSidedMixture(_sub_family(params.get("left")), _sub_family(params.get("right")),
                           float(params.get("weight", 0.5)))


def _make_tabulated(params: dict) -> _Family:
    unknown = set(params) - {"x_min", "dx", "values", "tail_kind"}
    if unknown:
        raise InvalidInput(f"unknown tabulated keys: {sorted(unknown)}")
    if "tail_kind" not in params:
        raise InvalidInput("tabulated densities must declare tail_kind explicitly")
    tk = params["tail_kind"]
    if not isinstance(tk, dict) or set(tk) - {"kind", "param"}:
        raise InvalidInput("tail_kind must be an object {kind, param}")
    table = GridFunction(float(params["x_min"]), float(params["dx"]),
                         np.asarray(params["values"], dtype=float),
                         TailKind(tk["kind"], float(tk.get("param", 0.0))))
    return Tabulated(table)


def family_to_dict(fam: _Family) -> dict:
    return {"family": fam.name, "params": fam.params()}


# ---------------------------------------------------------------------------
# Jump-density specs and triplets
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class JumpDensitySpec:
    """A Levy density ``g = total_mass * family.pdf`` (finite activity) or
    the raw family density (infinite activity, ``total_mass = inf``)."""

    family: _Family
    total_mass: float = 1.0

    def __post_init__(self):
        tm = float(self.total_mass)
        if not self.family.finite:
            tm = math.inf
        elif not (tm >= 0 and math.isfinite(tm)):
            raise InvalidParams("total_mass must be finite and >= 0 for finite families")
        object.__setattr__(self, "total_mass", tm)

    @property
    def finite(self) -> bool:
        return math.isfinite(self.total_mass)

    @property
    def scale(self) -> float:
        return self.total_mass if self.finite else 1.0

    def __call__(self, x):
        return evaluate_jump_density(self, x)

    def to_dict(self) -> dict:
        d = family_to_dict(self.family)
        d["total_mass"] = self.total_mass if self.finite else "inf"
        return d


def jump_spec(family: str, total_mass: float = 1.0, **params) -> JumpDensitySpec:
    return JumpDensitySpec(make_family(family, params), total_mass)


@dataclass(frozen=True, eq=False)
class LevyTriplet:
    drift: float = 0.0
    gaussian: float = 0.0
    jumps: JumpDensitySpec = field(default_factory=lambda: JumpDensitySpec(Zero(), 0.0))
    cutoff_eps: float = DEFAULT_CUTOFF_EPS

    def __post_init__(self):
        if not self.gaussian >= 0:
            raise InvalidParams("gaussian coefficient b must be >= 0")
        if not self.cutoff_eps > 0:
            raise InvalidParams("cutoff_eps must be positive")

    @classmethod
    def compound_poisson(cls, jumps: JumpDensitySpec) -> "LevyTriplet":
        """Uncompensated compound Poisson: the drift cancels the compensator."""
        return cls(drift=compensator_drift(jumps), gaussian=0.0, jumps=jumps)

    @property
    def is_compound_poisson(self) -> bool:
        return self.gaussian == 0.0 and self.jumps.finite

    def to_dict(self) -> dict:
        return {"drift": self.drift, "gaussian": self.gaussian, "jumps": self.jumps.to_dict(),
                "cutoff_eps": self.cutoff_eps}


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def evaluate_jump_density(spec: JumpDensitySpec, x):
    """Levy density ``g(x) >= 0``; zero outside the support."""
    x_arr = np.asarray(x, dtype=float)
    out = spec.scale * np.asarray(spec.family.pdf(x_arr), dtype=float)
    out = np.where(np.isfinite(out) & (out > 0), out, 0.0)
    return float(out) if np.ndim(x) == 0 else out


def _split_points(spec: JumpDensitySpec, lo: float, hi: float) -> list[float]:
    fam = spec.family
    pts = [p for p in fam.breakpoints() if lo < p < hi]
    if isinstance(fam, Semistable):
        pts += [p for p in fam.dip_points(lo, hi) if lo < p < hi]
    return sorted(set(pts))


def _quad(fn, lo: float, hi: float, points=None) -> tuple[float, float]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if points and math.isfinite(lo) and math.isfinite(hi):
            return integrate.quad(fn, lo, hi, points=points, limit=400, epsabs=0, epsrel=1e-11)
        return integrate.quad(fn, lo, hi, limit=400, epsabs=0, epsrel=1e-11)


def _integrate_piece(fn, lo: float, hi: float, spec: JumpDensitySpec) -> float:
    pts = _split_points(spec, lo, hi)
    edges = [lo] + pts + [hi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b > a:
            val, _ = _quad(fn, a, b)
            total += val
    return total


def _dyadic_integral(fn, spec: JumpDensitySpec, start: float, outward: bool,
                     rtol: float = 1e-12, max_steps: int = 400) -> float:
    """Integrate ``fn`` over [start, inf) (outward) or (0, start] (inward)
    by dyadic blocks until a Cauchy criterion on the partial sums holds."""
    total = 0.0
    a = start
    small = 0
    growing, prev = 0, 0.0
    for _ in range(max_steps):
        b = 2.0 * a if outward else 0.5 * a
        lo, hi = (a, b) if outward else (b, a)
        piece = _integrate_piece(fn, lo, hi, spec)
        total += piece
        a = b
        # blocks that keep growing signal a power law too heavy to integrate
        growing = growing + 1 if piece > 0 and piece >= prev else 0
        prev = piece
        if growing >= 40:
            raise DivergentLevyMeasure("integral of (1 ^ x^2) nu(dx) diverges")
        if piece <= rtol * max(total, 1e-300) or total == 0.0 and piece == 0.0:
            small += 1
            if small >= 3:
                return total
        else:
            small = 0
    raise DivergentLevyMeasure("integral of (1 ^ x^2) nu(dx) does not stabilise")


def levy_integrability_check(spec: JumpDensitySpec) -> float:
    """Numerical value of the integral of ``min(1, x^2)`` against nu."""
    lo_s, hi_s = spec.family.support
    if isinstance(spec.family, Zero) or spec.scale == 0.0:
        return 0.0

    def near(x):
        return x * x * evaluate_jump_density(spec, x)

    def far(x):
        return evaluate_jump_density(spec, x)

    total = 0.0
    # positive side
    if hi_s > 0:
        a = max(lo_s, 0.0)
        if a < 1.0:
            if a > 0:
                total += _integrate_piece(near, a, 1.0, spec)
            else:
                total += _dyadic_integral(near, spec, 1.0, outward=False)
        b = max(a, 1.0)
        if hi_s > b:
            if math.isfinite(hi_s):
                total += _integrate_piece(far, b, hi_s, spec)
            else:
                total += _dyadic_integral(far, spec, b, outward=True)
    # negative side, by reflection
    if lo_s < 0:
        def near_n(x):
            return x * x * evaluate_jump_density(spec, -x)

        def far_n(x):
            return evaluate_jump_density(spec, -x)

        a = max(-hi_s, 0.0)
        refl = JumpDensitySpec(Zero(), 0.0)  # no split points on the reflected side
        if a < 1.0:
            total += (_integrate_piece(near_n, a, 1.0, refl) if a > 0
                      else _dyadic_integral(near_n, refl, 1.0, outward=False))
        b = max(a, 1.0)
        if -lo_s > b:
            total += (_integrate_piece(far_n, b, -lo_s, refl) if math.isfinite(lo_s)
                      else _dyadic_integral(far_n, refl, b, outward=True))
    if not math.isfinite(total):
        raise DivergentLevyMeasure("integral of (1 ^ x^2) nu(dx) is not finite")
    return total


def tail_mass(spec: JumpDensitySpec, x: float = 1.0) -> float:
    """``nu((x, inf))``."""
    fam = spec.family
    if isinstance(fam, Zero) or spec.scale == 0.0:
        return 0.0
    sf = getattr(fam, "sf", None)
    if fam.finite and sf is not None:
        return spec.scale * float(sf(x))
    cdf = fam.cdf(np.asarray(x))
    if fam.finite and cdf is not None:
        return spec.scale * (1.0 - float(cdf))
    if fam.support[1] <= x:
        return 0.0
    start = max(x, fam.support[0])
    if isinstance(fam, Tabulated):
        tab = fam.table
        body = _integrate_piece(lambda t: evaluate_jump_density(spec, t), start,
                                max(start, tab.x_max), spec) if tab.x_max > start else 0.0
        return body + spec.scale * tab.right_tail_mass()
    return _dyadic_integral(lambda t: evaluate_jump_density(spec, t), spec,
                            max(start, 1e-300), outward=True)


def _cell_masses(spec: JumpDensitySpec, lo_edges: np.ndarray, dx: float) -> np.ndarray:
    fam = spec.family
    hi_edges = lo_edges + dx
    if fam.finite:
        c_lo = fam.cdf(lo_edges)
        if c_lo is not None:
            sf = getattr(fam, "sf", None)
            if sf is not None:
                # sf differences keep relative precision deep in the right tail
                s_lo, s_hi = sf(lo_edges), sf(hi_edges)
                c_hi = fam.cdf(hi_edges)
                use_sf = lo_edges > 0
                m = np.where(use_sf, s_lo - s_hi, c_hi - c_lo)
            else:
                m = fam.cdf(hi_edges) - c_lo
            return spec.scale * np.maximum(m, 0.0)
    # Gauss-Legendre on each cell
    half = 0.5 * dx
    mids = lo_edges + half
    pts = mids[:, None] + half * _GL_NODES[None, :]
    vals = np.asarray(evaluate_jump_density(spec, pts.ravel()), dtype=float).reshape(pts.shape)
    return half * vals @ _GL_WEIGHTS


def discretize(spec: JumpDensitySpec | Callable, grid: GridParams,
               tail_kind: TailKind | None = None, check_tol: float = DEFAULT_GRID_TOL,
               chunk: int = 1 << 18) -> GridFunction:
    """Cell-average a density (or Levy density) onto ``grid``.

    ``spec`` may be a :class:`JumpDensitySpec` or a plain callable density
    (then ``tail_kind`` should be given and leakage is left at 0).
    Leakage is the mass outside the grid cells, computed from the closed-form
    CDF when the family has one.
    """
    if not isinstance(spec, JumpDensitySpec):
        return _discretize_callable(spec, grid, tail_kind or TailKind.none(), check_tol)
    n = grid.n
    lo_edges_all = grid.nodes - 0.5 * grid.dx
    vals = np.empty(n)
    for s in range(0, n, chunk):
        vals[s:s + chunk] = _cell_masses(spec, lo_edges_all[s:s + chunk], grid.dx) / grid.dx
    vals = np.where(np.isfinite(vals) & (vals > 0), vals, 0.0)
    fam = spec.family
    tk = tail_kind or fam.tail_kind(grid)
    leak = 0.0
    if spec.finite and not isinstance(fam, Zero):
        left_edge = grid.x_min - 0.5 * grid.dx
        right_edge = grid.x_max + 0.5 * grid.dx
        c_left = fam.cdf(np.asarray(left_edge))
        sf = getattr(fam, "sf", None)
        if c_left is not None:
            right = float(sf(right_edge)) if sf is not None else 1.0 - float(fam.cdf(np.asarray(right_edge)))
            leak = spec.scale * (float(c_left) + right)
        else:
            leak = max(spec.scale - grid.dx * vals.sum(), 0.0)
    elif not spec.finite:
        leak = math.inf
    gf = GridFunction(grid.x_min, grid.dx, vals, tk, max(leak, 0.0) if math.isfinite(leak) else 0.0)
    _check_coarseness(gf, check_tol)
    return gf


def _discretize_callable(fn, grid: GridParams, tail_kind: TailKind, check_tol: float) -> GridFunction:
    half = 0.5 * grid.dx
    pts = grid.nodes[:, None] + half * _GL_NODES[None, :]
    vals = half * np.asarray(fn(pts.ravel()), dtype=float).reshape(pts.shape) @ _GL_WEIGHTS / grid.dx
    vals = np.where(np.isfinite(vals) & (vals > 0), vals, 0.0)
    gf = GridFunction(grid.x_min, grid.dx, vals, tail_kind, 0.0)
    _check_coarseness(gf, check_tol)
    return gf


def sample_on_grid(fn, grid: GridParams, tail_kind: TailKind | None = None) -> GridFunction:
    """Point samples ``fn(x_k)`` (no cell averaging)."""
    vals = np.asarray(fn(grid.nodes), dtype=float)
    vals = np.where(np.isfinite(vals) & (vals > 0), vals, 0.0)
    return GridFunction(grid.x_min, grid.dx, vals, tail_kind or TailKind.none())


def _check_coarseness(gf: GridFunction, tol: float) -> None:
    if tol is None or gf.n < 5:
        return
    simp = gf.simpson_mass()
    trap = gf.trapezoid_mass()
    if simp <= 0:
        return
    if abs(trap - simp) / simp > tol:
        raise GridTooCoarse(
            f"trapezoid and Simpson grid masses differ by {abs(trap - simp) / simp:.3g} "
            f"(tolerance {tol:g}); refine dx")


def normalize_g1(spec: JumpDensitySpec, grid: GridParams) -> tuple[GridFunction, float]:
    """``g1 = 1{x>1} g / nu((1, inf))`` on ``grid`` and the tail mass."""
    nu1 = tail_mass(spec, 1.0)
    if not (nu1 > 0 and math.isfinite(nu1)):
        raise EmptyTail(f"nu((1, inf)) = {nu1} is not positive")
    lo_edges = np.maximum(grid.nodes - 0.5 * grid.dx, 1.0)
    hi_edges = grid.nodes + 0.5 * grid.dx
    width = np.maximum(hi_edges - lo_edges, 0.0)
    masses = np.zeros(grid.n)
    live = width > 0
    if np.any(live):
        idx = np.nonzero(live)[0]
        masses[idx] = _cell_masses_general(spec, lo_edges[idx], hi_edges[idx])
    masses = np.where(np.isfinite(masses) & (masses > 0), masses, 0.0)
    # cells centred at or below 1 hand their (x > 1) part to the next node
    below = grid.nodes <= 1.0
    if np.any(below) and not np.all(below):
        first = int(np.argmax(~below))
        masses[first] += masses[below].sum()
        masses[below] = 0.0
    vals = masses / grid.dx / nu1
    right_edge = grid.x_max + 0.5 * grid.dx
    leak = tail_mass(spec, max(right_edge, 1.0)) / nu1
    gf = GridFunction(grid.x_min, grid.dx, vals, spec.family.tail_kind(grid), leak)
    return gf, nu1


def _cell_masses_general(spec: JumpDensitySpec, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    fam = spec.family
    if fam.finite:
        sf = getattr(fam, "sf", None)
        if sf is not None:
            return spec.scale * np.maximum(sf(lo) - sf(hi), 0.0)
        c = fam.cdf(lo)
        if c is not None:
            return spec.scale * np.maximum(fam.cdf(hi) - c, 0.0)
    half = 0.5 * (hi - lo)
    mids = 0.5 * (hi + lo)
    pts = mids[:, None] + half[:, None] * _GL_NODES[None, :]
    vals = np.asarray(evaluate_jump_density(spec, pts.ravel()), dtype=float).reshape(pts.shape)
    return half * (vals @ _GL_WEIGHTS)


def power_moment(spec: JumpDensitySpec, k: int, lo: float, hi: float) -> float:
    """``integral over (lo, hi] of y^k nu(dy)``.

    For semistable densities a piece ``(0, a]`` is one period times a
    geometric series, since ``nu(b dy) = b^-gamma nu(dy)``; this avoids
    integrating across the infinitely many dips that accumulate at 0.
    """
    fam = spec.family
    if isinstance(fam, Zero) or spec.scale == 0.0:
        return 0.0
    lo, hi = max(lo, fam.support[0]), min(hi, fam.support[1])
    if hi <= lo:
        return 0.0
    f = lambda y: y ** k * evaluate_jump_density(spec, y)  # noqa: E731
    if lo < 0 < hi:
        return power_moment(spec, k, lo, 0.0) + power_moment(spec, k, 0.0, hi)
    if isinstance(fam, Semistable) and lo == 0.0:
        if not k > fam.gamma:
            raise DivergentLevyMeasure(f"y^{k} is not integrable against nu near 0")
        one_period = _integrate_piece(f, hi / fam.b, hi, spec)
        return one_period / (1.0 - fam.b ** -(k - fam.gamma))
    return _integrate_piece(f, lo, hi, spec)


def compensator_drift(spec: JumpDensitySpec) -> float:
    """``integral over |y| <= 1 of y nu(dy)``."""
    return power_moment(spec, 1, -1.0, 1.0)


def small_jump_variance(spec: JumpDensitySpec, eps: float) -> float:
    """``integral over |y| <= eps of y^2 nu(dy)``."""
    return power_moment(spec, 2, -eps, eps)


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------

_MODEL_KEYS = {"family", "params", "total_mass", "drift", "gaussian", "grid", "cutoff_eps"}


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Parsed model file.

    ``drift`` in the file is the Levy-Khintchine drift for infinite activity
    and the shift of the plain jump sum for finite activity.
    """

    triplet: LevyTriplet
    grid: GridParams | None
    cutoff_eps: float = DEFAULT_CUTOFF_EPS


def parse_model(data: Any) -> ModelSpec:
    """Strictly validate a model object (unknown keys are an error)."""
    if not isinstance(data, dict):
        raise InvalidInput("model must be a JSON object")
    unknown = set(data) - _MODEL_KEYS
    if unknown:
        raise InvalidInput(f"unknown model keys: {sorted(unknown)}")
    if "family" not in data:
        raise InvalidInput("model needs a 'family'")
    params = data.get("params", {})
    if not isinstance(params, dict):
        raise InvalidInput("'params' must be an object")
    try:
        fam = make_family(str(data["family"]), params)
        total_mass = data.get("total_mass", 1.0)
        if total_mass in ("inf", "infinity"):
            total_mass = math.inf
        jumps = JumpDensitySpec(fam, float(total_mass))
        grid = None
        if "grid" in data:
            g = data["grid"]
            if not isinstance(g, dict) or set(g) != {"x_min", "x_max", "dx"}:
                raise InvalidInput("'grid' must be an object with exactly x_min, x_max, dx")
            grid = GridParams(float(g["x_min"]), float(g["x_max"]), float(g["dx"]))
        eps = float(data.get("cutoff_eps", DEFAULT_CUTOFF_EPS))
        drift = float(data.get("drift", 0.0))
        # finite activity: drift shifts the plain sum of jumps, so the
        # compensator is added back to obtain the Levy-Khintchine drift
        if jumps.finite:
            drift += compensator_drift(jumps)
        triplet = LevyTriplet(drift, float(data.get("gaussian", 0.0)), jumps, eps)
    except (TypeError, ValueError, KeyError) as exc:
        if isinstance(exc, InvalidInput):
            raise
        raise InvalidInput(f"invalid model: {exc}") from None
    return ModelSpec(triplet, grid, eps)


def load_model(path) -> ModelSpec:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"malformed JSON in {path}: {exc}") from None
    except OSError as exc:
        raise InvalidInput(f"cannot read model file {path}: {exc}") from None
    return parse_model(data)
