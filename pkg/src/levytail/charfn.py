"""Characteristic functions: Levy-Khintchine exponents, Fourier inversion,
fractional powers and exponential tilting.

Two kinds of samples are used.

``window``
    Samples of an analytic characteristic function on a uniform frequency
    window ``z_j = z_0 + j dz``.  Inversion is the trapezoid rule for
    ``(2 pi)^-1 int exp(-izx) phi(z) dz``; the spacing ``dz`` is tied to the
    target grid (``dz * dx * P = 2 pi`` for an integer ``P``) so the sum folds
    onto one FFT of length ``P``.
``lattice``
    The discrete Fourier transform (in FFT order) of a lattice law through
    the origin, possibly evaluated on a circle of radius ``exp(-damping)``
    to suppress wrap-around.  Inversion is an exact inverse DFT.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import fft as sfft
from scipy import integrate

from .errors import (
    InvalidInput,
    NotAbsolutelyIntegrable,
    QuadratureFailure,
    TiltDiverges,
    ZeroCrossing,
)
from .levy_model import (
    GeneralizedDensity,
    GridFunction,
    GridParams,
    JumpDensitySpec,
    LevyTriplet,
    Semistable,
    TailKind,
    Zero,
    evaluate_jump_density,
    tail_mass,
)

EDGE_THRESHOLD = 1e-12
MAX_WINDOW_SAMPLES = 1 << 24
ZERO_THRESHOLD = 1e-14


@dataclass(frozen=True, eq=False)
class CfSamples:
    """Characteristic-function samples.

    ``exponent`` optionally carries a continuous logarithm of ``values``
    (the Levy-Khintchine exponent); when present it defines the phase.
    ``atom`` is the weight of a Dirac mass at 0 contained in the law.
    """

    z: np.ndarray
    values: np.ndarray
    kind: str = "window"
    atom: float = 0.0
    exponent: np.ndarray | None = None
    dx: float | None = None
    damping: float = 0.0
    hermitian: bool = False

    def __post_init__(self):
        if self.kind not in ("window", "lattice"):
            raise InvalidInput(f"unknown cf kind {self.kind!r}")
        z = np.asarray(self.z, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if z.shape != v.shape:
            raise InvalidInput("z and values must have the same shape")
        at0 = np.nonzero(z == 0.0)[0]
        if self.kind == "window" and at0.size and abs(v[at0[0]] - 1.0) > 1e-12:
            raise InvalidInput("a characteristic function equals 1 at z = 0")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "values", v)

    @property
    def dz(self) -> float:
        return float(self.z[1] - self.z[0]) if self.z.size > 1 else 0.0

    def _order(self) -> np.ndarray:
        """Indices sorted by frequency."""
        return np.argsort(self.z, kind="stable")

    @cached_property
    def phase_unwrapped(self) -> np.ndarray:
        """Continuous argument of ``values``, equal to 0 at ``z = 0``."""
        if self.exponent is not None:
            return np.asarray(self.exponent).imag.copy()
        order = self._order()
        zs = self.z[order]
        ang = np.angle(self.values[order])
        i0 = int(np.argmin(np.abs(zs)))
        out = np.empty_like(ang)
        right = np.unwrap(ang[i0:])
        left = np.unwrap(ang[i0::-1])
        if np.any(np.abs(np.diff(right)) >= 0.5 * math.pi) or \
                np.any(np.abs(np.diff(left)) >= 0.5 * math.pi):
            raise ZeroCrossing("phase steps exceed pi/2; refine the frequency grid")
        out[i0:] = right - right[0]
        out[:i0 + 1] = (left - left[0])[::-1]
        res = np.empty_like(out)
        res[order] = out
        return res

    def log_abs(self) -> np.ndarray:
        if self.exponent is not None:
            return np.asarray(self.exponent).real
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self.values))


# ---------------------------------------------------------------------------
# Levy-Khintchine exponents
# ---------------------------------------------------------------------------

def _quad(fn, a, b, **kw) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(fn, a, b, limit=500, epsabs=1e-14, epsrel=1e-12, **kw)
        except integrate.IntegrationWarning:
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err = integrate.quad(fn, a, b, limit=2000, epsabs=1e-13, epsrel=1e-10, **kw)
            if not math.isfinite(val) or err > 1e-7 * max(1.0, abs(val)):
                raise QuadratureFailure(f"adaptive quadrature did not converge on [{a}, {b}]")
    return val


def _pieces(spec: JumpDensitySpec, lo: float, hi: float) -> list[tuple[float, float]]:
    """Sub-intervals of [lo, hi] split at breakpoints of the family."""
    fam = spec.family
    s_lo, s_hi = fam.support
    lo, hi = max(lo, s_lo), min(hi, s_hi)
    if hi <= lo:
        return []
    pts = [p for p in fam.breakpoints() if lo < p < hi]
    if isinstance(fam, Semistable) and math.isfinite(hi):
        pts += [p for p in fam.dip_points(lo, hi) if lo < p < hi]
    edges = [lo] + sorted(set(pts)) + [hi]
    return [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


class _Side:
    """Jump density restricted to one half-line, written on (0, inf)."""

    def __init__(self, spec: JumpDensitySpec, sign: float):
        self.spec = spec
        self.sign = sign
        lo, hi = spec.family.support
        if sign > 0:
            self.lo, self.hi = max(lo, 0.0), max(hi, 0.0)
        else:
            self.lo, self.hi = max(-hi, 0.0), max(-lo, 0.0)

    def g(self, y):
        return evaluate_jump_density(self.spec, self.sign * y)

    def pieces(self, lo: float, hi: float):
        lo, hi = max(lo, self.lo), min(hi, self.hi)
        if hi <= lo:
            return []
        if self.sign > 0:
            return _pieces(self.spec, lo, hi)
        return [(-b, -a) for a, b in _pieces(self.spec, -hi, -lo)][::-1]


def _side_exponent(side: _Side, z: float, eta: float, moments: list[float]) -> complex:
    """``int_0^inf (e^{i s z y} - 1 - i s z y 1{y<=1}) g(s y) dy`` for one side."""
    s = side.sign
    re = im = 0.0
    # large jumps y > 1
    far = side.pieces(1.0, math.inf)
    for a, b in far:
        re += _quad(side.g, a, b, weight="cos", wvar=z)
        im += _quad(side.g, a, b, weight="sin", wvar=z)
    if far:
        re -= side_tail_mass(side)
    # moderate jumps eta < y <= 1
    for a, b in side.pieces(eta, 1.0):
        re += _quad(lambda y: (math.cos(z * y) - 1.0) * side.g(y), a, b)
        im += _quad(lambda y: (math.sin(z * y) - z * y) * side.g(y), a, b)
    # small jumps by Taylor series: sum_k (i z y)^k / k!
    term = complex(0.0)
    for k, m in enumerate(moments, start=2):
        term += (1j * z) ** k / math.factorial(k) * m
    return complex(re, s * im) + (term.real + 1j * s * term.imag)


def side_tail_mass(side: _Side) -> float:
    if side.sign > 0:
        return tail_mass(side.spec, 1.0)
    total = 0.0
    for a, b in side.pieces(1.0, math.inf):
        total += _quad(side.g, a, b)
    return total


def _small_moments(side: _Side, eta: float, k_max: int = 14) -> list[float]:
    out = []
    pieces = side.pieces(0.0, eta)
    for k in range(2, k_max + 1):
        out.append(sum(_quad(lambda y, k=k: y ** k * side.g(y), a, b) for a, b in pieces))
    return out


def levy_exponent(triplet: LevyTriplet, z, positive_only: bool = False) -> np.ndarray:
    """Levy-Khintchine exponent ``psi(z)`` with ``phi = exp(psi)``."""
    z_arr = np.atleast_1d(np.asarray(z, dtype=float))
    spec = triplet.jumps
    a = 0.0 if positive_only else triplet.drift
    b = 0.0 if positive_only else triplet.gaussian
    sides = []
    if not (isinstance(spec.family, Zero) or spec.scale == 0.0):
        lo, hi = spec.family.support
        if hi > 0:
            sides.append(_Side(spec, 1.0))
        if lo < 0 and not positive_only:
            sides.append(_Side(spec, -1.0))
    out = 1j * a * z_arr - 0.5 * b * b * z_arr ** 2
    out = out.astype(complex)
    moment_cache: dict[tuple[int, float], list[float]] = {}
    for idx, zz in enumerate(z_arr):
        if zz == 0.0:
            out[idx] = 0.0
            continue
        eta = min(1.0, 0.1 / abs(zz))
        for si, side in enumerate(sides):
            key = (si, eta)
            if key not in moment_cache:
                moment_cache[key] = _small_moments(side, eta)
            out[idx] += _side_exponent(side, zz, eta, moment_cache[key])
    return out


def levy_khintchine_cf(triplet: LevyTriplet, z_grid) -> CfSamples:
    """Characteristic function of the infinitely divisible law of ``triplet``."""
    z = np.atleast_1d(np.asarray(z_grid, dtype=float))
    psi = levy_exponent(triplet, z)
    return CfSamples(z, np.exp(psi), "window", 0.0, psi)


def spectrally_positive_cf(triplet: LevyTriplet, z_grid) -> CfSamples:
    """Characteristic function built from the positive jumps only (a = b = 0)."""
    z = np.atleast_1d(np.asarray(z_grid, dtype=float))
    psi = levy_exponent(triplet, z, positive_only=True)
    return CfSamples(z, np.exp(psi), "window", 0.0, psi)


# ---------------------------------------------------------------------------
# Analytic windows
# ---------------------------------------------------------------------------

def window_period(grid: GridParams, pad: float = 1.5) -> int:
    """FFT length ``P`` (in grid steps) of the folded trapezoid sum."""
    return int(sfft.next_fast_len(int(math.ceil(pad * grid.n)) + 1))


def cf_window(cf: Callable, grid: GridParams, threshold: float = EDGE_THRESHOLD,
              max_samples: int = MAX_WINDOW_SAMPLES, atom: float = 0.0,
              pad: float = 1.5, exponent: Callable | None = None) -> CfSamples:
    """Sample a vectorized characteristic function on ``z >= 0``.

    The window doubles until ``|phi - atom|`` stays below ``threshold`` over
    the outer half of the window.  The law is assumed real, so negative
    frequencies follow by conjugation.
    """
    period = window_period(grid, pad)
    dz = 2.0 * math.pi / (period * grid.dx)
    m = 256
    while True:
        z_edge = np.linspace(0.5 * m * dz, m * dz, 64)
        edge = np.max(np.abs(np.asarray(cf(z_edge)) - atom))
        if edge < threshold:
            break
        if 2 * m > max_samples:
            raise NotAbsolutelyIntegrable(
                f"|phi| = {edge:.3g} at z = {m * dz:.3g} after growing the window to the cap; "
                "the characteristic function may not be absolutely integrable")
        m *= 2
    z = dz * np.arange(m + 1)
    if exponent is not None:
        psi = np.asarray(exponent(z), dtype=complex)
        return CfSamples(z, np.exp(psi), "window", atom, psi, hermitian=True)
    return CfSamples(z, np.asarray(cf(z), dtype=complex), "window", atom, hermitian=True)


def gaussian_cf(mu: float = 0.0, sigma: float = 1.0) -> Callable:
    return lambda z: np.exp(1j * mu * np.asarray(z) - 0.5 * (sigma * np.asarray(z)) ** 2)


# ---------------------------------------------------------------------------
# Lattice transforms
# ---------------------------------------------------------------------------

def _lattice_size(k_hi: int, pad: int) -> int:
    return int(sfft.next_fast_len(pad * max(k_hi, 16)))


def lattice_cf(f: GeneralizedDensity, pad: int = 8, damping: float | None = None,
               size: int | None = None) -> CfSamples:
    """DFT of a lattice generalized density whose grid passes through 0.

    For one-sided laws the transform is taken on the circle of radius
    ``exp(-damping)`` (default: ``damping * span = log(1e3)``), which makes
    the wrap-around of mass beyond the transform length negligible.
    """
    g = f.cont
    dx = g.dx
    k0 = _lattice_offset(g)
    one_sided = k0 >= 0
    span = (k0 + g.n) if one_sided else abs(k0) + g.n
    size = size or _lattice_size(span, pad)
    if damping is None:
        damping = math.log(1e3) / max(span, 1) if one_sided else 0.0
    if not one_sided and damping != 0.0:
        raise InvalidInput("damping requires a one-sided lattice law")
    seq = np.zeros(size)
    pos = (k0 + np.arange(g.n)) % size
    np.add.at(seq, pos, f.q * g.values * dx)
    seq[0] += f.atom
    if damping:
        seq = seq * np.exp(-damping * np.arange(size))
    vals = sfft.fft(seq)
    z = 2.0 * math.pi * sfft.fftfreq(size, d=dx)
    return CfSamples(z, vals, "lattice", f.atom, None, dx=dx, damping=damping)


def _lattice_offset(g: GridFunction) -> int:
    r = g.x_min / g.dx
    k = int(round(r))
    if abs(r - k) > 1e-7 * max(1.0, abs(r)):
        raise InvalidInput("lattice transforms need a grid through the origin")
    return k


def compound_poisson_cf(lam: float, g: GridFunction, pad: int = 8) -> CfSamples:
    """Lattice cf ``exp(lam (G - 1))`` of a compound Poisson law with jump
    density ``g`` (the exponent is kept, so fractional powers are exact)."""
    base = lattice_cf(GeneralizedDensity(0.0, g), pad)
    psi = lam * (base.values - 1.0)
    return CfSamples(base.z, np.exp(psi), "lattice", math.exp(-lam), psi, dx=base.dx,
                     damping=base.damping)


# ---------------------------------------------------------------------------
# Inversion
# ---------------------------------------------------------------------------

def invert_cf_to_density(cf: CfSamples, grid: GridParams, report: dict | None = None,
                         threshold: float = EDGE_THRESHOLD) -> GridFunction:
    """Density of the absolutely continuous part, normalized to a proper
    density when the law has an atom."""
    gd = invert_cf(cf, grid, report, threshold)
    return gd.cont


def invert_cf(cf: CfSamples, grid: GridParams, report: dict | None = None,
              threshold: float = EDGE_THRESHOLD) -> GeneralizedDensity:
    """Invert samples to ``atom * delta + q * f`` on ``grid``."""
    if cf.kind == "lattice":
        raw = _invert_lattice(cf, grid)
    else:
        raw = _invert_window(cf, grid, threshold)
    neg = raw < 0
    clamped = float(grid.dx * -raw[neg].sum())
    raw = np.where(neg, 0.0, raw)
    if report is not None:
        report["clamped"] = clamped
    q = 1.0 - cf.atom
    if q <= 0:
        return GeneralizedDensity(1.0, GridFunction(grid.x_min, grid.dx, np.zeros(grid.n)))
    vals = raw / q
    leak = max(0.0, 1.0 - grid.dx * vals.sum())
    return GeneralizedDensity(cf.atom, GridFunction(grid.x_min, grid.dx, vals, TailKind.none(), leak))


def _invert_lattice(cf: CfSamples, grid: GridParams) -> np.ndarray:
    size = cf.z.size
    dx = cf.dx
    if abs(dx - grid.dx) > 1e-12 * dx:
        raise InvalidInput("grid spacing must match the lattice spacing")
    seq = sfft.ifft(cf.values).real
    if cf.damping:
        seq = seq * np.exp(cf.damping * np.arange(size))
    seq[0] -= cf.atom
    k0 = int(round(grid.x_min / dx))
    if abs(grid.x_min / dx - k0) > 1e-7 * max(1.0, abs(k0)):
        raise InvalidInput("grid must pass through the origin of the lattice")
    ks = k0 + np.arange(grid.n)
    if cf.damping and (np.any(ks < 0) or np.any(ks >= size)):
        raise InvalidInput("grid exceeds the damped lattice window")
    return seq[ks % size] / dx


def _invert_window(cf: CfSamples, grid: GridParams, threshold: float) -> np.ndarray:
    z, v = cf.z, cf.values - cf.atom
    dz = cf.dz
    if dz <= 0:
        raise InvalidInput("need at least two frequency samples")
    order = np.argsort(np.abs(z))
    edge = np.max(np.abs(v[order[-max(2, z.size // 64):]]))
    if edge >= threshold:
        raise NotAbsolutelyIntegrable(
            f"|phi| = {edge:.3g} at the window edge exceeds {threshold:g}")
    p_real = 2.0 * math.pi / (dz * grid.dx)
    period = int(round(p_real))
    if abs(p_real - period) > 1e-6 * p_real or period < grid.n:
        raise InvalidInput("frequency spacing is not commensurate with the grid")
    w = np.ones(z.size)
    w[0] = w[-1] = 0.5
    j = np.rint((z - z[0]) / dz).astype(np.int64)
    # fold sum_j w_j v_j exp(-i z_j x_k) onto an FFT of length `period`
    coef = w * v * np.exp(-1j * (z - z[0]) * grid.x_min)
    folded = np.zeros(period, dtype=complex)
    np.add.at(folded, j % period, coef) if z.size < 4 * period else _fold(folded, j % period, coef)
    k = np.arange(grid.n)
    x = grid.x_min + grid.dx * k
    s = sfft.fft(folded)[k] * np.exp(-1j * z[0] * x)
    if cf.hermitian:
        if z[0] != 0.0:
            raise InvalidInput("hermitian samples must start at z = 0")
        return (dz / math.pi) * s.real
    return (dz / (2.0 * math.pi)) * s.real


def _fold(out: np.ndarray, idx: np.ndarray, coef: np.ndarray) -> None:
    out += np.bincount(idx, weights=coef.real, minlength=out.size)
    out += 1j * np.bincount(idx, weights=coef.imag, minlength=out.size)


# ---------------------------------------------------------------------------
# Powers and tilts
# ---------------------------------------------------------------------------

def cf_power(cf: CfSamples, alpha: float) -> CfSamples:
    """``phi ** alpha`` through the continuous logarithm anchored at z = 0."""
    if not alpha > 0:
        raise InvalidInput("alpha must be positive")
    if cf.exponent is None and np.min(np.abs(cf.values)) < ZERO_THRESHOLD:
        raise ZeroCrossing("characteristic function too close to zero for a continuous log")
    log_v = cf.log_abs() + 1j * cf.phase_unwrapped
    psi = alpha * log_v
    atom = cf.atom ** alpha if cf.atom > 0 else 0.0
    return CfSamples(cf.z, np.exp(psi), cf.kind, atom, psi, dx=cf.dx, damping=cf.damping,
                     hermitian=cf.hermitian)


def exponential_tilt(f: GridFunction, gamma: float) -> GridFunction:
    """``exp(gamma x) f(x) / int exp(gamma x) f(x) dx`` on the grid.

    The normalizing integral includes the declared right-tail continuation.
    """
    if gamma == 0.0:
        return f
    tk = f.tail_kind
    if tk.kind == "power_law" and gamma > 0:
        raise TiltDiverges("exponential tilt of a power-law tail diverges for gamma > 0")
    if tk.kind == "exponential" and gamma >= tk.param:
        raise TiltDiverges(f"exponential tilt diverges: gamma={gamma} >= rate={tk.param}")
    x = f.x
    shift = gamma * x.max() if gamma > 0 else gamma * x.min()
    w = np.exp(gamma * x - shift)
    vals = f.values * w
    tail = f.right_tail_mass(tilt=gamma)
    if not math.isfinite(tail):
        raise TiltDiverges("tilted tail mass is not finite")
    tail = tail * math.exp(-shift)
    c = f.dx * vals.sum() + tail
    if not c > 0:
        raise TiltDiverges("tilted mass vanishes")
    if tk.kind == "exponential":
        new_tk = TailKind.exponential(tk.param - gamma)
    else:
        new_tk = tk
    return GridFunction(f.x_min, f.dx, vals / c, new_tk, tail / c)
