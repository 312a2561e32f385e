"""Convolution algebra on generalized densities.

All convolutions are linear (zero-padded) FFT convolutions of lattice
arrays.  Before transforming, both arrays are multiplied by a common
exponential index weight ``exp(s * k)``; since
``(a * b)_k exp(s k) = sum_i a_i exp(s i) b_{k-i} exp(s (k-i))`` the weighting
is exact, but it flattens decaying tails so that FFT round-off stays relative
to the local magnitude instead of the global maximum.  The plain transform is
kept wherever its round-off bound is the smaller one (bodies that are not
monotone, such as a centred Gaussian).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import (
    ClampTooLarge,
    IncompatibleGrids,
    InvalidInput,
    SeriesDiverges,
    TruncationInsufficient,
)
from .levy_model import GeneralizedDensity, GridFunction, TailKind

SERIES_TOL = 1e-12
HARD_CAP = 200
CLAMP_TOL = 1e-9
_MAX_TILT_EXPONENT = 600.0


# ---------------------------------------------------------------------------
# Low-level lattice convolution
# ---------------------------------------------------------------------------

def _next_pow2(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


def _decay_rate(a: np.ndarray) -> float:
    """Average log-decay per index from the peak to the last positive entry."""
    pos = np.nonzero(a > 0)[0]
    if pos.size < 2:
        return 0.0
    i_max = int(np.argmax(a))
    j = int(pos[-1])
    if j <= i_max:
        return 0.0
    return max(0.0, math.log(a[i_max] / a[j]) / (j - i_max))


def lattice_convolve(a: np.ndarray, b: np.ndarray, tilt: float | None = None) -> np.ndarray:
    """Full linear convolution ``c_k = sum_i a_i b_{k-i}`` of length n+m-1."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n, m = a.size, b.size
    length = n + m - 1
    if min(n, m) <= 32:
        return np.convolve(a, b)
    if tilt is None:
        tilt = min(_decay_rate(a), _decay_rate(b))
    tilt = min(tilt, _MAX_TILT_EXPONENT / length)
    size = _next_pow2(length)
    plain = np.fft.irfft(np.fft.rfft(a, size) * np.fft.rfft(b, size), size)[:length]
    if not tilt > 0:
        return plain
    aw = a * np.exp(tilt * np.arange(n))
    bw = b * np.exp(tilt * np.arange(m))
    k = np.arange(length)
    tilted = np.fft.irfft(np.fft.rfft(aw, size) * np.fft.rfft(bw, size), size)[:length]
    tilted *= np.exp(-tilt * k)
    # round-off scales with the product of the input maxima; keep, node by
    # node, whichever transform has the smaller error bound
    log_plain = math.log(np.abs(a).max() * np.abs(b).max() + 1e-300)
    log_tilt = math.log(np.abs(aw).max() * np.abs(bw).max() + 1e-300) - tilt * k
    return np.where(log_tilt < log_plain, tilted, plain)


def _clamp(values: np.ndarray, dx: float) -> tuple[np.ndarray, float]:
    neg = values < 0
    clamped = float(dx * -values[neg].sum()) if np.any(neg) else 0.0
    if clamped > CLAMP_TOL:
        raise ClampTooLarge(f"FFT round-off produced {clamped:.3g} negative mass")
    return np.where(neg, 0.0, values), clamped


def _check_dx(f: GridFunction, g: GridFunction) -> float:
    if abs(f.dx - g.dx) > 1e-12 * max(f.dx, g.dx):
        raise IncompatibleGrids(f"grid spacings differ: {f.dx!r} vs {g.dx!r}")
    return f.dx


def _offset(x_min: float, dx: float) -> int:
    r = x_min / dx
    k = int(round(r))
    if abs(r - k) > 1e-7 * max(1.0, abs(r)):
        raise IncompatibleGrids("grids do not share a lattice through the origin")
    return k


def _aligned(x1: float, x2: float, dx: float) -> bool:
    r = (x1 - x2) / dx
    return abs(r - round(r)) <= 1e-7 * max(1.0, abs(r))


def convolve_grid(f: GridFunction, g: GridFunction, window: tuple[float, float] | None = None,
                  tilt: float | None = None) -> GridFunction:
    """Convolution ``f * g`` of two grid functions.

    ``window`` optionally restricts the output to nodes in ``[lo, hi]``;
    mass dropped by the restriction is added to the leakage.
    """
    dx = _check_dx(f, g)
    c = dx * lattice_convolve(f.values, g.values, tilt)
    c, _ = _clamp(c, dx)
    x0 = f.x_min + g.x_min
    out_tail = _combine_tails(f.tail_kind, g.tail_kind)
    leak = f.total() * g.total() - dx * c.sum()
    h = GridFunction(x0, dx, c, out_tail, max(leak, 0.0))
    if window is not None:
        h = h.crop(*window)
    return h


def _combine_tails(a: TailKind, b: TailKind) -> TailKind:
    """Tail of a convolution: the heavier of the two declared tails."""
    order = {"none": 0, "exponential": 1, "power_law": 2}
    if order[a.kind] != order[b.kind]:
        return a if order[a.kind] > order[b.kind] else b
    if a.kind == "power_law":
        return TailKind.power_law(min(a.param, b.param))
    if a.kind == "exponential":
        return TailKind.exponential(min(a.param, b.param))
    return a


# ---------------------------------------------------------------------------
# Generalized densities
# ---------------------------------------------------------------------------

def _sum_components(parts: list[tuple[float, GridFunction]], dx: float) -> np.ndarray | None:
    """Place weighted grid functions on their common lattice and add them."""
    parts = [(w, gf) for w, gf in parts if w != 0.0]
    if not parts:
        return None
    ref = parts[0][1].x_min
    for _, gf in parts[1:]:
        if not _aligned(gf.x_min, ref, dx):
            raise IncompatibleGrids("components of the convolution lie on different lattices")
    lo = min(gf.x_min for _, gf in parts)
    offs = [int(round((gf.x_min - lo) / dx)) for _, gf in parts]
    n = max(o + gf.n for o, (_, gf) in zip(offs, parts))
    out = np.zeros(n)
    for o, (w, gf) in zip(offs, parts):
        out[o:o + gf.n] += w * gf.values
    return lo, out


def convolve(f: GeneralizedDensity, g: GeneralizedDensity,
             window: tuple[float, float] | None = None) -> GeneralizedDensity:
    """Convolution of ``p_f delta + q_f f`` with ``p_g delta + q_g g``.

    Atoms multiply exactly; the continuous part is
    ``p_f q_g g + q_f p_g f + q_f q_g (f * g)`` renormalized by ``1 - p_f p_g``.
    """
    dx = _check_dx(f.cont, g.cont)
    pf, qf, pg, qg = f.atom, f.q, g.atom, g.q
    atom = pf * pg
    q = 1.0 - atom
    total = f.total() * g.total()
    parts = []
    if pf * qg > 0:
        parts.append((pf * qg, g.cont))
    if qf * pg > 0:
        parts.append((qf * pg, f.cont))
    if qf * qg > 0:
        parts.append((qf * qg, convolve_grid(f.cont, g.cont)))
    summed = _sum_components(parts, dx)
    if summed is None or q <= 0:
        return GeneralizedDensity(atom, GridFunction(0.0, dx, np.zeros(1)))
    lo, vals = summed
    tails = [gf.tail_kind for _, gf in parts]
    tk = tails[0]
    for t in tails[1:]:
        tk = _combine_tails(tk, t)
    vals = vals / q
    leak = (total - atom - q * dx * vals.sum()) / q
    cont = GridFunction(lo, dx, vals, tk, max(leak, 0.0))
    if window is not None:
        cont = cont.crop(*window)
    return GeneralizedDensity(atom, cont)


def nfold(f: GeneralizedDensity, n: int, window: tuple[float, float] | None = None
          ) -> GeneralizedDensity:
    """``f^{*n}`` by repeated squaring.

    With ``window`` the intermediate results are restricted too, which is
    exact for one-sided densities (``x_min >= 0``) when the window starts at
    or below the support.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidInput("n must be a positive integer")
    result = None
    base = f
    k = int(n)
    while True:
        if k & 1:
            result = base if result is None else convolve(result, base, window)
        k >>= 1
        if not k:
            break
        base = convolve(base, base, window)
    return result


def nfold_sequential(f: GeneralizedDensity, n: int,
                     window: tuple[float, float] | None = None) -> GeneralizedDensity:
    """``f^{*n}`` by ``n - 1`` successive convolutions (reference path)."""
    if n < 1:
        raise InvalidInput("n must be a positive integer")
    out = f
    for _ in range(n - 1):
        out = convolve(out, f, window)
    return out


# ---------------------------------------------------------------------------
# Compound Poisson series and its inverse
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SeriesTruncation:
    n_max: int
    tail_bound: float

    def __post_init__(self):
        if self.n_max < 1:
            raise InvalidInput("n_max must be >= 1")

    @classmethod
    def poisson(cls, lam: float, tol: float = SERIES_TOL, cap: int = HARD_CAP
                ) -> "SeriesTruncation":
        """Smallest ``N`` with ``sum_{n>N} lam^n/n! < tol``."""
        if not lam > 0:
            raise InvalidInput("lambda must be positive")
        for n in range(1, cap + 1):
            bound = poisson_tail(lam, n)
            if bound < tol:
                return cls(n, bound)
        raise TruncationInsufficient(
            f"Poisson series tail at n={cap} is {poisson_tail(lam, cap):.3g} >= {tol:g}")

    @classmethod
    def geometric(cls, r: float, tol: float = SERIES_TOL, cap: int = HARD_CAP
                  ) -> "SeriesTruncation":
        """Smallest ``N`` with ``sum_{n>N} r^n/n < tol`` (requires r < 1)."""
        if not 0 <= r < 1:
            raise SeriesDiverges(f"geometric ratio {r} is not below 1")
        for n in range(1, cap + 1):
            bound = r ** (n + 1) / ((n + 1) * (1.0 - r))
            if bound < tol:
                return cls(n, bound)
        raise TruncationInsufficient(
            f"geometric series tail at n={cap} is {r ** (cap + 1) / ((cap + 1) * (1 - r)):.3g}")


def poisson_tail(lam: float, n: int) -> float:
    """``sum_{k>n} lam^k / k!`` computed without cancellation."""
    return float(math.exp(lam) * stats.poisson.sf(n, lam))


def _one_sided(g: GridFunction) -> bool:
    return g.x_min >= -1e-12 * g.dx


def compound_poisson_density(lam: float, g: GridFunction,
                             trunc: SeriesTruncation | None = None) -> GeneralizedDensity:
    """Law of a compound Poisson sum with rate ``lam`` and jump density ``g``.

    Returns the atom ``exp(-lam)`` at 0 and the continuous part
    ``(e^lam - 1)^-1 sum_{n=1}^{N} lam^n/n! g^{*n}``.  For one-sided ``g`` the
    continuous part lives on ``[g.x_min, g.x_max]`` and is exact there up to
    the series truncation; two-sided ``g`` keeps every convolution in full.
    """
    if not (lam > 0 and math.isfinite(lam)):
        raise InvalidInput("lambda must be positive and finite")
    if trunc is None:
        trunc = SeriesTruncation.poisson(lam)
    elif trunc.n_max > HARD_CAP:
        raise TruncationInsufficient(f"n_max={trunc.n_max} exceeds the hard cap {HARD_CAP}")
    elif trunc.tail_bound >= SERIES_TOL and poisson_tail(lam, trunc.n_max) >= SERIES_TOL:
        raise TruncationInsufficient("the supplied truncation does not meet the series tolerance")
    dx = g.dx
    one_sided = _one_sided(g)
    if one_sided:
        _offset(g.x_min, dx)
        window = (g.x_min, g.x_max)
    else:
        window = None
    em1 = math.expm1(lam)
    # accumulate sum_n w_n g^{*n} on a growing lattice window
    acc_lo = g.x_min
    acc = np.zeros(g.n)
    power = g
    log_w = math.log(lam)
    for n in range(1, trunc.n_max + 1):
        if n > 1:
            power = convolve_grid(power, g, window)
            log_w += math.log(lam) - math.log(n)
        w = math.exp(log_w) / em1
        off = int(round((power.x_min - acc_lo) / dx))
        end = off + power.n
        if end > acc.size:
            acc = np.concatenate([acc, np.zeros(end - acc.size)])
        acc[off:end] += w * power.values
    mass = dx * acc.sum()
    cont = GridFunction(acc_lo, dx, acc, g.tail_kind, max(0.0, 1.0 - mass))
    return GeneralizedDensity(math.exp(-lam), cont)


def compound_poisson_truncation(lam: float) -> SeriesTruncation:
    return SeriesTruncation.poisson(lam)


def _lattice_fft_layout(f: GridFunction) -> tuple[int, int, bool]:
    """Offset of the first node and whether the support is one-sided."""
    k0 = _offset(f.x_min, f.dx)
    return k0, f.n, k0 >= 0


def recover_jump_density(f1: GridFunction, lam: float, method: str = "closed_form",
                         tol: float = SERIES_TOL, report: dict | None = None) -> GridFunction:
    """Recover the jump density ``g`` of a compound Poisson law from the
    continuous part ``f1`` of its law.

    ``lam * g = -sum_{n>=1} n^-1 (1 - e^lam)^n f1^{*n}`` converges for
    ``lam < log 2``.  The default method sums the series exactly in the
    transform domain, ``lam * G = log(1 + (e^lam - 1) F1)``, on a damped
    lattice DFT; ``method="series"`` sums explicit convolution powers with the
    a priori geometric truncation (capped at 200 terms).

    ``report`` (if given) receives ``clamped`` and ``n_terms`` entries.
    """
    if not (lam > 0 and math.isfinite(lam)):
        raise InvalidInput("lambda must be positive and finite")
    if lam >= math.log(2.0):
        raise SeriesDiverges(f"inverse series diverges for lambda={lam} >= log 2")
    c = math.expm1(lam)
    dx = f1.dx
    if method == "series":
        trunc = SeriesTruncation.geometric(c, tol)
        vals, n_terms = _inverse_series(f1, lam, trunc.n_max)
    elif method == "closed_form":
        vals = _inverse_closed_form(f1, lam)
        n_terms = 0
    else:
        raise InvalidInput(f"unknown method {method!r}")
    neg = vals < 0
    clamped = float(dx * -vals[neg].sum())
    vals = np.where(neg, 0.0, vals)
    if report is not None:
        report["clamped"] = clamped
        report["n_terms"] = n_terms
    leak = max(0.0, 1.0 - dx * vals.sum())
    return GridFunction(f1.x_min, dx, vals, f1.tail_kind, leak)


def _inverse_series(f1: GridFunction, lam: float, n_max: int) -> tuple[np.ndarray, int]:
    c = math.expm1(lam)
    window = (f1.x_min, f1.x_max) if _one_sided(f1) else None
    acc = np.zeros(f1.n)
    power = f1
    for n in range(1, n_max + 1):
        if n > 1:
            power = convolve_grid(power, f1, window)
        coef = (-1.0) ** (n + 1) * c ** n / n
        off = int(round((power.x_min - f1.x_min) / f1.dx))
        lo, hi = max(off, 0), min(off + power.n, f1.n)
        if hi > lo:
            acc[lo:hi] += coef * power.values[lo - off:hi - off]
    return acc / lam, n_max


def _inverse_closed_form(f1: GridFunction, lam: float) -> np.ndarray:
    c = math.expm1(lam)
    dx = f1.dx
    k0, n, one_sided = _lattice_fft_layout(f1)
    span = (k0 + n) if one_sided else (abs(k0) + n)
    size = _next_pow2(8 * max(span, 16))
    idx = np.arange(size)
    if one_sided:
        # damping exp(-s k) pushes the aliased wrap-around far below round-off
        s = math.log(1e3) / max(span, 1)
        seq = np.zeros(size)
        seq[k0:k0 + n] = f1.values * dx
        w = np.exp(-s * idx)
        spec = np.fft.fft(seq * w)
        out = np.fft.ifft(np.log1p(c * spec)).real / w
        vals = out[k0:k0 + n] / (lam * dx)
    else:
        seq = np.zeros(size)
        pos = (k0 + np.arange(n)) % size
        seq[pos] = f1.values * dx
        out = np.fft.ifft(np.log1p(c * np.fft.fft(seq))).real
        vals = out[pos] / (lam * dx)
    return vals


# ---------------------------------------------------------------------------
# Kesten bound profile
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KestenProfile:
    n: np.ndarray
    sup_ratio: np.ndarray
    window: tuple[float, float]
    excluded: int

    def as_array(self) -> np.ndarray:
        return np.column_stack([self.n, self.sup_ratio])


def tail_window(f: GridFunction, fraction: float = 0.2) -> tuple[float, float]:
    """Last ``fraction`` of the positive part of the grid, measured in log x."""
    x_hi = f.x_max
    if x_hi <= 0:
        raise InvalidInput("grid has no positive part")
    x_lo = max(f.x_min, f.dx)
    if x_lo >= x_hi:
        return (x_hi, x_hi)
    lo = math.exp((1.0 - fraction) * math.log(x_hi) + fraction * math.log(x_lo))
    return (lo, x_hi)


def kesten_bound_profile(f: GridFunction, eps: float, n_max: int,
                         floor: float = 1e-300, fraction: float = 0.2) -> KestenProfile:
    """``sup_{x in window} f^{*n}(x) / ((1 + eps)^n f(x))`` for n = 1..n_max."""
    if not 0 < eps < 1:
        raise InvalidInput("eps must lie in (0, 1)")
    if not 1 <= n_max <= 12:
        raise InvalidInput("n_max must lie in [1, 12]")
    lo, hi = tail_window(f, fraction)
    x = f.x
    sel = (x >= lo) & (x <= hi)
    base = f.values[sel]
    good = base > floor
    excluded = int(np.count_nonzero(~good))
    window = (f.x_min, f.x_max) if _one_sided(f) else None
    ns, sups = [], []
    power = f
    for n in range(1, n_max + 1):
        if n > 1:
            power = convolve_grid(power, f, window)
        vals = power.evaluate(x[sel])
        ratio = np.where(good, vals / np.where(good, base, 1.0), np.nan)
        ratio = ratio / (1.0 + eps) ** n
        ns.append(n)
        sups.append(float(np.nanmax(ratio)) if np.any(good) else math.nan)
    return KestenProfile(np.array(ns), np.array(sups), (lo, hi), excluded)


def kesten_ratio_curve(f: GridFunction, n: int, eps: float, fraction: float = 0.2
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise ``f^{*n}(x) / ((1 + eps)^n f(x))`` over the tail window."""
    lo, hi = tail_window(f, fraction)
    x = f.x
    sel = (x >= lo) & (x <= hi) & (f.values > 1e-300)
    window = (f.x_min, f.x_max) if _one_sided(f) else None
    power = nfold(GeneralizedDensity.from_density(f), n, window).cont
    return x[sel], power.evaluate(x[sel]) / f.values[sel] / (1.0 + eps) ** n
