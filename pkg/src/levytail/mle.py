"""Maximum likelihood for infinitely divisible families.

Samples are simulated from the Levy triplet, the likelihood is evaluated
from a density obtained by characteristic-function inversion, and the
estimate maximizes the average log-density over a compact box.

Densities are taken with respect to ``delta_0 + Lebesgue`` so that the
atom of a compound Poisson law at 0 contributes ``log P(X = 0)``.

Seeds for replications are derived as ``SeedSequence(seed, spawn_key=(cell,
rep))`` and drive a Philox generator, so any cell of an experiment can be
reproduced on its own.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

from .charfn import cf_window, compound_poisson_cf, gaussian_cf, invert_cf, invert_cf_to_density
from .diagnostics import ani_check, subexp_check
from .errors import (
    CutoffRequired,
    DensityUnderflow,
    EmptyTail,
    HypothesisCheckFailed,
    InvalidInput,
    InvalidParams,
)
from .levy_model import (
    GeneralizedDensity,
    GridParams,
    JumpDensitySpec,
    LevyTriplet,
    Semistable,
    Zero,
    _cell_masses_general,
    discretize,
    evaluate_jump_density,
    jump_spec,
    normalize_g1,
    power_moment,
    small_jump_variance,
)
from .reporting import fmt_float

LOG_FLOOR = -745.0
SCAN_POINTS = 16
THETA_TOL = 1e-4
MAX_GRID_NODES = 1 << 15
_INV_CDF_PER_DECADE = 2000
_INV_CDF_DECADES = 9


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def make_rng(seed, key: tuple[int, ...] = ()) -> np.random.Generator:
    """Philox generator for ``seed`` and a spawn key (counter-based splitting)."""
    if isinstance(seed, np.random.SeedSequence):
        ss = seed
    else:
        ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


class _InverseCdf:
    """Piecewise-linear inverse of the normalized jump law on ``|y| > eps``.

    The CDF is tabulated on geometric meshes so both small and very large
    jumps are resolved; within a mesh cell the law is taken as uniform.
    """

    def __init__(self, spec: JumpDensitySpec, eps: float):
        lo, hi = spec.family.support
        edges = []
        masses = []
        for sign in (-1.0, 1.0):
            a = max(eps, 0.0)
            s_lo, s_hi = (max(lo, 0.0), max(hi, 0.0)) if sign > 0 else (max(-hi, 0.0), max(-lo, 0.0))
            start = max(a, s_lo)
            if s_hi <= start:
                continue
            first = start if start > 0 else min(1e-9, s_hi)
            stop = min(s_hi, max(first, 1.0) * 10.0 ** _INV_CDF_DECADES)
            n = max(2, int(_INV_CDF_PER_DECADE * math.log10(stop / first)) + 1)
            mesh = np.geomspace(first, stop, n)
            if start == 0.0:
                mesh = np.concatenate([[0.0], mesh])
            a_, b_ = mesh[:-1], mesh[1:]
            if sign > 0:
                m = _cell_masses_general(spec, a_, b_)
                edges.append((a_, b_))
            else:
                m = _cell_masses_general(spec, -b_, -a_)
                edges.append((-b_, -a_))
            masses.append(m)
        if not masses:
            raise EmptyTail("no jumps beyond the cutoff")
        self.lo = np.concatenate([e[0] for e in edges])
        self.hi = np.concatenate([e[1] for e in edges])
        m = np.concatenate(masses)
        order = np.argsort(self.lo)
        self.lo, self.hi, m = self.lo[order], self.hi[order], m[order]
        self.total = float(m.sum())
        if not self.total > 0:
            raise EmptyTail("no jump mass beyond the cutoff")
        self.cdf = np.concatenate([[0.0], np.cumsum(m) / self.total])

    def __call__(self, u: np.ndarray) -> np.ndarray:
        i = np.clip(np.searchsorted(self.cdf, u, side="right") - 1, 0, self.lo.size - 1)
        width = self.cdf[i + 1] - self.cdf[i]
        t = np.where(width > 0, (u - self.cdf[i]) / np.where(width > 0, width, 1.0), 0.5)
        return self.lo[i] + t * (self.hi[i] - self.lo[i])


def _jump_sampler(spec: JumpDensitySpec, eps: float) -> tuple[float, Callable]:
    """Rate of jumps with ``|y| > eps`` and a sampler of their law."""
    fam = spec.family
    if spec.finite and eps == 0.0:
        ppf = fam.ppf(np.array([0.5]))
        if ppf is not None:
            return spec.total_mass, lambda u: np.asarray(fam.ppf(u), dtype=float)
        return spec.total_mass, _InverseCdf(spec, 0.0)
    inv = _InverseCdf(spec, eps)
    return inv.total, inv


def _inner_drift(spec: JumpDensitySpec, eps: float) -> float:
    """``integral over eps < |y| <= 1 of y nu(dy)``."""
    if eps >= 1.0:
        return 0.0
    return power_moment(spec, 1, -1.0, -eps) + power_moment(spec, 1, eps, 1.0)


def sample_id_distribution(triplet: LevyTriplet, n: int, seed, key: tuple[int, ...] = (),
                           eps: float | None = None) -> np.ndarray:
    """Draw ``n`` i.i.d. values of the infinitely divisible law of ``triplet``.

    Jumps with ``|y| > eps`` are simulated exactly (Poisson count, inverse
    CDF); smaller jumps are replaced by a Gaussian with their variance.
    Compound Poisson triplets use ``eps = 0`` and no substitution.
    """
    n = int(n)
    if n < 0:
        raise InvalidInput("n must be non-negative")
    spec = triplet.jumps
    rng = make_rng(seed, key)
    no_jumps = isinstance(spec.family, Zero) or spec.scale == 0.0
    if no_jumps or spec.finite:
        eps_used = 0.0
    else:
        eps_used = triplet.cutoff_eps if eps is None else eps
        if not (eps_used and eps_used > 0):
            raise CutoffRequired("infinite-activity jumps need a positive cutoff eps")
    shift = triplet.drift
    var = triplet.gaussian ** 2
    out = np.zeros(n)
    if not no_jumps:
        shift -= _inner_drift(spec, eps_used)
        if eps_used > 0:
            var += small_jump_variance(spec, eps_used)
        rate, draw = _jump_sampler(spec, eps_used)
        counts = rng.poisson(rate, size=n)
        total = int(counts.sum())
        if total:
            jumps = draw(rng.random(total))
            owner = np.repeat(np.arange(n), counts)
            out = np.bincount(owner, weights=jumps, minlength=n)
    if var > 0:
        out = out + math.sqrt(var) * rng.standard_normal(n)
    # compensator round-off must not move the atom of a compound Poisson law
    if abs(shift) > 1e-12 * max(1.0, abs(triplet.drift)):
        out = out + shift
    return out


# ---------------------------------------------------------------------------
# Parametric families
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MleFamily:
    """A one-parameter-per-coordinate family of Levy triplets.

    ``kind`` selects the density builder: ``"cp"`` for one-sided compound
    Poisson laws (lattice inversion), ``"gaussian"`` for pure Gaussian laws
    (windowed inversion).
    """

    name: str
    theta_names: tuple[str, ...]
    box: tuple[tuple[float, float], ...]
    triplet: Callable[[np.ndarray], LevyTriplet]
    kind: str = "cp"
    declared_ani: bool = True

    @property
    def dim(self) -> int:
        return len(self.theta_names)


def _cp_weibull(theta) -> LevyTriplet:
    return LevyTriplet.compound_poisson(jump_spec("weibull", 1.0, shape=0.5, scale=float(theta[0])))


def _cp_exponential(theta) -> LevyTriplet:
    return LevyTriplet.compound_poisson(jump_spec("exponential", float(theta[0]), rate=1.0))


def _gaussian(theta) -> LevyTriplet:
    return LevyTriplet(0.0, float(theta[0]))


def _semistable(theta) -> LevyTriplet:
    # theta only labels the family; it exists to exercise the hypothesis checks
    return LevyTriplet(0.0, 0.0, JumpDensitySpec(Semistable(1.5, 2.0, 0.05, 0.5)))


FAMILIES: dict[str, MleFamily] = {
    "cp_weibull_scale": MleFamily("cp_weibull_scale", ("scale",), ((0.25, 4.0),), _cp_weibull),
    "cp_exponential_rate": MleFamily("cp_exponential_rate", ("lambda",), ((0.1, 4.0),),
                                     _cp_exponential),
    "gaussian_scale": MleFamily("gaussian_scale", ("b",), ((0.1, 5.0),), _gaussian,
                                kind="gaussian"),
    "semistable": MleFamily("semistable", ("theta",), ((0.5, 2.0),), _semistable,
                            kind="levy", declared_ani=False),
}


def get_family(family: str | MleFamily) -> MleFamily:
    if isinstance(family, MleFamily):
        return family
    try:
        return FAMILIES[family]
    except KeyError:
        raise InvalidInput(f"unknown MLE family {family!r}; known: {sorted(FAMILIES)}") from None


def cp_exponential_logpdf(x, lam: float) -> np.ndarray:
    """Closed-form log-density of a compound Poisson law with rate ``lam``
    and exponential(1) jumps, with respect to ``delta_0 + Lebesgue``."""
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, -np.inf)
    out[x == 0] = -lam
    pos = x > 0
    xp = x[pos]
    z = 2.0 * np.sqrt(lam * xp)
    out[pos] = -lam - xp + 0.5 * np.log(lam / xp) + np.log(special.ive(1, z)) + z
    return out


# ---------------------------------------------------------------------------
# Likelihood
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ModelDensity:
    """Density of ``f(.; theta)`` on a grid plus the tail surrogate beyond it."""

    law: GeneralizedDensity
    jumps: JumpDensitySpec | None

    def logpdf(self, x: np.ndarray) -> tuple[np.ndarray, int]:
        """Log-density and the number of floored points."""
        x = np.asarray(x, dtype=float)
        cont = self.law.cont
        dens = np.zeros(x.shape)
        inside = (x >= cont.x_min) & (x <= cont.x_max)
        vals = cont.values
        if cont.x_min == 0.0 and cont.n >= 3:
            # the first cell of a one-sided law only holds half a cell of mass
            vals = vals.copy()
            ext = 2.0 * vals[1] - vals[2]
            vals[0] = ext if ext > 0 else vals[1]
        dens[inside] = self.law.q * np.interp(x[inside], cont.x, vals)
        outside = ~inside
        if self.jumps is not None and np.any(outside):
            dens[outside] = evaluate_jump_density(self.jumps, x[outside])
        with np.errstate(divide="ignore"):
            logs = np.log(dens)
        atom = self.law.atom
        if atom > 0:
            logs[x == 0.0] = math.log(atom)
        floored = logs < LOG_FLOOR
        logs[floored] = LOG_FLOOR
        return logs, int(floored.sum())


def fit_grid(samples: np.ndarray, family: MleFamily, dx: float | None = None) -> GridParams:
    """Evaluation grid covering the samples, at most ``MAX_GRID_NODES`` nodes."""
    hi = float(np.max(np.abs(samples))) * 1.02 + 1.0
    if family.kind == "cp":
        dx = dx or max(0.01, hi / MAX_GRID_NODES)
        n = int(math.ceil(hi / dx))
        return GridParams(0.0, n * dx, dx)
    dx = dx or max(0.01, 2.0 * hi / MAX_GRID_NODES)
    n = int(math.ceil(hi / dx))
    return GridParams(-n * dx, n * dx, dx)


def model_density(theta, family: MleFamily, grid: GridParams) -> ModelDensity:
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    triplet = family.triplet(theta)
    if family.kind == "cp":
        spec = triplet.jumps
        lam = spec.total_mass
        unit = JumpDensitySpec(spec.family, 1.0)
        g = discretize(unit, grid, check_tol=None)
        law = invert_cf(compound_poisson_cf(lam, g), grid)
        return ModelDensity(law, spec)
    if family.kind == "gaussian":
        sigma = float(theta[0])
        cf = cf_window(gaussian_cf(0.0, sigma), grid)
        f = invert_cf_to_density(cf, grid)
        return ModelDensity(GeneralizedDensity(0.0, f), None)
    raise InvalidInput(f"unknown family kind {family.kind!r}")


def _check_samples(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise InvalidInput("empty sample set")
    if not np.all(np.isfinite(x)):
        raise InvalidInput("samples must be finite")
    return x


def _in_box(theta: np.ndarray, box) -> bool:
    return all(lo - 1e-12 <= t <= hi + 1e-12 for t, (lo, hi) in zip(theta, box))


def log_likelihood(theta, samples, family: str | MleFamily, grid: GridParams | None = None,
                   report: dict | None = None) -> float:
    """``M_n(theta)``: the average log-density of the samples."""
    fam = get_family(family)
    x = _check_samples(samples)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.size != fam.dim:
        raise InvalidParams(f"theta must have {fam.dim} coordinates")
    grid = grid or fit_grid(x, fam)
    logs, floored = model_density(theta, fam, grid).logpdf(x)
    if report is not None:
        report["floored"] = floored
    if floored == x.size:
        raise DensityUnderflow("every sample point underflowed")
    return float(logs.mean())


# ---------------------------------------------------------------------------
# Optimization
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FitResult:
    theta_hat: np.ndarray
    loglik: float
    evaluations: int
    converged: bool
    box: tuple[tuple[float, float], ...]
    floored_points: int = 0

    def to_dict(self) -> dict:
        return {"theta_hat": [float(t) for t in self.theta_hat], "loglik": self.loglik,
                "evaluations": self.evaluations, "converged": self.converged,
                "box": [list(b) for b in self.box], "floored_points": self.floored_points}


class _Objective:
    """Cached ``M_n`` for one optimizer run."""

    def __init__(self, x, fam, grid):
        self.x, self.fam, self.grid = x, fam, grid
        self.cache: dict[tuple, tuple[float, int]] = {}

    def __call__(self, theta) -> float:
        key = tuple(float(t) for t in theta)
        if key not in self.cache:
            logs, floored = model_density(np.array(key), self.fam, self.grid).logpdf(self.x)
            self.cache[key] = (float(logs.mean()), floored)
        return self.cache[key][0]

    def floored(self, theta) -> int:
        return self.cache[tuple(float(t) for t in theta)][1]


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _golden(fn, a: float, b: float, tol: float) -> tuple[float, float]:
    c, d = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = fn(d)
    return (c, fc) if fc >= fd else (d, fd)


def fit_mle(samples, family: str | MleFamily, theta_box=None, scan: int = SCAN_POINTS,
            tol: float = THETA_TOL, grid: GridParams | None = None) -> FitResult:
    """Maximize ``M_n`` over a compact box: grid scan, then golden-section
    refinement per coordinate, repeated until no coordinate moves by more
    than ``tol``.

    A maximizer on the box boundary is returned with ``converged=False``,
    unless the box is a single point.
    """
    fam = get_family(family)
    x = _check_samples(samples)
    box = tuple(tuple(map(float, b)) for b in (theta_box or fam.box))
    if len(box) != fam.dim or any(not (lo <= hi) for lo, hi in box):
        raise InvalidParams("theta_box must give lo <= hi for every coordinate")
    grid = grid or fit_grid(x, fam)
    obj = _Objective(x, fam, grid)
    axes = [np.linspace(lo, hi, scan) if hi > lo else np.array([lo]) for lo, hi in box]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, fam.dim)
    vals = np.array([obj(t) for t in mesh])
    best = mesh[int(np.argmax(vals))].copy()
    best_val = float(vals.max())
    steps = [(hi - lo) / (scan - 1) if hi > lo else 0.0 for lo, hi in box]
    for _ in range(50):
        moved = 0.0
        for i, (lo, hi) in enumerate(box):
            if steps[i] == 0.0:
                continue
            a, b = max(lo, best[i] - steps[i]), min(hi, best[i] + steps[i])

            def line(t, i=i):
                th = best.copy()
                th[i] = t
                return obj(th)

            t, v = _golden(line, a, b, tol)
            if v > best_val:
                moved = max(moved, abs(t - best[i]))
                best[i], best_val = t, v
            steps[i] = max(2.0 * tol, min(steps[i], 4.0 * abs(t - best[i]) + 2.0 * tol))
        if moved <= tol:
            break
    # snap to an edge when the line search ended within tol of it
    on_edge = False
    for i, (lo, hi) in enumerate(box):
        if hi > lo and (best[i] - lo <= tol or hi - best[i] <= tol):
            on_edge = True
            best[i] = lo if best[i] - lo <= tol else hi
    best_val = obj(best)
    degenerate = all(hi == lo for lo, hi in box)
    return FitResult(best, best_val, len(obj.cache), degenerate or not on_edge, box,
                     obj.floored(best))


# ---------------------------------------------------------------------------
# Consistency experiment
# ---------------------------------------------------------------------------

def check_hypotheses(family: str | MleFamily, theta0) -> dict:
    """Checkable conditions on ``g1(.; theta0)``: bounded, a.n.i., subexponential.

    Raises
    ------
    HypothesisCheckFailed
        With the failing diagnostic attached.
    """
    fam = get_family(family)
    triplet = fam.triplet(np.atleast_1d(np.asarray(theta0, dtype=float)))
    spec = triplet.jumps
    if isinstance(spec.family, Zero) or spec.scale == 0.0:
        raise HypothesisCheckFailed("the family has no jumps, so g1 is undefined")
    x_hi = 1e4
    g1, _ = normalize_g1(spec, GridParams(0.0, x_hi, 0.1))
    vals = g1.values
    if not np.all(np.isfinite(vals)) or vals.max() > 1e6:
        raise HypothesisCheckFailed("g1 is not bounded on the grid")
    tail = g1.crop(lo=1.0 + g1.dx)
    ani = ani_check(tail)
    if not ani.verdict.passed:
        raise HypothesisCheckFailed("g1 fails the a.n.i. check", ani)
    sub = subexp_check(tail)
    if not sub.verdict.passed:
        raise HypothesisCheckFailed("g1 fails the subexponentiality check", sub)
    return {"ani": ani.to_dict(), "subexp": sub.to_dict()}


@dataclass(frozen=True, eq=False)
class ExperimentRow:
    n: int
    rep: int
    theta_hat: tuple[float, ...]
    abs_err: float
    loglik: float
    floored_points: int
    converged: bool


@dataclass(frozen=True, eq=False)
class ExperimentReport:
    family: str
    theta0: tuple[float, ...]
    n_grid: tuple[int, ...]
    reps: int
    seed: int
    rows: list[ExperimentRow] = field(default_factory=list)

    def errors(self, n: int) -> np.ndarray:
        return np.array([r.abs_err for r in self.rows if r.n == n])

    def medians(self) -> np.ndarray:
        return np.array([float(np.median(self.errors(n))) for n in self.n_grid])

    def summary(self) -> dict:
        out = {}
        for n in self.n_grid:
            e = self.errors(n)
            q = np.quantile(e, [0.1, 0.25, 0.5, 0.75, 0.9])
            out[str(n)] = {"q10": q[0], "q25": q[1], "median": q[2], "q75": q[3], "q90": q[4],
                           "mean": float(e.mean()), "reps": int(e.size)}
        return {"family": self.family, "theta0": list(self.theta0), "n_grid": list(self.n_grid),
                "reps": self.reps, "seed": self.seed, "per_n": out}

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, default=_fmt_json)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        dim = len(self.theta0)
        w.writerow(["n", "rep"] + [f"theta_hat_{i}" for i in range(dim)]
                   + ["abs_err", "loglik", "floored_points"])
        for r in self.rows:
            w.writerow([r.n, r.rep] + [fmt_float(t) for t in r.theta_hat]
                       + [fmt_float(r.abs_err), fmt_float(r.loglik), r.floored_points])
        return buf.getvalue()


def _fmt_json(v):
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(type(v))


def worker_count() -> int:
    """Worker threads, capped by the ``LEVYTAIL_THREADS`` environment variable."""
    raw = os.environ.get("LEVYTAIL_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise InvalidInput(f"LEVYTAIL_THREADS must be an integer, got {raw!r}") from None


def consistency_experiment(family: str | MleFamily, theta0, n_grid=(500, 2000, 8000),
                           reps: int = 20, seed: int = 0, check: bool = True,
                           theta_box=None) -> ExperimentReport:
    """Fit ``reps`` samples for every ``n`` in ``n_grid``.

    Replication ``rep`` of cell ``i`` uses the seed ``SeedSequence(seed,
    spawn_key=(i, rep))``, so results do not depend on the worker count.
    """
    fam = get_family(family)
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    n_grid = tuple(int(n) for n in n_grid)
    if reps < 1 or not n_grid or any(n < 1 for n in n_grid):
        raise InvalidParams("need reps >= 1 and positive sample sizes")
    if check:
        check_hypotheses(fam, theta0)
    triplet = fam.triplet(theta0)

    def task(cell: int, rep: int) -> ExperimentRow:
        x = sample_id_distribution(triplet, n_grid[cell], seed, key=(cell, rep))
        fit = fit_mle(x, fam, theta_box)
        err = float(np.max(np.abs(fit.theta_hat - theta0)))
        return ExperimentRow(n_grid[cell], rep, tuple(float(t) for t in fit.theta_hat), err,
                             fit.loglik, fit.floored_points, fit.converged)

    jobs = [(c, r) for c in range(len(n_grid)) for r in range(reps)]
    workers = min(worker_count(), len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda cr: task(*cr), jobs))
    else:
        rows = [task(c, r) for c, r in jobs]
    return ExperimentReport(fam.name, tuple(float(t) for t in theta0), n_grid, int(reps),
                            int(seed), rows)
