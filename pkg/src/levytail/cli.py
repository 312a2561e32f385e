"""Command line front end.

Every command runs one pipeline and writes its reports into ``--out``.
Exit codes: 0 ok, 2 invalid input, 3 numerical failure, 4 infeasible on the
given grid, 5 inverse series outside its domain.
"""

from __future__ import annotations

import functools
import json
import math
import sys
import warnings
from pathlib import Path

import click
import numpy as np

from . import charfn, convolution, counterexample, diagnostics, levy_model, mle
from .errors import InvalidInput, LevyTailError
from .levy_model import GeneralizedDensity, GridFunction, GridParams, ModelSpec, Zero
from .reporting import csv_text, dumps_json, write_text

DEFAULT_DX = 0.01
DEFAULT_MAX = 50.0


def _guard(fn):
    """Map library errors onto the exit-code contract."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except LevyTailError as exc:
            click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
            sys.exit(exc.exit_code)

    return wrapper


def _out_dir(out: str) -> Path:
    path = Path(out)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InvalidInput(f"cannot create output directory {out}: {exc}") from None
    return path


def _grid_for(model: ModelSpec, dx: float | None, x_max: float | None) -> GridParams:
    if model.grid is not None and dx is None and x_max is None:
        return model.grid
    base = model.grid
    dx = dx or (base.dx if base else DEFAULT_DX)
    hi = x_max or (base.x_max if base else DEFAULT_MAX)
    lo_support = model.triplet.jumps.family.support[0]
    one_sided = (model.triplet.gaussian == 0.0 and model.triplet.jumps.finite
                 and lo_support >= 0.0)
    n = int(math.ceil(hi / dx - 1e-9))
    if one_sided:
        return GridParams(0.0, n * dx, dx)
    return GridParams(-n * dx, n * dx, dx)


# ---------------------------------------------------------------------------
# Density construction
# ---------------------------------------------------------------------------

def synthesize(model: ModelSpec, grid: GridParams) -> tuple[GeneralizedDensity, dict]:
    """Law of the model on ``grid`` plus metadata."""
    t = model.triplet
    jumps = t.jumps
    no_jumps = isinstance(jumps.family, Zero) or jumps.scale == 0.0
    if t.gaussian == 0.0 and jumps.finite and not no_jumps:
        lam = jumps.total_mass
        unit = levy_model.JumpDensitySpec(jumps.family, 1.0)
        g = levy_model.discretize(unit, grid)
        trunc = convolution.SeriesTruncation.poisson(lam)
        law = convolution.compound_poisson_density(lam, g, trunc)
        cont = law.cont.crop(grid.x_min, grid.x_max)
        shift = t.drift - levy_model.compensator_drift(jumps)
        if abs(shift) > 1e-12 * max(1.0, abs(t.drift)):
            cont = GridFunction(cont.x_min + shift, cont.dx, cont.values, cont.tail_kind,
                                cont.leakage)
        else:
            shift = 0.0
        law = GeneralizedDensity(law.atom, cont)
        meta = {"method": "compound_poisson_series", "lambda": lam,
                "truncation": {"n_max": trunc.n_max, "tail_bound": trunc.tail_bound},
                "leakage": cont.leakage, "jump_leakage": g.leakage, "atom_at": shift}
        return law, meta
    if t.gaussian == 0.0 and no_jumps:
        raise InvalidInput("the model is degenerate (no jumps and no Gaussian part)")
    psi = functools.partial(charfn.levy_exponent, t)
    cf = charfn.cf_window(lambda z: np.exp(psi(z)), grid, exponent=psi)
    report: dict = {}
    f = charfn.invert_cf_to_density(cf, grid, report)
    law = GeneralizedDensity(0.0, f)
    meta = {"method": "characteristic_function_window", "window_samples": int(cf.z.size),
            "leakage": f.leakage, "clamped": report.get("clamped", 0.0), "atom_at": 0.0}
    return law, meta


def _density_rows(law: GeneralizedDensity):
    w = law.weighted()
    return ([x, f, f * w.dx] for x, f in zip(w.x, w.values))


def read_density(path: str) -> GeneralizedDensity:
    """Read ``density.csv`` (columns x, f[, mass]) and a sibling ``atoms.json``."""
    p = Path(path)
    if p.is_dir():
        p = p / "density.csv"
    try:
        data = np.genfromtxt(p, delimiter=",", names=True)
    except (OSError, ValueError) as exc:
        raise InvalidInput(f"cannot read density file {p}: {exc}") from None
    if data.dtype.names is None or "x" not in data.dtype.names or "f" not in data.dtype.names:
        raise InvalidInput("density file needs columns x and f")
    x, f = np.atleast_1d(data["x"]), np.atleast_1d(data["f"])
    if x.size < 3 or not np.all(np.isfinite(x)) or not np.all(np.isfinite(f)):
        raise InvalidInput("density file must hold at least 3 finite rows")
    dx = (x[-1] - x[0]) / (x.size - 1)
    if not dx > 0 or np.max(np.abs(np.diff(x) - dx)) > 1e-6 * dx:
        raise InvalidInput("density file must be on a uniform increasing grid")
    atom = 0.0
    atoms = p.parent / "atoms.json"
    if atoms.exists():
        try:
            items = json.loads(atoms.read_text())["atoms"]
            atom = float(sum(a["p"] for a in items))
        except (ValueError, KeyError, TypeError) as exc:
            raise InvalidInput(f"malformed atoms file {atoms}: {exc}") from None
    q = 1.0 - atom
    vals = f / q if q > 0 else f
    return GeneralizedDensity(atom, GridFunction(float(x[0]), float(dx), vals))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

@click.group()
@click.version_option(package_name="levytail")
def main():
    """Densities, tail diagnostics and likelihood fits for infinitely
    divisible laws given by their Levy densities."""


_model_opt = click.option("--model", "model_path", type=click.Path(dir_okay=False),
                          help="Model JSON file.")
_out_opt = click.option("--out", required=True, type=click.Path(file_okay=False),
                        help="Output directory.")
_dx_opt = click.option("--grid-dx", type=float, default=None, help="Grid spacing.")
_max_opt = click.option("--grid-max", type=float, default=None, help="Grid half-width or right end.")
_tol_opt = click.option("--tol", type=float, default=None,
                        help="Relative tolerance of a passing verdict.")
_seed_opt = click.option("--seed", type=int, default=0, show_default=True)


def _load(model_path) -> ModelSpec:
    if not model_path:
        raise InvalidInput("--model is required")
    return levy_model.load_model(model_path)


@main.command()
@_model_opt
@_out_opt
@_dx_opt
@_max_opt
@_guard
def synth(model_path, out, grid_dx, grid_max):
    """Density of the model: density.csv, atoms.json, meta.json."""
    model = _load(model_path)
    grid = _grid_for(model, grid_dx, grid_max)
    law, meta = synthesize(model, grid)
    out = _out_dir(out)
    write_text(out / "density.csv", csv_text(["x", "f", "mass"], _density_rows(law)))
    atoms = [{"x": meta["atom_at"], "p": law.atom}] if law.atom > 0 else []
    write_text(out / "atoms.json", dumps_json({"atoms": atoms}))
    meta.update({"grid": {"x_min": grid.x_min, "x_max": grid.x_max, "dx": grid.dx},
                 "model": model.triplet.to_dict(), "continuous_mass": law.weighted().mass()})
    write_text(out / "meta.json", dumps_json(meta))


def _reference(model: ModelSpec, law: GeneralizedDensity):
    """Jump-density reference and ratio target for tail equivalence."""
    jumps = model.triplet.jumps
    grid = law.cont.grid
    if jumps.finite:
        unit = levy_model.JumpDensitySpec(jumps.family, 1.0)
        g = levy_model.discretize(unit, grid, check_tol=None)
        return g, diagnostics.compound_poisson_target(jumps.total_mass)
    g1, nu1 = levy_model.normalize_g1(jumps, grid)
    return g1, nu1


@main.command()
@_model_opt
@click.option("--density", "density_path", type=click.Path(), default=None,
              help="density.csv (or its directory) instead of a model.")
@_out_opt
@_dx_opt
@_max_opt
@_tol_opt
@click.option("--property", "properties", multiple=True, default=("subexp",), show_default=True,
              type=click.Choice([p.value for p in diagnostics.Property]))
@click.option("--lambda", "lam", type=float, default=None, help="Rate for steutel.")
@click.option("--alpha", type=float, default=0.5, show_default=True, help="Power for steutel.")
@click.option("--n", "n_fold", type=int, default=2, show_default=True, help="n for conv_root.")
@_guard
def diagnose(model_path, density_path, out, grid_dx, grid_max, tol, properties, lam, alpha, n_fold):
    """Tail diagnostics: diagnostics.json and one curve CSV per property."""
    cfg = diagnostics.VerdictConfig() if tol is None else diagnostics.VerdictConfig(pass_rel=tol)
    model = None
    if density_path:
        law = read_density(density_path)
    else:
        model = _load(model_path)
        law, _ = synthesize(model, _grid_for(model, grid_dx, grid_max))
    results = {}
    for name in dict.fromkeys(properties):
        kw: dict = {"n": n_fold, "alpha": alpha}
        if name == diagnostics.Property.TAIL_EQUIV.value:
            if model is None:
                raise InvalidInput("tail_equiv needs --model to supply the Levy density")
            kw["reference"], kw["target"] = _reference(model, law)
        if name == diagnostics.Property.STEUTEL.value:
            if model is None or not model.triplet.jumps.finite:
                raise InvalidInput("steutel needs a compound Poisson --model")
            jumps = model.triplet.jumps
            kw["lam"] = jumps.total_mass if lam is None else lam
            kw["g"] = levy_model.discretize(levy_model.JumpDensitySpec(jumps.family, 1.0),
                                            law.cont.grid, check_tol=None)
        f = law if name in ("subexp", "subexp_plus", "conv_root") else law.cont
        rep = diagnostics.run_property(name, f, cfg, **kw)
        results[name] = rep.to_dict()
        curve = rep.curve.to_list() if rep.curve is not None else []
        results[name]["curve"] = f"curve_{name}.csv"
        results[name]["curve_points"] = len(curve)
        write_text(Path(_out_dir(out)) / f"curve_{name}.csv", csv_text(["x", "ratio"], curve))
    write_text(_out_dir(out) / "diagnostics.json", dumps_json(results))


@main.command()
@click.option("--density", "density_path", type=click.Path(), required=True)
@click.option("--lambda", "lam", type=float, required=True)
@_out_opt
@click.option("--method", type=click.Choice(["closed_form", "series"]), default="closed_form",
              show_default=True)
@_guard
def recover(density_path, lam, out, method):
    """Jump density of a compound Poisson law from its density: jumps.csv."""
    law = read_density(density_path)
    report: dict = {}
    g = convolution.recover_jump_density(law.cont, lam, method=method, report=report)
    out = _out_dir(out)
    write_text(out / "jumps.csv", csv_text(["x", "g"], zip(g.x, g.values)))
    write_text(out / "meta.json", dumps_json({"lambda": lam, "method": method,
                                              "leakage": g.leakage, **report}))


@main.command("counterexample")
@_out_opt
@click.option("--k-max", type=int, default=None, help="Number of dip points (default: all).")
@_dx_opt
@_guard
def counterexample_cmd(out, k_max, grid_dx):
    """Ratio signature of the two-sided counterexample: counterexample.json."""
    rep = counterexample.demonstrate_failure(counterexample.DESK_PRESET, k_max, grid_dx)
    out = _out_dir(out)
    d = rep.to_dict()
    d["increasing"] = rep.increasing()
    write_text(out / "counterexample.json", dumps_json(d))
    write_text(out / "points.csv",
               csv_text(["k", "x", "ratio_f_fbar", "ratio_g2_g"], rep.points))


_family_opt = click.option("--family", type=click.Choice(sorted(mle.FAMILIES)),
                           default="cp_weibull_scale", show_default=True)


@main.command()
@_family_opt
@click.option("--data", type=click.Path(dir_okay=False), default=None,
              help="One-column CSV of observations (else simulate from --theta0).")
@click.option("--theta0", type=float, default=1.0, show_default=True)
@click.option("--n", type=int, default=2000, show_default=True)
@_seed_opt
@_out_opt
@_guard
def fit(family, data, theta0, n, seed, out):
    """Maximum likelihood fit: fit.json."""
    fam = mle.get_family(family)
    if data:
        try:
            with warnings.catch_warnings():
                # an empty file is reported by the sample check below
                warnings.simplefilter("ignore", UserWarning)
                x = np.loadtxt(data, delimiter=",", ndmin=1)
        except (OSError, ValueError) as exc:
            raise InvalidInput(f"cannot read data file {data}: {exc}") from None
        source = {"data": data}
    else:
        x = mle.sample_id_distribution(fam.triplet(np.array([theta0])), n, seed)
        source = {"theta0": theta0, "n": n, "seed": seed}
    res = mle.fit_mle(x, fam)
    write_text(_out_dir(out) / "fit.json", dumps_json({"family": fam.name, **source,
                                                       **res.to_dict()}))


@main.command()
@_family_opt
@click.option("--theta0", type=float, default=1.0, show_default=True)
@click.option("--n", "n_grid", type=int, multiple=True, default=(500, 2000, 8000),
              show_default=True)
@click.option("--reps", type=int, default=20, show_default=True)
@_seed_opt
@click.option("--skip-checks", is_flag=True, help="Skip the hypothesis checks.")
@_out_opt
@_guard
def experiment(family, theta0, n_grid, reps, seed, skip_checks, out):
    """Consistency experiment: experiment.csv and experiment.json."""
    rep = mle.consistency_experiment(family, theta0, n_grid, reps, seed, check=not skip_checks)
    out = _out_dir(out)
    write_text(out / "experiment.csv", rep.to_csv())
    summary = rep.summary()
    summary["medians"] = rep.medians()
    write_text(out / "experiment.json", dumps_json(summary))


if __name__ == "__main__":  # pragma: no cover
    main()
