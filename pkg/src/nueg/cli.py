"""Command-line interface: experiment configuration, dispatch, persistence.

Configs are INI files with sections mirroring the library modules
(experiment, field, domain, cost, quadrature, solver, seed, ...).  Runs
write a deterministic record.json (and, for sequence experiments, a CSV
summary plus a rendered figure) into the output directory; wall-clock
timestamps go to run.log only, so records are byte-identical across
reruns with the same seed.

Exit codes: 0 success, 2 validation failure, 3 infeasible, 4 budget.
"""

import configparser
import csv
import datetime
import hashlib
import json
import os
import sys
from importlib.metadata import version as pkg_version

import click
import numpy as np

from . import __version__
from .constants import constants_table
from .errors import (BudgetExceeded, InfeasibleProblem, NuegError,
                     ValidationError)

# scipy-heavy modules are imported inside the handlers so that cheap
# commands (constants, validate) start fast
DEFAULT_BUDGET = 2_000_000  # kept in sync with sce.DEFAULT_BUDGET

EXPERIMENT_KINDS = ("sce", "nueg", "dyadic", "tetra-rate", "gs-check",
                    "lda", "fourier", "apriori", "constants")

EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_BUDGET = 4


class ConfigError(NuegError):
    pass


# ---------------------------------------------------------------------------
# config parsing


def _require(cp, section, key, cast=str):
    if not cp.has_option(section, key):
        raise ConfigError(f"missing {section}.{key}")
    raw = cp.get(section, key)
    try:
        return cast(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {section}.{key}: {raw!r} ({exc})") from exc


def _optional(cp, section, key, cast=str, default=None):
    if not cp.has_option(section, key):
        return default
    return _require(cp, section, key, cast)


def _floats(raw):
    return [float(x) for x in raw.split()]


def _ints(raw):
    return [int(x) for x in raw.split()]


def _bool(raw):
    return str(raw).strip().lower() in ("1", "true", "yes", "on")


class RunConfig:
    """Parsed experiment configuration."""

    def __init__(self, kind, sections, seed, budget, out_dir, base_dir):
        if kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"invalid experiment.kind: {kind!r} "
                              f"(expected one of {', '.join(EXPERIMENT_KINDS)})")
        self.kind = kind
        self.sections = sections
        self.seed = seed
        self.budget = budget
        self.out_dir = out_dir
        self.base_dir = base_dir

    def hash(self):
        payload = json.dumps(
            {"kind": self.kind, "sections": self.sections,
             "seed": self.seed, "budget": self.budget},
            sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()


def parse_config(path, kind_override=None, seed_override=None,
                 out_override=None, budget_override=None):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    kind = _optional(cp, "experiment", "kind")
    if kind_override is not None:
        if kind is not None and kind != kind_override:
            raise ConfigError(
                f"experiment.kind is {kind!r} but the subcommand forces "
                f"{kind_override!r}")
        kind = kind_override
    if kind is None:
        raise ConfigError("missing experiment.kind")
    seed = seed_override if seed_override is not None else \
        _optional(cp, "seed", "value", int, 0)
    budget = budget_override
    if budget is None and os.environ.get("NUEG_BUDGET"):
        budget = int(os.environ["NUEG_BUDGET"])
    if budget is None:
        budget = _optional(cp, "solver", "budget", int, DEFAULT_BUDGET)
    out_dir = out_override or _optional(cp, "output", "dir", str, "nueg-out")
    sections = {s: dict(cp.items(s)) for s in cp.sections()}
    return RunConfig(kind, sections, seed, budget, out_dir,
                     os.path.dirname(os.path.abspath(path)))


def _resolve(cfg, relpath):
    if os.path.isabs(relpath):
        return relpath
    return os.path.join(cfg.base_dir, relpath)


# ---------------------------------------------------------------------------
# object loaders


def load_field(cfg):
    from .periodic import Lattice, PeriodicField
    cp = _as_parser(cfg)
    if not cp.has_section("field"):
        raise ConfigError("missing [field] section")
    path = _optional(cp, "field", "path")
    if path is not None:
        return PeriodicField.load(_resolve(cfg, path))
    d = _require(cp, "field", "dimension", int)
    samples = _require(cp, "field", "samples", _floats)
    shape = _optional(cp, "field", "shape", _ints)
    if shape is None:
        if d == 1:
            shape = [len(samples)]
        else:
            raise ConfigError("missing field.shape")
    basis = _optional(cp, "field", "basis", _floats)
    if basis is None:
        cell = _optional(cp, "field", "cell", float, 1.0)
        basis_mat = np.eye(d) * cell
    else:
        basis_mat = np.asarray(basis).reshape(d, d)
    interpolation = _optional(cp, "field", "interpolation", str, "pc")
    arr = np.asarray(samples).reshape(shape)
    return PeriodicField(Lattice(basis_mat), arr, interpolation)


def load_domain(cfg, dimension):
    from .geometry import Domain
    cp = _as_parser(cfg)
    kind = _require(cp, "domain", "kind")
    if kind == "cube":
        side = _require(cp, "domain", "side", float)
        return Domain.cube(side, dimension=dimension)
    if kind == "tetrahedron":
        scale = _require(cp, "domain", "scale", float)
        return Domain.tetrahedron(scale)
    raise ConfigError(f"invalid domain.kind: {kind!r}")


def load_cost(cfg, default_d=None):
    from .gcmeasure import RieszCost
    cp = _as_parser(cfg)
    s = _require(cp, "cost", "s", float)
    d = _optional(cp, "cost", "d", int, default_d)
    if d is None:
        raise ConfigError("missing cost.d")
    diagonal = _optional(cp, "cost", "diagonal", str, "infinite")
    return RieszCost(d, s, diagonal)


def load_solver(cfg):
    from .sce import Entropic, ExactLP
    cp = _as_parser(cfg)
    kind = _optional(cp, "solver", "kind", str, "exact_lp")
    if kind == "exact_lp":
        return ExactLP()
    if kind == "entropic":
        return Entropic(
            epsilon=_optional(cp, "solver", "epsilon", float, 0.05),
            max_iters=_optional(cp, "solver", "max_iters", int, 5000),
            tol=_optional(cp, "solver", "tol", float, 1e-8))
    raise ConfigError(f"invalid solver.kind: {kind!r}")


def _as_parser(cfg):
    cp = configparser.ConfigParser()
    cp.read_dict(cfg.sections)
    return cp


# ---------------------------------------------------------------------------
# experiment handlers


def _quadrature(cfg):
    cp = _as_parser(cfg)
    return {
        "translations": _optional(cp, "quadrature", "translations", int, 4),
        "rotations": _optional(cp, "quadrature", "rotations", int, 8),
        "refine": _optional(cp, "quadrature", "refine", _bool, True),
    }


def _handle_constants(cfg):
    table = constants_table()
    table["c_gs_4dp"] = f"{table['c_gs']:.4f}"
    table["lieb_narnhofer_floor_4dp"] = f"{table['lieb_narnhofer_floor']:.4f}"
    table["c_tf_4sf"] = f"{table['c_tf']:.4g}"
    return {"constants": table}, None


def _handle_sce(cfg):
    from .gcmeasure import DiscreteDensity
    from .sce import SCEProblem, solve
    cp = _as_parser(cfg)
    rho = DiscreteDensity.load(_resolve(cfg, _require(cp, "density", "path")))
    cost = load_cost(cfg, rho.dimension)
    solver = load_solver(cfg)
    nmax = _optional(cp, "solver", "nmax", int)
    report = solve(SCEProblem(rho=rho, cost=cost, nmax=nmax, solver=solver,
                              budget=cfg.budget))
    return {"report": report.to_json()}, None


def _handle_nueg(cfg):
    from .thermo import NUEGJob, energy_per_volume
    field = load_field(cfg)
    cost = load_cost(cfg, field.dimension)
    domain = load_domain(cfg, field.dimension)
    quad = _quadrature(cfg)
    cp = _as_parser(cfg)
    c_lo = _optional(cp, "cost", "c_lo", float)
    job = NUEGJob(field=field, domain=domain, cost=cost,
                  translations=quad["translations"],
                  rotations=quad["rotations"], solver=load_solver(cfg),
                  seed=cfg.seed, budget=cfg.budget, refine=quad["refine"],
                  c_lo=c_lo)
    res = energy_per_volume(job)
    results = {
        "value": res.value,
        "error_bar": res.error_bar,
        "coarse_value": res.coarse_value,
        "solver_gap": res.solver_gap,
        "floor": res.floor,
        "a_priori_box_ok": res.box_ok(),
        "node_values": res.node_values,
        "params": res.params,
        "warnings": res.warnings,
    }
    return results, None


def _handle_dyadic(cfg):
    from .thermo import dyadic_sequence
    field = load_field(cfg)
    cost = load_cost(cfg, field.dimension)
    cp = _as_parser(cfg)
    n_values = _require(cp, "sequence", "n_values", _ints)
    quad = _quadrature(cfg)
    c_lo = _optional(cp, "cost", "c_lo", float)
    seq = dyadic_sequence(field, cost, n_values,
                          translations=quad["translations"],
                          rotations=quad["rotations"], solver=load_solver(cfg),
                          seed=cfg.seed, budget=cfg.budget, c_lo=c_lo,
                          refine=quad["refine"])
    return {"sequence": seq.to_json()}, ("dyadic cubes", seq.rows())


def _handle_tetra_rate(cfg):
    from .thermo import tetra_rate_check
    field = load_field(cfg)
    cost = load_cost(cfg, field.dimension)
    cp = _as_parser(cfg)
    ells = _require(cp, "sequence", "ell_values", _floats)
    quad = _quadrature(cfg)
    report = tetra_rate_check(field, cost, ells,
                              translations=quad["translations"],
                              rotations=quad["rotations"],
                              solver=load_solver(cfg), seed=cfg.seed,
                              budget=cfg.budget, refine=quad["refine"])
    return {"tetra_rate": report.to_json()}, ("tetrahedron rate", report.rows())


def _handle_gs_check(cfg):
    from .gcmeasure import GCPlan
    from .thermo import graf_schenker_check
    cp = _as_parser(cfg)
    plan = GCPlan.load(_resolve(cfg, _require(cp, "gs", "plan")))
    report = graf_schenker_check(
        plan,
        ell=_require(cp, "gs", "ell", float),
        cell_width=_optional(cp, "gs", "cell_width", float, 0.05),
        n_rot=_optional(cp, "gs", "rotations", int, 8),
        n_tau=_optional(cp, "gs", "translations", int, 2),
        seed=cfg.seed)
    return {"graf_schenker": report}, None


def _handle_lda(cfg):
    from .bounds import LDAParams, lda_check, lda_rhs
    field = load_field(cfg)
    cp = _as_parser(cfg)
    params = LDAParams(p=_require(cp, "lda", "p", float),
                       theta=_require(cp, "lda", "theta", float),
                       epsilon=_require(cp, "lda", "epsilon", float))
    bound = lda_rhs(field, params)
    results = {"lda_rhs": bound.to_json()}
    if cp.has_option("lda", "e_bracket") and cp.has_option("lda", "c_bracket"):
        e_bracket = _require(cp, "lda", "e_bracket", _floats)
        c_bracket = _require(cp, "lda", "c_bracket", _floats)
        results["lda_check"] = lda_check(field, params, e_bracket,
                                         c_bracket).to_json()
    return results, None


def _handle_fourier(cfg):
    from .bounds import fourier_direct_identity
    from .gcmeasure import DiscreteDensity
    field = load_field(cfg)
    cp = _as_parser(cfg)
    rho = DiscreteDensity.load(_resolve(cfg, _require(cp, "fourier", "rho")))
    translations = _optional(cp, "fourier", "translations", int, 2)
    kmax = _optional(cp, "fourier", "truncation", int, 16)
    base = fourier_direct_identity(field, rho, translations, kmax)
    results = {"base": base.to_json()}
    if _optional(cp, "fourier", "refine", _bool, True):
        fine = fourier_direct_identity(field, rho, 2 * translations, 2 * kmax)
        results["refined"] = fine.to_json()
    return results, None


def _handle_apriori(cfg):
    from .bounds import lt_llsbound_rhs, quantum_apriori
    field = load_field(cfg)
    cp = _as_parser(cfg)
    hbar = _optional(cp, "apriori", "hbar", float, 1.0)
    eps = _optional(cp, "apriori", "epsilon", float, 1.0 / 15.0)
    upper, lower = quantum_apriori(field, hbar, eps)
    lt_lower, lls_upper = lt_llsbound_rhs(field, eps, hbar)
    return {
        "upper": upper, "lower": lower,
        "lt_lower": lt_lower, "lls_upper": lls_upper,
        "hbar": hbar, "epsilon": eps,
        "sandwich_ok": bool(lower <= upper),
    }, None


HANDLERS = {
    "constants": _handle_constants,
    "sce": _handle_sce,
    "nueg": _handle_nueg,
    "dyadic": _handle_dyadic,
    "tetra-rate": _handle_tetra_rate,
    "gs-check": _handle_gs_check,
    "lda": _handle_lda,
    "fourier": _handle_fourier,
    "apriori": _handle_apriori,
}


# ---------------------------------------------------------------------------
# run records


def _jsonable(obj):
    """Recursively convert numpy scalars/arrays for JSON serialization."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def run(cfg):
    """Dispatch one experiment and persist its record, CSV and figure."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    log_path = os.path.join(cfg.out_dir, "run.log")
    with open(log_path, "a") as log:
        log.write(f"{datetime.datetime.now().isoformat()} start "
                  f"{cfg.kind} seed={cfg.seed}\n")
    results, sequence = HANDLERS[cfg.kind](cfg)
    results = _jsonable(results)
    warnings = []
    for value in results.values():
        if isinstance(value, dict) and value.get("warnings"):
            warnings.extend(value["warnings"])
    warnings.extend(results.get("warnings", []))
    record = {
        "config_hash": cfg.hash(),
        "experiment": cfg.kind,
        "seed": cfg.seed,
        "budget": cfg.budget,
        "parameters": cfg.sections,
        "results": results,
        "warnings": warnings,
        "versions": {
            "nueg": __version__,
            "numpy": pkg_version("numpy"),
            "scipy": pkg_version("scipy"),
        },
    }
    record_path = os.path.join(cfg.out_dir, "record.json")
    with open(record_path, "w") as fh:
        json.dump(record, fh, sort_keys=True, indent=2)
        fh.write("\n")
    if sequence is not None:
        title, rows = sequence
        csv_path = os.path.join(cfg.out_dir, "summary.csv")
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["scale", "value", "err_low", "err_high",
                             "solver_status"])
            for row in rows:
                writer.writerow(list(row))
        from .plotting import render_sequence_figure
        render_sequence_figure(rows, os.path.join(cfg.out_dir, "figure.png"),
                               title)
    with open(log_path, "a") as log:
        log.write(f"{datetime.datetime.now().isoformat()} done "
                  f"hash={record['config_hash']}\n")
    return record


# ---------------------------------------------------------------------------
# validation of data files


def validate_file(path):
    """Schema and invariant diagnostics for density/field/plan JSON files."""
    diagnostics = []
    try:
        with open(path) as fh:
            record = json.load(fh)
    except FileNotFoundError:
        return [f"file not found: {path}"]
    except json.JSONDecodeError as exc:
        return [f"not valid JSON: {exc}"]
    from .gcmeasure import DiscreteDensity, GCPlan
    from .periodic import PeriodicField
    keys = set(record)
    try:
        if "support" in keys and "layers" in keys and \
                ("p0" in keys or "P0" in keys):
            plan = GCPlan.from_json(record)
            if not 0.0 <= plan.p0 <= 1.0:
                diagnostics.append(f"p0 = {plan.p0} outside [0, 1]")
            defect = plan.normalization_defect()
            if defect > GCPlan.NORMALIZATION_TOL:
                diagnostics.append(
                    f"normalization violation: total probability "
                    f"{plan.total_probability():.12g} differs from 1 by "
                    f"{defect:.3e}")
        elif {"points", "weights"} <= keys:
            DiscreteDensity.from_json(record)
        elif {"basis", "samples", "shape"} <= keys:
            PeriodicField.from_json(record)
        else:
            diagnostics.append(
                "unrecognized schema: expected a density {points, weights}, "
                "a field {basis, shape, samples} or a plan {support, p0, "
                "layers}")
    except (ValidationError, ValueError, KeyError) as exc:
        diagnostics.append(f"invariant violation: {exc}")
    return diagnostics


# ---------------------------------------------------------------------------
# click commands


def _execute(config_path, kind=None, seed=None, out=None, budget=None):
    try:
        cfg = parse_config(config_path, kind_override=kind,
                           seed_override=seed, out_override=out,
                           budget_override=budget)
        record = run(cfg)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    except ValidationError as exc:
        click.echo(f"validation error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    except InfeasibleProblem as exc:
        click.echo(f"infeasible: {exc}", err=True)
        sys.exit(EXIT_INFEASIBLE)
    except BudgetExceeded as exc:
        click.echo(f"budget exceeded: {exc}", err=True)
        sys.exit(EXIT_BUDGET)
    click.echo(json.dumps(record["results"], sort_keys=True, indent=2))
    return record


_seed_opt = click.option("--seed", type=int, default=None,
                         help="Override the config seed.")
_out_opt = click.option("--out", type=click.Path(), default=None,
                        help="Output directory.")
_budget_opt = click.option("--budget", type=int, default=None,
                           help="Configuration-count budget override.")


@click.group()
def main():
    """Non-uniform electron gas energies and inequality checks."""


@main.command("run")
@click.argument("config", type=click.Path())
@_seed_opt
@_out_opt
@_budget_opt
def run_cmd(config, seed, out, budget):
    """Run the experiment described by CONFIG."""
    _execute(config, seed=seed, out=out, budget=budget)


@main.command("validate")
@click.argument("path", type=click.Path())
def validate_cmd(path):
    """Schema-check a density, field or plan JSON file."""
    diagnostics = validate_file(path)
    for line in diagnostics:
        click.echo(line)
    if diagnostics:
        sys.exit(EXIT_VALIDATION)
    click.echo("ok")


@main.command("constants")
@_out_opt
def constants_cmd(out):
    """Emit the table of closed-form constants."""
    results, _ = _handle_constants(None)
    if out:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "constants.json"), "w") as fh:
            json.dump(results, fh, sort_keys=True, indent=2)
    click.echo(json.dumps(results, sort_keys=True, indent=2))


@main.command("sce")
@click.argument("density", type=click.Path())
@click.option("--s", "s_exp", type=float, required=True,
              help="Riesz exponent s.")
@click.option("--nmax", type=int, default=None)
@click.option("--epsilon", type=float, default=None,
              help="Use the entropic solver with this regularization.")
@_out_opt
@_budget_opt
def sce_cmd(density, s_exp, nmax, epsilon, out, budget):
    """Solve the SCE problem for a density file and emit the report."""
    from .gcmeasure import DiscreteDensity, RieszCost
    from .sce import Entropic, ExactLP, SCEProblem, solve
    try:
        rho = DiscreteDensity.load(density)
        cost = RieszCost(rho.dimension, s_exp)
        solver = Entropic(epsilon=epsilon) if epsilon else ExactLP()
        report = solve(SCEProblem(rho=rho, cost=cost, nmax=nmax, solver=solver,
                                  budget=budget or DEFAULT_BUDGET))
    except (ValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        click.echo(f"validation error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    except InfeasibleProblem as exc:
        click.echo(f"infeasible: {exc}", err=True)
        sys.exit(EXIT_INFEASIBLE)
    except BudgetExceeded as exc:
        click.echo(f"budget exceeded: {exc}", err=True)
        sys.exit(EXIT_BUDGET)
    payload = json.dumps(report.to_json(), sort_keys=True, indent=2)
    if out:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "sce-report.json"), "w") as fh:
            fh.write(payload + "\n")
    click.echo(payload)


@main.command("dyadic")
@click.argument("config", type=click.Path())
@_seed_opt
@_out_opt
@_budget_opt
def dyadic_cmd(config, seed, out, budget):
    """Dyadic-cube thermodynamic sequence."""
    _execute(config, kind="dyadic", seed=seed, out=out, budget=budget)


@main.command("tetra-rate")
@click.argument("config", type=click.Path())
@_seed_opt
@_out_opt
@_budget_opt
def tetra_rate_cmd(config, seed, out, budget):
    """Tetrahedron convergence-rate bracket."""
    _execute(config, kind="tetra-rate", seed=seed, out=out, budget=budget)


@main.group("check")
def check_group():
    """Inequality checks."""


@check_group.command("gs")
@click.argument("config", type=click.Path())
@_seed_opt
@_out_opt
def gs_cmd(config, seed, out):
    """Tetrahedral decoupling (Graf-Schenker) numeric check."""
    _execute(config, kind="gs-check", seed=seed, out=out)


@main.group("bounds")
def bounds_group():
    """Closed-form bound evaluators."""


@bounds_group.command("constants")
@_out_opt
def bounds_constants_cmd(out):
    """Alias of the top-level constants table."""
    ctx = click.get_current_context()
    ctx.invoke(constants_cmd, out=out)


@bounds_group.command("lda")
@click.argument("config", type=click.Path())
@_seed_opt
@_out_opt
def bounds_lda_cmd(config, seed, out):
    """LDA right-hand side (and optional bracket consistency check)."""
    _execute(config, kind="lda", seed=seed, out=out)


@bounds_group.command("fourier")
@click.argument("config", type=click.Path())
@_seed_opt
@_out_opt
def bounds_fourier_cmd(config, seed, out):
    """Translation-averaged direct-term identity."""
    _execute(config, kind="fourier", seed=seed, out=out)


@bounds_group.command("apriori")
@click.argument("config", type=click.Path())
@_seed_opt
@_out_opt
def bounds_apriori_cmd(config, seed, out):
    """Kinetic sandwich evaluators."""
    _execute(config, kind="apriori", seed=seed, out=out)


if __name__ == "__main__":
    main()
