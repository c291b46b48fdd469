"""Floating-average energy per volume and its thermodynamic sequences.

The indirect energy of the cut-off density 1_Omega zeta(R(x - a)) is
averaged over a translation grid covering one unit cell and a rotation
sample, then divided by the domain volume.  Dyadic cube and tetrahedron
sequences track the approach to the large-volume limit.
"""

from dataclasses import dataclass, field as dataclass_field
import math

import numpy as np

from .constants import C_GS
from .errors import BudgetExceeded, InfeasibleProblem, ValidationError
from .gcmeasure import DiscreteDensity, density_of, direct_energy, riesz_energy
from .geometry import Domain, rasterize_fractions, so_quadrature, tiling24
from .periodic import PeriodicField, mean_value, power_mean
from .sce import DEFAULT_BUDGET, ExactLP, SCEProblem, solve


# ---------------------------------------------------------------------------
# cut-off densities


def _field_pitch(field):
    pitch = field.grid_pitch()
    if np.max(np.abs(pitch - pitch[0])) > 1e-12 * pitch[0]:
        raise ValidationError("cut-off densities need cubic field cells")
    return float(pitch[0])


def cutoff_density(field, domain, rotation=None, shift=None, subdiv=4):
    """Discretize 1_Omega * zeta(R(x - a)) at the field's grid resolution.

    Cells of the global grid (pitch equal to the field's) intersecting the
    domain carry weight = inside-fraction * cell volume * field value at
    the cell center; partial boundary cells are fractional.
    """
    d = field.dimension
    h = _field_pitch(field)
    if rotation is None:
        rotation = np.eye(d)
    if shift is None:
        shift = np.zeros(d)
    lo, hi = domain.bounding_box()
    j_lo = np.floor(np.asarray(lo) / h).astype(int)
    j_hi = np.ceil(np.asarray(hi) / h).astype(int)
    shape = tuple(int(j_hi[a] - j_lo[a]) for a in range(d))
    frac = rasterize_fractions(domain, j_lo, shape, h, subdiv=subdiv)
    mesh = np.meshgrid(*[(j_lo[a] + np.arange(shape[a]) + 0.5) * h
                         for a in range(d)], indexing="ij")
    centers = np.stack([m.ravel() for m in mesh], axis=1)
    values = field.eval((centers - shift) @ np.asarray(rotation).T)
    weights = frac.ravel() * values * h ** d
    keep = weights > 0
    return DiscreteDensity(centers[keep], weights[keep], cell_width=h)


# ---------------------------------------------------------------------------
# jobs and per-volume energies


@dataclass
class NUEGJob:
    field: PeriodicField
    domain: Domain
    cost: object
    translations: int = 4
    rotations: int = 8
    solver: object = dataclass_field(default_factory=ExactLP)
    seed: int = 0
    budget: int = DEFAULT_BUDGET
    refine: bool = True
    c_lo: float = None
    nmax: int = None

    def __post_init__(self):
        if self.field.dimension != self.domain.dimension:
            raise ValidationError("field and domain dimensions differ")
        if self.field.dimension != self.cost.d:
            raise ValidationError("field and cost dimensions differ")


@dataclass
class PerVolumeResult:
    value: float
    error_bar: float
    node_values: list
    coarse_value: float
    solver_gap: float
    floor: float
    params: dict
    warnings: list

    def box_ok(self, tol=1e-9):
        if self.value > tol:
            return False
        if self.floor is not None and self.value < self.floor - tol:
            return False
        return True


def _translation_grid(field, per_axis):
    d = field.dimension
    fracs = (np.arange(per_axis) + 0.5) / per_axis
    mesh = np.meshgrid(*[fracs] * d, indexing="ij")
    frac_pts = np.stack([m.ravel() for m in mesh], axis=1)
    return frac_pts @ field.lattice.basis


def _node_energies(field, domain, cost, rotations, shifts, solver, budget,
                   nmax, dedupe_constant=True):
    # constant fields make every node the same computation: run it once
    if dedupe_constant and field.is_constant():
        n_nodes = len(rotations) * len(shifts)
        vals, gap, warns = _node_energies(
            field, domain, cost, rotations[:1], shifts[:1], solver, budget,
            nmax, dedupe_constant=False)
        return np.repeat(vals, n_nodes), gap, warns
    values, gaps, warns = [], [], []
    for ri, R in enumerate(rotations):
        for si, a in enumerate(shifts):
            rho = cutoff_density(field, domain, R, a)
            if rho.size == 0:
                values.append(0.0)
                gaps.append(0.0)
                continue
            try:
                report = solve(SCEProblem(rho=rho, cost=cost, nmax=nmax,
                                          solver=solver, budget=budget))
            except InfeasibleProblem as exc:
                raise InfeasibleProblem(
                    f"node rotation={ri} shift={np.round(a, 6).tolist()}: "
                    f"{exc.reason}") from exc
            values.append(report.indirect)
            if report.certificate is not None:
                gaps.append(abs(report.certificate["duality_gap"]))
            else:
                gaps.append(abs(report.entropic["marginal_residual"]))
            if report.plan.layer_mass(report.nmax) > 1e-9 and report.nmax > 1:
                warns.append(f"particle cap {report.nmax} saturated at "
                             f"rotation={ri} shift={si}")
    return np.asarray(values), float(np.mean(gaps) if gaps else 0.0), warns


def energy_per_volume(job):
    """Quadrature average of the per-node indirect energy over rotations and
    cell translations, divided by the domain volume.

    The error bar combines the refinement delta of the quadrature (grid
    doubling) with the mean solver gap.
    """
    d = job.field.dimension
    rotations = so_quadrature(d, job.rotations, job.seed)
    shifts = _translation_grid(job.field, job.translations)
    node_vals, gap, warns = _node_energies(
        job.field, job.domain, job.cost, rotations, shifts,
        job.solver, job.budget, job.nmax)
    coarse = float(np.mean(node_vals)) / job.domain.volume
    if job.refine and not job.field.is_constant():
        rot2 = so_quadrature(d, 2 * job.rotations, job.seed) if d == 3 else rotations
        shifts2 = _translation_grid(job.field, 2 * job.translations)
        node2, gap2, warns2 = _node_energies(
            job.field, job.domain, job.cost, rot2, shifts2,
            job.solver, job.budget, job.nmax)
        value = float(np.mean(node2)) / job.domain.volume
        quad_err = abs(value - coarse)
        gap = max(gap, gap2)
        warns += warns2
        node_vals = node2
    else:
        value = coarse
        quad_err = 0.0
    floor = None
    if job.c_lo is not None:
        q = 1.0 + job.cost.s / job.cost.d
        floor = -job.c_lo * power_mean(job.field, q)
    params = {
        "translations": job.translations,
        "rotations": job.rotations,
        "solver": type(job.solver).__name__,
        "seed": job.seed,
        "refined": bool(job.refine and not job.field.is_constant()),
        "domain": job.domain.to_json(),
    }
    return PerVolumeResult(value=value, error_bar=quad_err + gap,
                           node_values=node_vals.tolist(), coarse_value=coarse,
                           solver_gap=gap, floor=floor, params=params,
                           warnings=warns)


# ---------------------------------------------------------------------------
# thermodynamic sequences


@dataclass
class ThermoSequence:
    scales: list
    values: list
    error_bars: list
    statuses: list
    limit: float = None
    limit_error: float = None
    limit_method: str = None
    warnings: list = dataclass_field(default_factory=list)

    def rows(self):
        out = []
        for s, v, e, st in zip(self.scales, self.values, self.error_bars,
                               self.statuses):
            out.append((s, v, v - e, v + e, st))
        return out

    def to_json(self):
        return {
            "scales": list(self.scales),
            "values": list(self.values),
            "error_bars": list(self.error_bars),
            "statuses": list(self.statuses),
            "limit": self.limit,
            "limit_error": self.limit_error,
            "limit_method": self.limit_method,
            "warnings": list(self.warnings),
        }


def dyadic_sequence(field, cost, n_range, translations=4, rotations=8,
                    solver=None, seed=0, budget=DEFAULT_BUDGET, c_lo=None,
                    refine=True):
    """Energies per volume on the dyadic cubes of sides 2^N.

    The exact sequence is nonincreasing; computed values are checked within
    twice the combined error bars.  The extrapolated limit is the last
    value, with the error widened to the Lieb-Oxford floor when a constant
    is supplied.
    """
    solver = solver or ExactLP()
    scales, values, errors, statuses, warnings = [], [], [], [], []
    for N in n_range:
        side = 2.0 ** N
        domain = Domain.cube(side, dimension=field.dimension)
        job = NUEGJob(field=field, domain=domain, cost=cost,
                      translations=translations, rotations=rotations,
                      solver=solver, seed=seed, budget=budget, refine=refine,
                      c_lo=c_lo)
        try:
            res = energy_per_volume(job)
        except InfeasibleProblem as exc:
            statuses.append(f"infeasible: {exc.reason}")
            break
        except BudgetExceeded as exc:
            message = (f"budget_truncated: needs {exc.required} "
                       f"configurations")
            statuses.append(message)
            warnings.append(message)
            break
        scales.append(side)
        values.append(res.value)
        errors.append(res.error_bar)
        statuses.append("ok")
        warnings += res.warnings
    for i in range(1, len(values)):
        slack = values[i] - values[i - 1]
        if slack > 2.0 * (errors[i] + errors[i - 1]) + 1e-12:
            statuses[i] = f"monotonicity violated by {slack:.3e}"
    seq = ThermoSequence(scales, values, errors, statuses, warnings=warnings)
    if values:
        seq.limit = values[-1]
        if c_lo is not None:
            floor = -c_lo * power_mean(field, 1.0 + cost.s / cost.d)
            seq.limit_error = errors[-1] + max(0.0, values[-1] - floor)
            seq.limit_method = "last+floor_bracket"
        else:
            seq.limit_error = errors[-1]
            seq.limit_method = "last"
    return seq


@dataclass
class TetraRateReport:
    scales: list
    values: list
    error_bars: list
    bracket_widths: list
    pair_checks: list
    width_slope: float
    zeta_mean: float
    warnings: list

    def ok(self):
        return all(c["upper_ok"] and c["lower_ok"] for c in self.pair_checks)

    def rows(self):
        return [(s, v, v - w, v, "ok")
                for s, v, w in zip(self.scales, self.values, self.bracket_widths)]

    def to_json(self):
        return {
            "scales": self.scales, "values": self.values,
            "error_bars": self.error_bars,
            "bracket_widths": self.bracket_widths,
            "pair_checks": self.pair_checks,
            "width_slope": self.width_slope,
            "zeta_mean": self.zeta_mean,
            "warnings": self.warnings,
        }


def tetra_rate_check(field, cost, ell_list, translations=2, rotations=4,
                     solver=None, seed=0, budget=DEFAULT_BUDGET, refine=True):
    """Convergence-rate bracket on dilated reference tetrahedra.

    For 3D Coulomb costs the limit lies within c_GS/ell * mean(zeta) below
    each tetra value, so consecutive scales must agree within the combined
    bracket plus error bars; the bracket width shrinks like 1/ell.
    """
    if cost.d != 3 or abs(cost.s - 1.0) > 1e-12:
        raise ValidationError("tetrahedron rate check requires d=3, s=1")
    solver = solver or ExactLP()
    zeta_mean = mean_value(field)
    scales, values, errors, warnings = [], [], [], []
    for ell in ell_list:
        domain = Domain.tetrahedron(ell)
        job = NUEGJob(field=field, domain=domain, cost=cost,
                      translations=translations, rotations=rotations,
                      solver=solver, seed=seed, budget=budget, refine=refine)
        res = energy_per_volume(job)
        scales.append(float(ell))
        values.append(res.value)
        errors.append(res.error_bar)
        warnings += res.warnings
    widths = [C_GS / ell * zeta_mean for ell in scales]
    checks = []
    for i in range(1, len(scales)):
        la, lb = scales[i - 1], scales[i]
        ea, eb = values[i - 1], values[i]
        tol = 2.0 * (errors[i - 1] + errors[i]) + 1e-12
        upper_slack = ea + C_GS / lb * zeta_mean - eb
        lower_slack = eb - (ea - C_GS / la * zeta_mean)
        checks.append({
            "ell_pair": (la, lb),
            "upper_slack": upper_slack,
            "lower_slack": lower_slack,
            "upper_ok": bool(upper_slack >= -tol),
            "lower_ok": bool(lower_slack >= -tol),
            "tolerance": tol,
        })
    if len(scales) >= 2:
        x = 1.0 / np.asarray(scales)
        slope = float(np.polyfit(x, widths, 1)[0])
    else:
        slope = float("nan")
    return TetraRateReport(scales, values, errors, widths, checks, slope,
                           zeta_mean, warnings)


# ---------------------------------------------------------------------------
# scaling identity


def scaled_field(field, lam):
    """The density scaling zeta -> lam * zeta(lam^(1/d) x) on the samples."""
    d = field.dimension
    from .periodic import Lattice
    basis = field.lattice.basis / lam ** (1.0 / d)
    return PeriodicField(Lattice(basis), lam * field.samples, field.interpolation)


def scaled_domain(domain, lam):
    d = domain.dimension
    factor = lam ** (-1.0 / d)
    if domain.kind == "cube":
        return Domain.cube(domain.side * factor, domain.center * factor,
                           domain.dimension)
    if domain.kind == "tetrahedron":
        return Domain.tetrahedron(domain.scale * factor, domain.isometry)
    return Domain.polytope(domain.vertices * factor)


def nueg_scaling_identity(field, domain, cost, lam, translations=4,
                          rotations=4, solver=None, seed=0,
                          budget=DEFAULT_BUDGET, tol=1e-8):
    """Node-wise check of the per-volume scaling law: replacing (zeta, Omega)
    by (lam zeta(lam^(1/d) .), lam^(-1/d) Omega) multiplies every node energy
    per volume by lam^(1 + s/d)."""
    solver = solver or ExactLP()
    d = field.dimension
    rot = so_quadrature(d, rotations, seed)
    shifts = _translation_grid(field, translations)
    base_vals, _, _ = _node_energies(field, domain, cost, rot, shifts,
                                     solver, budget, None)
    f2 = scaled_field(field, lam)
    d2 = scaled_domain(domain, lam)
    shifts2 = _translation_grid(f2, translations)
    scaled_vals, _, _ = _node_energies(f2, d2, cost, rot, shifts2,
                                       solver, budget, None)
    factor = lam ** (1.0 + cost.s / cost.d)
    base_pv = np.asarray(base_vals) / domain.volume
    scaled_pv = np.asarray(scaled_vals) / d2.volume
    dev = np.abs(scaled_pv - factor * base_pv)
    scale_ref = np.maximum(np.abs(factor * base_pv), 1e-12)
    max_rel = float(np.max(dev / scale_ref)) if dev.size else 0.0
    return {
        "lambda": lam,
        "factor": factor,
        "max_rel_deviation": max_rel,
        "ok": bool(max_rel <= tol),
        "node_pairs": list(zip(base_pv.tolist(), scaled_pv.tolist())),
    }


# ---------------------------------------------------------------------------
# tetrahedral decoupling check


def _locate_tiles(points, ell, rotation, tau, tiling):
    """Tile key (lattice cell, tile index) for each point under the isometry
    x -> (R x - tau)/ell."""
    y = (np.asarray(points) @ np.asarray(rotation).T - tau) / ell
    z = np.round(y)
    local = y - z
    js = tiling.locate(local, tol=1e-12)
    keys = []
    for k in range(len(points)):
        j = js[k]
        if j < 0:
            # boundary hit: take the first closed tile containing the point
            for jj in range(24):
                if tiling.contains(jj, local[k:k + 1], tol=-1e-9)[0]:
                    j = jj
                    break
        keys.append((tuple(int(v) for v in z[k]), int(j)))
    return keys


def graf_schenker_check(plan, ell, cell_width=0.05, n_rot=8, n_tau=2, seed=0,
                        refine=True):
    """Numeric check of the tetrahedral decoupling lower bound at scale ell.

    Both sides share the same cell-smeared direct term.  Returns the
    averaged inequality slack and exhibits the sampled isometry with the
    smallest localized value (which realizes the mean-value form).
    """
    if plan.nmax > 6 or plan.support.shape[0] > 12:
        raise ValidationError("plan too large for the desk-scale check "
                              "(need <= 6 particles on <= 12 support points)")
    from .gcmeasure import RieszCost, localize
    cost = RieszCost(3, 1.0, "infinite")
    tiling = tiling24()
    dens = density_of(plan)
    rho = DiscreteDensity(dens.points, dens.weights, cell_width=cell_width)
    mass = rho.total_mass
    lhs = riesz_energy(plan, cost) - direct_energy(rho, cost)

    def node_values(n_rot_eff, n_tau_eff):
        rotations = so_quadrature(3, n_rot_eff, seed)
        fr = (np.arange(n_tau_eff) + 0.5) / n_tau_eff - 0.5
        mesh = np.meshgrid(fr, fr, fr, indexing="ij")
        taus = ell * np.stack([m.ravel() for m in mesh], axis=1)
        vals = []
        for R in rotations:
            for tau in taus:
                keys = _locate_tiles(plan.support, ell, R, tau, tiling)
                groups = {}
                for idx, key in enumerate(keys):
                    groups.setdefault(key, []).append(idx)
                total = 0.0
                for key, idxs in groups.items():
                    mask = np.zeros(plan.support.shape[0], dtype=bool)
                    mask[idxs] = True
                    local_plan = localize(plan, mask)
                    wsel = dens.weights[mask]
                    keep = wsel > 0
                    if keep.any():
                        local_rho = DiscreteDensity(dens.points[mask][keep],
                                                    wsel[keep],
                                                    cell_width=cell_width)
                        dloc = direct_energy(local_rho, cost)
                    else:
                        dloc = 0.0
                    total += riesz_energy(local_plan, cost) - dloc
                vals.append(total - C_GS / ell * mass)
        return np.asarray(vals)

    vals = node_values(n_rot, n_tau)
    rhs = float(np.mean(vals))
    if refine:
        vals2 = node_values(n_rot, 2 * n_tau)
        rhs_fine = float(np.mean(vals2))
        err = abs(rhs_fine - rhs)
        rhs = rhs_fine
        vals = vals2
    else:
        err = 0.0
    best = float(np.min(vals)) if vals.size else 0.0
    return {
        "lhs": lhs,
        "rhs_average": rhs,
        "quadrature_error": err,
        "ok": bool(lhs >= rhs - err - 1e-10),
        "pointwise_value": best,
        "pointwise_ok": bool(lhs >= best - 1e-10),
        "ell": ell,
        "mass": mass,
    }


# ---------------------------------------------------------------------------
# limit extrapolation


def extrapolate_limit(seq, method="last"):
    """Extract a limit estimate from a thermodynamic sequence.

    "last" returns the final value with its bracket error;
    "fit_1_over_ell" fits value = e_inf + c / scale by least squares.
    """
    values = np.asarray(seq.values, dtype=float)
    scales = np.asarray(seq.scales, dtype=float)
    if method == "last":
        if values.size == 0:
            raise ValidationError("empty sequence")
        return float(values[-1]), float(seq.error_bars[-1])
    if method == "fit_1_over_ell":
        if values.size < 2:
            raise ValidationError("need at least 2 scales to fit")
        x = 1.0 / scales
        coeffs, residuals, *_ = np.polyfit(x, values, 1, full=True)
        resid = float(np.sqrt(residuals[0])) if residuals.size else 0.0
        return float(coeffs[1]), resid
    raise ValidationError(f"unknown extrapolation method {method!r}")
