"""The grand-canonical strictly-correlated-electrons value on finite supports.

Two solvers are provided.  ``sce_exact`` solves the underlying linear
program over all admissible configurations (the exact value for atomic
densities).  ``sce_entropic`` runs an entropy-regularized multimarginal
fixed-point iteration and rounds the result to a feasible plan, giving a
certified upper value.
"""

from dataclasses import dataclass, field as dataclass_field
import itertools
import json
import math

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import (BudgetExceeded, InfeasibleProblem, SolverFailure,
                     ValidationError)
from .gcmeasure import (DiscreteDensity, GCPlan, RieszCost, direct_energy,
                        riesz_energy)

DEFAULT_BUDGET = 2_000_000
FEAS_TOL = 1e-9


@dataclass
class ExactLP:
    kind: str = "exact_lp"


@dataclass
class Entropic:
    epsilon: float = 0.05
    max_iters: int = 5000
    tol: float = 1e-8
    kind: str = "entropic"


@dataclass
class SCEProblem:
    rho: DiscreteDensity
    cost: RieszCost
    nmax: int = None
    solver: object = dataclass_field(default_factory=ExactLP)
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        if self.nmax is None:
            self.nmax = default_nmax(self.rho.total_mass)
        if self.rho.total_mass > self.nmax + FEAS_TOL:
            raise ValidationError(
                f"total mass {self.rho.total_mass} exceeds nmax {self.nmax}")


def default_nmax(total_mass):
    return max(1, int(math.ceil(total_mass - FEAS_TOL)) + 2)


@dataclass
class EnergyReport:
    f_sce: float
    direct: float
    indirect: float
    plan: GCPlan
    solver_status: str
    config_count: int
    nmax: int
    certificate: dict = None
    entropic: dict = None

    def to_json(self):
        rec = {
            "f_sce": self.f_sce,
            "direct": self.direct,
            "indirect": self.indirect,
            "solver_status": self.solver_status,
            "config_count": self.config_count,
            "nmax": self.nmax,
            "plan": self.plan.to_json() if self.plan is not None else None,
        }
        if self.certificate is not None:
            rec["certificate"] = self.certificate
        if self.entropic is not None:
            rec["entropic"] = self.entropic
        return rec

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, sort_keys=True, indent=2)


# ---------------------------------------------------------------------------
# configuration enumeration


def count_configs(M, nmax, diagonal):
    if diagonal == "infinite":
        return int(sum(math.comb(M, n) for n in range(1, min(nmax, M) + 1)))
    return int(sum(math.comb(M + n - 1, n) for n in range(1, nmax + 1)))


def enumerate_layer(M, n, diagonal):
    """Index configurations of one layer as a (count, n) integer array."""
    gen = (itertools.combinations(range(M), n) if diagonal == "infinite"
           else itertools.combinations_with_replacement(range(M), n))
    flat = np.fromiter(itertools.chain.from_iterable(gen), dtype=np.int32)
    return flat.reshape(-1, n)


def _pair_matrix(points, cost):
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt((diff ** 2).sum(-1))
    with np.errstate(divide="ignore"):
        pot = dist ** (-cost.s)
    np.fill_diagonal(pot, 0.0)  # multiset same-point pairs contribute 0 when allowed
    return pot


def _layer_costs(pot, combos):
    n = combos.shape[1]
    total = np.zeros(combos.shape[0])
    for a, b in itertools.combinations(range(n), 2):
        total += pot[combos[:, a], combos[:, b]]
    return total


def _check_feasible(rho, nmax, diagonal):
    if rho.total_mass > nmax + FEAS_TOL:
        raise InfeasibleProblem(
            f"total mass {rho.total_mass:.12g} exceeds the particle cap {nmax}")
    if diagonal == "infinite" and rho.size and rho.weights.max() > 1.0 + FEAS_TOL:
        raise InfeasibleProblem(
            "a point carries weight above 1, which exceeds the achievable "
            "marginal for distinct-point configurations")


def _assemble(rho, cost, nmax, budget):
    """Enumerate configurations and build costs plus the marginal matrix."""
    M = rho.size
    count = count_configs(M, nmax, cost.diagonal)
    if count > budget:
        raise BudgetExceeded(required=count, budget=budget)
    pot = _pair_matrix(rho.points, cost)
    layers, costs, rows, cols = [], [], [], []
    col0 = 0
    top = min(nmax, M) if cost.diagonal == "infinite" else nmax
    for n in range(1, top + 1):
        combos = enumerate_layer(M, n, cost.diagonal)
        if combos.size == 0:
            continue
        layers.append((n, combos))
        costs.append(_layer_costs(pot, combos))
        k = combos.shape[0]
        rows.append(combos.ravel())
        cols.append(np.repeat(np.arange(col0, col0 + k), n))
        col0 += k
    cost_vec = np.concatenate(costs) if costs else np.zeros(0)
    data = np.ones(sum(r.size for r in rows))
    A_marg = sparse.coo_matrix(
        (data, (np.concatenate(rows), np.concatenate(cols))),
        shape=(M, col0)).tocsr()
    return layers, cost_vec, A_marg


def _plan_from_weights(rho, layers, weights, p0, prune=1e-13):
    plan_layers = {}
    pruned = 0.0
    col0 = 0
    for n, combos in layers:
        k = combos.shape[0]
        w = weights[col0:col0 + k]
        keep = w > prune
        pruned += float(w[~keep].sum())
        if keep.any():
            bucket = plan_layers.setdefault(n, {})
            for row, wv in zip(combos[keep], w[keep]):
                key = tuple(int(i) for i in row)
                bucket[key] = bucket.get(key, 0.0) + float(wv)
        col0 += k
    return GCPlan(rho.points, p0 + pruned, plan_layers)


# ---------------------------------------------------------------------------
# exact linear programming solver


def sce_exact(problem):
    """Global minimum of the transport linear program, with an optimality
    certificate from the dual solution."""
    rho = problem.rho.drop_zeros()
    cost, nmax = problem.cost, problem.nmax
    direct = direct_energy(problem.rho, cost)
    if rho.size == 0:
        plan = GCPlan(problem.rho.points, 1.0, {})
        return EnergyReport(0.0, direct, -direct, plan, "optimal", 0, nmax,
                            certificate={"duality_gap": 0.0,
                                         "min_reduced_cost": 0.0,
                                         "complementarity": 0.0})
    _check_feasible(rho, nmax, cost.diagonal)
    layers, cost_vec, A_marg = _assemble(rho, cost, nmax, problem.budget)
    n_cols = cost_vec.size
    # columns: configurations then the vacuum weight
    A_eq = sparse.vstack([
        sparse.hstack([A_marg, sparse.csr_matrix((rho.size, 1))]),
        sparse.csr_matrix(np.ones((1, n_cols + 1))),
    ]).tocsr()
    b_eq = np.concatenate([rho.weights, [1.0]])
    c = np.concatenate([cost_vec, [0.0]])
    res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status == 2:
        raise InfeasibleProblem("linear program infeasible for this marginal")
    if res.status != 0:
        raise SolverFailure(f"linprog status {res.status}: {res.message}")
    w = np.asarray(res.x)
    y = np.asarray(res.eqlin.marginals)
    reduced = c - A_eq.T @ y
    certificate = {
        "duality_gap": float(abs(res.fun - y @ b_eq)),
        "min_reduced_cost": float(reduced.min()),
        "complementarity": float(np.abs(w * reduced).sum()),
    }
    plan = _plan_from_weights(rho, layers, w[:-1], float(w[-1]))
    f = float(res.fun)
    return EnergyReport(f, direct, f - direct, plan, "optimal",
                        n_cols, nmax, certificate=certificate)


# ---------------------------------------------------------------------------
# entropic fixed-point solver


def sce_entropic(problem):
    """Entropy-regularized fixed point over the configuration weights.

    Weights have the Gibbs form exp((v + sum_i u_i - cost)/eps); the
    potentials u_i and v are updated in closed form by cycling through the
    marginal constraints and the normalization.  After convergence the plan
    is rounded onto the marginal polytope, so the reported value is always
    the cost of a feasible plan.
    """
    if not isinstance(problem.solver, Entropic):
        raise ValidationError("sce_entropic requires an Entropic solver spec")
    if problem.cost.diagonal != "infinite":
        raise ValidationError("entropic solver supports the distinct-point "
                              "(infinite diagonal) rule only")
    rho = problem.rho.drop_zeros()
    cost, nmax = problem.cost, problem.nmax
    eps = float(problem.solver.epsilon)
    if eps <= 0:
        raise ValidationError("entropic epsilon must be positive")
    direct = direct_energy(problem.rho, cost)
    if rho.size == 0:
        plan = GCPlan(problem.rho.points, 1.0, {})
        return EnergyReport(0.0, direct, -direct, plan, "converged", 0, nmax,
                            entropic={"epsilon": eps, "iterations": 0,
                                      "marginal_residual": 0.0,
                                      "raw_value": 0.0})
    _check_feasible(rho, nmax, cost.diagonal)
    layers, cost_vec, A_marg = _assemble(rho, cost, nmax, problem.budget)
    M = rho.size
    n_cols = cost_vec.size
    A_csc = A_marg.tocsc()
    membership = [A_marg.getrow(i).indices for i in range(M)]
    a = -cost_vec / eps
    u = np.zeros(M)
    v = 0.0
    s = A_marg.T @ u  # per-config sum of potentials
    log_rho = np.log(rho.weights)

    def logsumexp(x):
        m = np.max(x)
        return m + math.log(np.sum(np.exp(x - m)))

    iterations = 0
    residual = math.inf
    for sweep in range(problem.solver.max_iters):
        iterations = sweep + 1
        v = -eps * np.logaddexp(0.0, logsumexp(a + s / eps))
        for i in range(M):
            idx = membership[i]
            t = a[idx] + (s[idx] - u[i] + v) / eps
            new_u = eps * (log_rho[i] - logsumexp(t))
            delta = new_u - u[i]
            if delta != 0.0:
                u[i] = new_u
                s[idx] += delta
        v = -eps * np.logaddexp(0.0, logsumexp(a + s / eps))
        w = np.exp(np.minimum(a + (s + v) / eps, 40.0))
        marg = A_marg @ w
        residual = float(np.max(np.abs(marg - rho.weights)))
        if residual <= problem.solver.tol:
            break
    raw_value = float(cost_vec @ w)
    status = "converged" if residual <= problem.solver.tol else "max_iters_exceeded"
    plan = _round_entropic(rho, layers, w, marg, nmax, problem.cost)
    f = riesz_energy(plan, cost)
    info = {"epsilon": eps, "iterations": iterations,
            "marginal_residual": residual, "raw_value": raw_value}
    return EnergyReport(float(f), direct, float(f) - direct, plan, status,
                        n_cols, nmax, entropic=info)


def _round_entropic(rho, layers, w, marg, nmax, cost):
    """Project the entropic weights onto the marginal polytope.

    First scale all configuration weights so no marginal overshoots, then
    shrink further until the residual fits the remaining probability
    budget, and finally decompose the residual into distinct-point
    configurations by wrap-around scheduling.
    """
    target = rho.weights
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(marg > 0, target / np.maximum(marg, 1e-300), np.inf)
    t = min(1.0, float(ratios.min()))
    w = w * t
    marg = marg * t
    S = float(w.sum())
    mass_w = float(marg.sum())
    total = float(target.sum())
    # extra shrink tau keeping max residual and residual mass inside budget
    tau = 1.0
    for i in range(rho.size):
        coef = S - marg[i]
        rhs = 1.0 - target[i]
        if coef > 1e-15:
            tau = min(tau, rhs / coef)
    coef = nmax * S - mass_w
    rhs = nmax - total
    if coef > 1e-15:
        tau = min(tau, rhs / coef)
    tau = max(tau, 0.0)
    w = w * tau
    marg = marg * tau
    resid = np.clip(target - marg, 0.0, None)
    plan = _plan_from_weights(rho, layers, w, 0.0)
    slots = wrap_around_decomposition(resid, nmax)
    merged = {n: dict(bucket) for n, bucket in plan.layers.items()}
    used = sum(sum(b.values()) for b in merged.values())
    for config, weight in slots.items():
        n = len(config)
        merged.setdefault(n, {})
        merged[n][config] = merged[n].get(config, 0.0) + weight
        used += weight
    p0 = max(0.0, 1.0 - used)
    return GCPlan(rho.points, p0, merged)


def wrap_around_decomposition(resid, nmax):
    """Decompose a residual weight vector into distinct-index configurations
    of size <= nmax using total probability max(max resid, mass/nmax)."""
    pos = np.flatnonzero(resid > 1e-15)
    if pos.size == 0:
        return {}
    r = resid[pos]
    m = float(r.sum())
    n = min(nmax, pos.size)
    T = max(float(r.max()), m / n)
    cum = np.concatenate([[0.0], np.cumsum(r)])
    # every job boundary, including the timeline end, cuts the slot axis
    breaks = sorted({0.0, T} | {float(c % T) for c in cum[1:]})
    slots = {}
    for b1, b2 in zip(breaks[:-1], breaks[1:]):
        if b2 - b1 < 1e-15:
            continue
        mid = (b1 + b2) / 2.0
        members = []
        row = 0
        while row * T + mid < m - 1e-15:
            j = int(np.searchsorted(cum, row * T + mid, side="right")) - 1
            members.append(int(pos[j]))
            row += 1
        if not members:
            continue
        key = tuple(sorted(set(members)))
        if len(key) != len(members):
            # numerical tie on a slot boundary; drop the duplicate
            members = sorted(set(members))
            key = tuple(members)
        slots[key] = slots.get(key, 0.0) + (b2 - b1)
    return slots


# ---------------------------------------------------------------------------
# public entry points


def solve(problem):
    if isinstance(problem.solver, Entropic):
        return sce_entropic(problem)
    return sce_exact(problem)


def indirect_energy(rho, cost, solver=None, nmax=None, budget=DEFAULT_BUDGET):
    """Indirect energy report for a density: SCE value minus direct term.

    The direct term uses the density's own cell width for its same-cell
    part, so grid densities recover a nonpositive indirect energy.
    """
    problem = SCEProblem(rho=rho, cost=cost, nmax=nmax,
                         solver=solver or ExactLP(), budget=budget)
    return solve(problem)
