"""Grand-canonical probabilities on finite supports and their energies.

A plan stores, for each particle number n, one weight per canonically
sorted configuration of support indices.  Storing orbits of the symmetric
group rather than ordered tuples removes the n! redundancy; marginal and
energy sums account for multiplicities explicitly.
"""

from dataclasses import dataclass, field as dataclass_field
from functools import lru_cache
import itertools
import json
import math

import numpy as np
from scipy import special, integrate

from .errors import ValidationError

DIAGONAL_RULES = ("infinite", "excluded")


@dataclass(frozen=True)
class RieszCost:
    """Inverse-power pair interaction |x-y|^(-s) in dimension d, 0 < s < d."""

    d: int
    s: float
    diagonal: str = "infinite"

    def __post_init__(self):
        if not 0 < self.s < self.d:
            raise ValidationError(f"need 0 < s < d, got s={self.s}, d={self.d}")
        if self.diagonal not in DIAGONAL_RULES:
            raise ValidationError(f"unknown diagonal rule {self.diagonal!r}")

    def pair(self, r):
        return r ** (-self.s)

    def config_cost(self, points, config):
        """Sum of pair interactions inside one configuration (index tuple)."""
        total = 0.0
        for a, b in itertools.combinations(range(len(config)), 2):
            i, j = config[a], config[b]
            if i == j:
                if self.diagonal == "infinite":
                    return math.inf
                continue
            r = float(np.linalg.norm(points[i] - points[j]))
            if r == 0.0:
                if self.diagonal == "infinite":
                    return math.inf
                continue
            total += self.pair(r)
        return total


class DiscreteDensity:
    """Finitely supported nonnegative density: points, weights and an
    optional cell width used for the same-cell part of the direct term."""

    def __init__(self, points, weights, cell_width=0.0):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        weights = np.asarray(weights, dtype=float)
        if points.shape[0] != weights.shape[0]:
            raise ValidationError("points and weights must have equal length")
        if np.any(weights < 0):
            raise ValidationError("density weights must be nonnegative")
        if points.shape[0] > 1:
            # support points must be distinct
            diff = points[:, None, :] - points[None, :, :]
            dist = np.sqrt((diff ** 2).sum(-1))
            np.fill_diagonal(dist, np.inf)
            if dist.min() < 1e-12:
                raise ValidationError("support points must be distinct")
        self.points = points
        self.weights = weights
        self.cell_width = float(cell_width)

    @property
    def dimension(self):
        return self.points.shape[1]

    @property
    def size(self):
        return self.points.shape[0]

    @property
    def total_mass(self):
        return float(self.weights.sum())

    def drop_zeros(self, tol=0.0):
        keep = self.weights > tol
        return DiscreteDensity(self.points[keep], self.weights[keep], self.cell_width)

    def translated(self, shift):
        return DiscreteDensity(self.points + np.asarray(shift, dtype=float),
                               self.weights, self.cell_width)

    def rotated(self, rotation):
        return DiscreteDensity(self.points @ np.asarray(rotation, dtype=float).T,
                               self.weights, self.cell_width)

    def to_json(self):
        return {
            "dimension": self.dimension,
            "points": [[float(x) for x in p] for p in self.points],
            "weights": [float(w) for w in self.weights],
            "cell_width": self.cell_width,
        }

    @classmethod
    def from_json(cls, record):
        return cls(np.asarray(record["points"], dtype=float),
                   np.asarray(record["weights"], dtype=float),
                   float(record.get("cell_width", 0.0)))

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, sort_keys=True, indent=2)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


class GCPlan:
    """Grand-canonical symmetric probability on a finite support.

    ``layers[n]`` maps a sorted index tuple of length n to the total weight
    of its symmetric orbit.  ``p0 + sum of all layer weights`` must be 1.
    """

    NORMALIZATION_TOL = 1e-10

    def __init__(self, support, p0, layers):
        support = np.atleast_2d(np.asarray(support, dtype=float))
        self.support = support
        self.p0 = float(p0)
        clean = {}
        for n, entries in layers.items():
            n = int(n)
            if n < 1:
                raise ValidationError("layer index must be >= 1")
            bucket = {}
            for config, w in entries.items():
                config = tuple(sorted(int(i) for i in config))
                if len(config) != n:
                    raise ValidationError(
                        f"configuration {config} does not belong to layer {n}")
                if any(i < 0 or i >= support.shape[0] for i in config):
                    raise ValidationError(f"configuration {config} out of range")
                if w < 0:
                    raise ValidationError("plan weights must be nonnegative")
                bucket[config] = bucket.get(config, 0.0) + float(w)
            if bucket:
                clean[n] = bucket
        self.layers = clean

    @property
    def nmax(self):
        return max(self.layers) if self.layers else 0

    def layer_mass(self, n):
        return float(sum(self.layers.get(n, {}).values()))

    def total_probability(self):
        return self.p0 + sum(self.layer_mass(n) for n in self.layers)

    def normalization_defect(self):
        return abs(self.total_probability() - 1.0)

    def validate(self):
        if not -1e-12 <= self.p0 <= 1 + 1e-12:
            raise ValidationError(f"p0 = {self.p0} outside [0, 1]")
        defect = self.normalization_defect()
        if defect > self.NORMALIZATION_TOL:
            raise ValidationError(
                f"plan normalization defect {defect:.3e} exceeds "
                f"{self.NORMALIZATION_TOL:.0e}")
        return self

    def configurations(self):
        for n in sorted(self.layers):
            for config, w in self.layers[n].items():
                yield n, config, w

    def to_json(self):
        return {
            "support": [[float(x) for x in p] for p in self.support],
            "p0": self.p0,
            "layers": [
                {
                    "n": n,
                    "entries": [
                        {"indices": list(cfg), "weight": float(w)}
                        for cfg, w in sorted(self.layers[n].items())
                    ],
                }
                for n in sorted(self.layers)
            ],
        }

    @classmethod
    def from_json(cls, record):
        layers = {}
        for layer in record.get("layers", []):
            n = int(layer["n"])
            layers[n] = {
                tuple(int(i) for i in e["indices"]): float(e["weight"])
                for e in layer["entries"]
            }
        p0 = record["p0"] if "p0" in record else record["P0"]
        return cls(np.asarray(record["support"], dtype=float),
                   float(p0), layers)

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, sort_keys=True, indent=2)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


# ---------------------------------------------------------------------------
# operations


def density_of(plan):
    """Exact density marginal of a plan over its support.

    The marginal of an n-particle orbit with weight w contributes
    w * multiplicity(point) to each point of the configuration.
    """
    weights = np.zeros(plan.support.shape[0])
    for n, config, w in plan.configurations():
        for i in config:
            weights[i] += w
    return DiscreteDensity(plan.support, weights)


def riesz_energy(plan, cost):
    """Total pairwise interaction energy of a plan; +inf if a repeated-point
    configuration carries mass under the "infinite" diagonal rule."""
    total = 0.0
    for n, config, w in plan.configurations():
        if n < 2 or w == 0.0:
            continue
        c = cost.config_cost(plan.support, config)
        if math.isinf(c):
            return math.inf
        total += w * c
    return total


@lru_cache(maxsize=None)
def cell_self_interaction(d, s):
    """Average of |x-y|^(-s) over two independent uniform points of the unit
    d-cube, computed once per (d, s) by quadrature.

    Uses the Gaussian representation r^(-s) = Gamma(s/2)^(-1)
    Int_0^inf t^(s/2-1) exp(-t r^2) dt, which factorizes the cube integral
    into a product of 1-d integrals.
    """
    if not 0 < s < d:
        raise ValidationError(f"need 0 < s < d, got s={s}, d={d}")
    if d == 1:
        return 2.0 / ((1.0 - s) * (2.0 - s))

    def g(lam):
        # Int_0^1 Int_0^1 exp(-lam (u-v)^2) du dv
        lam = np.asarray(lam, dtype=float)
        return (np.sqrt(np.pi / lam) * special.erf(np.sqrt(lam))
                - (1.0 - np.exp(-lam)) / lam)

    # near part, substitution lam = t^(2/s) removes the endpoint singularity
    near, _ = integrate.quad(lambda t: (2.0 / s) * g(t ** (2.0 / s)) ** d, 0.0, 1.0)
    far, _ = integrate.quad(lambda lam: lam ** (s / 2.0 - 1.0) * g(lam) ** d,
                            1.0, np.inf)
    return (near + far) / special.gamma(s / 2.0)


def direct_energy_raw(points, weights, cost, h):
    """Direct-term quadratic form for arbitrary (possibly signed) weights.

    Off-diagonal part: (1/2) sum_{i != j} w_i w_j |x_i - x_j|^(-s).
    For h > 0 each point is read as a uniform cube cell of side h and the
    same-cell self-interaction sum_i w_i^2 kappa(d,s) / (2 h^s) is added.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    weights = np.asarray(weights, dtype=float)
    if weights.size == 0:
        return 0.0
    total = 0.0
    if weights.size > 1:
        diff = points[:, None, :] - points[None, :, :]
        dist = np.sqrt((diff ** 2).sum(-1))
        iu = np.triu_indices(weights.size, k=1)
        total += float(np.sum(weights[iu[0]] * weights[iu[1]]
                              * dist[iu] ** (-cost.s)))
    if h > 0:
        kappa = cell_self_interaction(cost.d, cost.s)
        total += float(np.sum(weights ** 2)) * kappa / (2.0 * h ** cost.s)
    return total


def direct_energy(rho, cost, cell_width=None):
    """Direct (mean-field) energy of a discrete density.

    Uses the density's own cell width unless overridden; with the
    "excluded" diagonal rule the same-cell term is dropped regardless.
    """
    if rho.size == 0:
        return 0.0
    h = rho.cell_width if cell_width is None else float(cell_width)
    if cost.diagonal != "infinite":
        h = 0.0
    return direct_energy_raw(rho.points, rho.weights, cost, h)


def localize(plan, region):
    """Restriction of a plan to a region.

    ``region`` is either a boolean mask over the support or a predicate
    evaluated on the support points.  Each configuration keeps exactly its
    in-region points and migrates to the corresponding layer, which
    reproduces the binomial restriction formula layer by layer and
    preserves normalization exactly.
    """
    if callable(region):
        mask = np.asarray([bool(region(p)) for p in plan.support])
    else:
        mask = np.asarray(region, dtype=bool)
        if mask.shape != (plan.support.shape[0],):
            raise ValidationError("region mask must match the support size")
    p0 = plan.p0
    layers = {}
    for n, config, w in plan.configurations():
        kept = tuple(i for i in config if mask[i])
        if not kept:
            p0 += w
        else:
            layers.setdefault(len(kept), {})
            layers[len(kept)][kept] = layers[len(kept)].get(kept, 0.0) + w
    return GCPlan(plan.support, p0, layers)
