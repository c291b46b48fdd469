"""Lattices, lattice-periodic scalar fields and their mean values.

A field is stored as nonnegative samples on a regular grid over one unit
cell and extended to all of space by lattice periodicity.  Two
interpolation rules are supported: piecewise-constant cell values
("pc", the default) and multilinear interpolation between grid nodes.
Every integral used elsewhere in the package reduces to finite sums over
these samples.
"""

from dataclasses import dataclass, field as dataclass_field
import itertools
import json

import numpy as np

from .errors import ValidationError

INTERPOLATIONS = ("pc", "multilinear")


class Lattice:
    """A full-rank lattice in dimension d, spanned by the rows of ``basis``.

    The fundamental cell is the half-open parallelepiped spanned by the
    basis vectors at the origin; points reduce to cell coordinates in
    [0,1)^d by flooring.
    """

    def __init__(self, basis):
        basis = np.atleast_2d(np.asarray(basis, dtype=float))
        if basis.shape[0] != basis.shape[1]:
            raise ValidationError(f"basis must be square, got {basis.shape}")
        d = basis.shape[0]
        if d not in (1, 2, 3):
            raise ValidationError(f"dimension must be 1, 2 or 3, got {d}")
        det = np.linalg.det(basis)
        if abs(det) < 1e-12:
            raise ValidationError("basis vectors are linearly dependent")
        self.dimension = d
        self.basis = basis
        self.unit_cell_volume = abs(det)
        self._inv = np.linalg.inv(basis)

    def cell_coordinates(self, points):
        """Map points to fractional cell coordinates in [0,1)^d."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        frac = pts @ self._inv
        return frac - np.floor(frac)

    @property
    def is_orthogonal(self):
        off = self.basis - np.diag(np.diag(self.basis))
        return np.all(np.abs(off) < 1e-14) and np.all(np.diag(self.basis) > 0)

    def cell_diameter(self):
        """Largest distance between two points of the fundamental cell."""
        best = 0.0
        for signs in itertools.product((-1, 0, 1), repeat=self.dimension):
            v = np.asarray(signs, dtype=float) @ self.basis
            best = max(best, float(np.linalg.norm(v)))
        return best


@dataclass
class MeanValueResult:
    """A windowed average together with its proven deviation bound."""

    value: float
    error_bound: float
    window_side: float


class PeriodicField:
    """A nonnegative lattice-periodic scalar field sampled on a cell grid.

    Inhomogeneities are nonnegative by definition; signed fields are only
    admitted explicitly (``signed=True``) for test functions of the
    translation-averaged direct-term identity.
    """

    def __init__(self, lattice, samples, interpolation="pc", signed=False):
        samples = np.asarray(samples, dtype=float)
        if samples.ndim != lattice.dimension:
            raise ValidationError(
                f"samples must be {lattice.dimension}-dimensional, "
                f"got shape {samples.shape}"
            )
        if not signed and np.any(samples < 0):
            raise ValidationError("field samples must be nonnegative")
        if interpolation not in INTERPOLATIONS:
            raise ValidationError(f"unknown interpolation {interpolation!r}")
        self.lattice = lattice
        self.samples = samples
        self.interpolation = interpolation
        self.signed = bool(signed)

    @property
    def dimension(self):
        return self.lattice.dimension

    @property
    def grid_shape(self):
        return self.samples.shape

    def grid_pitch(self):
        """Per-axis spacing of the sample grid, valid for orthogonal lattices."""
        if not self.lattice.is_orthogonal:
            raise ValidationError("grid pitch requires an orthogonal lattice")
        return np.diag(self.lattice.basis) / np.asarray(self.grid_shape)

    def __call__(self, points):
        return self.eval(points)

    def eval(self, points):
        """Evaluate the periodic extension at arbitrary points (vectorized)."""
        pts = np.asarray(points, dtype=float)
        if self.dimension == 1 and pts.ndim == 1:
            pts = pts[:, None]  # a 1-d array is a batch of scalar points
        pts = np.atleast_2d(pts)
        frac = self.lattice.cell_coordinates(pts)
        shape = np.asarray(self.grid_shape)
        if self.interpolation == "pc":
            idx = np.floor(frac * shape).astype(int)
            idx = np.minimum(idx, shape - 1)  # guard frac == 1.0 - eps rounding
            out = self.samples[tuple(idx.T)]
        else:
            out = self._eval_multilinear(frac, shape)
        if np.ndim(points) == 1 and self.dimension > 1:
            return float(out[0])
        if np.ndim(points) == 0 or (np.ndim(points) == 1 and self.dimension == 1):
            return out if out.size > 1 else float(out[0])
        return out

    def _eval_multilinear(self, frac, shape):
        # samples live on grid nodes k/n_i, wrapped periodically
        t = frac * shape
        base = np.floor(t).astype(int)
        w = t - base
        out = np.zeros(frac.shape[0])
        d = self.dimension
        for corner in itertools.product((0, 1), repeat=d):
            idx = tuple((base[:, a] + corner[a]) % shape[a] for a in range(d))
            weight = np.ones(frac.shape[0])
            for a in range(d):
                weight *= w[:, a] if corner[a] else 1.0 - w[:, a]
            out += weight * self.samples[idx]
        return out

    def is_constant(self, tol=0.0):
        s = self.samples
        return bool(np.all(np.abs(s - s.flat[0]) <= tol))

    # -- serialization -----------------------------------------------------

    def to_json(self):
        return {
            "dimension": self.dimension,
            "basis": [float(x) for x in self.lattice.basis.ravel()],
            "shape": list(self.grid_shape),
            "samples": [float(x) for x in self.samples.ravel()],
            "interpolation": self.interpolation,
        }

    @classmethod
    def from_json(cls, record):
        d = int(record["dimension"])
        basis = np.asarray(record["basis"], dtype=float).reshape(d, d)
        shape = tuple(int(n) for n in record["shape"])
        samples = np.asarray(record["samples"], dtype=float).reshape(shape)
        return cls(Lattice(basis), samples, record.get("interpolation", "pc"))

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, sort_keys=True, indent=2)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def constant_field(value, dimension=1, shape=None, cell=1.0, interpolation="pc"):
    """Convenience constructor for a constant inhomogeneity."""
    if shape is None:
        shape = (2,) * dimension
    lattice = Lattice(np.eye(dimension) * cell)
    return PeriodicField(lattice, np.full(shape, float(value)), interpolation)


# ---------------------------------------------------------------------------
# mean values


def mean_value(field):
    """Exact average of the field over one unit cell.

    For both interpolation rules the cell average equals the plain mean of
    the samples (midpoint cells for "pc", periodic trapezoid for
    "multilinear").
    """
    return float(np.mean(field.samples))


def power_mean(field, q):
    """Cell average of field**q.

    Exact for piecewise-constant fields.  For multilinear fields the power
    is integrated by a fixed-order Gauss-Legendre rule per grid cell.
    """
    if q <= 0:
        raise ValidationError(f"exponent must be positive, got {q}")
    if field.interpolation == "pc":
        return float(np.mean(field.samples ** q))
    return _power_mean_multilinear(field, q)


def _power_mean_multilinear(field, q, order=6):
    d = field.dimension
    shape = field.grid_shape
    nodes, weights = np.polynomial.legendre.leggauss(order)
    nodes = (nodes + 1.0) / 2.0  # map to (0,1)
    weights = weights / 2.0
    total = 0.0
    # integrate over each cell of the fractional-coordinate grid
    grids = np.meshgrid(*[nodes for _ in range(d)], indexing="ij")
    wgrids = np.meshgrid(*[weights for _ in range(d)], indexing="ij")
    wprod = np.ones_like(wgrids[0])
    for w in wgrids:
        wprod = wprod * w
    offsets = np.stack([g.ravel() for g in grids], axis=1)
    wflat = wprod.ravel()
    for cell in itertools.product(*[range(n) for n in shape]):
        frac = (np.asarray(cell, dtype=float) + offsets) / np.asarray(shape)
        vals = field._eval_multilinear(frac, np.asarray(shape))
        total += float(np.dot(wflat, vals ** q))
    return total / float(np.prod(shape))


def _axis_slab_weights(lo, hi, n, pitch):
    """Total overlap length of window interval [lo, hi] with each of the n
    periodic slabs of width ``pitch`` (piecewise-constant cells)."""
    period = n * pitch
    length = hi - lo
    full, rest = divmod(length, period)
    w = np.full(n, full * pitch)
    # remaining partial stretch [lo, lo + rest), reduce to cell coordinates
    start = (lo % period) / pitch
    remaining = rest / pitch
    j = int(np.floor(start))
    offset = start - j
    while remaining > 1e-15:
        step = min(1.0 - offset, remaining)
        w[j % n] += step * pitch
        remaining -= step
        offset = 0.0
        j += 1
    return w


def _axis_hat_weights(lo, hi, n, pitch):
    """Integral of each periodic hat basis function over [lo, hi]
    (multilinear cells; nodes at integer multiples of pitch)."""
    period = n * pitch

    def hat_integral_block(a, b):
        # integrate all hats over [a, b] with 0 <= a <= b <= period, exactly
        out = np.zeros(n)
        j = int(np.floor(a / pitch))
        pos = a
        while pos < b - 1e-15:
            nxt = min((j + 1) * pitch, b)
            # on [j*pitch, (j+1)*pitch] the active hats are j and j+1
            t0 = pos / pitch - j
            t1 = nxt / pitch - j
            out[j % n] += pitch * ((t1 - t1 ** 2 / 2) - (t0 - t0 ** 2 / 2))
            out[(j + 1) % n] += pitch * (t1 ** 2 - t0 ** 2) / 2
            pos = nxt
            j += 1
        return out

    length = hi - lo
    full, rest = divmod(length, period)
    w = np.full(n, full * pitch)
    start = lo % period
    if start + rest <= period:
        w += hat_integral_block(start, start + rest)
    else:
        w += hat_integral_block(start, period)
        w += hat_integral_block(0.0, start + rest - period)
    return w


def windowed_mean(field, center, side):
    """Average of the field over the axis-aligned cube window of the given
    side length centered at ``center``.

    Returns a :class:`MeanValueResult` whose ``error_bound`` is the proven
    deviation bound (16 d diam(cell) / side) * cell-mean of |field|; the
    bound decays exactly like 1/side.
    """
    if side <= 0:
        raise ValidationError(f"window side must be positive, got {side}")
    d = field.dimension
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if center.shape != (d,):
        raise ValidationError(f"center must have shape ({d},)")
    lo = center - side / 2.0
    hi = center + side / 2.0

    if field.lattice.is_orthogonal:
        shape = field.grid_shape
        pitches = field.grid_pitch()
        axis_fn = _axis_slab_weights if field.interpolation == "pc" else _axis_hat_weights
        weights = [axis_fn(lo[a], hi[a], shape[a], pitches[a]) for a in range(d)]
        letters = "ijk"[:d]
        subscripts = ",".join([letters] + list(letters)) + "->"
        integral = float(np.einsum(subscripts, field.samples, *weights))
        value = integral / side ** d
    else:
        value = _windowed_mean_sampled(field, lo, hi)

    rate = 16.0 * d * field.lattice.cell_diameter() / side
    bound = rate * float(np.mean(np.abs(field.samples)))
    return MeanValueResult(value=value, error_bound=bound, window_side=float(side))


def _windowed_mean_sampled(field, lo, hi, per_axis=64):
    # midpoint quadrature fallback for non-orthogonal lattices
    d = field.dimension
    axes = [lo[a] + (hi[a] - lo[a]) * (np.arange(per_axis) + 0.5) / per_axis
            for a in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    return float(np.mean(field.eval(pts)))
