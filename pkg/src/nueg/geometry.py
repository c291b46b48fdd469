"""Domains, the 24-tetrahedron cube tiling, rotation quadrature, mollifiers,
smeared indicators and the skeleton field.

Grid convention used by all rasterizers: the global grid with pitch h has
cell j covering [j*h, (j+1)*h) per axis, j ranging over the integers.
"""

from dataclasses import dataclass
from functools import lru_cache, cached_property
import itertools
import json
import math

import numpy as np
from scipy import integrate, signal
from scipy.spatial import ConvexHull
from scipy.stats import qmc

from .errors import ValidationError, GridTooCoarse
from .periodic import Lattice, PeriodicField


@dataclass
class Isometry:
    """Orientation-preserving rigid motion x -> R x + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=float)
        self.translation = np.asarray(self.translation, dtype=float)
        self.validate()

    def validate(self):
        R = self.rotation
        if np.max(np.abs(R.T @ R - np.eye(R.shape[0]))) > 1e-12:
            raise ValidationError("rotation is not orthogonal to 1e-12")
        if abs(np.linalg.det(R) - 1.0) > 1e-12:
            raise ValidationError("rotation must have determinant +1")
        return self

    def apply(self, points):
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def inverse(self):
        return Isometry(self.rotation.T, -self.rotation.T @ self.translation)

    def compose(self, other):
        """Isometry acting as self after other: x -> self(other(x))."""
        return Isometry(self.rotation @ other.rotation,
                        self.rotation @ other.translation + self.translation)


def identity_isometry(d):
    return Isometry(np.eye(d), np.zeros(d))


# ---------------------------------------------------------------------------
# the 24-tetrahedron tiling of the unit cube

_TILE1 = np.array([
    [0.0, 0.0, 0.0],      # cube center
    [0.5, 0.0, 0.0],      # face center
    [0.5, -0.5, -0.5],    # face edge endpoints
    [0.5, 0.5, -0.5],
])


@lru_cache(maxsize=1)
def _cube_rotations():
    """The 24 rotation matrices of the cube (signed permutations, det +1)."""
    mats = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((-1.0, 1.0), repeat=3):
            R = np.zeros((3, 3))
            for row, col in enumerate(perm):
                R[row, col] = signs[row]
            if abs(np.linalg.det(R) - 1.0) < 1e-12:
                mats.append(R)
    assert len(mats) == 24
    return tuple(mats)


class Tiling24:
    """Tiling of the origin-centered unit cube by 24 congruent tetrahedra.

    Each tile j is the image T_j(x) = R_j x - z_j of the reference
    tetrahedron (tile 1 recentered so its barycenter is the origin).  The
    cube rotation group acts simply transitively on the tiles, so the R_j
    run exactly over that group.
    """

    def __init__(self):
        bary = _TILE1.mean(axis=0)
        self.reference_vertices = _TILE1 - bary
        self.isometries = []
        for R in _cube_rotations():
            z = -R @ bary
            self.isometries.append(Isometry(R, -z))  # T_j(x) = R x - z
        self._plane_cache = [self._planes(self.tile_vertices(j)) for j in range(24)]

    def __len__(self):
        return 24

    def tile_vertices(self, j):
        iso = self.isometries[j]
        return self.reference_vertices @ iso.rotation.T + iso.translation

    def apply(self, j, points):
        return self.isometries[j].apply(points)

    def inverse_apply(self, j, points):
        return self.isometries[j].inverse().apply(points)

    @staticmethod
    def _planes(verts):
        hull = ConvexHull(verts)
        return hull.equations  # rows [normal, offset], normal outward unit

    def contains(self, j, points, tol=1e-12):
        pts = np.atleast_2d(points)
        eq = self._plane_cache[j]
        vals = pts @ eq[:, :3].T + eq[:, 3]
        return np.all(vals < -tol, axis=1)

    def locate(self, points, tol=1e-12):
        """Index of the open tile containing each point of the unit cube,
        or -1 for points on a tile boundary."""
        pts = np.atleast_2d(points)
        out = np.full(pts.shape[0], -1, dtype=int)
        hits = np.zeros(pts.shape[0], dtype=int)
        for j in range(24):
            inside = self.contains(j, pts, tol)
            out[inside] = j
            hits += inside
        out[hits != 1] = -1
        return out

    def tile_volumes(self):
        return np.array([ConvexHull(self.tile_vertices(j)).volume for j in range(24)])

    def to_json(self):
        return {
            "reference_vertices": self.reference_vertices.tolist(),
            "isometries": [
                {"rotation": iso.rotation.ravel().tolist(),
                 "translation": iso.translation.tolist()}
                for iso in self.isometries
            ],
        }


@lru_cache(maxsize=1)
def tiling24():
    return Tiling24()


def _tet_incenter(verts):
    """Incenter and inradius of a tetrahedron (faces opposite vertices)."""
    verts = np.asarray(verts, dtype=float)
    areas = np.empty(4)
    for i in range(4):
        f = np.delete(verts, i, axis=0)
        areas[i] = 0.5 * np.linalg.norm(np.cross(f[1] - f[0], f[2] - f[0]))
    center = (areas[:, None] * verts).sum(axis=0) / areas.sum()
    vol = abs(np.linalg.det(verts[1:] - verts[0])) / 6.0
    return center, 3.0 * vol / areas.sum()


def shrink_tet_about_incenter(verts, factor):
    """Homothety about the incenter: every face plane retreats inward by the
    uniform distance (1 - factor) * inradius, and the volume scales by
    factor^3.  This is exactly the erosion of the tetrahedron."""
    center, _ = _tet_incenter(verts)
    return center + factor * (np.asarray(verts) - center)


# ---------------------------------------------------------------------------
# domains


class Domain:
    """Bounded convex region: cube, reference-shaped tetrahedron or polytope."""

    def __init__(self, kind, dimension, volume, boundary_area, center=None,
                 side=None, scale=None, vertices=None, isometry=None):
        if volume <= 0:
            raise ValidationError("domain volume must be positive")
        self.kind = kind
        self.dimension = dimension
        self.volume = float(volume)
        self.boundary_area = float(boundary_area)
        self.center = center
        self.side = side
        self.scale = scale
        self.vertices = vertices
        self.isometry = isometry
        self._hull_eq = None
        if vertices is not None:
            self._hull_eq = ConvexHull(vertices).equations

    # constructors ----------------------------------------------------------

    @classmethod
    def cube(cls, side, center=None, dimension=3):
        if side <= 0:
            raise ValidationError("cube side must be positive")
        if center is None:
            center = np.zeros(dimension)
        center = np.asarray(center, dtype=float)
        boundary = {1: 2.0, 2: 4.0 * side, 3: 6.0 * side ** 2}[dimension]
        return cls("cube", dimension, side ** dimension, boundary,
                   center=center, side=float(side))

    @classmethod
    def tetrahedron(cls, scale, isometry=None):
        """The reference tetrahedron of the 24-tile cube tiling, dilated by
        ``scale``; its volume is scale^3 / 24."""
        if scale <= 0:
            raise ValidationError("tetrahedron scale must be positive")
        if isometry is None:
            isometry = identity_isometry(3)
        verts = scale * tiling24().reference_vertices
        verts = isometry.apply(verts)
        hull = ConvexHull(verts)
        return cls("tetrahedron", 3, hull.volume, hull.area,
                   scale=float(scale), vertices=verts, isometry=isometry)

    @classmethod
    def polytope(cls, vertices):
        verts = np.atleast_2d(np.asarray(vertices, dtype=float))
        hull = ConvexHull(verts)
        if verts.shape[1] == 2:
            volume, area = hull.volume, hull.area  # scipy: area is perimeter in 2d
        else:
            volume, area = hull.volume, hull.area
        return cls("polytope", verts.shape[1], volume, area, vertices=verts)

    # geometry queries --------------------------------------------------------

    def bounding_box(self):
        if self.kind == "cube":
            lo = self.center - self.side / 2.0
            hi = self.center + self.side / 2.0
        else:
            lo = self.vertices.min(axis=0)
            hi = self.vertices.max(axis=0)
        return lo, hi

    def contains(self, points, tol=1e-12):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "cube":
            lo, hi = self.bounding_box()
            return np.all((pts > lo + tol) & (pts < hi - tol), axis=1)
        vals = pts @ self._hull_eq[:, :-1].T + self._hull_eq[:, -1]
        return np.all(vals < -tol, axis=1)

    def distance_to_boundary(self, points):
        """Signed only for interior use: distance from inside points to the
        boundary (nonpositive values mean outside)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "cube":
            lo, hi = self.bounding_box()
            return np.minimum((pts - lo).min(axis=1), (hi - pts).min(axis=1))
        vals = pts @ self._hull_eq[:, :-1].T + self._hull_eq[:, -1]
        return -vals.max(axis=1)

    def inradius(self):
        if self.kind == "cube":
            return self.side / 2.0
        if self.kind == "tetrahedron":
            return 3.0 * self.volume / self.boundary_area
        # convex polytope: Chebyshev radius from plane distances of samples
        rng = np.random.default_rng(0)
        pts = self.sample_uniform(4096, rng)
        return float(self.distance_to_boundary(pts).max())

    def diameter(self):
        if self.kind == "cube":
            return self.side * math.sqrt(self.dimension)
        diffs = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.sqrt((diffs ** 2).sum(-1)).max())

    def sample_uniform(self, n, rng):
        if self.kind == "cube":
            lo, hi = self.bounding_box()
            return rng.uniform(lo, hi, size=(n, self.dimension))
        if self.kind == "tetrahedron":
            g = rng.gamma(1.0, 1.0, size=(n, 4))
            bary = g / g.sum(axis=1, keepdims=True)
            return bary @ self.vertices
        lo, hi = self.bounding_box()
        out = np.empty((0, self.dimension))
        while out.shape[0] < n:
            cand = rng.uniform(lo, hi, size=(2 * n, self.dimension))
            out = np.vstack([out, cand[self.contains(cand)]])
        return out[:n]

    def to_json(self):
        rec = {"kind": self.kind, "dimension": self.dimension,
               "volume": self.volume, "boundary_area": self.boundary_area}
        if self.kind == "cube":
            rec["side"] = self.side
            rec["center"] = self.center.tolist()
        else:
            rec["vertices"] = self.vertices.tolist()
            if self.scale is not None:
                rec["scale"] = self.scale
        return rec

    @classmethod
    def from_json(cls, rec):
        if rec["kind"] == "cube":
            return cls.cube(rec["side"], np.asarray(rec["center"]), rec["dimension"])
        if rec["kind"] == "tetrahedron" and "scale" in rec:
            dom = cls.polytope(np.asarray(rec["vertices"]))
            dom.kind = "tetrahedron"
            dom.scale = rec["scale"]
            return dom
        return cls.polytope(np.asarray(rec["vertices"]))


# ---------------------------------------------------------------------------
# Fisher boundary regularity


def fisher_regularity(domain, t, n_samples=100_000, seed=0):
    """Monte-Carlo estimate of the inner boundary-shell volume fraction
    |{x in O : dist(x, bd O) <= |O|^(1/d) t}| / |O|."""
    if t < 0:
        raise ValidationError("shell parameter t must be nonnegative")
    if domain.volume <= 0 or not np.isfinite(domain.volume):
        raise ValidationError("domain must be bounded with positive volume")
    if t == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    pts = domain.sample_uniform(n_samples, rng)
    dist = domain.distance_to_boundary(pts)
    cut = domain.volume ** (1.0 / domain.dimension) * t
    return float(np.mean(dist <= cut))


# ---------------------------------------------------------------------------
# rotation quadrature


def so_quadrature(d, n, seed=0):
    """Deterministic sample of the rotation group for Haar averaging.

    d=1 yields the single trivial rotation, d=2 equally spaced angles and
    d=3 a seeded low-discrepancy (Halton) sequence mapped to quaternions.
    """
    if n < 1:
        raise ValidationError("need at least one rotation")
    if d == 1:
        return [np.eye(1)]
    if d == 2:
        out = []
        for k in range(n):
            a = 2.0 * math.pi * k / n
            out.append(np.array([[math.cos(a), -math.sin(a)],
                                 [math.sin(a), math.cos(a)]]))
        return out
    if d == 3:
        u = qmc.Halton(d=3, scramble=True, seed=seed).random(n)
        return [_quaternion_matrix(_shoemake(row)) for row in u]
    raise ValidationError(f"unsupported dimension {d}")


def _shoemake(u):
    u1, u2, u3 = u
    a, b = math.sqrt(1.0 - u1), math.sqrt(u1)
    return np.array([a * math.sin(2 * math.pi * u2),
                     a * math.cos(2 * math.pi * u2),
                     b * math.sin(2 * math.pi * u3),
                     b * math.cos(2 * math.pi * u3)])


def _quaternion_matrix(q):
    x, y, z, w = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


# ---------------------------------------------------------------------------
# mollifiers and smeared indicators


def _bump(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


class Mollifier:
    """Radial smooth bump of unit mass supported in the ball of radius
    b*delta, with inner factor 0 < b <= 1 shrinking the support inside the
    nominal smearing length delta."""

    def __init__(self, delta, b=0.5, dimension=3):
        if delta <= 0:
            raise ValidationError("smearing delta must be positive")
        if not 0 < b <= 1:
            raise ValidationError("inner factor b must be in (0, 1]")
        self.delta = float(delta)
        self.b = float(b)
        self.dimension = dimension

    @property
    def support_radius(self):
        return self.b * self.delta

    @cached_property
    def _norm_const(self):
        d = self.dimension
        if d == 1:
            val, _ = integrate.quad(lambda r: 2.0 * _bump(r), 0, 1)
        elif d == 2:
            val, _ = integrate.quad(lambda r: 2.0 * math.pi * r * _bump(r), 0, 1)
        else:
            val, _ = integrate.quad(lambda r: 4.0 * math.pi * r * r * _bump(r), 0, 1)
        return 1.0 / val

    def density(self, points):
        """Pointwise kernel value eta_delta(x)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        r = np.linalg.norm(pts, axis=1) / self.support_radius
        return self._norm_const * _bump(r) / self.support_radius ** self.dimension

    def mass_check(self, per_axis=64):
        """Quadrature check of the unit-mass normalization."""
        R = self.support_radius
        ax = -R + 2 * R * (np.arange(per_axis) + 0.5) / per_axis
        mesh = np.meshgrid(*[ax] * self.dimension, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        h = 2 * R / per_axis
        return float(self.density(pts).sum() * h ** self.dimension)

    def kernel_cells(self, pitch):
        """Discrete kernel on the grid of the given pitch, odd-sized,
        centered and normalized so its entries sum to exactly 1."""
        d = self.dimension
        half = int(math.ceil(self.support_radius / pitch)) + 1
        axes = [pitch * (np.arange(-half, half + 1)) for _ in range(d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        vals = self.density(pts).reshape([2 * half + 1] * d)
        s = vals.sum()
        if s <= 0:
            raise GridTooCoarse("kernel unresolved: fewer than one cell across "
                                "the mollifier support")
        return vals / s

    @cached_property
    def c_eta(self):
        """Constant of the kinetic-energy bound C_eta |bd O| / delta for
        smeared indicators, from the flat-interface 1-d reduction of the
        profile (doubled as an allowance for edges and corners)."""
        if self.dimension != 3:
            raise ValidationError("kinetic constant implemented for d=3")
        t = np.linspace(-1.0, 1.0, 4001)
        # marginal density of the unit bump along one axis
        r = np.linspace(0.0, 1.0, 4001)
        q = _bump(r) * r
        Q = integrate.cumulative_trapezoid(q, r, initial=0.0)
        m = 2.0 * math.pi * self._norm_const * (Q[-1] - np.interp(np.abs(t), r, Q))
        phi = integrate.cumulative_trapezoid(m, t, initial=0.0)
        mask = phi > 1e-12
        c1d = float(np.trapezoid(m[mask] ** 2 / (4.0 * phi[mask]), t[mask]))
        return 2.0 * c1d / self.b


@dataclass
class SmearedIndicator:
    """Grid evaluation of the convolution of a domain indicator with a
    mollifier; values are cell averages on the stated grid."""

    domain: Domain
    mollifier: Mollifier
    origin_index: np.ndarray
    pitch: float
    values: np.ndarray
    empty_core: bool

    def integral(self):
        return float(self.values.sum() * self.pitch ** self.domain.dimension)

    def cell_centers(self):
        axes = [(self.origin_index[a] + np.arange(self.values.shape[a]) + 0.5)
                * self.pitch for a in range(self.domain.dimension)]
        return axes

    def value_at(self, point):
        idx = []
        for a in range(self.domain.dimension):
            i = int(np.floor(point[a] / self.pitch)) - int(self.origin_index[a])
            if not 0 <= i < self.values.shape[a]:
                return 0.0  # outside the evaluation grid, hence the support
            idx.append(i)
        return float(self.values[tuple(idx)])


# ---------------------------------------------------------------------------
# rasterization helpers


def _axis_overlap(lo_dom, hi_dom, j0, n, pitch):
    edges = (j0 + np.arange(n + 1)) * pitch
    left = np.maximum(edges[:-1], lo_dom)
    right = np.minimum(edges[1:], hi_dom)
    return np.clip(right - left, 0.0, pitch) / pitch


def rasterize_fractions(domain, j_lo, shape, pitch, subdiv=4, fix_volume=True):
    """Fraction of each grid cell covered by the domain.

    Cubes are handled exactly by per-axis interval overlap.  Other convex
    domains use subcell midpoint counting on straddling cells, after exact
    full-inside/outside classification; boundary-cell fractions are then
    rescaled so the total rasterized volume matches ``domain.volume``.
    """
    d = domain.dimension
    if domain.kind == "cube":
        lo, hi = domain.bounding_box()
        axes = [_axis_overlap(lo[a], hi[a], j_lo[a], shape[a], pitch)
                for a in range(d)]
        frac = axes[0]
        for a in range(1, d):
            frac = np.multiply.outer(frac, axes[a])
        return frac

    frac = np.zeros(shape)
    eq = domain._hull_eq
    # cell corner coordinates
    corner_axes = [(j_lo[a] + np.arange(shape[a] + 1)) * pitch for a in range(d)]
    corner_mesh = np.meshgrid(*corner_axes, indexing="ij")
    corners = np.stack([m.ravel() for m in corner_mesh], axis=1)
    vals = corners @ eq[:, :-1].T + eq[:, -1]
    vals = vals.reshape([n + 1 for n in shape] + [eq.shape[0]])
    # gather the 2^d corners of each cell
    corner_vals = []
    for off in itertools.product((0, 1), repeat=d):
        sl = tuple(slice(o, o + shape[a]) for a, o in enumerate(off))
        corner_vals.append(vals[sl])
    corner_vals = np.stack(corner_vals, axis=0)  # (2^d, *shape, n_planes)
    all_inside = np.all(corner_vals < 0, axis=(0, -1))
    some_plane_excludes = np.any(np.all(corner_vals > 0, axis=0), axis=-1)
    frac[all_inside] = 1.0
    straddle = ~all_inside & ~some_plane_excludes
    idxs = np.argwhere(straddle)
    if idxs.size:
        offs = (np.stack(np.meshgrid(*[np.arange(subdiv)] * d, indexing="ij"),
                         axis=-1).reshape(-1, d) + 0.5) / subdiv
        for idx in idxs:
            base = (j_lo + idx) * pitch
            pts = base + offs * pitch
            frac[tuple(idx)] = float(np.mean(domain.contains(pts, tol=0.0)))
    if fix_volume:
        frac = _fix_rasterized_volume(frac, straddle, domain.volume, pitch, d)
    return frac


def _fix_rasterized_volume(frac, partial_mask, target_volume, pitch, d):
    """Rescale boundary-cell fractions so the rasterized volume is exact."""
    cell = pitch ** d
    for _ in range(4):
        total = frac.sum() * cell
        deficit = target_volume - total
        if abs(deficit) < 1e-13 * max(target_volume, 1.0):
            break
        part = partial_mask & (frac > 0) & (frac < 1)
        pool = frac[part].sum() * cell
        if pool <= 0:
            break
        scale = 1.0 + deficit / pool
        frac[part] = np.clip(frac[part] * scale, 0.0, 1.0)
    return frac


# ---------------------------------------------------------------------------
# smearing


def smear(domain, mollifier, cells_per_delta=8, subdiv=4):
    """Cell-averaged convolution of the domain indicator with the mollifier.

    The discrete kernel has unit mass, so the grid integral of the result
    equals the rasterized domain volume exactly and values stay in [0, 1].
    """
    d = domain.dimension
    if mollifier.dimension != d:
        raise ValidationError("mollifier dimension does not match the domain")
    pitch = mollifier.delta / cells_per_delta
    margin = mollifier.support_radius + 2 * pitch
    lo, hi = domain.bounding_box()
    j_lo = np.floor((lo - margin) / pitch).astype(int)
    j_hi = np.ceil((hi + margin) / pitch).astype(int)
    shape = tuple(int(j_hi[a] - j_lo[a]) for a in range(d))
    frac = rasterize_fractions(domain, j_lo, shape, pitch, subdiv=subdiv)
    kernel = mollifier.kernel_cells(pitch)
    values = signal.fftconvolve(frac, kernel, mode="same")
    values = np.clip(values, 0.0, 1.0)
    empty_core = mollifier.delta > domain.inradius()
    return SmearedIndicator(domain=domain, mollifier=mollifier,
                            origin_index=j_lo, pitch=pitch, values=values,
                            empty_core=empty_core)


def smeared_kinetic(domain, mollifier, cells_per_delta=8, subdiv=4):
    """Grid estimate of the gradient energy of sqrt(smeared indicator)."""
    if cells_per_delta < 8:
        raise GridTooCoarse(
            f"{cells_per_delta} cells across delta; need at least 8")
    ind = smear(domain, mollifier, cells_per_delta=cells_per_delta, subdiv=subdiv)
    root = np.sqrt(ind.values)
    grads = np.gradient(root, ind.pitch)
    if ind.domain.dimension == 1:
        grads = [grads]
    density = sum(g ** 2 for g in grads)
    return float(density.sum() * ind.pitch ** domain.dimension)


def smeared_kinetic_bound(domain, mollifier):
    """The profile constant bound C_eta |bd O| / delta."""
    return mollifier.c_eta * domain.boundary_area / mollifier.delta


# ---------------------------------------------------------------------------
# skeleton field


def _periodic_convolve(samples, kernel):
    """Circular nd convolution; kernel is odd-sized and centered."""
    n = samples.shape
    k = np.zeros_like(samples)
    half = [s // 2 for s in kernel.shape]
    idx = np.meshgrid(*[np.arange(s) for s in kernel.shape], indexing="ij")
    target = tuple((idx[a] - half[a]) % n[a] for a in range(samples.ndim))
    np.add.at(k, target, kernel)
    axes = tuple(range(samples.ndim))
    out = np.fft.irfftn(np.fft.rfftn(samples) * np.fft.rfftn(k), s=n, axes=axes)
    return out


def _rasterize_tet_periodic(vertices, n, pitch, subdiv=4):
    """Fraction field of a tetrahedron on the periodic n^3 grid of period
    n*pitch, with exact total volume."""
    dom = Domain.polytope(vertices)
    lo, hi = dom.bounding_box()
    j_lo = np.floor(lo / pitch).astype(int)
    j_hi = np.ceil(hi / pitch).astype(int)
    shape = tuple(int(j_hi[a] - j_lo[a]) for a in range(3))
    frac = rasterize_fractions(dom, j_lo, shape, pitch, subdiv=subdiv)
    out = np.zeros((n, n, n))
    idx = np.meshgrid(*[np.arange(s) for s in shape], indexing="ij")
    target = tuple((idx[a] + j_lo[a]) % n for a in range(3))
    np.add.at(out, target, frac)
    return out


# Inner factor for the tiling mollifiers.  Tiles are thin (inradius about
# 0.131 at unit scale), so the smearing kernels must stay well within the
# uniform erosion margins: the support chain needs b_tile + b_tile/2 below
# half the inradius.
TILE_SMEAR_B = 0.02


def _smeared_tile_sum(ell, delta_smear, shrink, n, b):
    """Periodic sum over the lattice and the 24 tiles of the indicators
    shrunk about their incenters by ``shrink`` and smeared at scale
    ``delta_smear``."""
    pitch = ell / n
    tiling = tiling24()
    total = np.zeros((n, n, n))
    for j in range(24):
        iso = tiling.isometries[j]
        tile = tiling.reference_vertices @ iso.rotation.T + iso.translation
        verts = shrink_tet_about_incenter(ell * tile, shrink)
        total += _rasterize_tet_periodic(verts, n, pitch)
    moll = Mollifier(delta_smear, b=b, dimension=3)
    kernel = moll.kernel_cells(pitch)
    return _periodic_convolve(total, kernel)


def skeleton(ell, delta, cells_per_ell=None, b=TILE_SMEAR_B):
    """The periodic remainder field that completes the shrunken smeared
    tetrahedra of the cube tiling to a partition of unity.

    Built from the 24 tiles shrunk by the factor (1 - delta/(2 ell)) about
    their incenters (the uniform erosion, so the volume law is exact),
    smeared at scale delta/2, and normalized so that the cell mean is
    exactly 1 - (1 - delta/ell)^3.
    """
    if not 0 < delta <= ell / 2:
        raise ValidationError("need 0 < delta <= ell/2")
    if cells_per_ell is None:
        cells_per_ell = max(32, 16 * int(math.ceil(ell / delta)))
    n = int(cells_per_ell)
    smeared = _smeared_tile_sum(ell, delta / 2.0, 1.0 - delta / (2.0 * ell), n, b)
    pref = (1.0 - (1.0 - delta / ell) ** 3) / (1.0 - (1.0 - delta / (2.0 * ell)) ** 3)
    samples = np.clip(pref * (1.0 - smeared), 0.0, None)
    return PeriodicField(Lattice(np.eye(3) * ell), samples, "pc")


def shrunken_smeared_tiles(ell, delta, cells_per_ell=None, b=TILE_SMEAR_B):
    """Periodic field of the companion terms of the skeleton: tile
    indicators shrunk about their incenters by (1 - delta/ell) and smeared
    at scale delta."""
    if not 0 < delta <= ell / 2:
        raise ValidationError("need 0 < delta <= ell/2")
    if cells_per_ell is None:
        cells_per_ell = max(32, 16 * int(math.ceil(ell / delta)))
    n = int(cells_per_ell)
    smeared = _smeared_tile_sum(ell, delta, 1.0 - delta / ell, n, b)
    return PeriodicField(Lattice(np.eye(3) * ell), np.clip(smeared, 0.0, None),
                         "pc")
