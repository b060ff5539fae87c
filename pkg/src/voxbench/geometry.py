"""Geometric primitives, membership predicates, convex hulls, and ray casting.

Everything here is pure: values are immutable after construction and the
operations allocate their own outputs, so concurrent use is unrestricted.
Membership predicates are boundary-inclusive so that points generated exactly
on a primitive's surface count as inside.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Tolerance for half-space evaluation (hull membership, orthonormality checks).
HULL_EPS = 1e-9
# Boundary-inclusive slack (meters) so points constructed exactly on a
# primitive surface stay members despite rounding.
BOUNDARY_EPS = 1e-9
# Tolerance below which a ray is treated as parallel to a surface.
_RAY_EPS = 1e-12

Vec3 = np.ndarray


class DegenerateGeometryError(ValueError):
    """Raised when an input point set has no 3-D extent (coplanar/collinear)."""


def vec3(x: float, y: float, z: float) -> Vec3:
    return np.array([x, y, z], dtype=np.float64)


def _as_vec3(v) -> Vec3:
    a = np.asarray(v, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(a)):
        raise ValueError("vector components must be finite")
    return a


def _as_points(points) -> np.ndarray:
    a = np.asarray(points, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, 3)
    if a.ndim != 2 or a.shape[1] != 3:
        raise ValueError(f"expected an (N, 3) point array, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class Cylinder:
    """Finite cylinder between two cap centers with a fixed radius (meters)."""

    bottom: Vec3
    top: Vec3
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "bottom", _as_vec3(self.bottom))
        object.__setattr__(self, "top", _as_vec3(self.top))
        if not (self.radius > 0.0):
            raise ValueError("cylinder radius must be positive")
        if float(np.linalg.norm(self.top - self.bottom)) <= 0.0:
            raise ValueError("cylinder caps must be distinct points")


@dataclass(frozen=True)
class Prism:
    """Rectangular box given by a center, three unit face normals, and sizes.

    ``axes`` holds the normals as rows; ``sizes`` are the full edge lengths
    measured along the corresponding normal.
    """

    center: Vec3
    axes: np.ndarray
    sizes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", _as_vec3(self.center))
        axes = np.asarray(self.axes, dtype=np.float64).reshape(3, 3)
        sizes = np.asarray(self.sizes, dtype=np.float64).reshape(3)
        if np.any(sizes <= 0.0):
            raise ValueError("prism sizes must be positive")
        norms = np.linalg.norm(axes, axis=1)
        if np.any(np.abs(norms - 1.0) > HULL_EPS):
            raise ValueError("prism axes must be unit length")
        gram = axes @ axes.T
        if np.any(np.abs(gram - np.eye(3)) > 1e-6):
            raise ValueError("prism axes must be mutually orthogonal")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "sizes", sizes)

    @classmethod
    def axis_aligned(cls, center, sizes) -> "Prism":
        return cls(center, np.eye(3), sizes)


@dataclass(frozen=True)
class Triangle:
    a: Vec3
    b: Vec3
    c: Vec3

    def __post_init__(self):
        object.__setattr__(self, "a", _as_vec3(self.a))
        object.__setattr__(self, "b", _as_vec3(self.b))
        object.__setattr__(self, "c", _as_vec3(self.c))


@dataclass(frozen=True)
class Aabb:
    lo: Vec3
    hi: Vec3

    def __post_init__(self):
        object.__setattr__(self, "lo", _as_vec3(self.lo))
        object.__setattr__(self, "hi", _as_vec3(self.hi))
        if np.any(self.hi < self.lo):
            raise ValueError("aabb min corner must not exceed max corner")


@dataclass(frozen=True)
class ConvexPolyhedron:
    """Intersection of half-spaces ``normal . x <= offset`` with outward unit normals."""

    normals: np.ndarray
    offsets: np.ndarray
    interior_point: Vec3 = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "normals", np.asarray(self.normals, dtype=np.float64))
        object.__setattr__(self, "offsets", np.asarray(self.offsets, dtype=np.float64))

    def __len__(self) -> int:
        return len(self.offsets)


# ---------------------------------------------------------------------------
# Membership predicates
# ---------------------------------------------------------------------------

def points_in_cylinder(points, cyl: Cylinder) -> np.ndarray:
    """Boundary-inclusive membership for a batch of points."""
    pts = _as_points(points)
    axis = cyl.top - cyl.bottom
    length = np.linalg.norm(axis)
    slack = BOUNDARY_EPS * length  # dot products scale with the axis length
    rel = pts - cyl.bottom
    above_bottom = rel @ axis >= -slack
    below_top = (pts - cyl.top) @ axis <= slack
    # Distance to the axis line via the cross-product area formula.
    cross = np.cross(rel, axis)
    dist = np.linalg.norm(cross, axis=1) / length
    return above_bottom & below_top & (dist <= cyl.radius + BOUNDARY_EPS)


def point_in_cylinder(q, cyl: Cylinder) -> bool:
    return bool(points_in_cylinder(_as_vec3(q), cyl)[0])


def points_in_prism(points, prism: Prism) -> np.ndarray:
    pts = _as_points(points)
    local = np.abs((pts - prism.center) @ prism.axes.T)
    return np.all(local <= prism.sizes / 2.0 + BOUNDARY_EPS, axis=1)


def point_in_prism(q, prism: Prism) -> bool:
    return bool(points_in_prism(_as_vec3(q), prism)[0])


def points_in_hull(points, hull: ConvexPolyhedron, tol: float = HULL_EPS) -> np.ndarray:
    pts = _as_points(points)
    return np.all(pts @ hull.normals.T <= hull.offsets + tol, axis=1)


def point_in_hull(q, hull: ConvexPolyhedron, tol: float = HULL_EPS) -> bool:
    return bool(points_in_hull(_as_vec3(q), hull, tol)[0])


# ---------------------------------------------------------------------------
# Convex hull (incremental)
# ---------------------------------------------------------------------------

def _initial_simplex(pts: np.ndarray) -> list[int]:
    """Pick four points with genuine 3-D extent, or raise."""
    lo = np.argmin(pts, axis=0)
    hi = np.argmax(pts, axis=0)
    candidates = list(dict.fromkeys(list(lo) + list(hi)))
    if len(candidates) < 2:
        raise DegenerateGeometryError("all points coincide")
    # Farthest pair among the axis extremes.
    best = (-1.0, candidates[0], candidates[0])
    for i in candidates:
        d = np.linalg.norm(pts[candidates] - pts[i], axis=1)
        j = candidates[int(np.argmax(d))]
        if d.max() > best[0]:
            best = (d.max(), i, j)
    _, i0, i1 = best
    seg = pts[i1] - pts[i0]
    if np.linalg.norm(seg) <= HULL_EPS:
        raise DegenerateGeometryError("all points coincide")
    # Farthest point from the line i0-i1.
    rel = pts - pts[i0]
    dist_line = np.linalg.norm(np.cross(rel, seg), axis=1) / np.linalg.norm(seg)
    i2 = int(np.argmax(dist_line))
    if dist_line[i2] <= HULL_EPS:
        raise DegenerateGeometryError("points are collinear")
    # Farthest point from the plane i0-i1-i2.
    normal = np.cross(seg, pts[i2] - pts[i0])
    normal /= np.linalg.norm(normal)
    dist_plane = np.abs(rel @ normal)
    i3 = int(np.argmax(dist_plane))
    if dist_plane[i3] <= HULL_EPS:
        raise DegenerateGeometryError("points are coplanar")
    return [i0, i1, i2, i3]


class _Face:
    __slots__ = ("verts", "normal", "offset", "alive")

    def __init__(self, verts, normal, offset):
        self.verts = verts
        self.normal = normal
        self.offset = offset
        self.alive = True


def _make_face(pts, verts, interior) -> _Face:
    a, b, c = pts[verts[0]], pts[verts[1]], pts[verts[2]]
    n = np.cross(b - a, c - a)
    nn = np.linalg.norm(n)
    if nn <= 0.0:
        n = np.zeros(3)
        n[0] = 1.0
    else:
        n = n / nn
    d = float(n @ a)
    if interior @ n > d:
        n = -n
        d = -d
    return _Face(tuple(verts), n, d)


def convex_hull(points) -> ConvexPolyhedron:
    """Minimal convex polyhedron containing all input points.

    Incremental construction over the input order with an exact membership
    post-check; raises :class:`DegenerateGeometryError` when the points have
    no 3-D extent (fewer than 4 non-coplanar points).
    """
    pts = _as_points(points)
    if len(pts) < 4:
        raise DegenerateGeometryError("need at least 4 points for a 3-D hull")
    simplex = _initial_simplex(pts)
    interior = pts[simplex].mean(axis=0)

    faces: list[_Face] = []
    edge_faces: dict[tuple[int, int], list[_Face]] = {}

    def add_face(verts):
        f = _make_face(pts, verts, interior)
        faces.append(f)
        for k in range(3):
            e = tuple(sorted((verts[k], verts[(k + 1) % 3])))
            edge_faces.setdefault(e, []).append(f)
        return f

    s = simplex
    for tri in ((s[0], s[1], s[2]), (s[0], s[1], s[3]), (s[0], s[2], s[3]), (s[1], s[2], s[3])):
        add_face(tri)

    for idx in range(len(pts)):
        if idx in simplex:
            continue
        p = pts[idx]
        visible = [f for f in faces if f.alive and f.normal @ p - f.offset > HULL_EPS]
        if not visible:
            continue
        visible_set = set(map(id, visible))
        horizon: list[tuple[int, int]] = []
        for f in visible:
            f.alive = False
        for f in visible:
            v = f.verts
            for k in range(3):
                a, b = v[k], v[(k + 1) % 3]
                e = tuple(sorted((a, b)))
                neighbors = [g for g in edge_faces[e] if g.alive]
                if not any(id(g) in visible_set for g in neighbors) and neighbors:
                    horizon.append((a, b))
                elif not neighbors:
                    # Edge between two visible faces: drops out entirely.
                    pass
        # Deduplicate horizon edges while preserving order.
        seen = set()
        for a, b in horizon:
            e = tuple(sorted((a, b)))
            if e in seen:
                continue
            seen.add(e)
            add_face((a, b, idx))
        faces = [f for f in faces if f.alive]
        edge_faces = {}
        for f in faces:
            v = f.verts
            for k in range(3):
                e = tuple(sorted((v[k], v[(k + 1) % 3])))
                edge_faces.setdefault(e, []).append(f)

    normals = np.array([f.normal for f in faces])
    offsets = np.array([f.offset for f in faces])
    # Merge coplanar triangles into single half-spaces.
    rounded = np.round(np.column_stack([normals, offsets]), 9)
    _, keep = np.unique(rounded, axis=0, return_index=True)
    normals = normals[np.sort(keep)]
    offsets = offsets[np.sort(keep)]

    hull = ConvexPolyhedron(normals, offsets, interior_point=interior)
    slack = pts @ hull.normals.T - hull.offsets
    worst = float(slack.max())
    if worst > HULL_EPS:
        raise DegenerateGeometryError(
            f"hull membership post-check failed (max violation {worst:.3e})"
        )
    return hull


# ---------------------------------------------------------------------------
# Ray casting
# ---------------------------------------------------------------------------

def _slab_ranges(origin_local, dirs_local, half_lo, half_hi) -> np.ndarray:
    """Nearest positive parametric hit of rays against an axis box, inf on miss."""
    d = dirs_local
    with np.errstate(divide="ignore", invalid="ignore"):
        t_lo = (half_lo - origin_local) / d
        t_hi = (half_hi - origin_local) / d
    # Rays parallel to a slab: inside -> unconstrained, outside -> miss.
    parallel = np.abs(d) < _RAY_EPS
    inside = (origin_local >= half_lo) & (origin_local <= half_hi)
    t_lo = np.where(parallel, np.where(inside, -np.inf, np.inf), t_lo)
    t_hi = np.where(parallel, np.where(inside, np.inf, -np.inf), t_hi)
    t1 = np.minimum(t_lo, t_hi)
    t2 = np.maximum(t_lo, t_hi)
    tmin = t1.max(axis=1)
    tmax = t2.min(axis=1)
    hit = (tmax >= tmin) & (tmax > _RAY_EPS)
    t = np.where(tmin > _RAY_EPS, tmin, tmax)
    return np.where(hit, t, np.inf)


def raycast_aabb(origin: Vec3, dirs: np.ndarray, box: Aabb) -> np.ndarray:
    return _slab_ranges(origin[None, :], dirs, box.lo, box.hi)


def raycast_prism(origin: Vec3, dirs: np.ndarray, prism: Prism) -> np.ndarray:
    o_local = (origin - prism.center) @ prism.axes.T
    d_local = dirs @ prism.axes.T
    half = prism.sizes / 2.0
    return _slab_ranges(o_local[None, :], d_local, -half, half)


def raycast_triangle(origin: Vec3, dirs: np.ndarray, tri: Triangle) -> np.ndarray:
    e1 = tri.b - tri.a
    e2 = tri.c - tri.a
    pvec = np.cross(dirs, e2)
    det = pvec @ e1
    tvec = origin - tri.a
    qvec = np.cross(tvec, e1)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / det
        u = (pvec @ tvec) * inv
        v = (dirs @ qvec) * inv
        t = (e2 @ qvec) * inv
    eps = 1e-10
    hit = (
        (np.abs(det) > _RAY_EPS)
        & (u >= -eps)
        & (v >= -eps)
        & (u + v <= 1.0 + eps)
        & (t > _RAY_EPS)
    )
    return np.where(hit, t, np.inf)


def raycast_cylinder(origin: Vec3, dirs: np.ndarray, cyl: Cylinder) -> np.ndarray:
    axis = cyl.top - cyl.bottom
    height = float(np.linalg.norm(axis))
    a_hat = axis / height
    rel = origin - cyl.bottom
    o_par = float(rel @ a_hat)
    d_par = dirs @ a_hat
    o_perp = rel - o_par * a_hat
    d_perp = dirs - d_par[:, None] * a_hat

    best = np.full(len(dirs), np.inf)

    # Curved side: quadratic in t on the perpendicular components.
    a = np.einsum("ij,ij->i", d_perp, d_perp)
    b = 2.0 * (d_perp @ o_perp)
    c = float(o_perp @ o_perp) - cyl.radius**2
    disc = b * b - 4.0 * a * c
    ok = (a > _RAY_EPS) & (disc >= 0.0)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        for sign in (-1.0, 1.0):
            t = (-b + sign * sq) / (2.0 * a)
            s = o_par + t * d_par
            good = ok & (t > _RAY_EPS) & (s >= 0.0) & (s <= height)
            best = np.where(good & (t < best), t, best)

    # Caps: plane hits within the radius.
    with np.errstate(divide="ignore", invalid="ignore"):
        for cap_s in (0.0, height):
            t = (cap_s - o_par) / d_par
            radial = o_perp[None, :] + t[:, None] * d_perp
            r2 = np.einsum("ij,ij->i", radial, radial)
            good = (np.abs(d_par) > _RAY_EPS) & (t > _RAY_EPS) & (r2 <= cyl.radius**2)
            best = np.where(good & (t < best), t, best)

    return best


_CASTERS = {
    Aabb: raycast_aabb,
    Prism: raycast_prism,
    Triangle: raycast_triangle,
    Cylinder: raycast_cylinder,
}


def raycast_scene(origin: Vec3, dirs: np.ndarray, primitives) -> np.ndarray:
    """Nearest hit range per ray over a mixed primitive list, inf on miss."""
    best = np.full(len(dirs), np.inf)
    for prim in primitives:
        caster = _CASTERS[type(prim)]
        best = np.minimum(best, caster(origin, dirs, prim))
    return best


def ray_intersect(origin, direction, primitives):
    """Nearest intersection of a single unit-direction ray with the scene.

    Returns ``(hit_point, range)`` or ``None``. The direction must be unit
    length within 1e-9.
    """
    o = _as_vec3(origin)
    d = _as_vec3(direction)
    if abs(float(np.linalg.norm(d)) - 1.0) > 1e-9:
        raise ValueError("ray direction must be unit length")
    t = float(raycast_scene(o, d[None, :], primitives)[0])
    if not math.isfinite(t):
        return None
    return o + t * d, t


def rotation_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
