"""2D convex shapes and signed distance queries.

Shapes are modeled as a convex core (point, segment, or polygon) swept by a
radius: a circle is a swept point, a capsule a swept segment, a polygon a
core with radius zero.  Signed distance between two shapes is then the core
distance minus the radii when the cores are disjoint, and minus the core
penetration depth when they overlap.  Core distance comes from GJK, core
penetration from EPA, with analytic shortcuts for the circle-circle and
circle-capsule pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

_EPS = 1e-12


def _cross2(a: np.ndarray, b: np.ndarray) -> np.ndarray | float:
    """z-component of the cross product for 2-vectors (vectorizes over rows)."""
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _as_point(value, name: str) -> np.ndarray:
    a = np.asarray(value, dtype=float)
    if a.shape != (2,):
        raise ShapeError(f"{name} must be a 2-vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ShapeError(f"{name} must be finite, got {a}")
    a = a.copy()
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Circle:
    """Disc with center ``center`` and radius ``radius``.

    Radius zero is allowed so a point body can be treated as a degenerate
    disc; obstacle validation separately requires strictly positive radii.
    """

    center: np.ndarray
    radius: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", _as_point(self.center, "circle center"))
        if not np.isfinite(self.radius) or self.radius < 0.0:
            raise ShapeError(f"circle radius must be >= 0, got {self.radius}")


@dataclass(frozen=True)
class Capsule:
    """Segment from ``point_a`` to ``point_b`` swept by ``radius``."""

    point_a: np.ndarray
    point_b: np.ndarray
    radius: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "point_a", _as_point(self.point_a, "capsule endpoint"))
        object.__setattr__(self, "point_b", _as_point(self.point_b, "capsule endpoint"))
        if not np.isfinite(self.radius) or self.radius < 0.0:
            raise ShapeError(f"capsule radius must be >= 0, got {self.radius}")


@dataclass(frozen=True)
class ConvexPolygon:
    """Convex polygon given as a counterclockwise loop of vertices."""

    vertices: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ShapeError(f"polygon needs >= 3 2D vertices, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ShapeError("polygon vertices must be finite")
        scale = max(1.0, float(np.abs(v).max()))
        nxt = np.roll(v, -1, axis=0)
        prv = np.roll(v, 1, axis=0)
        cross = _cross2(v - prv, nxt - v)
        # strict convexity and CCW orientation; collinear triples are degenerate
        if np.any(cross <= _EPS * scale * scale):
            if np.all(cross <= 0.0):
                raise ShapeError("polygon vertices must wind counterclockwise")
            raise ShapeError("polygon must be strictly convex and non-degenerate")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "vertices", v)


ConvexShape = Circle | Capsule | ConvexPolygon


@dataclass(frozen=True)
class SignedDistanceResult:
    """Signed distance between two shapes plus witness data.

    value > 0: shapes are disjoint, value is the separation distance and
    equals ``|point_a - point_b|`` with ``normal = (point_a - point_b)/value``.
    value <= 0: shapes touch or overlap, ``|value|`` is the minimum
    translation of shape A along ``normal`` that separates them.
    ``normal`` is always a unit vector pointing from shape B toward shape A.
    """

    value: float
    point_a: np.ndarray = field(repr=False)
    point_b: np.ndarray = field(repr=False)
    normal: np.ndarray = field(repr=False)


# --- support functions on shape cores -------------------------------------


def _core(shape: ConvexShape) -> tuple[np.ndarray, float]:
    """Return (core vertices (k,2), sweep radius) for a shape."""
    if isinstance(shape, Circle):
        return shape.center[None, :], shape.radius
    if isinstance(shape, Capsule):
        return np.stack([shape.point_a, shape.point_b]), shape.radius
    if isinstance(shape, ConvexPolygon):
        return shape.vertices, 0.0
    raise ShapeError(f"unsupported shape type {type(shape).__name__}")


def _support_index(core: np.ndarray, direction: np.ndarray) -> int:
    return int(np.argmax(core @ direction))


def support_point(shape: ConvexShape, direction: np.ndarray) -> np.ndarray:
    """Farthest point of the full (swept) shape along ``direction``."""
    core, radius = _core(shape)
    d = np.asarray(direction, dtype=float)
    norm = float(np.hypot(d[0], d[1]))
    if norm < _EPS:
        d = np.array([1.0, 0.0])
        norm = 1.0
    u = d / norm
    return core[_support_index(core, u)] + radius * u


# --- GJK on polytope cores --------------------------------------------------


def _closest_on_segment(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, float]:
    """Closest point to the origin on segment [a, b] and its parameter t."""
    ab = b - a
    denom = float(ab @ ab)
    if denom < _EPS * _EPS:
        return a, 0.0
    t = float(np.clip(-(a @ ab) / denom, 0.0, 1.0))
    return a + t * ab, t


def _gjk_core_distance(
    core_a: np.ndarray, core_b: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray, list[tuple[int, int]]]:
    """Distance between polytope cores with witness points.

    Returns (distance, witness_a, witness_b, simplex index pairs).  Distance
    zero means the cores intersect; the simplex then contains the origin and
    seeds EPA.  Exact for polytopes: terminates on a support certificate.
    """
    # each simplex entry is (index into core_a, index into core_b)
    d0 = core_b.mean(axis=0) - core_a.mean(axis=0)
    if float(d0 @ d0) < _EPS:
        d0 = np.array([1.0, 0.0])
    simplex: list[tuple[int, int]] = []
    ia, ib = _support_index(core_a, -d0), _support_index(core_b, d0)
    simplex.append((ia, ib))

    def minkowski(pair: tuple[int, int]) -> np.ndarray:
        return core_a[pair[0]] - core_b[pair[1]]

    v = minkowski(simplex[0])
    bary = [1.0]
    for _ in range(200):
        vv = float(v @ v)
        if vv < _EPS * _EPS:
            break  # origin reached: cores intersect
        ia = _support_index(core_a, -v)
        ib = _support_index(core_b, v)
        w = core_a[ia] - core_b[ib]
        # support certificate: no point of the difference is closer than v
        if vv - float(v @ w) <= 1e-14 * max(1.0, vv):
            break
        if (ia, ib) in simplex:
            break
        simplex.append((ia, ib))
        pts = np.array([minkowski(p) for p in simplex])
        if len(simplex) == 2:
            v, t = _closest_on_segment(pts[0], pts[1])
            bary = [1.0 - t, t]
        else:
            v, bary, keep = _closest_on_triangle(pts)
            simplex = [simplex[k] for k in keep]
        # drop simplex vertices with zero weight
        kept = [k for k, b in enumerate(bary) if b > 0.0 or len(simplex) == 1]
        if len(kept) < len(simplex):
            simplex = [simplex[k] for k in kept]
            bary = [bary[k] for k in kept]
            total = sum(bary)
            bary = [b / total for b in bary] if total > 0 else [1.0] * len(bary)

    dist = float(np.hypot(v[0], v[1]))
    wa = sum(b * core_a[p[0]] for b, p in zip(bary, simplex))
    wb = sum(b * core_b[p[1]] for b, p in zip(bary, simplex))
    return dist, np.asarray(wa, dtype=float), np.asarray(wb, dtype=float), simplex


def _closest_on_triangle(
    pts: np.ndarray,
) -> tuple[np.ndarray, list[float], list[int]]:
    """Closest point to the origin on a triangle, with barycentric weights.

    Returns (point, weights, kept vertex indices).  If the origin is inside,
    returns the origin with all three vertices kept.
    """
    a, b, c = pts[0], pts[1], pts[2]
    area2 = float(_cross2(b - a, c - a))
    if abs(area2) > _EPS:
        # barycentric coordinates of the origin
        la = float(_cross2(b, c)) / area2
        lb = float(_cross2(c, a)) / area2
        lc = float(_cross2(a, b)) / area2
        if la >= 0.0 and lb >= 0.0 and lc >= 0.0:
            return np.zeros(2), [la, lb, lc], [0, 1, 2]
    best: tuple[float, np.ndarray, list[float], list[int]] | None = None
    for i, j in ((0, 1), (1, 2), (0, 2)):
        p, t = _closest_on_segment(pts[i], pts[j])
        d = float(p @ p)
        if best is None or d < best[0] - _EPS:
            best = (d, p, [1.0 - t, t], [i, j])
    assert best is not None
    return best[1], best[2], best[3]


# --- EPA on polytope cores ---------------------------------------------------


def _epa_core_penetration(
    core_a: np.ndarray, core_b: np.ndarray, seed: list[tuple[int, int]]
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Penetration depth and direction for intersecting polytope cores.

    Returns (depth, direction, witness_a, witness_b) where translating core A
    by depth*direction separates the cores.  ``seed`` is the terminal GJK
    simplex (index pairs into the cores).
    """
    pairs: list[tuple[int, int]] = list(dict.fromkeys(seed))
    # expand the seed to a polytope with nonzero area containing the origin
    for ux, uy in ((1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0),
                   (0.7071067811865476, 0.7071067811865476),
                   (-0.7071067811865476, 0.7071067811865476),
                   (0.7071067811865476, -0.7071067811865476),
                   (-0.7071067811865476, -0.7071067811865476)):
        if len(pairs) >= 3 and _polytope_area(core_a, core_b, pairs) > _EPS:
            break
        u = np.array([ux, uy])
        p = (_support_index(core_a, u), _support_index(core_b, -u))
        if p not in pairs:
            pairs.append(p)
    pts = [core_a[i] - core_b[j] for i, j in pairs]
    order = _ccw_hull_order(np.array(pts))
    hull = [pairs[k] for k in order]

    def mink(pair: tuple[int, int]) -> np.ndarray:
        return core_a[pair[0]] - core_b[pair[1]]

    for _ in range(200):
        # closest hull edge to the origin
        best_d, best_k, best_p, best_t = np.inf, 0, np.zeros(2), 0.0
        m = len(hull)
        for k in range(m):
            p, t = _closest_on_segment(mink(hull[k]), mink(hull[(k + 1) % m]))
            d = float(p @ p)
            if d < best_d:
                best_d, best_k, best_p, best_t = d, k, p, t
        depth = float(np.sqrt(best_d))
        if depth > _EPS:
            normal = best_p / depth
        else:
            # origin on the hull boundary: use the edge outward normal
            e = mink(hull[(best_k + 1) % m]) - mink(hull[best_k])
            n = np.array([e[1], -e[0]])
            nn = float(np.hypot(n[0], n[1]))
            normal = n / nn if nn > _EPS else np.array([1.0, 0.0])
        cand = (_support_index(core_a, normal), _support_index(core_b, -normal))
        grow = float(mink(cand) @ normal) - depth
        if grow <= 1e-12 * max(1.0, depth) or cand in hull:
            pa = (1.0 - best_t) * core_a[hull[best_k][0]] + best_t * core_a[hull[(best_k + 1) % m][0]]
            pb = (1.0 - best_t) * core_b[hull[best_k][1]] + best_t * core_b[hull[(best_k + 1) % m][1]]
            return depth, -normal, pa, pb
        hull.insert(best_k + 1, cand)
    raise ShapeError("penetration query failed to converge")


def _polytope_area(core_a: np.ndarray, core_b: np.ndarray, pairs: list[tuple[int, int]]) -> float:
    pts = np.array([core_a[i] - core_b[j] for i, j in pairs])
    order = _ccw_hull_order(pts)
    hp = pts[order]
    return 0.5 * abs(float(np.sum(_cross2(hp, np.roll(hp, -1, axis=0)))))


def _ccw_hull_order(pts: np.ndarray) -> list[int]:
    centroid = pts.mean(axis=0)
    ang = np.arctan2(pts[:, 1] - centroid[1], pts[:, 0] - centroid[0])
    return list(np.argsort(ang, kind="stable"))


# --- public signed distance ---------------------------------------------------


def signed_distance(shape_a: ConvexShape, shape_b: ConvexShape) -> SignedDistanceResult:
    """Signed distance between two convex shapes with witness points.

    Positive when disjoint (separation distance), negative when overlapping
    (minimum translation magnitude).  The normal points from the witness on B
    toward the witness on A and is the direction along which translating A by
    ``|value|`` resolves contact (away from B when penetrating).
    """
    core_a, ra = _core(shape_a)
    core_b, rb = _core(shape_b)

    if len(core_a) == 1 and len(core_b) == 1:
        # circle-circle, analytic
        delta = core_a[0] - core_b[0]
        dist = float(np.hypot(delta[0], delta[1]))
        u = delta / dist if dist > _EPS else np.array([1.0, 0.0])
        return _swept_result(dist, core_a[0], core_b[0], u, ra, rb)
    if len(core_a) == 1 and len(core_b) == 2:
        return _point_segment_result(core_a[0], core_b, ra, rb, flip=False)
    if len(core_a) == 2 and len(core_b) == 1:
        return _point_segment_result(core_b[0], core_a, rb, ra, flip=True)

    dist, wa, wb, simplex = _gjk_core_distance(core_a, core_b)
    if dist > _EPS:
        u = (wa - wb) / dist
        wa, wb, u = _refine_parallel_witnesses(core_a, core_b, wa, wb, u)
        return _swept_result(dist, wa, wb, u, ra, rb)
    depth, direction, pa, pb = _epa_core_penetration(core_a, core_b, simplex)
    value = -(depth + ra + rb)
    n = direction
    point_a = pa - ra * n
    point_b = pb + rb * n
    return SignedDistanceResult(value=value, point_a=point_a, point_b=point_b, normal=n)


def _swept_result(
    core_dist: float, wa: np.ndarray, wb: np.ndarray, u: np.ndarray, ra: float, rb: float
) -> SignedDistanceResult:
    """Result for disjoint cores: offset witnesses along u by the radii."""
    value = core_dist - ra - rb
    point_a = wa - ra * u
    point_b = wb + rb * u
    return SignedDistanceResult(value=value, point_a=point_a, point_b=point_b, normal=u)


def _point_segment_result(
    p: np.ndarray, seg: np.ndarray, rp: float, rs: float, flip: bool
) -> SignedDistanceResult:
    """Analytic circle-capsule query (point core vs segment core)."""
    c, _t = _closest_on_segment(seg[0] - p, seg[1] - p)
    closest = c + p
    delta = p - closest
    dist = float(np.hypot(delta[0], delta[1]))
    if dist > _EPS:
        u = delta / dist
    else:
        # point on the segment axis: separate along a perpendicular
        e = seg[1] - seg[0]
        en = float(np.hypot(e[0], e[1]))
        u = np.array([-e[1], e[0]]) / en if en > _EPS else np.array([1.0, 0.0])
    if flip:
        return _swept_result(dist, closest, p, -u, rs, rp)
    return _swept_result(dist, p, closest, u, rp, rs)


def _support_feature(core: np.ndarray, direction: np.ndarray, tol: float) -> np.ndarray:
    """Vertices of the core face extremal along ``direction`` (1 or 2 points)."""
    dots = core @ direction
    top = float(dots.max())
    idx = np.nonzero(dots >= top - tol)[0]
    if len(idx) <= 2:
        return core[idx]
    # keep the two extreme vertices along the face tangent
    tangent = np.array([-direction[1], direction[0]])
    proj = core[idx] @ tangent
    return core[[idx[int(np.argmin(proj))], idx[int(np.argmax(proj))]]]


def _refine_parallel_witnesses(
    core_a: np.ndarray,
    core_b: np.ndarray,
    wa: np.ndarray,
    wb: np.ndarray,
    u: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Tie-break witness points for parallel closest features.

    When the closest features of both cores are edges perpendicular to the
    separation direction, any point pair along the overlap is a valid
    witness; pick the midpoint of the overlapping support interval so the
    answer is stable and symmetric.
    """
    scale = max(1.0, float(np.abs(core_a).max()), float(np.abs(core_b).max()))
    fa = _support_feature(core_a, -u, 1e-9 * scale)
    fb = _support_feature(core_b, u, 1e-9 * scale)
    if len(fa) < 2 or len(fb) < 2:
        return wa, wb, u
    tangent = np.array([-u[1], u[0]])
    ta = np.sort(fa @ tangent)
    tb = np.sort(fb @ tangent)
    lo, hi = max(ta[0], tb[0]), min(ta[-1], tb[-1])
    if hi < lo:
        return wa, wb, u
    mid = 0.5 * (lo + hi)
    wa_new = wa + (mid - float(wa @ tangent)) * tangent
    wb_new = wb + (mid - float(wb @ tangent)) * tangent
    return wa_new, wb_new, u
