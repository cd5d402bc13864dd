"""Planar geometry shared by every stage of the pipeline.

Polylines with arc-length parameterization and path-relative (Frenet)
projection, simple polygons with placement and containment tests, actor
footprint sweeps, and exact any-overlap rasterization onto axis-aligned
occupancy grids.

Conventions fixed repo-wide:
  * world frame is meters, x east / y north, headings in radians CCW from +x
  * lateral offset d > 0 means left of the direction of travel
  * a grid cell counts as covered only when the intersection with the
    polygon has positive area (boundary contact alone does not count)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError

_EPS = 1e-12


def wrap_angle(a):
    """Wrap angle(s) into [-pi, pi)."""
    return np.mod(np.asarray(a) + np.pi, 2.0 * np.pi) - np.pi


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class FrenetPose:
    """Position relative to a path: arc length s, signed lateral offset d
    (left of travel positive), and heading offset vs the local tangent."""

    s: float
    d: float
    heading_offset: float = 0.0


class Polyline:
    """Ordered 2D points with strictly increasing cumulative arc length."""

    __slots__ = ("points", "cum_s")

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise GeometryError("polyline needs at least two 2D points")
        if not np.all(np.isfinite(pts)):
            raise GeometryError("polyline contains non-finite coordinates")
        seg = np.diff(pts, axis=0)
        seglen = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(seglen <= 0.0):
            raise GeometryError("consecutive polyline points must be distinct")
        self.points = pts
        self.cum_s = np.concatenate([[0.0], np.cumsum(seglen)])

    @property
    def length(self) -> float:
        return float(self.cum_s[-1])

    def _segment_index(self, s: float) -> int:
        # segment containing s; s at a vertex belongs to the following segment
        i = int(np.searchsorted(self.cum_s, s, side="right")) - 1
        return min(max(i, 0), len(self.points) - 2)

    def point_at(self, s):
        """World point at arc length s (clamped to [0, length]).

        Accepts a scalar or an array of s values.
        """
        s = np.clip(np.asarray(s, dtype=float), 0.0, self.length)
        x = np.interp(s, self.cum_s, self.points[:, 0])
        y = np.interp(s, self.cum_s, self.points[:, 1])
        return np.stack([x, y], axis=-1)

    def tangent_at(self, s: float) -> np.ndarray:
        i = self._segment_index(float(np.clip(s, 0.0, self.length)))
        seg = self.points[i + 1] - self.points[i]
        return seg / np.hypot(seg[0], seg[1])

    def heading_at(self, s: float) -> float:
        t = self.tangent_at(s)
        return float(np.arctan2(t[1], t[0]))

    def normal_at(self, s: float) -> np.ndarray:
        """Unit left normal at arc length s."""
        t = self.tangent_at(s)
        return np.array([-t[1], t[0]])

    def project(self, p, heading: float | None = None) -> FrenetPose:
        """Project a world point onto the polyline.

        Returns the arc length of the closest point (endpoints clamp),
        the signed lateral offset (left of travel positive; at clamped
        endpoints the magnitude is the full point distance), and the
        heading offset of `heading` vs the local tangent (0 when no
        heading is given).
        """
        p = np.asarray(p, dtype=float)
        a = self.points[:-1]
        b = self.points[1:]
        ab = b - a
        seglen2 = np.einsum("ij,ij->i", ab, ab)
        t = np.clip(np.einsum("ij,ij->i", p - a, ab) / seglen2, 0.0, 1.0)
        q = a + t[:, None] * ab
        d2 = np.einsum("ij,ij->i", p - q, p - q)
        i = int(np.argmin(d2))
        seglen = np.sqrt(seglen2[i])
        s = float(self.cum_s[i] + t[i] * seglen)
        tan = ab[i] / seglen
        rel = p - q[i]
        cross = tan[0] * rel[1] - tan[1] * rel[0]
        d = float(np.copysign(np.sqrt(d2[i]), cross)) if d2[i] > 0 else 0.0
        h_off = 0.0
        if heading is not None:
            h_off = float(wrap_angle(heading - np.arctan2(tan[1], tan[0])))
        return FrenetPose(s=s, d=d, heading_offset=h_off)

    def frenet_to_world(self, s: float, d: float) -> np.ndarray:
        return self.point_at(s) + d * self.normal_at(s)

    def slice(self, s0: float, s1: float) -> "Polyline":
        """Sub-polyline over [s0, s1] with interpolated end points."""
        s0 = float(np.clip(s0, 0.0, self.length))
        s1 = float(np.clip(s1, 0.0, self.length))
        if s1 - s0 <= _EPS:
            raise GeometryError("slice needs s1 > s0")
        inner = (self.cum_s > s0 + _EPS) & (self.cum_s < s1 - _EPS)
        pts = np.vstack([self.point_at(s0), self.points[inner], self.point_at(s1)])
        return Polyline(pts)

    def offset_points(self, dist) -> np.ndarray:
        """Vertices shifted along the left normal by `dist` (scalar or
        per-vertex), using clamped miter joins at interior vertices."""
        dist = np.broadcast_to(np.asarray(dist, dtype=float), (len(self.points),))
        seg = np.diff(self.points, axis=0)
        seg /= np.hypot(seg[:, 0], seg[:, 1])[:, None]
        nrm = np.stack([-seg[:, 1], seg[:, 0]], axis=1)
        miter = np.empty_like(self.points)
        miter[0] = nrm[0]
        miter[-1] = nrm[-1]
        if len(self.points) > 2:
            pair = nrm[:-1] + nrm[1:]
            denom = np.maximum(1.0 + np.einsum("ij,ij->i", nrm[:-1], nrm[1:]), 0.1)
            miter[1:-1] = pair / denom[:, None]
        return self.points + dist[:, None] * miter

    def concat(self, other: "Polyline", tol: float = 0.1) -> "Polyline":
        """Append `other`, which must start within `tol` of this end."""
        gap = np.hypot(*(other.points[0] - self.points[-1]))
        if gap > tol:
            raise GeometryError(f"polylines are {gap:.3f} m apart at the joint")
        head = other.points[1:] if gap <= _EPS else other.points
        return Polyline(np.vstack([self.points, head]))


def strip_polygon(line: Polyline, half_width) -> "Polygon":
    """Lateral extrusion of a polyline into a closed strip (flat caps)."""
    left = line.offset_points(half_width)
    right = line.offset_points(-np.asarray(half_width, dtype=float))
    return Polygon(np.vstack([right, left[::-1]]), reorient=True, check_simple=False)


class Polygon:
    """Simple polygon with positive area, vertices counterclockwise.

    Pass `reorient=True` to accept clockwise input; `check_simple=False`
    skips the O(n^2) self-intersection check for trusted construction
    paths (offset strips, rigid placements).
    """

    __slots__ = ("vertices", "_convex")

    def __init__(self, vertices, reorient: bool = False, check_simple: bool = True):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise GeometryError("polygon needs at least three 2D vertices")
        if not np.all(np.isfinite(v)):
            raise GeometryError("polygon contains non-finite coordinates")
        closed_gap = np.hypot(*(v[0] - v[-1]))
        if closed_gap <= _EPS:
            v = v[:-1]
        if v.shape[0] < 3:
            raise GeometryError("polygon needs at least three distinct vertices")
        edge = np.roll(v, -1, axis=0) - v
        if np.any(np.hypot(edge[:, 0], edge[:, 1]) <= _EPS):
            raise GeometryError("consecutive polygon vertices must be distinct")
        area2 = float(np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1]))
        if abs(area2) <= _EPS:
            raise GeometryError("polygon area must be positive")
        if area2 < 0:
            if not reorient:
                raise GeometryError("polygon vertices must be counterclockwise")
            v = v[::-1].copy()
        if check_simple and _self_intersects(v):
            raise GeometryError("polygon must be simple (non-self-intersecting)")
        self.vertices = v
        self._convex = None

    @classmethod
    def rectangle(cls, length: float, width: float) -> "Polygon":
        """Axis-aligned rectangle centered on the origin (body frame:
        +x forward). The usual vehicle footprint."""
        a, b = length / 2.0, width / 2.0
        return cls([[-a, -b], [a, -b], [a, b], [-a, b]])

    @property
    def area(self) -> float:
        v = self.vertices
        return 0.5 * float(
            np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
        )

    @property
    def bounds(self):
        """(minx, miny, maxx, maxy)"""
        v = self.vertices
        return v[:, 0].min(), v[:, 1].min(), v[:, 0].max(), v[:, 1].max()

    @property
    def is_convex(self) -> bool:
        if self._convex is None:
            v = self.vertices
            e = np.roll(v, -1, axis=0) - v
            cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
            self._convex = bool(np.all(cross >= -1e-10))
        return self._convex

    def transformed(self, position, heading: float) -> "Polygon":
        """Rigid placement: rotate by `heading` then translate."""
        pts = self.vertices @ rotation_matrix(heading).T + np.asarray(position, dtype=float)
        out = Polygon.__new__(Polygon)
        out.vertices = pts
        out._convex = self._convex
        return out

    def contains(self, points) -> np.ndarray:
        """Strict interior test (crossing number) for an (N,2) array."""
        return points_in_polygon(np.asarray(points, dtype=float), self.vertices)

    def distance(self, p) -> float:
        """Distance from a point to the polygon (0 when inside)."""
        p = np.asarray(p, dtype=float)
        if bool(self.contains(p[None, :])[0]):
            return 0.0
        a = self.vertices
        b = np.roll(a, -1, axis=0)
        ab = b - a
        t = np.clip(np.einsum("ij,ij->i", p - a, ab) / np.einsum("ij,ij->i", ab, ab), 0.0, 1.0)
        q = a + t[:, None] * ab
        return float(np.sqrt(np.min(np.einsum("ij,ij->i", p - q, p - q))))


def _self_intersects(v: np.ndarray) -> bool:
    n = len(v)
    a = v
    b = np.roll(v, -1, axis=0)
    for i in range(n):
        # skip adjacent edges (shared vertex) and self
        js = [j for j in range(i + 2, n) if not (i == 0 and j == n - 1)]
        if not js:
            continue
        js = np.array(js)
        if np.any(_segments_cross(a[i], b[i], a[js], b[js], proper=False)):
            return True
    return False


def _segments_cross(p, q, r, s, proper: bool = True) -> np.ndarray:
    """Vectorized segment intersection: p->q (single) against r->s (N,2).

    `proper=True` counts only transversal crossings (used for area-overlap
    tests); `proper=False` also counts touching (used for simplicity checks).
    """
    r = np.atleast_2d(r)
    s = np.atleast_2d(s)

    def orient(o, a, bpts):
        return (a[..., 0] - o[..., 0]) * (bpts[..., 1] - o[..., 1]) - (
            a[..., 1] - o[..., 1]
        ) * (bpts[..., 0] - o[..., 0])

    d1 = orient(p, q, r)
    d2 = orient(p, q, s)
    d3 = orient(r, s, p)
    d4 = orient(r, s, q)
    if proper:
        return (d1 * d2 < 0) & (d3 * d4 < 0)
    crossing = (d1 * d2 < 0) & (d3 * d4 < 0)
    # touching / collinear overlap
    on1 = (np.abs(d1) <= _EPS) & _on_segment(p, q, r)
    on2 = (np.abs(d2) <= _EPS) & _on_segment(p, q, s)
    on3 = (np.abs(d3) <= _EPS) & _on_segment(r, s, p)
    on4 = (np.abs(d4) <= _EPS) & _on_segment(r, s, q)
    return crossing | on1 | on2 | on3 | on4


def _on_segment(a, b, p) -> np.ndarray:
    lo = np.minimum(a, b) - _EPS
    hi = np.maximum(a, b) + _EPS
    return np.all((p >= lo) & (p <= hi), axis=-1)


def points_in_polygon(points: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Crossing-number interior test, vectorized over (N,2) points."""
    x = points[:, 0][:, None]
    y = points[:, 1][:, None]
    ax = vertices[:, 0][None, :]
    ay = vertices[:, 1][None, :]
    bx = np.roll(vertices[:, 0], -1)[None, :]
    by = np.roll(vertices[:, 1], -1)[None, :]
    straddle = (ay > y) != (by > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_int = ax + (y - ay) * (bx - ax) / (by - ay)
    hit = straddle & (x < x_int)
    return np.count_nonzero(hit, axis=1) % 2 == 1


def convex_quads_overlap_polygon(quads: np.ndarray, poly: Polygon) -> np.ndarray:
    """Positive-area overlap of each convex placement in `quads` (M, V, 2)
    with a simple polygon. Vectorized across placements."""
    M = quads.shape[0]
    if M == 0:
        return np.zeros(0, dtype=bool)
    pv = poly.vertices
    out = np.zeros(M, dtype=bool)

    minx, miny, maxx, maxy = poly.bounds
    qmin = quads.min(axis=1)
    qmax = quads.max(axis=1)
    cand = ~((qmin[:, 0] >= maxx) | (qmax[:, 0] <= minx)
             | (qmin[:, 1] >= maxy) | (qmax[:, 1] <= miny))
    if not np.any(cand):
        return out
    q = quads[cand]

    # any placement vertex strictly inside the polygon
    hit = points_in_polygon(q.reshape(-1, 2), pv).reshape(q.shape[0], -1).any(axis=1)

    # any polygon vertex strictly inside a placement (interior is left of
    # every CCW edge)
    edges = np.roll(q, -1, axis=1) - q  # (m, V, 2)
    rel = pv[None, None, :, :] - q[:, :, None, :]  # (m, V, P, 2)
    cross = edges[..., None, 0] * rel[..., 1] - edges[..., None, 1] * rel[..., 0]
    hit |= np.any(np.all(cross > 0, axis=1), axis=1)

    # proper edge crossings
    todo = ~hit
    if np.any(todo):
        qe = q[todo]
        a1 = qe  # (m, V, 2)
        b1 = np.roll(qe, -1, axis=1)
        a2 = pv
        b2 = np.roll(pv, -1, axis=0)

        def orient(o, a, b):
            return ((a[..., 0] - o[..., 0]) * (b[..., 1] - o[..., 1])
                    - (a[..., 1] - o[..., 1]) * (b[..., 0] - o[..., 0]))

        o1 = orient(a1[:, :, None, :], b1[:, :, None, :], a2[None, None, :, :])
        o2 = orient(a1[:, :, None, :], b1[:, :, None, :], b2[None, None, :, :])
        o3 = orient(a2[None, None, :, :], b2[None, None, :, :], a1[:, :, None, :])
        o4 = orient(a2[None, None, :, :], b2[None, None, :, :], b1[:, :, None, :])
        crossing = (o1 * o2 < 0) & (o3 * o4 < 0)
        hit[todo] = crossing.any(axis=(1, 2))

    out[cand] = hit
    return out


def polygons_overlap(a: Polygon, b: Polygon) -> bool:
    """Positive-area intersection test for two simple polygons."""
    aminx, aminy, amaxx, amaxy = a.bounds
    bminx, bminy, bmaxx, bmaxy = b.bounds
    if aminx >= bmaxx or bminx >= amaxx or aminy >= bmaxy or bminy >= amaxy:
        return False
    if np.any(b.contains(a.vertices)) or np.any(a.contains(b.vertices)):
        return True
    va = a.vertices
    vb = b.vertices
    sb_a = np.roll(vb, -1, axis=0)
    for i in range(len(va)):
        if np.any(_segments_cross(va[i], va[(i + 1) % len(va)], vb, sb_a)):
            return True
    return False


# ---------------------------------------------------------------------------
# occupancy grids


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned square grid: `G` x `G` cells of `resolution` meters,
    centered on `center`. Cell (i, j) covers
    [origin_x + i*res, origin_x + (i+1)*res) x [origin_y + j*res, ...)."""

    center: tuple
    size_m: float
    resolution: float

    def __post_init__(self):
        if self.resolution <= 0 or self.size_m <= 0:
            raise GeometryError("grid size and resolution must be positive")
        ratio = self.size_m / self.resolution
        if abs(ratio - round(ratio)) > 1e-6 or round(ratio) < 1:
            raise GeometryError("size_m must be an integer multiple of resolution")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @property
    def G(self) -> int:
        return int(round(self.size_m / self.resolution))

    @property
    def origin(self) -> np.ndarray:
        return np.array(self.center) - self.size_m / 2.0

    def cell_center(self, i, j) -> np.ndarray:
        o = self.origin
        return np.stack(
            [o[0] + (np.asarray(i) + 0.5) * self.resolution,
             o[1] + (np.asarray(j) + 0.5) * self.resolution],
            axis=-1,
        )

    def cell_index(self, p):
        """(i, j) of the cell containing p (floor; no bounds clipping)."""
        rel = (np.asarray(p, dtype=float) - self.origin) / self.resolution
        idx = np.floor(rel).astype(int)
        return idx[..., 0], idx[..., 1]


def _candidate_range(lo: float, hi: float, o: float, res: float, G: int):
    i0 = max(int(np.floor((lo - o) / res)), 0)
    i1 = min(int(np.floor((hi - o) / res)), G - 1)
    return i0, i1


def _cells_convex(vertices: np.ndarray, spec: GridSpec):
    """Cells whose open square intersects a convex polygon (strict SAT)."""
    o = spec.origin
    res = spec.resolution
    h = res / 2.0
    minx, miny = vertices.min(axis=0)
    maxx, maxy = vertices.max(axis=0)
    ix0, ix1 = _candidate_range(minx, maxx, o[0], res, spec.G)
    iy0, iy1 = _candidate_range(miny, maxy, o[1], res, spec.G)
    if ix1 < ix0 or iy1 < iy0:
        return np.empty(0, int), np.empty(0, int)
    ii, jj = np.meshgrid(np.arange(ix0, ix1 + 1), np.arange(iy0, iy1 + 1), indexing="ij")
    ii = ii.ravel()
    jj = jj.ravel()
    cx = o[0] + (ii + 0.5) * res
    cy = o[1] + (jj + 0.5) * res
    ok = (cx - h < maxx) & (cx + h > minx) & (cy - h < maxy) & (cy + h > miny)

    edges = np.roll(vertices, -1, axis=0) - vertices
    normals = np.stack([edges[:, 1], -edges[:, 0]], axis=1)
    keep = np.hypot(normals[:, 0], normals[:, 1]) > _EPS
    normals = normals[keep]
    proj_v = vertices @ normals.T  # (V, E)
    pmin = proj_v.min(axis=0)
    pmax = proj_v.max(axis=0)
    proj_c = cx[:, None] * normals[None, :, 0] + cy[:, None] * normals[None, :, 1]
    rho = h * (np.abs(normals[:, 0]) + np.abs(normals[:, 1]))
    ok &= np.all((proj_c - rho[None, :] < pmax[None, :]) &
                 (proj_c + rho[None, :] > pmin[None, :]), axis=1)
    return ii[ok], jj[ok]


def _cells_general(poly: Polygon, spec: GridSpec):
    """Cells whose open square intersects a simple polygon.

    Exact rule: a cell is covered iff its center is strictly inside the
    polygon or some polygon edge passes through the cell's open square.
    """
    o = spec.origin
    res = spec.resolution
    G = spec.G
    v = poly.vertices
    minx, miny, maxx, maxy = poly.bounds
    ix0, ix1 = _candidate_range(minx, maxx, o[0], res, G)
    iy0, iy1 = _candidate_range(miny, maxy, o[1], res, G)
    if ix1 < ix0 or iy1 < iy0:
        return np.empty(0, int), np.empty(0, int)

    mask = np.zeros((ix1 - ix0 + 1, iy1 - iy0 + 1), dtype=bool)
    ii, jj = np.meshgrid(np.arange(ix0, ix1 + 1), np.arange(iy0, iy1 + 1), indexing="ij")
    centers = spec.cell_center(ii.ravel(), jj.ravel())
    mask.ravel()[points_in_polygon(centers, v)] = True

    a = v
    b = np.roll(v, -1, axis=0)
    for k in range(len(v)):
        _mark_edge_cells(a[k], b[k], spec, ix0, iy0, mask)
    hit = np.nonzero(mask)
    return hit[0] + ix0, hit[1] + iy0


def _mark_edge_cells(a, b, spec: GridSpec, ix_base: int, iy_base: int, mask: np.ndarray):
    """Mark cells whose open square the segment a->b passes through."""
    o = spec.origin
    res = spec.resolution
    G = spec.G
    lox, hix = min(a[0], b[0]), max(a[0], b[0])
    loy, hiy = min(a[1], b[1]), max(a[1], b[1])
    ix0, ix1 = _candidate_range(lox, hix, o[0], res, G)
    iy0, iy1 = _candidate_range(loy, hiy, o[1], res, G)
    if ix1 < ix0 or iy1 < iy0:
        return
    ii, jj = np.meshgrid(np.arange(ix0, ix1 + 1), np.arange(iy0, iy1 + 1), indexing="ij")
    ii = ii.ravel()
    jj = jj.ravel()
    cell_lo = np.stack([o[0] + ii * res, o[1] + jj * res], axis=1)
    cell_hi = cell_lo + res
    d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_lo = (cell_lo - a) / d
        t_hi = (cell_hi - a) / d
    t1 = np.minimum(t_lo, t_hi)
    t2 = np.maximum(t_lo, t_hi)
    # axes where the segment is parallel: inside-slab check instead
    par = np.abs(d) <= _EPS
    inside_slab = (a >= cell_lo) & (a <= cell_hi)
    t1 = np.where(par[None, :] & inside_slab, -np.inf, np.where(par[None, :], np.inf, t1))
    t2 = np.where(par[None, :] & inside_slab, np.inf, np.where(par[None, :], -np.inf, t2))
    t_enter = np.maximum(np.max(t1, axis=1), 0.0)
    t_exit = np.minimum(np.min(t2, axis=1), 1.0)
    ok = t_exit - t_enter > 1e-12
    if not np.any(ok):
        return
    mid = a + 0.5 * (t_enter[ok] + t_exit[ok])[:, None] * d
    strict = np.all((mid > cell_lo[ok]) & (mid < cell_hi[ok]), axis=1)
    sel = np.nonzero(ok)[0][strict]
    mask[ii[sel] - ix_base, jj[sel] - iy_base] = True


def polygon_cover_cells(poly: Polygon, spec: GridSpec):
    """(i, j) index arrays of all cells the polygon covers with positive area."""
    if poly.is_convex:
        return _cells_convex(poly.vertices, spec)
    return _cells_general(poly, spec)


def rasterize_region(region, spec: GridSpec) -> np.ndarray:
    """Binary G x G grid: cell (i, j) is 1 iff its square overlaps any
    polygon in `region` with positive area."""
    grid = np.zeros((spec.G, spec.G), dtype=bool)
    for poly in region:
        ii, jj = polygon_cover_cells(poly, spec)
        grid[ii, jj] = True
    return grid


def quad_batch_cover_cells(quads: np.ndarray, spec: GridSpec, max_radius: float):
    """Covered cells for a batch of congruent convex polygons.

    `quads` is (M, V, 2); every member must fit in a circle of radius
    `max_radius` around its vertex mean. Returns (poly_idx, i, j) arrays.
    Same strict positive-area semantics as `polygon_cover_cells`.
    """
    M, V, _ = quads.shape
    if M == 0:
        e = np.empty(0, np.int64)
        return e, e.copy(), e.copy()
    o = spec.origin
    res = spec.resolution
    h = res / 2.0
    G = spec.G
    # covered cell centers lie within max_radius + h of the vertex mean,
    # which itself sits within half a cell of its base cell center
    K = int(np.ceil((max_radius + h) / res + 0.5))
    offs = np.arange(-K, K + 1)
    di, dj = np.meshgrid(offs, offs, indexing="ij")
    di = di.ravel()
    dj = dj.ravel()

    centers = quads.mean(axis=1)
    base = np.floor((centers - o) / res).astype(np.int64)
    ci = base[:, 0][:, None] + di[None, :]  # (M, S)
    cj = base[:, 1][:, None] + dj[None, :]

    minx = quads[..., 0].min(axis=1)
    maxx = quads[..., 0].max(axis=1)
    miny = quads[..., 1].min(axis=1)
    maxy = quads[..., 1].max(axis=1)

    cx = o[0] + (ci + 0.5) * res
    cy = o[1] + (cj + 0.5) * res
    ok = (ci >= 0) & (ci < G) & (cj >= 0) & (cj < G)
    ok &= (cx - h < maxx[:, None]) & (cx + h > minx[:, None])
    ok &= (cy - h < maxy[:, None]) & (cy + h > miny[:, None])
    midx, sidx = np.nonzero(ok)
    if len(midx) == 0:
        e = np.empty(0, np.int64)
        return e, e.copy(), e.copy()
    csx = cx[midx, sidx]
    csy = cy[midx, sidx]

    edges = np.roll(quads, -1, axis=1) - quads
    normals = np.stack([edges[..., 1], -edges[..., 0]], axis=-1)  # (M, V, 2)
    proj_v = np.einsum("mvc,mec->mve", quads, normals)
    pmin = proj_v.min(axis=1)  # (M, V)
    pmax = proj_v.max(axis=1)
    rho = h * (np.abs(normals[..., 0]) + np.abs(normals[..., 1]))  # (M, V)

    n_sel = normals[midx]  # (n, V, 2)
    proj_c = csx[:, None] * n_sel[..., 0] + csy[:, None] * n_sel[..., 1]
    keep = np.all((proj_c - rho[midx] < pmax[midx])
                  & (proj_c + rho[midx] > pmin[midx]), axis=1)
    midx = midx[keep]
    sidx = sidx[keep]
    return midx, ci[midx, sidx], cj[midx, sidx]


# ---------------------------------------------------------------------------
# swept volumes


def interpolate_poses(positions, headings, step: float, turn_radius: float = 0.0):
    """Densify a pose sequence so that consecutive placements are at most
    `step` apart (including the arc traced by a body point at
    `turn_radius` when the heading changes). Endpoints are kept."""
    positions = np.asarray(positions, dtype=float)
    headings = np.asarray(headings, dtype=float)
    if positions.ndim != 2 or len(positions) != len(headings) or len(positions) == 0:
        raise GeometryError("pose interpolation needs matching non-empty arrays")
    if len(positions) == 1:
        return positions.copy(), headings.copy()
    delta = np.diff(positions, axis=0)
    dist = np.hypot(delta[:, 0], delta[:, 1])
    dh = np.abs(wrap_angle(np.diff(headings)))
    travel = np.maximum(dist, dh * turn_radius)
    counts = np.maximum(np.ceil(travel / step).astype(int), 1)

    seg_idx = np.repeat(np.arange(len(counts)), counts)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    rank = np.arange(offsets[-1]) - offsets[seg_idx]
    frac = rank / counts[seg_idx]
    pos = positions[seg_idx] + frac[:, None] * delta[seg_idx]
    hdg = headings[seg_idx] + frac * wrap_angle(np.diff(headings))[seg_idx]
    pos = np.vstack([pos, positions[-1]])
    hdg = np.concatenate([hdg, headings[-1:]])
    return pos, hdg


def footprint_circumradius(footprint: Polygon) -> float:
    return float(np.max(np.hypot(footprint.vertices[:, 0], footprint.vertices[:, 1])))


def placed_footprints(footprint: Polygon, positions, headings) -> np.ndarray:
    """(M, V, 2) vertex array of the footprint placed at each pose."""
    positions = np.asarray(positions, dtype=float)
    headings = np.asarray(headings, dtype=float)
    c, s = np.cos(headings), np.sin(headings)
    R = np.empty((len(headings), 2, 2))
    R[:, 0, 0] = c
    R[:, 0, 1] = -s
    R[:, 1, 0] = s
    R[:, 1, 1] = c
    return np.einsum("mij,vj->mvi", R, footprint.vertices) + positions[:, None, :]


def swept_volume(footprint: Polygon, poses, step: float = 0.5):
    """Region covered by the footprint along a pose sequence.

    `poses` is a sequence of ((x, y), heading) pairs or an (N, 3) array.
    Consecutive poses are linearly interpolated at spacing <= `step`
    (callers rasterizing onto a grid pass 0.5 * resolution, which leaves
    no gaps). Returns the region as a list of placed polygons; overlap
    queries iterate the members.
    """
    positions, headings = _coerce_poses(poses)
    dense_p, dense_h = interpolate_poses(
        positions, headings, step, footprint_circumradius(footprint)
    )
    placed = placed_footprints(footprint, dense_p, dense_h)
    out = []
    for pts in placed:
        poly = Polygon.__new__(Polygon)
        poly.vertices = pts
        poly._convex = footprint.is_convex
        out.append(poly)
    return out


def _coerce_poses(poses):
    if isinstance(poses, np.ndarray) and poses.ndim == 2 and poses.shape[1] == 3:
        if len(poses) == 0:
            raise GeometryError("swept volume needs at least one pose")
        return poses[:, :2].astype(float), poses[:, 2].astype(float)
    poses = list(poses)
    if not poses:
        raise GeometryError("swept volume needs at least one pose")
    positions = np.array([np.asarray(p[0], dtype=float) for p in poses])
    headings = np.array([float(p[1]) for p in poses])
    return positions, headings
