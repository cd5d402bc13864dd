import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from laneocc.errors import GeometryError
from laneocc.geometry import (
    FrenetPose,
    GridSpec,
    Polygon,
    Polyline,
    interpolate_poses,
    placed_footprints,
    points_in_polygon,
    polygon_cover_cells,
    polygons_overlap,
    quad_batch_cover_cells,
    rasterize_region,
    strip_polygon,
    swept_volume,
    wrap_angle,
)


# ---------------------------------------------------------------------------
# Polyline / Frenet projection


def test_project_perpendicular_drop():
    line = Polyline([[0.0, 0.0], [10.0, 0.0]])
    f = line.project([5.0, 1.0])
    assert f.s == pytest.approx(5.0)
    assert f.d == pytest.approx(1.0)  # left of travel is positive


def test_project_right_side_negative():
    line = Polyline([[0.0, 0.0], [10.0, 0.0]])
    f = line.project([3.0, -2.0])
    assert f.d == pytest.approx(-2.0)


def test_project_on_vertex_zero_offset():
    line = Polyline([[0.0, 0.0], [4.0, 0.0], [4.0, 6.0]])
    f = line.project([4.0, 0.0])
    assert f.d == pytest.approx(0.0)
    assert f.s == pytest.approx(4.0)


def test_project_clamps_at_endpoints():
    line = Polyline([[0.0, 0.0], [10.0, 0.0]])
    f = line.project([14.0, 0.5])
    assert f.s == pytest.approx(10.0)


def test_project_heading_offset():
    line = Polyline([[0.0, 0.0], [10.0, 10.0]])
    f = line.project([5.0, 5.0], heading=np.pi / 4 + 0.3)
    assert f.heading_offset == pytest.approx(0.3)


def _brute_force_project(points, p):
    """Independent oracle: per-segment closed-form projection in a loop."""
    best = (None, None, np.inf)
    cum = 0.0
    for a, b in zip(points[:-1], points[1:]):
        a = np.asarray(a, float)
        b = np.asarray(b, float)
        seg = b - a
        seglen = np.hypot(*seg)
        t = float(np.dot(np.asarray(p) - a, seg)) / seglen**2
        t = min(max(t, 0.0), 1.0)
        q = a + t * seg
        dist = float(np.hypot(*(np.asarray(p) - q)))
        if dist < best[2]:
            best = (cum + t * seglen, q, dist)
        cum += seglen
    return best


def test_project_matches_segment_scan_oracle():
    rng = np.random.default_rng(7)
    steps = rng.normal(size=(1000, 2)) * 2.0 + np.array([3.0, 0.0])
    pts = np.cumsum(np.vstack([[0.0, 0.0], steps]), axis=0)
    line = Polyline(pts)
    for _ in range(50):
        p = rng.uniform(pts.min(axis=0) - 10, pts.max(axis=0) + 10)
        f = line.project(p)
        s_ref, _, dist_ref = _brute_force_project(pts, p)
        assert f.s == pytest.approx(s_ref, abs=1e-9)
        assert abs(f.d) == pytest.approx(dist_ref, abs=1e-9)


@settings(max_examples=80, deadline=None)
@given(st.data())
def test_frenet_round_trip_on_straight_segments(data):
    n = data.draw(st.integers(3, 8))
    xs = np.cumsum(data.draw(st.lists(st.floats(0.5, 5.0), min_size=n, max_size=n)))
    ys = data.draw(st.lists(st.floats(-3.0, 3.0), min_size=n, max_size=n))
    line = Polyline(np.stack([xs, np.array(ys)], axis=1))
    px = data.draw(st.floats(float(xs[0]), float(xs[-1])))
    py = data.draw(st.floats(-5.0, 5.0))
    p = np.array([px, py])
    f = line.project(p)
    # reconstruction is exact only when the projection lands strictly
    # inside a segment (at vertices the normal is ambiguous)
    i = line._segment_index(f.s)
    lo, hi = line.cum_s[i], line.cum_s[i + 1]
    if not (lo + 1e-6 < f.s < hi - 1e-6):
        return
    q = line.frenet_to_world(f.s, f.d)
    assert np.hypot(*(q - p)) < 1e-9


def test_polyline_validation():
    with pytest.raises(GeometryError):
        Polyline([[0, 0]])
    with pytest.raises(GeometryError):
        Polyline([[0, 0], [0, 0], [1, 1]])


def test_polyline_slice_and_concat():
    line = Polyline([[0, 0], [10, 0], [10, 10]])
    part = line.slice(5.0, 15.0)
    assert part.length == pytest.approx(10.0)
    assert np.allclose(part.points[0], [5, 0])
    assert np.allclose(part.points[-1], [10, 5])
    joined = Polyline([[0, 0], [5, 0]]).concat(Polyline([[5, 0], [9, 0]]))
    assert joined.length == pytest.approx(9.0)


# ---------------------------------------------------------------------------
# Polygon


def test_polygon_validation():
    with pytest.raises(GeometryError):
        Polygon([[0, 0], [1, 0]])
    with pytest.raises(GeometryError):
        Polygon([[0, 0], [1, 0], [2, 0]])  # zero area
    with pytest.raises(GeometryError):
        Polygon([[0, 0], [1, 1], [1, 0], [0, 1]])  # bowtie
    with pytest.raises(GeometryError):
        Polygon([[0, 0], [1, 1], [1, 0]])  # clockwise, no reorient
    p = Polygon([[0, 0], [1, 1], [1, 0]], reorient=True)
    assert p.area == pytest.approx(0.5)


def test_polygon_contains_and_distance():
    sq = Polygon([[0, 0], [2, 0], [2, 2], [0, 2]])
    inside = points_in_polygon(np.array([[1.0, 1.0], [3.0, 1.0]]), sq.vertices)
    assert inside.tolist() == [True, False]
    assert sq.distance([1.0, 1.0]) == 0.0
    assert sq.distance([4.0, 1.0]) == pytest.approx(2.0)
    assert sq.distance([3.0, 3.0]) == pytest.approx(np.sqrt(2.0))


def test_polygon_transformed():
    rect = Polygon.rectangle(4.0, 2.0)
    placed = rect.transformed([10.0, 5.0], np.pi / 2)
    assert np.allclose(sorted(placed.vertices[:, 0]), [9, 9, 11, 11])
    assert placed.area == pytest.approx(8.0)


def test_polygons_overlap():
    a = Polygon([[0, 0], [2, 0], [2, 2], [0, 2]])
    b = Polygon([[1, 1], [3, 1], [3, 3], [1, 3]])
    c = Polygon([[5, 5], [6, 5], [6, 6], [5, 6]])
    touch = Polygon([[2, 0], [4, 0], [4, 2], [2, 2]])  # shares an edge only
    assert polygons_overlap(a, b)
    assert not polygons_overlap(a, c)
    assert not polygons_overlap(a, touch)
    # containment without edge crossings
    outer = Polygon([[-1, -1], [9, -1], [9, 9], [-1, 9]])
    assert polygons_overlap(a, outer)


# ---------------------------------------------------------------------------
# rasterization


def grid_150():
    return GridSpec(center=(0.0, 0.0), size_m=150.0, resolution=1.0)


def test_rasterize_outside_grid_is_empty():
    spec = grid_150()
    poly = Polygon([[200, 200], [202, 200], [202, 202], [200, 202]])
    assert rasterize_region([poly], spec).sum() == 0


def test_rasterize_aligned_square_exact_cells():
    spec = grid_150()
    # aligned to cell borders: border contact with neighbours must not count
    poly = Polygon([[0, 0], [2, 0], [2, 2], [0, 2]])
    grid = rasterize_region([poly], spec)
    assert grid.sum() == 4
    ii, jj = np.nonzero(grid)
    centers = spec.cell_center(ii, jj)
    assert np.all((centers > 0) & (centers < 2))


def _oracle_cover(vertices, spec, sub=25, edge_step=0.001):
    """Supersampling oracle: dense interior point-in-polygon samples plus
    dense boundary samples, fully independent of the production kernels."""
    occupied = np.zeros((spec.G, spec.G), dtype=bool)
    o = spec.origin
    res = spec.resolution
    minx, miny = vertices.min(axis=0)
    maxx, maxy = vertices.max(axis=0)
    xs = np.arange(minx - res, maxx + res, res / sub)
    ys = np.arange(miny - res, maxy + res, res / sub)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    inside = points_in_polygon(pts, vertices)
    pts = pts[inside]
    for p in [pts] if len(pts) else []:
        i = np.floor((p[:, 0] - o[0]) / res).astype(int)
        j = np.floor((p[:, 1] - o[1]) / res).astype(int)
        ok = (i >= 0) & (i < spec.G) & (j >= 0) & (j < spec.G)
        occupied[i[ok], j[ok]] = True
    closed = np.vstack([vertices, vertices[:1]])
    for a, b in zip(closed[:-1], closed[1:]):
        n = max(int(np.ceil(np.hypot(*(b - a)) / edge_step)), 2)
        t = np.linspace(0.0, 1.0, n)[1:-1]  # skip exact vertices
        p = a + t[:, None] * (b - a)
        i = np.floor((p[:, 0] - o[0]) / res).astype(int)
        j = np.floor((p[:, 1] - o[1]) / res).astype(int)
        ok = (i >= 0) & (i < spec.G) & (j >= 0) & (j < spec.G)
        occupied[i[ok], j[ok]] = True
    return occupied


def test_rasterize_random_triangles_match_supersampling_oracle():
    spec = GridSpec(center=(0.0, 0.0), size_m=40.0, resolution=1.0)
    rng = np.random.default_rng(12)
    for _ in range(10):
        while True:
            v = rng.uniform(-15, 15, size=(3, 2))
            try:
                tri = Polygon(v, reorient=True)
                break
            except GeometryError:
                continue
        got = rasterize_region([tri], spec)
        want = _oracle_cover(tri.vertices, spec)
        assert np.array_equal(got, want)


def test_rasterize_concave_polygon_matches_oracle():
    spec = GridSpec(center=(0.0, 0.0), size_m=40.0, resolution=1.0)
    # a deep notch exercises the general (non-convex) path
    v = np.array([[-8.3, -6.1], [7.9, -5.7], [7.7, 6.2], [0.1, -2.9], [-7.8, 6.4]])
    poly = Polygon(v, reorient=True)
    assert not poly.is_convex
    got = rasterize_region([poly], spec)
    want = _oracle_cover(poly.vertices, spec)
    assert np.array_equal(got, want)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.tuples(st.integers(-80, 80), st.integers(-80, 80)), min_size=3, max_size=3),
    st.integers(-20, 20),
    st.integers(-20, 20),
)
def test_rasterize_translation_consistency(tri8, kx, ky):
    # dyadic vertices and integer-cell shifts keep all arithmetic exact
    v = np.array(tri8, dtype=float) * 0.125
    try:
        tri = Polygon(v, reorient=True)
    except GeometryError:
        return
    spec = GridSpec(center=(0.0, 0.0), size_m=50.0, resolution=1.0)
    shift = np.array([kx * 1.0, ky * 1.0])
    spec2 = GridSpec(center=tuple(shift), size_m=50.0, resolution=1.0)
    tri2 = Polygon(v + shift, reorient=True)
    assert np.array_equal(rasterize_region([tri], spec), rasterize_region([tri2], spec2))


def test_quad_batch_matches_per_polygon_path():
    spec = grid_150()
    rng = np.random.default_rng(3)
    rect = Polygon.rectangle(4.8, 2.0)
    pos = rng.uniform(-60, 60, size=(200, 2))
    hdg = rng.uniform(-np.pi, np.pi, size=200)
    quads = placed_footprints(rect, pos, hdg)
    radius = float(np.max(np.hypot(*rect.vertices.T)))
    pi, ci, cj = quad_batch_cover_cells(quads, spec, radius)
    for m in range(200):
        ii, jj = polygon_cover_cells(rect.transformed(pos[m], hdg[m]), spec)
        got = set(zip(ci[pi == m].tolist(), cj[pi == m].tolist()))
        assert got == set(zip(ii.tolist(), jj.tolist()))


# ---------------------------------------------------------------------------
# swept volumes


def test_swept_single_pose():
    rect = Polygon.rectangle(2.0, 1.0)
    region = swept_volume(rect, [((0.0, 0.0), 0.0)])
    assert len(region) == 1
    assert region[0].area == pytest.approx(2.0)


def test_swept_corridor_covers_midline():
    rect = Polygon.rectangle(2.0, 1.0)
    region = swept_volume(rect, [((0.0, 0.0), 0.0), ((10.0, 0.0), 0.0)], step=0.5)
    for x in np.linspace(0, 10, 23):
        p = np.array([[x, 0.0]])
        assert any(bool(poly.contains(p)[0]) for poly in region)


def test_swept_empty_poses_rejected():
    with pytest.raises(GeometryError):
        swept_volume(Polygon.rectangle(2, 1), [])


def test_swept_curved_matches_dense_oracle():
    spec = GridSpec(center=(17.5, 8.75), size_m=90.0, resolution=1.0)
    rect = Polygon.rectangle(4.8, 2.0)
    t = np.linspace(0.0, np.pi / 3, 10)
    radius = 25.0
    pos = np.stack([radius * np.sin(t), radius * (1 - np.cos(t))], axis=1)
    hdg = t.copy()
    poses = np.column_stack([pos, hdg])

    got = rasterize_region(swept_volume(rect, poses, step=0.5), spec)

    dense_p, dense_h = interpolate_poses(pos, hdg, step=0.01, turn_radius=np.max(np.hypot(*rect.vertices.T)))
    want = np.zeros_like(got)
    for p, h in zip(dense_p, dense_h):
        ii, jj = polygon_cover_cells(rect.transformed(p, h), spec)
        want[ii, jj] = True
    assert np.array_equal(got, want)


def test_swept_monotone_in_poses():
    spec = GridSpec(center=(5.0, 0.0), size_m=40.0, resolution=1.0)
    rect = Polygon.rectangle(4.0, 1.8)
    poses = [((0.0, 0.0), 0.0), ((6.0, 1.0), 0.2), ((12.0, 3.0), 0.5)]
    small = rasterize_region(swept_volume(rect, poses[:2], step=0.5), spec)
    big = rasterize_region(swept_volume(rect, poses, step=0.5), spec)
    assert np.all(big[small])  # adding poses never removes covered cells


# ---------------------------------------------------------------------------
# misc


def test_wrap_angle():
    assert wrap_angle(np.pi + 0.1) == pytest.approx(-np.pi + 0.1)
    assert wrap_angle(-np.pi - 0.1) == pytest.approx(np.pi - 0.1)


def test_gridspec_validation():
    with pytest.raises(GeometryError):
        GridSpec(center=(0, 0), size_m=10.0, resolution=3.0)
    spec = GridSpec(center=(0, 0), size_m=150.0, resolution=1.0)
    assert spec.G == 150
    i, j = spec.cell_index([0.5, 0.5])
    assert (i, j) == (75, 75)
    assert np.allclose(spec.cell_center(75, 75), [0.5, 0.5])


def test_strip_polygon_area():
    line = Polyline([[0, 0], [20, 0]])
    strip = strip_polygon(line, 1.8)
    assert strip.area == pytest.approx(20 * 3.6)


def test_frenet_pose_is_frozen():
    f = FrenetPose(1.0, 2.0)
    with pytest.raises(AttributeError):
        f.s = 3.0
