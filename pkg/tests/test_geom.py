import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from raylaunch.geom import (
    CONCRETE, TREE, GeoOrigin, GeometryError, Material, MaterialKind, Mesh, Scene, clean_polygon,
    enu_to_wgs84, extrude_footprint, make_ground, make_tree_blocker, polygon_area, wgs84_to_enu,
)

from conftest import ORIGIN

WGS84_A = 6378137.0
WGS84_E2 = 6.69437999014e-3


def meridian_radius(lat_deg):
    s = math.sin(math.radians(lat_deg))
    return WGS84_A * (1 - WGS84_E2) / (1 - WGS84_E2 * s * s) ** 1.5


def haversine(lat1, lon1, lat2, lon2, r=6371008.8):
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp, dl = p2 - p1, math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * r * math.asin(math.sqrt(a))


def dms(d, m, s):
    return d + m / 60 + s / 3600


# -- transforms ----------------------------------------------------------------


def test_origin_maps_to_zero():
    e = wgs84_to_enu(ORIGIN.lat, ORIGIN.lon, ORIGIN.alt, ORIGIN)
    np.testing.assert_allclose(e, 0.0, atol=1e-9)


def test_small_latitude_step_matches_meridian_arc():
    e = wgs84_to_enu(ORIGIN.lat + 1e-5, ORIGIN.lon, 0.0, ORIGIN)
    expected = meridian_radius(ORIGIN.lat + 0.5e-5) * math.radians(1e-5)
    assert abs(e[1] - 1.11) < 0.01
    assert abs(e[1] - expected) < 1e-3
    assert abs(e[0]) < 1e-6


def test_table1_transmitter_separation():
    tx1 = (dms(49, 25, 25.5), dms(7, 45, 14.7))
    tx2 = (dms(49, 25, 25.2), dms(7, 45, 15.4))
    origin = GeoOrigin(*tx1)
    e = wgs84_to_enu(tx2[0], tx2[1], 0.0, origin)
    d = math.hypot(e[0], e[1])
    assert abs(d - 15.0) <= 2.0
    assert abs(d - haversine(*tx1, *tx2)) < 0.05
    # second transmitter lies south-east of the first
    assert e[0] > 0 and e[1] < 0


def test_round_trip_over_campus_extent(rng):
    pts = np.column_stack([rng.uniform(-1000, 1000, 500), rng.uniform(-1000, 1000, 500),
                           rng.uniform(0, 60, 500)])
    lat, lon, alt = enu_to_wgs84(pts, ORIGIN)
    back = wgs84_to_enu(lat, lon, alt, ORIGIN)
    assert np.max(np.linalg.norm(back - pts, axis=1)) < 1e-6


@given(st.floats(-0.01, 0.01), st.floats(-0.01, 0.01), st.floats(-50, 200))
def test_inverse_recovers_geodetic_inputs(dlat, dlon, alt):
    lat, lon = ORIGIN.lat + dlat, ORIGIN.lon + dlon
    e = wgs84_to_enu(lat, lon, alt, ORIGIN)
    la, lo, al = enu_to_wgs84(e, ORIGIN)
    assert abs(la - lat) < 1e-9 and abs(lo - lon) < 1e-9 and abs(al - alt) < 1e-6


@pytest.mark.parametrize("lat, lon", [(91.0, 0.0), (-90.5, 0.0), (0.0, 180.1), (float("nan"), 0.0)])
def test_out_of_range_coordinates_rejected(lat, lon):
    with pytest.raises(GeometryError):
        wgs84_to_enu(lat, lon, 0.0, ORIGIN)
    with pytest.raises(GeometryError):
        GeoOrigin(lat, lon)


# -- materials -----------------------------------------------------------------


def test_material_validation():
    with pytest.raises(GeometryError):
        Material("bad", eps_r=0.5)
    with pytest.raises(GeometryError):
        Material("bad", eps_r=3.0, sigma=-1.0)
    assert TREE.is_blocker and not CONCRETE.is_blocker
    assert Material("m", kind="perfect_conductor").kind is MaterialKind.PERFECT_CONDUCTOR


# -- extrusion -----------------------------------------------------------------


def test_unit_square_extrusion_counts():
    m = extrude_footprint([(0, 0), (1, 0), (1, 1), (0, 1)], 1.0)
    assert len(m.triangles) == 10


@pytest.mark.parametrize("n", [3, 5, 8, 17])
def test_convex_ngon_counts(n):
    ang = np.linspace(0, 2 * np.pi, n, endpoint=False)
    m = extrude_footprint(np.column_stack([10 * np.cos(ang), 10 * np.sin(ang)]), 7.0)
    assert len(m.triangles) == 2 * n + (n - 2)


def _roof_area(mesh, height):
    c = mesh.triangle_corners()
    roof = np.all(np.abs(c[:, :, 2] - height) < 1e-12, axis=1)
    return mesh.triangle_areas()[roof].sum()


def test_l_shape_roof_covers_footprint():
    poly = [(0, 0), (30, 0), (30, 10), (12, 10), (12, 25), (0, 25)]
    m = extrude_footprint(poly, 12.0)
    x, y = np.array(poly, float).T
    shoelace = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))
    assert shoelace == pytest.approx(480.0)
    assert _roof_area(m, 12.0) == pytest.approx(shoelace, rel=1e-6)


def _edge_use(mesh):
    use = {}
    for t in mesh.triangles:
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            use.setdefault((min(a, b), max(a, b)), []).append((a, b))
    return use


def _check_closed_except_floor(mesh):
    v = mesh.vertices
    for (a, b), uses in _edge_use(mesh).items():
        if len(uses) == 1:
            assert v[a][2] == 0.0 and v[b][2] == 0.0
        else:
            assert len(uses) == 2
            # consistent winding: the two triangles traverse the edge in opposite directions
            assert uses[0] != uses[1]


def _check_outward(mesh):
    c = mesh.triangle_corners()
    n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    centroid_xy = mesh.vertices[:, :2].mean(axis=0)
    for tri, normal in zip(c, n):
        if abs(normal[2]) > 1e-12:
            assert normal[2] > 0  # roof faces up
        else:
            mid = tri.mean(axis=0)[:2]
            # convex test footprints only: walls point away from the centroid
            assert np.dot(normal[:2], mid - centroid_xy) > 0


@given(st.integers(3, 24), st.floats(1.0, 80.0), st.floats(2.0, 60.0))
def test_extrusion_watertight_and_outward(n, radius, height):
    ang = np.linspace(0, 2 * np.pi, n, endpoint=False)
    m = extrude_footprint(np.column_stack([radius * np.cos(ang), radius * np.sin(ang)]), height)
    _check_closed_except_floor(m)
    _check_outward(m)


def test_concave_extrusion_watertight():
    poly = [(0, 0), (30, 0), (30, 10), (12, 10), (12, 25), (0, 25)]
    _check_closed_except_floor(extrude_footprint(poly, 5.0))


def test_clockwise_and_closed_rings_normalised():
    ring = [(0, 0), (0, 5), (5, 5), (5, 0), (0, 0)]
    p = clean_polygon(ring)
    assert len(p) == 4 and polygon_area(p) > 0


@pytest.mark.parametrize("poly", [
    [(0, 0), (1, 1), (1, 0), (0, 1)],  # bow tie
    [(0, 0), (1, 0), (2, 0)],  # collinear
    [(0, 0), (1, 0)],
])
def test_bad_polygons_rejected(poly):
    with pytest.raises(GeometryError):
        extrude_footprint(poly, 3.0)


@pytest.mark.parametrize("h", [0.0, -2.0, float("nan")])
def test_bad_height_rejected(h):
    with pytest.raises(GeometryError):
        extrude_footprint([(0, 0), (1, 0), (1, 1)], h)


# -- trees -----------------------------------------------------------------------


def test_unit_tree_blocker():
    m = make_tree_blocker((0, 0, 0), 1, 1, 1)
    assert len(m.triangles) == 12
    lo, hi = m.aabb()
    np.testing.assert_allclose(lo, [-0.5, -0.5, 0])
    np.testing.assert_allclose(hi, [0.5, 0.5, 1])
    assert m.material.is_blocker


def test_tree_surface_area():
    m = make_tree_blocker((3, -2, 0), 2, 3, 10)
    assert m.triangle_areas().sum() == pytest.approx(2 * (2 * 3) + 2 * (2 + 3) * 10)


def test_tree_blocker_is_closed_and_outward():
    m = make_tree_blocker((0, 0, 1.0), 4, 6, 8)
    assert all(len(u) == 2 for u in _edge_use(m).values())
    c = m.triangle_corners()
    n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    assert np.all(np.einsum("ij,ij->i", n, c.mean(axis=1) - np.array([0, 0, 5.0])) > 0)


@pytest.mark.parametrize("dims", [(0, 1, 1), (1, -1, 1), (1, 1, 0)])
def test_tree_bad_dimensions(dims):
    with pytest.raises(GeometryError):
        make_tree_blocker((0, 0, 0), *dims)


# -- meshes and scenes ----------------------------------------------------------------


def test_mesh_rejects_degenerate_and_out_of_range():
    v = np.array([(0, 0, 0), (1, 0, 0), (2, 0, 0)], float)
    with pytest.raises(GeometryError):
        Mesh(v, np.array([(0, 1, 2)]), CONCRETE)
    with pytest.raises(GeometryError):
        Mesh(v, np.array([(0, 1, 3)]), CONCRETE)


def test_mesh_arrays_are_immutable():
    m = make_ground(10.0)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 1.0


def test_scene_needs_a_mesh():
    with pytest.raises(GeometryError):
        Scene(ORIGIN, ())


def _campus():
    return [
        make_ground(500.0),
        extrude_footprint([(0, 0), (20, 0), (20, 15), (0, 15)], 12.0, tag="a"),
        extrude_footprint([(40, 0), (60, 0), (60, 10), (50, 10), (50, 30), (40, 30)], 20.0, tag="b"),
        make_tree_blocker((30, -20, 0), 5, 5, 9),
    ]


def test_scene_construction_deterministic():
    s1, s2 = Scene(ORIGIN, _campus()), Scene(ORIGIN, _campus())
    assert s1.tris.tobytes() == s2.tris.tobytes()
    assert s1.tri_plane.tobytes() == s2.tri_plane.tobytes()
    assert s1.n_triangles == 2 + 10 + 16 + 12


def test_scene_flat_indexing():
    s = Scene(ORIGIN, _campus())
    for g in range(s.n_triangles):
        m = s.meshes[s.tri_mesh[g]]
        np.testing.assert_array_equal(s.tris[g], m.vertices[m.triangles[s.tri_local[g]]])
    assert s.mesh_index("b") == 2
    assert s.tri_blocker.sum() == 12


def test_coplanar_triangles_share_plane_id():
    s = Scene(ORIGIN, _campus())
    # each rectangular wall is two triangles on one plane; ground too
    a = s.tri_offset[1]
    assert s.tri_plane[0] == s.tri_plane[1]
    assert s.tri_plane[a] == s.tri_plane[a + 1]
    assert s.tri_plane[a] != s.tri_plane[a + 2]
    # the same plane in different meshes keeps separate ids (roofs at different heights aside)
    assert len(set(s.tri_plane[s.tri_mesh == 1]) & set(s.tri_plane[s.tri_mesh == 2])) == 0


def test_scene_aabb_excludes_ground():
    lo, hi = Scene(ORIGIN, _campus()).aabb()
    np.testing.assert_allclose(lo, [0, -22.5, 0])
    np.testing.assert_allclose(hi, [60, 30, 20])
