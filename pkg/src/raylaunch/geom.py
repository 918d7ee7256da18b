"""Scene construction: geodetic frames, footprint extrusion, tree blockers and materials.

Local coordinates are east-north-up (ENU) metres anchored at a :class:`GeoOrigin`.
Terrain is flat; the ground is a single large horizontal plane at z = 0.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

# WGS84 ellipsoid
WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)

MIN_TRIANGLE_AREA = 1e-9


class GeometryError(ValueError):
    """Invalid geometric input (bad coordinates, degenerate polygons, ...)."""


@dataclass(frozen=True)
class GeoOrigin:
    lat: float
    lon: float
    alt: float = 0.0

    def __post_init__(self):
        _check_latlon(self.lat, self.lon)


def _check_latlon(lat, lon):
    if not (np.all(np.isfinite(lat)) and np.all(np.isfinite(lon))):
        raise GeometryError("non-finite geodetic coordinate")
    if np.any(np.abs(lat) > 90.0):
        raise GeometryError(f"latitude out of range [-90, 90]: {lat}")
    if np.any(np.abs(lon) > 180.0):
        raise GeometryError(f"longitude out of range [-180, 180]: {lon}")


def geodetic_to_ecef(lat, lon, alt):
    phi = np.radians(lat)
    lam = np.radians(lon)
    s = np.sin(phi)
    n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * s * s)
    x = (n + alt) * np.cos(phi) * np.cos(lam)
    y = (n + alt) * np.cos(phi) * np.sin(lam)
    z = (n * (1.0 - WGS84_E2) + alt) * s
    return x, y, z


def ecef_to_geodetic(x, y, z):
    """Inverse of :func:`geodetic_to_ecef` by fixed-point iteration on latitude."""
    x, y, z = np.asarray(x, float), np.asarray(y, float), np.asarray(z, float)
    lon = np.arctan2(y, x)
    p = np.hypot(x, y)
    phi = np.arctan2(z, p * (1.0 - WGS84_E2))
    for _ in range(10):
        s = np.sin(phi)
        n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * s * s)
        phi = np.arctan2(z + WGS84_E2 * n * s, p)
    s = np.sin(phi)
    n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * s * s)
    c = np.cos(phi)
    # height formula switches near the poles to stay well conditioned
    alt = np.where(np.abs(c) > 1e-6, p / np.where(c == 0, 1.0, c) - n, z / s - n * (1.0 - WGS84_E2))
    return np.degrees(phi), np.degrees(lon), alt


def _enu_rotation(origin: GeoOrigin) -> np.ndarray:
    phi = math.radians(origin.lat)
    lam = math.radians(origin.lon)
    sp, cp, sl, cl = math.sin(phi), math.cos(phi), math.sin(lam), math.cos(lam)
    return np.array(
        [
            [-sl, cl, 0.0],
            [-sp * cl, -sp * sl, cp],
            [cp * cl, cp * sl, sp],
        ]
    )


def wgs84_to_enu(lat, lon, alt, origin: GeoOrigin) -> np.ndarray:
    """Geodetic (deg, deg, m) to local ENU metres. Accepts scalars or arrays."""
    _check_latlon(lat, lon)
    x, y, z = geodetic_to_ecef(lat, lon, alt)
    x0, y0, z0 = geodetic_to_ecef(origin.lat, origin.lon, origin.alt)
    d = np.stack([np.asarray(x) - x0, np.asarray(y) - y0, np.asarray(z) - z0], axis=-1)
    return d @ _enu_rotation(origin).T


def enu_to_wgs84(points, origin: GeoOrigin):
    """Local ENU metres back to (lat, lon, alt)."""
    p = np.asarray(points, dtype=float)
    x0, y0, z0 = geodetic_to_ecef(origin.lat, origin.lon, origin.alt)
    d = p @ _enu_rotation(origin)
    return ecef_to_geodetic(d[..., 0] + x0, d[..., 1] + y0, d[..., 2] + z0)


class MaterialKind(str, enum.Enum):
    DIELECTRIC = "dielectric"
    PERFECT_CONDUCTOR = "perfect_conductor"
    BLOCKER = "blocker"


@dataclass(frozen=True)
class Material:
    name: str
    eps_r: float = 1.0
    sigma: float = 0.0
    kind: MaterialKind = MaterialKind.DIELECTRIC

    def __post_init__(self):
        object.__setattr__(self, "kind", MaterialKind(self.kind))
        if self.sigma < 0:
            raise GeometryError(f"material {self.name!r}: conductivity must be >= 0")
        if self.kind is MaterialKind.DIELECTRIC and self.eps_r < 1.0:
            raise GeometryError(f"material {self.name!r}: eps_r must be >= 1 for a dielectric")

    @property
    def is_blocker(self) -> bool:
        return self.kind is MaterialKind.BLOCKER


# concrete per ITU-R P.2040 at 3.75 GHz; medium dry ground
CONCRETE = Material("concrete", eps_r=5.24, sigma=0.123)
GROUND = Material("ground", eps_r=3.0, sigma=0.05)
TREE = Material("tree", kind=MaterialKind.BLOCKER)
PEC = Material("pec", kind=MaterialKind.PERFECT_CONDUCTOR)


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    material: Material
    tag: str = ""

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(v)):
            raise GeometryError(f"mesh {self.tag!r}: non-finite vertex")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise GeometryError(f"mesh {self.tag!r}: triangle index out of range")
        v.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        if t.size and self.triangle_areas().min() <= MIN_TRIANGLE_AREA:
            raise GeometryError(f"mesh {self.tag!r}: degenerate triangle")

    def triangle_corners(self) -> np.ndarray:
        return self.vertices[self.triangles]

    def triangle_areas(self) -> np.ndarray:
        c = self.triangle_corners()
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


@dataclass(frozen=True, eq=False)
class Scene:
    """Immutable set of meshes in a local ENU frame.

    Flattened triangle arrays are computed lazily and shared by the tracer.
    Global triangle ``i`` belongs to mesh ``tri_mesh[i]`` as local triangle ``tri_local[i]``.
    """

    origin: GeoOrigin
    meshes: tuple[Mesh, ...]
    edges: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "meshes", tuple(self.meshes))
        object.__setattr__(self, "edges", tuple(self.edges))
        if not self.meshes:
            raise GeometryError("scene needs at least one mesh")

    @cached_property
    def tris(self) -> np.ndarray:
        out = np.concatenate([m.triangle_corners() for m in self.meshes], axis=0)
        out.flags.writeable = False
        return out

    @cached_property
    def tri_mesh(self) -> np.ndarray:
        return np.concatenate(
            [np.full(len(m.triangles), i, dtype=np.int64) for i, m in enumerate(self.meshes)]
        )

    @cached_property
    def tri_local(self) -> np.ndarray:
        return np.concatenate([np.arange(len(m.triangles), dtype=np.int64) for m in self.meshes])

    @cached_property
    def tri_offset(self) -> np.ndarray:
        sizes = [len(m.triangles) for m in self.meshes]
        return np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)

    @cached_property
    def tri_normals(self) -> np.ndarray:
        """Outward (winding-derived) unit normals."""
        t = self.tris
        n = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    @cached_property
    def tri_blocker(self) -> np.ndarray:
        return np.array([self.meshes[m].material.is_blocker for m in self.tri_mesh], dtype=np.bool_)

    @cached_property
    def tri_plane(self) -> np.ndarray:
        """Plane id per triangle; coplanar triangles of one mesh share an id."""
        n = self.tri_normals
        d = np.einsum("ij,ij->i", n, self.tris[:, 0])
        keys = np.column_stack(
            [self.tri_mesh, np.round(n, 6) + 0.0, np.round(d, 4) + 0.0]
        )
        _, inverse = np.unique(keys, axis=0, return_inverse=True)
        # relabel in order of first appearance so ids are stable under np.unique internals
        order = {}
        out = np.empty(len(inverse), dtype=np.int64)
        for i, k in enumerate(inverse.ravel()):
            out[i] = order.setdefault(int(k), len(order))
        return out

    @property
    def n_triangles(self) -> int:
        return int(sum(len(m.triangles) for m in self.meshes))

    def aabb(self, include_ground: bool = False) -> tuple[np.ndarray, np.ndarray]:
        meshes = [m for m in self.meshes if include_ground or m.tag != "ground"] or list(self.meshes)
        lo = np.min([m.aabb()[0] for m in meshes], axis=0)
        hi = np.max([m.aabb()[1] for m in meshes], axis=0)
        return lo, hi

    def mesh_index(self, tag: str) -> int:
        for i, m in enumerate(self.meshes):
            if m.tag == tag:
                return i
        raise KeyError(tag)

    def with_edges(self, edges) -> "Scene":
        return Scene(self.origin, self.meshes, tuple(edges))


# -- polygons ---------------------------------------------------------------


def polygon_area(poly) -> float:
    """Signed shoelace area; positive for counter-clockwise rings."""
    p = np.asarray(poly, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _cross2(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _segments_intersect(p1, p2, q1, q2) -> bool:
    d1 = _cross2(q1, q2, p1)
    d2 = _cross2(q1, q2, p2)
    d3 = _cross2(p1, p2, q1)
    d4 = _cross2(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 * d2 < 0 and d3 * d4 < 0:
        return True

    def on_seg(a, b, c, d):
        return abs(d) < 1e-12 and min(a[0], b[0]) - 1e-12 <= c[0] <= max(a[0], b[0]) + 1e-12 and (
            min(a[1], b[1]) - 1e-12 <= c[1] <= max(a[1], b[1]) + 1e-12
        )

    return on_seg(q1, q2, p1, d1) or on_seg(q1, q2, p2, d2) or on_seg(p1, p2, q1, d3) or on_seg(p1, p2, q2, d4)


def clean_polygon(poly, tol: float = 1e-9) -> np.ndarray:
    """Drop a repeated closing vertex, duplicate and collinear vertices; orient CCW."""
    p = np.asarray(poly, dtype=float)
    if p.ndim != 2 or p.shape[1] < 2:
        raise GeometryError("polygon must be a list of 2D points")
    p = p[:, :2]
    if not np.all(np.isfinite(p)):
        raise GeometryError("polygon has non-finite coordinates")
    pts = [p[0]]
    for q in p[1:]:
        if np.linalg.norm(q - pts[-1]) > tol:
            pts.append(q)
    if len(pts) > 1 and np.linalg.norm(pts[0] - pts[-1]) <= tol:
        pts.pop()
    changed = True
    while changed and len(pts) >= 3:
        changed = False
        for i in range(len(pts)):
            a, b, c = pts[i - 1], pts[i], pts[(i + 1) % len(pts)]
            ab = np.linalg.norm(b - a) * np.linalg.norm(c - b)
            if abs(_cross2(a, b, c)) <= tol * max(ab, 1.0):
                pts.pop(i)
                changed = True
                break
    if len(pts) < 3:
        raise GeometryError("polygon needs at least 3 distinct non-collinear vertices")
    out = np.array(pts)
    area = polygon_area(out)
    if abs(area) <= MIN_TRIANGLE_AREA:
        raise GeometryError("polygon has zero area")
    if area < 0:
        out = out[::-1].copy()
    n = len(out)
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_intersect(out[i], out[(i + 1) % n], out[j], out[(j + 1) % n]):
                raise GeometryError("polygon is self-intersecting")
    return out


def _point_in_triangle(p, a, b, c) -> bool:
    return _cross2(a, b, p) >= 0 and _cross2(b, c, p) >= 0 and _cross2(c, a, p) >= 0


def triangulate_polygon(poly: np.ndarray) -> list[tuple[int, int, int]]:
    """Ear clipping of a simple CCW polygon; returns CCW index triples."""
    idx = list(range(len(poly)))
    out = []
    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * len(poly) ** 2:
            raise GeometryError("triangulation failed (polygon not simple?)")
        m = len(idx)
        for k in range(m):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % m]
            a, b, c = poly[i0], poly[i1], poly[i2]
            if _cross2(a, b, c) <= 0:
                continue
            if any(
                _point_in_triangle(poly[j], a, b, c)
                for j in idx
                if j not in (i0, i1, i2)
            ):
                continue
            out.append((i0, i1, i2))
            idx.pop(k)
            break
        else:
            raise GeometryError("triangulation failed (no ear found)")
    out.append(tuple(idx))
    return out


def extrude_footprint(polygon, height: float, material: Material = CONCRETE, tag: str = "") -> Mesh:
    """Prism from a footprint: outward-wound walls and a flat roof, no floor."""
    if not (height > 0 and math.isfinite(height)):
        raise GeometryError(f"building height must be positive, got {height}")
    poly = clean_polygon(polygon)
    n = len(poly)
    bottom = np.column_stack([poly, np.zeros(n)])
    top = np.column_stack([poly, np.full(n, float(height))])
    vertices = np.vstack([bottom, top])
    tris = []
    for i in range(n):
        j = (i + 1) % n
        tris.append((i, j, n + j))
        tris.append((i, n + j, n + i))
    tris.extend((n + a, n + b, n + c) for a, b, c in triangulate_polygon(poly))
    return Mesh(vertices, np.array(tris), material, tag)


def make_tree_blocker(center, width: float, depth: float, height: float, tag: str = "tree",
                      material: Material = TREE) -> Mesh:
    """Axis-aligned cuboid blocker (dense canopy) standing on ``center``."""
    for name, val in (("width", width), ("depth", depth), ("height", height)):
        if not (val > 0 and math.isfinite(val)):
            raise GeometryError(f"tree {name} must be positive, got {val}")
    cx, cy, cz = (float(c) for c in center)
    hw, hd = width / 2.0, depth / 2.0
    square = [(cx - hw, cy - hd), (cx + hw, cy - hd), (cx + hw, cy + hd), (cx - hw, cy + hd)]
    v = np.array([(x, y, cz) for x, y in square] + [(x, y, cz + height) for x, y in square])
    tris = [(0, 2, 1), (0, 3, 2), (4, 5, 6), (4, 6, 7)]
    for i in range(4):
        j = (i + 1) % 4
        tris += [(i, j, 4 + j), (i, 4 + j, 4 + i)]
    return Mesh(v, np.array(tris), material, tag)


def make_ground(half_size: float = 5000.0, material: Material = GROUND, center=(0.0, 0.0)) -> Mesh:
    """Flat ground square at z = 0 (stands in for the infinite ground plane)."""
    cx, cy = center
    s = float(half_size)
    v = np.array([(cx - s, cy - s, 0.0), (cx + s, cy - s, 0.0), (cx + s, cy + s, 0.0), (cx - s, cy + s, 0.0)])
    return Mesh(v, np.array([(0, 1, 2), (0, 2, 3)]), material, "ground")


def build_scene(origin: GeoOrigin, meshes: Sequence[Mesh]) -> Scene:
    return Scene(origin, tuple(meshes))
