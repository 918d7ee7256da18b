"""Shooting-and-bouncing-rays core.

Rays leave the transmitter on a Fibonacci lattice, bounce specularly up to
``max_reflections`` times and register a capture whenever they pass within
the adaptive receiver-sphere radius ``r = capture_scale * d * gamma / 2`` of a
receiver (``d`` unfolded length, ``gamma`` mean ray spacing). Captures only
nominate a sequence of reflecting planes; every nominated sequence is then
solved exactly with the image method and re-validated with occlusion casts.
With ``image_candidates`` every single-plane sequence, and every plane paired
with the ground, is also nominated directly, so those paths do not depend on
ray density.
Single knife-edge diffraction (optionally combined with one ground
reflection) is found deterministically per (TX, edge, RX) triple.
"""

from __future__ import annotations

import hashlib
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba as nb
import numpy as np

from . import em
from .accel import EPS_T, Bvh, _traverse, build_bvh, nearest_hits
from .antenna import AntennaSpec, DirectionAngles
from .geom import Material, Scene

DIHEDRAL_MIN = 0.1
GROUND_TAG = "ground"


class ConfigurationError(ValueError):
    """Tracer inputs that cannot be simulated (e.g. TX inside a building)."""


@dataclass(frozen=True)
class LaunchConfig:
    ray_count: int = 200_000
    max_reflections: int = 2
    enable_diffraction: bool = True
    rx_sphere_mode: str = "adaptive"
    max_path_length: float = 3000.0
    capture_scale: float = 12.0  # ~110 rays per capture cone
    frequency_hz: float = 3.75e9
    image_candidates: bool = True

    def __post_init__(self):
        if self.ray_count < 100:
            raise ValueError("ray_count must be >= 100")
        if not 0 <= self.max_reflections <= 2:
            raise ValueError("max_reflections must be 0, 1 or 2")
        if not self.max_path_length > 0:
            raise ValueError("max_path_length must be positive")
        if self.rx_sphere_mode != "adaptive":
            raise ValueError("only the adaptive receiver sphere is supported")
        if not self.capture_scale > 0:
            raise ValueError("capture_scale must be positive")
        if not self.frequency_hz > 0:
            raise ValueError("frequency must be positive")

    @property
    def mean_ray_spacing(self) -> float:
        """Mean angular spacing (rad) of the launch lattice: sqrt(4 pi / N)."""
        return math.sqrt(4.0 * math.pi / self.ray_count)


@dataclass(frozen=True)
class Interaction:
    kind: str  # "reflection" | "diffraction"
    point: tuple
    mesh_id: int
    primitive_id: int  # local triangle id for reflections, scene edge id for diffractions
    material: str

    @property
    def key(self) -> str:
        tag = "R" if self.kind == "reflection" else "D"
        return f"{tag}:{self.mesh_id}:{self.primitive_id}"


@dataclass(frozen=True)
class DiffractionEdge:
    p0: tuple
    p1: tuple
    n0: tuple
    n1: tuple
    exterior_angle: float
    mesh_id: int


@dataclass(frozen=True, eq=False)
class PathRecord:
    interactions: tuple
    total_length: float
    tau: float
    departure: np.ndarray  # unit propagation direction leaving TX
    arrival: np.ndarray  # unit propagation direction entering RX
    polarimetric: np.ndarray
    diffraction_loss_db: float
    path_id: str

    @property
    def kinds(self) -> tuple:
        return tuple(i.kind for i in self.interactions)

    @property
    def label(self) -> str:
        if not self.interactions:
            return "los"
        return "+".join("D" if k == "diffraction" else "R" for k in self.kinds)

    @property
    def aod(self) -> DirectionAngles:
        return world_angles(self.departure)

    @property
    def aoa(self) -> DirectionAngles:
        # direction the wave arrives from, as seen by the receiver
        return world_angles(-self.arrival)


def world_angles(d) -> DirectionAngles:
    """Azimuth from north towards east and elevation of a world direction."""
    return DirectionAngles(math.atan2(d[0], d[1]), math.asin(max(-1.0, min(1.0, d[2]))))


def make_path_id(interactions: Sequence[Interaction]) -> str:
    key = "|".join(i.key for i in interactions) or "LOS"
    return hashlib.blake2b(key.encode(), digest_size=8).hexdigest()


def generate_launch_directions(count: int) -> np.ndarray:
    """Fibonacci-lattice unit vectors covering the sphere."""
    if count < 1:
        raise ValueError("need at least one direction")
    i = np.arange(count, dtype=np.float64) + 0.5
    z = 1.0 - 2.0 * i / count
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = i * math.pi * (3.0 - math.sqrt(5.0))
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


# -- diffraction edges --------------------------------------------------------


def find_diffraction_edges(scene: Scene, ground_z: float = 0.0, tol: float = 1e-6) -> list[DiffractionEdge]:
    """Convex mesh edges (exterior dihedral > pi + 0.1 rad) plus open boundary edges.

    Blocker meshes and edges lying on the ground are skipped.
    """
    out = []
    for mi, mesh in enumerate(scene.meshes):
        if mesh.material.is_blocker or mesh.tag == GROUND_TAG:
            continue
        v = mesh.vertices
        corners = mesh.triangle_corners()
        normals = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        faces = defaultdict(list)
        for ti, tri in enumerate(mesh.triangles):
            for a, b, c in ((tri[0], tri[1], tri[2]), (tri[1], tri[2], tri[0]), (tri[2], tri[0], tri[1])):
                faces[(min(a, b), max(a, b))].append((ti, c))
        for (a, b), adj in sorted(faces.items()):
            pa, pb = v[a], v[b]
            if abs(pa[2] - ground_z) < tol and abs(pb[2] - ground_z) < tol:
                continue
            if len(adj) == 1:
                n0 = normals[adj[0][0]]
                out.append(DiffractionEdge(tuple(pa), tuple(pb), tuple(n0), tuple(-n0), 2 * math.pi, mi))
            elif len(adj) == 2:
                (t0, c0), (t1, c1) = adj
                n0, n1 = normals[t0], normals[t1]
                bend = math.acos(max(-1.0, min(1.0, float(np.dot(n0, n1)))))
                convex = float(np.dot(n0, v[c1] - pa)) < -tol
                if convex and bend > DIHEDRAL_MIN:
                    out.append(DiffractionEdge(tuple(pa), tuple(pb), tuple(n0), tuple(n1), math.pi + bend, mi))
    return out


def prepare_scene(scene: Scene) -> tuple[Scene, Bvh]:
    """Attach diffraction edges and build the BVH."""
    if not scene.edges:
        scene = scene.with_edges(find_diffraction_edges(scene))
    return scene, build_bvh(scene)


# -- numba kernels -------------------------------------------------------------


@nb.njit(cache=True, parallel=True)
def _sbr_trace(tx, dirs, n_seg, max_len, eps, node_lo, node_hi, node_left, node_start,
               node_count, prim, tris, normals, blocker):
    n = len(dirs)
    seg_o = np.zeros((n, n_seg, 3))
    seg_d = np.zeros((n, n_seg, 3))
    seg_len = np.zeros((n, n_seg))
    seg_acc = np.zeros((n, n_seg))
    seg_tri = np.full((n, n_seg), -1, np.int64)
    nseg = np.zeros(n, np.int64)
    for i in nb.prange(n):
        o = tx.copy()
        d = dirs[i].copy()
        acc = 0.0
        tmin = 0.0
        for s in range(n_seg):
            remaining = max_len - acc
            if remaining <= 0.0:
                break
            t, p = _traverse(o, d, tmin, remaining, node_lo, node_hi, node_left, node_start,
                             node_count, prim, tris)
            for k in range(3):
                seg_o[i, s, k] = o[k]
                seg_d[i, s, k] = d[k]
            seg_acc[i, s] = acc
            seg_len[i, s] = t if p >= 0 else remaining
            seg_tri[i, s] = p
            nseg[i] = s + 1
            if p < 0 or blocker[p]:
                break
            dn = d[0] * normals[p, 0] + d[1] * normals[p, 1] + d[2] * normals[p, 2]
            for k in range(3):
                o[k] = o[k] + t * d[k]
                d[k] = d[k] - 2.0 * dn * normals[p, k]
            norm = math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
            for k in range(3):
                d[k] /= norm
            acc += t
            tmin = eps
    return seg_o, seg_d, seg_len, seg_acc, seg_tri, nseg


@nb.njit(cache=True, inline="always")
def _captured(o, d, seg_len, acc, rx, half_angle):
    wx = rx[0] - o[0]
    wy = rx[1] - o[1]
    wz = rx[2] - o[2]
    tc = wx * d[0] + wy * d[1] + wz * d[2]
    if tc < 0.0:
        tc = 0.0
    elif tc > seg_len:
        tc = seg_len
    ex = wx - tc * d[0]
    ey = wy - tc * d[1]
    ez = wz - tc * d[2]
    r = (acc + tc) * half_angle
    return ex * ex + ey * ey + ez * ez <= r * r


@nb.njit(cache=True, parallel=True)
def _count_captures(seg_o, seg_d, seg_len, seg_acc, nseg, rxs, half_angle):
    n = len(nseg)
    counts = np.zeros(n, np.int64)
    for i in nb.prange(n):
        c = 0
        for s in range(1, nseg[i]):
            for k in range(len(rxs)):
                if _captured(seg_o[i, s], seg_d[i, s], seg_len[i, s], seg_acc[i, s], rxs[k], half_angle):
                    c += 1
        counts[i] = c
    return counts


@nb.njit(cache=True, parallel=True)
def _write_captures(seg_o, seg_d, seg_len, seg_acc, seg_tri, nseg, rxs, half_angle, offsets,
                    tri_plane, total):
    # rows: rx, order, plane1, plane2
    out = np.full((total, 4), -1, np.int64)
    n = len(nseg)
    for i in nb.prange(n):
        c = offsets[i]
        for s in range(1, nseg[i]):
            for k in range(len(rxs)):
                if _captured(seg_o[i, s], seg_d[i, s], seg_len[i, s], seg_acc[i, s], rxs[k], half_angle):
                    out[c, 0] = k
                    out[c, 1] = s
                    for j in range(s):
                        out[c, 2 + j] = tri_plane[seg_tri[i, j]]
                    c += 1
    return out


@nb.njit(cache=True, parallel=True)
def _check_segments(starts, ends, tmins, tails, expect, tri_plane, blocker, node_lo, node_hi,
                    node_left, node_start, node_count, prim, tris):
    """Validate straight segments.

    expect[i] >= 0: the first hit must be at the segment end on plane expect[i].
    expect[i] == -1: the segment (shortened by tails[i]) must be free.
    """
    n = len(starts)
    ok = np.zeros(n, np.bool_)
    hit_tri = np.full(n, -1, np.int64)
    for i in nb.prange(n):
        dd = np.empty(3)
        L = 0.0
        for k in range(3):
            dd[k] = ends[i, k] - starts[i, k]
            L += dd[k] * dd[k]
        L = math.sqrt(L)
        if L <= 0.0:
            continue
        for k in range(3):
            dd[k] /= L
        if expect[i] >= 0:
            tol = 1e-7 * L + 1e-7
            t, p = _traverse(starts[i], dd, tmins[i], L + tol, node_lo, node_hi, node_left,
                             node_start, node_count, prim, tris)
            if p >= 0 and tri_plane[p] == expect[i] and abs(t - L) <= tol and not blocker[p]:
                ok[i] = True
                hit_tri[i] = p
        else:
            tmax = L - tails[i]
            if tmax <= tmins[i]:
                ok[i] = True
                continue
            t, p = _traverse(starts[i], dd, tmins[i], tmax, node_lo, node_hi, node_left,
                             node_start, node_count, prim, tris)
            ok[i] = p < 0
    return ok, hit_tri


# -- validation helper -----------------------------------------------------------


class _SegmentBatch:
    """Collects segments, validates them in one kernel call."""

    def __init__(self):
        self.rows = []

    def add(self, start, end, tmin, expect=-1, tail=0.0) -> int:
        self.rows.append((start, end, tmin, expect, tail))
        return len(self.rows) - 1

    def add_many(self, starts, ends, tmin, expect, tail=0.0) -> np.ndarray:
        """Vectorised add; returns the row indices."""
        base = len(self.rows)
        starts = np.atleast_2d(starts)
        ends = np.atleast_2d(ends)
        n = max(len(starts), len(ends))
        starts = np.broadcast_to(starts, (n, 3))
        ends = np.broadcast_to(ends, (n, 3))
        tmin = np.broadcast_to(np.asarray(tmin, float), (n,))
        expect = np.broadcast_to(np.asarray(expect, np.int64), (n,))
        tail = np.broadcast_to(np.asarray(tail, float), (n,))
        self.rows.extend(zip(starts, ends, tmin, expect, tail))
        return np.arange(base, base + n)

    def run(self, scene: Scene, bvh: Bvh):
        if not self.rows:
            return np.zeros(0, bool), np.zeros(0, np.int64)
        starts = np.ascontiguousarray([r[0] for r in self.rows], dtype=np.float64)
        ends = np.ascontiguousarray([r[1] for r in self.rows], dtype=np.float64)
        tmins = np.array([r[2] for r in self.rows], dtype=np.float64)
        expect = np.array([r[3] for r in self.rows], dtype=np.int64)
        tails = np.array([r[4] for r in self.rows], dtype=np.float64)
        return _check_segments(starts, ends, tmins, tails, expect, scene.tri_plane, scene.tri_blocker,
                               *bvh.arrays())


# -- geometry helpers ---------------------------------------------------------------


@dataclass
class _Planes:
    normal: np.ndarray
    offset: np.ndarray
    lo: np.ndarray  # AABB of the plane's triangles
    hi: np.ndarray
    reflective: np.ndarray  # False for blocker planes

    @classmethod
    def of(cls, scene: Scene) -> "_Planes":
        pid = scene.tri_plane
        n_planes = int(pid.max()) + 1
        first = np.full(n_planes, -1, np.int64)
        for i in range(len(pid) - 1, -1, -1):
            first[pid[i]] = i
        normal = scene.tri_normals[first]
        offset = np.einsum("ij,ij->i", normal, scene.tris[first, 0])
        lo = np.full((n_planes, 3), np.inf)
        hi = np.full((n_planes, 3), -np.inf)
        np.minimum.at(lo, pid, scene.tris.min(axis=1))
        np.maximum.at(hi, pid, scene.tris.max(axis=1))
        return cls(normal, offset, lo, hi, ~scene.tri_blocker[first])

    def inside_box(self, pts, pid, tol=1e-6):
        return np.all((pts >= self.lo[pid] - tol) & (pts <= self.hi[pid] + tol), axis=1)

    def mirror(self, pts, pid):
        n = self.normal[pid]
        dist = np.einsum("ij,ij->i", pts, n) - self.offset[pid]
        return pts - 2.0 * dist[:, None] * n

    def line_hit(self, a, b, pid):
        """Parameter u and point where segment a->b crosses plane pid."""
        n = self.normal[pid]
        denom = np.einsum("ij,ij->i", b - a, n)
        with np.errstate(divide="ignore", invalid="ignore"):
            u = (self.offset[pid] - np.einsum("ij,ij->i", a, n)) / denom
        u = np.where(np.abs(denom) < 1e-15, np.nan, u)
        return u, a + u[:, None] * (b - a)

    def side(self, pts, pid):
        return np.einsum("ij,ij->i", pts, self.normal[pid]) - self.offset[pid]


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


# -- tracer -------------------------------------------------------------------------


@dataclass
class _Found:
    """One validated path before it becomes a PathRecord."""

    rx: int
    points: list  # interaction points in order
    kinds: list
    tris: list  # global triangle id (reflections) or -1
    edges: list  # scene edge id (diffractions) or -1
    diffraction_loss_db: float = 0.0


class Tracer:
    """Holds a prepared scene for repeated tracing. Immutable after construction."""

    def __init__(self, scene: Scene, bvh: Optional[Bvh] = None):
        if bvh is None:
            scene, bvh = prepare_scene(scene)
        self.scene = scene
        self.bvh = bvh
        self.planes = _Planes.of(scene)
        self.ground_plane = -1
        for mi, m in enumerate(scene.meshes):
            if m.tag == GROUND_TAG:
                self.ground_plane = int(scene.tri_plane[scene.tri_offset[mi]])
                break
        if scene.edges:
            e = scene.edges
            self.edge_p0 = np.array([x.p0 for x in e], dtype=float)
            self.edge_p1 = np.array([x.p1 for x in e], dtype=float)
        else:
            self.edge_p0 = self.edge_p1 = np.zeros((0, 3))

    # public entry -----------------------------------------------------------

    def trace(self, tx_pos, rx_positions, cfg: LaunchConfig) -> list[list[PathRecord]]:
        tx = np.asarray(tx_pos, dtype=float)
        rxs = np.ascontiguousarray(np.atleast_2d(np.asarray(rx_positions, dtype=float)))
        if rxs.size == 0:
            return []
        self.check_transmitter(tx)
        captures = self.sbr_captures(tx, rxs, cfg)
        return self.solve(tx, rxs, cfg, captures)

    def check_transmitter(self, tx):
        if not np.all(np.isfinite(tx)):
            raise ConfigurationError("transmitter position must be finite")
        if self.ground_plane >= 0 and tx[2] <= 0.0:
            raise ConfigurationError(f"transmitter at {tuple(tx)} is not above the ground")
        up = np.array([0.0, 0.0, 1.0])
        t, p = nearest_hits(self.bvh, tx[None], up[None], 0.0, np.inf)
        if p[0] >= 0 and self.scene.tri_normals[p[0]] @ up > 0:
            mesh = self.scene.meshes[self.scene.tri_mesh[p[0]]]
            raise ConfigurationError(f"transmitter at {tuple(tx)} is inside mesh {mesh.tag!r}")

    def sbr_captures(self, tx, rxs, cfg: LaunchConfig) -> np.ndarray:
        """Unique (rx, order, plane1, plane2) rows nominated by sphere captures."""
        if cfg.max_reflections == 0:
            return np.zeros((0, 4), np.int64)
        dirs = generate_launch_directions(cfg.ray_count)
        seg = _sbr_trace(tx, dirs, cfg.max_reflections + 1, cfg.max_path_length, EPS_T,
                         *self.bvh.arrays(), self.scene.tri_normals, self.scene.tri_blocker)
        seg_o, seg_d, seg_len, seg_acc, seg_tri, nseg = seg
        half = 0.5 * cfg.capture_scale * cfg.mean_ray_spacing
        counts = _count_captures(seg_o, seg_d, seg_len, seg_acc, nseg, rxs, half)
        offsets = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
        total = int(counts.sum())
        rows = _write_captures(seg_o, seg_d, seg_len, seg_acc, seg_tri, nseg, rxs, half, offsets,
                               self.scene.tri_plane, total)
        if total == 0:
            return np.zeros((0, 4), np.int64)
        return np.unique(rows, axis=0)

    # exact solve ---------------------------------------------------------------

    def solve(self, tx, rxs, cfg: LaunchConfig, captures) -> list[list[PathRecord]]:
        captures = np.asarray(captures, dtype=np.int64).reshape(-1, 4)
        if self.ground_plane >= 0 and cfg.max_reflections >= 1:
            ground = np.column_stack([
                np.arange(len(rxs)), np.ones(len(rxs), np.int64),
                np.full(len(rxs), self.ground_plane), np.full(len(rxs), -1),
            ])
            captures = np.unique(np.vstack([captures, ground]), axis=0)
        if cfg.image_candidates and cfg.max_reflections >= 1:
            captures = np.unique(np.vstack([captures, self.image_candidates(tx, rxs, cfg.max_reflections)]), axis=0)
        found: list[_Found] = []
        los_ok = self._los(tx, rxs, found)
        ground_ok = np.zeros(len(rxs), bool)
        for order in (1, 2):
            rows = captures[captures[:, 1] == order]
            if order <= cfg.max_reflections and len(rows):
                ok_rows = self._reflections(tx, rxs, rows, order, found)
                if order == 1 and self.ground_plane >= 0:
                    for r in ok_rows:
                        if r[2] == self.ground_plane:
                            ground_ok[r[0]] = True
        if cfg.enable_diffraction and len(self.edge_p0):
            self._diffractions(tx, rxs, cfg, ~los_ok, found, mode="D")
            if self.ground_plane >= 0 and cfg.max_reflections >= 1:
                self._diffractions(tx, rxs, cfg, ~ground_ok, found, mode="DR")
                self._diffractions(tx, rxs, cfg, ~ground_ok, found, mode="RD")
        per_rx: list[list[PathRecord]] = [[] for _ in range(len(rxs))]
        seen = [set() for _ in range(len(rxs))]
        for f in found:
            rec = self._record(tx, rxs[f.rx], f, cfg)
            if rec.total_length > cfg.max_path_length or rec.path_id in seen[f.rx]:
                continue
            seen[f.rx].add(rec.path_id)
            per_rx[f.rx].append(rec)
        for paths in per_rx:
            paths.sort(key=lambda p: (p.tau, p.path_id))
        return per_rx

    def image_candidates(self, tx, rxs, max_reflections: int) -> np.ndarray:
        """Rows for every plane (and every plane paired with the ground) whose image point lands on it."""
        pl = self.planes
        planes = np.flatnonzero(pl.reflective)
        planes = planes[planes != self.ground_plane]
        out = [np.zeros((0, 4), np.int64)]
        if len(planes) == 0:
            return out[0]
        k = np.repeat(np.arange(len(rxs)), len(planes))
        p = np.tile(planes, len(rxs))
        R = rxs[k]
        T = np.broadcast_to(tx, R.shape)
        u, Q = pl.line_hit(pl.mirror(T, p), R, p)
        good = (u > 0) & (u < 1) & (pl.side(T, p) * pl.side(R, p) > 0) & pl.inside_box(Q, p)
        out.append(np.column_stack([k, np.ones_like(k), p, np.full_like(k, -1)])[good])
        if max_reflections >= 2 and self.ground_plane >= 0:
            g = np.full_like(p, self.ground_plane)
            for p1, p2 in ((p, g), (g, p)):
                T1 = pl.mirror(T, p1)
                u2, Q2 = pl.line_hit(pl.mirror(T1, p2), R, p2)
                u1, Q1 = pl.line_hit(T1, Q2, p1)
                good = (u2 > 0) & (u2 < 1) & (u1 > 0) & (u1 < 1)
                good &= pl.inside_box(Q1, p1) & pl.inside_box(Q2, p2)
                out.append(np.column_stack([k, np.full_like(k, 2), p1, p2])[good])
        return np.vstack(out)

    def _los(self, tx, rxs, found) -> np.ndarray:
        batch = _SegmentBatch()
        batch.add_many(tx[None], rxs, 0.0, -1)
        ok, _ = batch.run(self.scene, self.bvh)
        for k in np.flatnonzero(ok):
            found.append(_Found(int(k), [], [], [], []))
        return ok

    def _reflections(self, tx, rxs, rows, order, found) -> list:
        pl = self.planes
        k = rows[:, 0]
        R = rxs[k]
        T = np.broadcast_to(tx, R.shape)
        p1 = rows[:, 2]
        if order == 1:
            Ti = pl.mirror(T, p1)
            u, Q1 = pl.line_hit(Ti, R, p1)
            good = (u > 0) & (u < 1)
            good &= (pl.side(T, p1) * pl.side(R, p1) > 0)
            pts = [Q1]
            planes = [p1]
        else:
            p2 = rows[:, 3]
            T1 = pl.mirror(T, p1)
            T2 = pl.mirror(T1, p2)
            u2, Q2 = pl.line_hit(T2, R, p2)
            u1, Q1 = pl.line_hit(T1, Q2, p1)
            good = (u2 > 0) & (u2 < 1) & (u1 > 0) & (u1 < 1) & (p1 != p2)
            pts = [Q1, Q2]
            planes = [p1, p2]
        idx = np.flatnonzero(good)
        if len(idx) == 0:
            return []
        batch = _SegmentBatch()
        chains = []
        starts = [T[idx]] + [p[idx] for p in pts]
        ends = [p[idx] for p in pts] + [R[idx]]
        for j in range(order + 1):
            tmin = 0.0 if j == 0 else EPS_T
            expect = planes[j][idx] if j < order else -1
            chains.append(batch.add_many(starts[j], ends[j], tmin, expect))
        ok, hit = batch.run(self.scene, self.bvh)
        all_ok = np.all([ok[c] for c in chains], axis=0)
        out = []
        for n, i in enumerate(idx):
            if not all_ok[n]:
                continue
            tris = [int(hit[chains[j][n]]) for j in range(order)]
            found.append(_Found(int(k[i]), [p[i].copy() for p in pts], ["reflection"] * order, tris,
                                [-1] * order))
            out.append(rows[i])
        return out

    def _diffractions(self, tx, rxs, cfg, eligible, found, mode):
        """Single knife-edge paths; ``mode`` is D, DR (edge then ground) or RD."""
        ks = np.flatnonzero(eligible)
        if len(ks) == 0:
            return
        A = self.edge_p0
        B = self.edge_p1
        L = np.linalg.norm(B - A, axis=1)
        u = (B - A) / L[:, None]
        lam = em.wavelength(cfg.frequency_hz)
        batch = _SegmentBatch()
        cands = []
        for k in ks:
            R = rxs[k]
            X, Y = tx, R
            if mode == "DR":
                Y = np.array([R[0], R[1], -R[2]])
            elif mode == "RD":
                X = np.array([tx[0], tx[1], -tx[2]])
            sX = np.einsum("ij,ij->i", X - A, u)
            sY = np.einsum("ij,ij->i", Y - A, u)
            rX = np.linalg.norm(X - A - sX[:, None] * u, axis=1)
            rY = np.linalg.norm(Y - A - sY[:, None] * u, axis=1)
            with np.errstate(invalid="ignore", divide="ignore"):
                s = sX + (sY - sX) * rX / (rX + rY)
            good = (rX > 1e-9) & (rY > 1e-9) & (s > 1e-9) & (s < L - 1e-9)
            for e in np.flatnonzero(good):
                P = A[e] + s[e] * u[e]
                if mode == "D":
                    c = [batch.add(X, P, 0.0, -1, EPS_T), batch.add(P, R, EPS_T, -1, 0.0)]
                    pts = [P]
                else:
                    if P[2] <= 0.0:
                        continue
                    if mode == "DR":
                        G = P + (Y - P) * (P[2] / (P[2] - Y[2]))
                        c = [batch.add(tx, P, 0.0, -1, EPS_T),
                             batch.add(P, G, EPS_T, self.ground_plane),
                             batch.add(G, R, EPS_T, -1, 0.0)]
                        pts = [P, G]
                    else:
                        G = X + (P - X) * (X[2] / (X[2] - P[2]))
                        c = [batch.add(tx, G, 0.0, self.ground_plane),
                             batch.add(G, P, EPS_T, -1, EPS_T),
                             batch.add(P, R, EPS_T, -1, 0.0)]
                        pts = [G, P]
                d_total = np.linalg.norm(P - X) + np.linalg.norm(Y - P)
                excess = d_total - np.linalg.norm(Y - X)
                v = 2.0 * math.sqrt(max(excess, 0.0) / lam)
                cands.append((int(k), int(e), pts, c, v))
        if not cands:
            return
        ok, hit = batch.run(self.scene, self.bvh)
        for k, e, pts, c, v in cands:
            if not all(ok[i] for i in c):
                continue
            loss = float(em.knife_edge_loss(v))
            if mode == "D":
                found.append(_Found(k, pts, ["diffraction"], [-1], [e], loss))
            elif mode == "DR":
                found.append(_Found(k, pts, ["diffraction", "reflection"], [-1, int(hit[c[1]])], [e, -1], loss))
            else:
                found.append(_Found(k, pts, ["reflection", "diffraction"], [int(hit[c[0]]), -1], [-1, e], loss))

    # records -------------------------------------------------------------------------

    def _record(self, tx, rx, f: _Found, cfg: LaunchConfig) -> PathRecord:
        scene = self.scene
        verts = [tx] + [np.asarray(p, float) for p in f.points] + [rx]
        seglens = [float(np.linalg.norm(b - a)) for a, b in zip(verts[:-1], verts[1:])]
        total = float(sum(seglens))
        dirs = [(b - a) / l for a, b, l in zip(verts[:-1], verts[1:], seglens)]
        inters = []
        T = np.eye(2, dtype=complex)
        for j, kind in enumerate(f.kinds):
            if kind == "reflection":
                g = f.tris[j]
                mesh_id = int(scene.tri_mesh[g])
                mat: Material = scene.meshes[mesh_id].material
                n = scene.tri_normals[g]
                if np.dot(n, dirs[j]) > 0:
                    n = -n
                T = em.reflection_matrix(dirs[j], n, mat, cfg.frequency_hz) @ T
                inters.append(Interaction("reflection", tuple(verts[j + 1]), mesh_id, int(scene.tri_local[g]), mat.name))
            else:
                edge = scene.edges[f.edges[j]]
                mat = scene.meshes[edge.mesh_id].material
                inters.append(Interaction("diffraction", tuple(verts[j + 1]), edge.mesh_id, int(f.edges[j]), mat.name))
        inters = tuple(inters)
        return PathRecord(
            interactions=inters,
            total_length=total,
            tau=total / em.C0,
            departure=dirs[0],
            arrival=dirs[-1],
            polarimetric=T,
            diffraction_loss_db=f.diffraction_loss_db,
            path_id=make_path_id(inters),
        )


def trace_paths(scene: Scene, bvh: Optional[Bvh], tx: AntennaSpec, rx_positions, cfg: LaunchConfig) -> list[list[PathRecord]]:
    """All propagation paths from ``tx`` to each receiver, sorted by delay."""
    return Tracer(scene, bvh).trace(tx.pos, rx_positions, cfg)


def refine_and_dedup(tracer: Tracer, tx_pos, rx_pos, captures: Sequence[Sequence[int]],
                     cfg: LaunchConfig) -> list[PathRecord]:
    """Exact paths for one TX/RX pair from raw capture sequences of global triangle ids."""
    plane = tracer.scene.tri_plane
    rows = []
    for seq in captures:
        seq = list(seq)
        if not 1 <= len(seq) <= 2:
            raise ValueError("capture sequences hold one or two triangles")
        rows.append([0, len(seq), plane[seq[0]], plane[seq[1]] if len(seq) == 2 else -1])
    rows = np.unique(np.array(rows, dtype=np.int64).reshape(-1, 4), axis=0)
    tracer_cfg = LaunchConfig(
        ray_count=cfg.ray_count, max_reflections=2, enable_diffraction=False,
        max_path_length=cfg.max_path_length, capture_scale=cfg.capture_scale,
        frequency_hz=cfg.frequency_hz,
    )
    found: list[_Found] = []
    tx = np.asarray(tx_pos, float)
    rxs = np.asarray(rx_pos, float)[None]
    for order in (1, 2):
        sel = rows[rows[:, 1] == order]
        if len(sel):
            tracer._reflections(tx, rxs, sel, order, found)
    out = {}
    for f in found:
        rec = tracer._record(tx, rxs[0], f, tracer_cfg)
        out.setdefault(rec.path_id, rec)
    return sorted(out.values(), key=lambda p: (p.tau, p.path_id))
