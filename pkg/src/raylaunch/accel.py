"""BVH construction and exact ray/scene intersection.

The hot loops are numba kernels over flat arrays so they can be shared by the
tracer. Intersection uses the watertight ray/triangle test (Woop, Benthin and
Wald 2013) in double precision; ties at equal ``t`` go to the lower global
triangle index, which gives every shared edge a single owner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numba as nb
import numpy as np

from .geom import Scene

LEAF_SIZE = 4
STACK_SIZE = 128
EPS_T = 1e-4


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    dir: np.ndarray
    t_min: float = 0.0
    t_max: float = math.inf

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=float)
        d = np.asarray(self.dir, dtype=float)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValueError("ray direction must be unit length")
        if not (0.0 <= self.t_min < self.t_max):
            raise ValueError("need 0 <= t_min < t_max")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "dir", d)


@dataclass(frozen=True)
class Hit:
    t: float
    point: np.ndarray
    normal: np.ndarray
    mesh_id: int
    triangle_id: int


@dataclass(frozen=True, eq=False)
class Bvh:
    node_lo: np.ndarray
    node_hi: np.ndarray
    node_left: np.ndarray
    node_start: np.ndarray
    node_count: np.ndarray
    prim_index: np.ndarray
    tris: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.node_count)

    def arrays(self):
        return (self.node_lo, self.node_hi, self.node_left, self.node_start,
                self.node_count, self.prim_index, self.tris)


@nb.njit(cache=True)
def _build(tri_lo, tri_hi, centroids, leaf_size):
    n = len(centroids)
    max_nodes = 2 * n + 1
    node_lo = np.empty((max_nodes, 3))
    node_hi = np.empty((max_nodes, 3))
    node_left = np.full(max_nodes, -1, np.int64)
    node_start = np.zeros(max_nodes, np.int64)
    node_count = np.zeros(max_nodes, np.int64)
    order = np.arange(n)
    stack_node = np.empty(max_nodes, np.int64)
    stack_start = np.empty(max_nodes, np.int64)
    stack_end = np.empty(max_nodes, np.int64)
    sp = 0
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = n
    sp = 1
    n_nodes = 1
    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        s = stack_start[sp]
        e = stack_end[sp]
        lo = np.full(3, np.inf)
        hi = np.full(3, -np.inf)
        clo = np.full(3, np.inf)
        chi = np.full(3, -np.inf)
        for i in range(s, e):
            p = order[i]
            for k in range(3):
                lo[k] = min(lo[k], tri_lo[p, k])
                hi[k] = max(hi[k], tri_hi[p, k])
                clo[k] = min(clo[k], centroids[p, k])
                chi[k] = max(chi[k], centroids[p, k])
        for k in range(3):
            pad = 1e-9 * max(1.0, abs(lo[k]), abs(hi[k]))
            node_lo[node, k] = lo[k] - pad
            node_hi[node, k] = hi[k] + pad
        axis = 0
        ext = chi[0] - clo[0]
        for k in range(1, 3):
            if chi[k] - clo[k] > ext:
                ext = chi[k] - clo[k]
                axis = k
        if e - s <= leaf_size or ext <= 0.0:
            node_start[node] = s
            node_count[node] = e - s
            continue
        # median split; stable sort keeps the build deterministic
        seg = order[s:e].copy()
        keys = np.empty(e - s)
        for i in range(e - s):
            keys[i] = centroids[seg[i], axis]
        perm = np.argsort(keys, kind="mergesort")
        for i in range(e - s):
            order[s + i] = seg[perm[i]]
        mid = (s + e) // 2
        left = n_nodes
        n_nodes += 2
        node_left[node] = left
        stack_node[sp] = left + 1
        stack_start[sp] = mid
        stack_end[sp] = e
        sp += 1
        stack_node[sp] = left
        stack_start[sp] = s
        stack_end[sp] = mid
        sp += 1
    return (node_lo[:n_nodes].copy(), node_hi[:n_nodes].copy(), node_left[:n_nodes].copy(),
            node_start[:n_nodes].copy(), node_count[:n_nodes].copy(), order)


def build_bvh(scene_or_tris) -> Bvh:
    """Median-split BVH over the scene triangles (or a raw ``(T, 3, 3)`` array)."""
    tris = scene_or_tris.tris if isinstance(scene_or_tris, Scene) else np.asarray(scene_or_tris, float)
    if tris.ndim != 3 or len(tris) == 0:
        raise ValueError("cannot build a BVH over an empty scene")
    tris = np.ascontiguousarray(tris, dtype=np.float64)
    lo, hi, left, start, count, order = _build(
        tris.min(axis=1), tris.max(axis=1), tris.mean(axis=1), LEAF_SIZE
    )
    return Bvh(lo, hi, left, start, count, order, tris)


@nb.njit(cache=True, inline="always")
def _box_entry(lo, hi, node, o, inv, tmin, tmax):
    t0 = tmin
    t1 = tmax
    for k in range(3):
        a = (lo[node, k] - o[k]) * inv[k]
        b = (hi[node, k] - o[k]) * inv[k]
        if a != a:  # 0 * inf: origin on a slab plane of a flat box
            a = -np.inf
        if b != b:
            b = np.inf
        if a > b:
            a, b = b, a
        if a > t0:
            t0 = a
        if b < t1:
            t1 = b
        if t0 > t1:
            return np.inf
    return t0


@nb.njit(cache=True)
def _traverse(o, d, tmin, tmax, node_lo, node_hi, node_left, node_start, node_count, prim, tris):
    """Nearest hit along o + t d, t in [tmin, tmax]. Returns (t, global triangle or -1)."""
    inv = np.empty(3)
    for k in range(3):
        inv[k] = 1.0 / d[k] if d[k] != 0.0 else np.inf
    ad0, ad1, ad2 = abs(d[0]), abs(d[1]), abs(d[2])
    kz = 0
    if ad1 > ad0 and ad1 >= ad2:
        kz = 1
    elif ad2 > ad0 and ad2 > ad1:
        kz = 2
    kx = (kz + 1) % 3
    ky = (kx + 1) % 3
    if d[kz] < 0.0:
        kx, ky = ky, kx
    sx = d[kx] / d[kz]
    sy = d[ky] / d[kz]
    sz = 1.0 / d[kz]

    best_t = tmax
    best = -1
    stack = np.empty(STACK_SIZE, np.int64)
    sp = 0
    if _box_entry(node_lo, node_hi, 0, o, inv, tmin, best_t) == np.inf:
        return best_t, best
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if node_count[node] > 0:
            s = node_start[node]
            for i in range(s, s + node_count[node]):
                p = prim[i]
                ax = tris[p, 0, kx] - o[kx]
                ay = tris[p, 0, ky] - o[ky]
                az = tris[p, 0, kz] - o[kz]
                bx = tris[p, 1, kx] - o[kx]
                by = tris[p, 1, ky] - o[ky]
                bz = tris[p, 1, kz] - o[kz]
                cx = tris[p, 2, kx] - o[kx]
                cy = tris[p, 2, ky] - o[ky]
                cz = tris[p, 2, kz] - o[kz]
                ax -= sx * az
                ay -= sy * az
                bx -= sx * bz
                by -= sy * bz
                cx -= sx * cz
                cy -= sy * cz
                u = cx * by - cy * bx
                v = ax * cy - ay * cx
                w = bx * ay - by * ax
                if (u < 0.0 or v < 0.0 or w < 0.0) and (u > 0.0 or v > 0.0 or w > 0.0):
                    continue
                det = u + v + w
                if det == 0.0:
                    continue
                t = (u * sz * az + v * sz * bz + w * sz * cz) / det
                if t < tmin or t > best_t:
                    continue
                if t == best_t and best >= 0 and p > best:
                    continue
                best_t = t
                best = p
        else:
            left = node_left[node]
            tl = _box_entry(node_lo, node_hi, left, o, inv, tmin, best_t)
            tr = _box_entry(node_lo, node_hi, left + 1, o, inv, tmin, best_t)
            if tl <= tr:
                if tr != np.inf:
                    stack[sp] = left + 1
                    sp += 1
                if tl != np.inf:
                    stack[sp] = left
                    sp += 1
            else:
                if tl != np.inf:
                    stack[sp] = left
                    sp += 1
                if tr != np.inf:
                    stack[sp] = left + 1
                    sp += 1
    return best_t, best


@nb.njit(cache=True, parallel=True)
def _nearest_batch(origins, dirs, tmins, tmaxs, node_lo, node_hi, node_left, node_start,
                   node_count, prim, tris):
    n = len(origins)
    out_t = np.full(n, np.inf)
    out_p = np.full(n, -1, np.int64)
    for i in nb.prange(n):
        t, p = _traverse(origins[i], dirs[i], tmins[i], tmaxs[i], node_lo, node_hi, node_left,
                         node_start, node_count, prim, tris)
        if p >= 0:
            out_t[i] = t
            out_p[i] = p
    return out_t, out_p


def nearest_hits(bvh: Bvh, origins, dirs, t_min=0.0, t_max=np.inf):
    """Batch nearest-hit query. Returns ``(t, tri)``; ``tri == -1`` and ``t == inf`` on a miss."""
    origins = np.ascontiguousarray(np.atleast_2d(origins), dtype=np.float64)
    dirs = np.ascontiguousarray(np.atleast_2d(dirs), dtype=np.float64)
    n = len(origins)
    tmins = np.ascontiguousarray(np.broadcast_to(np.asarray(t_min, float), (n,)))
    tmaxs = np.ascontiguousarray(np.broadcast_to(np.asarray(t_max, float), (n,)))
    if n == 0:
        return np.empty(0), np.empty(0, np.int64)
    return _nearest_batch(origins, dirs, tmins, tmaxs, *bvh.arrays())


def intersect_nearest(ray: Ray, bvh: Bvh, scene: Scene) -> Optional[Hit]:
    t, p = nearest_hits(bvh, ray.origin[None], ray.dir[None], ray.t_min, ray.t_max)
    if p[0] < 0:
        return None
    tri = int(p[0])
    n = scene.tri_normals[tri]
    if np.dot(n, ray.dir) > 0:
        n = -n
    return Hit(
        t=float(t[0]),
        point=ray.origin + t[0] * ray.dir,
        normal=n,
        mesh_id=int(scene.tri_mesh[tri]),
        triangle_id=int(scene.tri_local[tri]),
    )


def intersect_sphere(ray: Ray, center, radius: float) -> Optional[float]:
    """Smallest t > 0 where the ray enters the sphere (tangency counts), else None."""
    if radius <= 0:
        raise ValueError("sphere radius must be positive")
    oc = ray.origin - np.asarray(center, dtype=float)
    b = float(np.dot(oc, ray.dir))
    c = float(np.dot(oc, oc)) - radius * radius
    disc = b * b - c
    if disc < 0 or b >= 0:
        # no real roots, or the sphere is behind (or around) the origin
        return None
    q = -b + math.sqrt(disc)
    t = c / q
    return t if t > 0 else None
