"""Room geometry: surfaces, obstacles, transceiver nodes, tessellation and
line-of-sight queries.

Coordinates are meters in a room frame whose origin is one floor corner;
``z`` points up.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, InvalidGeometryError
from .propagation import AntennaSpec

# Relative slack used when deciding whether a surface lies inside the room.
_BOUNDS_TOL = 1e-9
# Chord parameters closer than this to either endpoint do not count as hits.
_T_EPS = 1e-9


class Vec3(NamedTuple):
    x: float
    y: float
    z: float


def _vec(value: Iterable[float]) -> Vec3:
    x, y, z = (float(c) for c in value)
    v = Vec3(x, y, z)
    if not all(math.isfinite(c) for c in v):
        raise InvalidGeometryError(f"non-finite coordinate {v}")
    return v


@dataclass(frozen=True)
class Surface:
    """A planar parallelogram ``corner + a*edge_u + b*edge_v``, a, b in [0, 1].

    ``segment_size``, when set, caps the tessellation size used for this
    surface (useful for surfaces very close to a transceiver).
    """

    id: str
    corner: Vec3
    edge_u: Vec3
    edge_v: Vec3
    material: str
    name: str = ""
    segment_size: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "corner", _vec(self.corner))
        object.__setattr__(self, "edge_u", _vec(self.edge_u))
        object.__setattr__(self, "edge_v", _vec(self.edge_v))
        if not self.name:
            object.__setattr__(self, "name", self.id)
        if self.area <= 0.0:
            raise InvalidGeometryError(f"surface {self.id!r} is degenerate (zero area)")
        if self.segment_size is not None and self.segment_size <= 0:
            raise InvalidGeometryError(f"surface {self.id!r}: segment_size must be > 0")

    @property
    def area(self) -> float:
        return float(np.linalg.norm(np.cross(self.edge_u, self.edge_v)))

    @property
    def normal(self) -> np.ndarray:
        n = np.cross(self.edge_u, self.edge_v)
        return n / np.linalg.norm(n)

    def corners(self) -> np.ndarray:
        c, u, v = (np.asarray(a) for a in (self.corner, self.edge_u, self.edge_v))
        return np.array([c, c + u, c + v, c + u + v])


@dataclass(frozen=True)
class Obstacle:
    """Opaque axis-aligned box."""

    min_corner: Vec3
    max_corner: Vec3
    label: str = ""

    def __post_init__(self):
        lo, hi = _vec(self.min_corner), _vec(self.max_corner)
        object.__setattr__(self, "min_corner", lo)
        object.__setattr__(self, "max_corner", hi)
        if not all(a < b for a, b in zip(lo, hi)):
            raise InvalidGeometryError(f"obstacle {self.label!r}: min must be < max componentwise")


@dataclass(frozen=True)
class Node:
    name: str
    position: Vec3
    antenna: AntennaSpec
    role: str = "receiver"

    def __post_init__(self):
        object.__setattr__(self, "position", _vec(self.position))
        if self.role not in ("transmitter", "receiver"):
            raise ConfigError(f"node {self.name!r}: role must be transmitter or receiver")

    def moved(self, position: Sequence[float]) -> "Node":
        return Node(self.name, _vec(position), self.antenna, self.role)


@dataclass(frozen=True)
class Segment:
    center: Vec3
    normal: Vec3
    area: float
    surface_id: str


@dataclass(frozen=True)
class SegmentArrays:
    """Struct-of-arrays form of a whole-scene tessellation.

    Segments are grouped by surface in scene order, and within a surface in
    row-major (u, then v) order.
    """

    centers: np.ndarray       # (N, 3)
    normals: np.ndarray       # (N, 3)
    areas: np.ndarray         # (N,)
    surface_index: np.ndarray  # (N,) index into Scene.surfaces
    segment_size: float

    def __len__(self) -> int:
        return len(self.areas)


@dataclass(frozen=True, eq=False)
class Scene:
    room_dims: Vec3 = Vec3(6.0, 4.0, 3.0)
    surfaces: tuple[Surface, ...] = ()
    obstacles: tuple[Obstacle, ...] = ()
    nodes: tuple[Node, ...] = ()
    name: str = ""

    def __post_init__(self):
        dims = _vec(self.room_dims)
        object.__setattr__(self, "room_dims", dims)
        object.__setattr__(self, "surfaces", tuple(self.surfaces))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "nodes", tuple(self.nodes))
        if min(dims) <= 0:
            raise InvalidGeometryError(f"room dimensions must be positive, got {dims}")
        ids = [s.id for s in self.surfaces]
        if len(set(ids)) != len(ids):
            raise InvalidGeometryError("surface ids must be unique")
        for s in self.surfaces:
            if not self.contains(s.corners()):
                raise InvalidGeometryError(f"surface {s.id!r} extends outside the room")
        for ob in self.obstacles:
            if not self.contains(np.array([ob.min_corner, ob.max_corner])):
                raise InvalidGeometryError(f"obstacle {ob.label!r} extends outside the room")
        for node in self.nodes:
            if not self.contains(np.array([node.position])):
                raise InvalidGeometryError(f"node {node.name!r} lies outside the room")

    def contains(self, points: np.ndarray) -> bool:
        pts = np.atleast_2d(points)
        tol = _BOUNDS_TOL * max(self.room_dims)
        return bool(np.all(pts >= -tol) and np.all(pts <= np.asarray(self.room_dims) + tol))

    def node(self, name: str) -> Node:
        for n in self.nodes:
            if n.name == name:
                return n
        raise KeyError(f"scene has no node named {name!r}")

    def surface(self, surface_id: str) -> Surface:
        return self.surfaces[self.surface_ids.index(surface_id)]

    @cached_property
    def surface_ids(self) -> list[str]:
        return [s.id for s in self.surfaces]

    @cached_property
    def _blockers(self) -> "_Blockers":
        return _Blockers.build(self)

    def segments(self, segment_size: float, refine: bool = True) -> SegmentArrays:
        cache = self.__dict__.setdefault("_segment_cache", {})
        key = (float(segment_size), refine)
        if key not in cache:
            cache[key] = tessellate_scene(self, key[0], refine)
        return cache[key]


# --------------------------------------------------------------------------
# tessellation

def _edge_counts(surface: Surface, segment_size: float) -> tuple[int, int, float, float]:
    lu = float(np.linalg.norm(surface.edge_u))
    lv = float(np.linalg.norm(surface.edge_v))
    # guard against 6/0.05 -> 120.00000000000001 style round-up
    nu = max(1, math.ceil(lu / segment_size - 1e-9))
    nv = max(1, math.ceil(lv / segment_size - 1e-9))
    return nu, nv, lu, lv


def _grid_params(length: float, count: int, size: float) -> tuple[np.ndarray, np.ndarray]:
    """Fractional centers and widths of ``count`` cells of width ``size``
    along an edge of ``length``; the last cell is shrunk to fit."""
    lo = np.arange(count) * size
    hi = np.minimum(lo + size, length)
    hi[-1] = length
    return (lo + hi) / (2 * length), (hi - lo) / length


def _tessellate_arrays(surface: Surface, segment_size: float):
    if segment_size <= 0:
        raise InvalidGeometryError("segment_size must be > 0")
    nu, nv, lu, lv = _edge_counts(surface, segment_size)
    cu, wu = _grid_params(lu, nu, segment_size)
    cv, wv = _grid_params(lv, nv, segment_size)
    a, b = np.meshgrid(cu, cv, indexing="ij")
    c = np.asarray(surface.corner)
    centers = c + a.reshape(-1, 1) * np.asarray(surface.edge_u) + b.reshape(-1, 1) * np.asarray(surface.edge_v)
    areas = np.outer(wu, wv).reshape(-1) * surface.area
    return centers, areas


def tessellate(surface: Surface, segment_size: float) -> list[Segment]:
    """Split ``surface`` into a ceil(|u|/s) x ceil(|v|/s) grid of segments.

    Edge cells are shrunk rather than dropped, so segment areas sum to the
    surface area.
    """
    centers, areas = _tessellate_arrays(surface, segment_size)
    n = Vec3(*surface.normal)
    return [Segment(Vec3(*p), n, float(a), surface.id) for p, a in zip(centers, areas)]


def tessellate_scene(scene: Scene, segment_size: float, refine: bool = True) -> SegmentArrays:
    """Tessellate every surface. With ``refine``, a surface's own
    ``segment_size`` is used where it is finer than the global one."""
    centers, normals, areas, index = [], [], [], []
    for i, s in enumerate(scene.surfaces):
        size = segment_size
        if refine and s.segment_size is not None:
            size = min(size, s.segment_size)
        c, a = _tessellate_arrays(s, size)
        centers.append(c)
        areas.append(a)
        normals.append(np.broadcast_to(s.normal, c.shape))
        index.append(np.full(len(a), i, dtype=np.int64))
    if not centers:
        empty = np.zeros((0, 3))
        return SegmentArrays(empty, empty, np.zeros(0), np.zeros(0, dtype=np.int64), segment_size)
    return SegmentArrays(
        np.concatenate(centers), np.ascontiguousarray(np.concatenate(normals)),
        np.concatenate(areas), np.concatenate(index), segment_size,
    )


# --------------------------------------------------------------------------
# occlusion

@dataclass(frozen=True)
class _Blockers:
    corner: np.ndarray   # (M, 3)
    normal: np.ndarray   # (M, 3) unnormalized u x v
    dual_u: np.ndarray   # (M, 3) so that (p - corner) . dual_u = a
    dual_v: np.ndarray
    box_lo: np.ndarray   # (K, 3)
    box_hi: np.ndarray

    @classmethod
    def build(cls, scene: Scene) -> "_Blockers":
        if scene.surfaces:
            c = np.array([s.corner for s in scene.surfaces], dtype=float)
            u = np.array([s.edge_u for s in scene.surfaces], dtype=float)
            v = np.array([s.edge_v for s in scene.surfaces], dtype=float)
            n = np.cross(u, v)
            nn = np.einsum("ij,ij->i", n, n)[:, None]
            dual_u = np.cross(v, n) / nn
            dual_v = np.cross(n, u) / nn
        else:
            c = n = dual_u = dual_v = np.zeros((0, 3))
        lo = np.array([o.min_corner for o in scene.obstacles], dtype=float).reshape(-1, 3)
        hi = np.array([o.max_corner for o in scene.obstacles], dtype=float).reshape(-1, 3)
        return cls(c, n, dual_u, dual_v, lo, hi)


def occluded_mask(starts: np.ndarray, ends: np.ndarray, scene: Scene,
                  ignore: np.ndarray | int | None = None, chunk: int = 65536) -> np.ndarray:
    """Vectorized :func:`is_occluded` over rays ``starts[i] -> ends[i]``.

    ``ignore`` is a surface index for all rays, one index per ray (shape
    ``(N,)``) or several per ray (shape ``(N, k)``); -1 means none.
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    ends = np.atleast_2d(np.asarray(ends, dtype=float))
    starts, ends = np.broadcast_arrays(starts, ends)
    n_rays = len(starts)
    ign = np.asarray(-1 if ignore is None else ignore, dtype=np.int64)
    if ign.ndim == 0:
        ign = ign.reshape(1, 1)
    elif ign.ndim == 1:
        ign = ign[:, None]
    ign = np.broadcast_to(ign, (n_rays, ign.shape[1]))
    out = np.zeros(n_rays, dtype=bool)
    bl = scene._blockers
    for lo in range(0, n_rays, chunk):
        hi = min(lo + chunk, n_rays)
        out[lo:hi] = _occluded_chunk(starts[lo:hi], ends[lo:hi], bl, ign[lo:hi])
    return out


def _occluded_chunk(a: np.ndarray, b: np.ndarray, bl: _Blockers, ign: np.ndarray) -> np.ndarray:
    d = b - a
    hit = np.zeros(len(a), dtype=bool)
    m = len(bl.corner)
    if m:
        denom = d @ bl.normal.T                                  # (N, M)
        offset = np.einsum("ij,ij->i", bl.corner, bl.normal)      # (M,)
        num = offset[None, :] - a @ bl.normal.T                  # (N, M)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = num / denom
        valid = (denom != 0) & (t > _T_EPS) & (t < 1 - _T_EPS)
        for k in range(m):
            rows = np.nonzero(valid[:, k])[0]
            if rows.size == 0:
                continue
            p = a[rows] + t[rows, k, None] * d[rows] - bl.corner[k]
            alpha = p @ bl.dual_u[k]
            beta = p @ bl.dual_v[k]
            inside = (alpha >= 0) & (alpha <= 1) & (beta >= 0) & (beta <= 1)
            inside &= ~np.any(ign[rows] == k, axis=1)
            hit[rows[inside]] = True
    if len(bl.box_lo):
        hit |= _segment_hits_boxes(a, d, bl.box_lo, bl.box_hi)
    return hit


def _segment_hits_boxes(a: np.ndarray, d: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Slab test against open boxes: tangent contact does not count."""
    a = a[:, None, :]
    d = d[:, None, :]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        t1 = (lo[None] - a) / d
        t2 = (hi[None] - a) / d
    parallel = d == 0
    inside_slab = (a > lo[None]) & (a < hi[None])
    tmin = np.where(parallel, np.where(inside_slab, -np.inf, np.inf), np.minimum(t1, t2))
    tmax = np.where(parallel, np.where(inside_slab, np.inf, -np.inf), np.maximum(t1, t2))
    t_enter = np.maximum(tmin.max(axis=2), 0.0)
    t_exit = np.minimum(tmax.min(axis=2), 1.0)
    return np.any(t_enter < t_exit, axis=1)


def is_occluded(a: Sequence[float], b: Sequence[float], scene: Scene,
                ignore: Iterable[str] = ()) -> bool:
    """True iff the open chord (a, b) crosses an obstacle box or a surface
    whose id is not in ``ignore``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.array_equal(a, b):
        raise InvalidGeometryError("is_occluded needs two distinct points")
    idx = [scene.surface_ids.index(s) for s in ignore if s in scene.surface_ids]
    ign = np.array([idx or [-1]], dtype=np.int64)
    return bool(occluded_mask(a[None], b[None], scene, ign)[0])


def build_office_scene(scenario_preset: str = "ieee") -> Scene:
    """The furnished 6 x 4 x 3 m office for a named preset ("ieee" or "thz")."""
    from .config import PRESETS, load_setup

    if scenario_preset not in PRESETS:
        raise ConfigError(f"unknown preset {scenario_preset!r} (known: {', '.join(PRESETS)})")
    return load_setup(scenario_preset).scene
