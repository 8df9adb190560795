"""Immutable BVH over one mesh: closest point, vector distance, signed
distance, ray first hit, and containment queries.

The tree is a deterministic median split over the longest box axis with a
small leaf size, so identical meshes always produce identical indexes. All
queries are read-only and safe to run concurrently from any number of
threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import EmptyMeshError
from .mesh import TriangleMesh

DEFAULT_MAX_LEAF = 4

#: Fraction of the mesh x-extent used as the on-boundary tolerance.
SURF_EPS_FRACTION = 1e-7

#: Fixed crossing-parity ray directions; a point is interior when at least
#: PARITY_MAJORITY of them report an odd crossing count. Regenerate with
#: default_rng(0x9E3779B97F4A7C15).standard_normal((5, 3)), rows normalized.
PARITY_DIRECTIONS = np.array(
    [
        (0.11592723202937774, 0.5484298470980665, 0.8281217179171176),
        (-0.9153368305115283, 0.3557806277349103, 0.1886229880944077),
        (0.2597615196799334, -0.5621255308419439, 0.7851998729427012),
        (0.9821195065796597, 0.04335078135983358, -0.18319930281313157),
        (-0.5745813046972729, -0.36054800119703273, 0.7347526543845924),
    ]
)
PARITY_DIRECTIONS.flags.writeable = False
PARITY_MAJORITY = 3

_UNIT_TOL = 1e-9


@dataclass(frozen=True)
class ClosestPointResult:
    point: np.ndarray
    distance: float
    triangle_id: int


@dataclass(frozen=True)
class RayHit:
    t: float
    point: np.ndarray
    triangle_id: int


class SpatialIndex:
    """Acceleration structure answering spatial queries against one mesh.

    Build through build_index(); instances are immutable afterwards.
    """

    def __init__(self, mesh: TriangleMesh, max_leaf_size: int = DEFAULT_MAX_LEAF):
        if mesh.n_triangles == 0:
            raise EmptyMeshError("cannot index a mesh with no triangles")
        if max_leaf_size < 1:
            raise ValueError("max_leaf_size must be >= 1")
        self.mesh = mesh
        self.max_leaf_size = int(max_leaf_size)
        ta, tb, tc = mesh.triangle_corners()
        (
            self._bmin,
            self._bmax,
            self._left,
            self._right,
            self._start,
            self._count,
            self._tri_ids,
        ) = _build_tree(ta, tb, tc, self.max_leaf_size)
        # corner data in leaf-slot order for cache-friendly leaf scans
        self._ta = np.ascontiguousarray(ta[self._tri_ids])
        self._tb = np.ascontiguousarray(tb[self._tri_ids])
        self._tc = np.ascontiguousarray(tc[self._tri_ids])
        lo, hi = mesh.bbox
        extent = hi[0] - lo[0]
        if extent <= 0.0:  # degenerate x-extent: fall back to the bbox diagonal
            extent = float(np.linalg.norm(hi - lo))
        self.surf_eps = float(SURF_EPS_FRACTION * extent)

    @property
    def n_nodes(self) -> int:
        return len(self._count)

    @property
    def n_leaf_triangles(self) -> int:
        return int(self._count.sum())

    # -- queries ----------------------------------------------------------

    def closest_point_batch(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Globally nearest surface points: (surface (N,3), distance (N,), tri id (N,))."""
        q = _as_points(points)
        out_p = np.empty_like(q)
        out_d2 = np.empty(len(q))
        out_tri = np.empty(len(q), dtype=np.int64)
        kernels.closest_point_many(*self._tree_args(), q, out_p, out_d2, out_tri)
        dist = np.linalg.norm(out_p - q, axis=1)
        return out_p, dist, out_tri

    def closest_point(self, x: np.ndarray) -> ClosestPointResult:
        p, d, tri = self.closest_point_batch(np.asarray(x, dtype=np.float64).reshape(1, 3))
        return ClosestPointResult(point=p[0], distance=float(d[0]), triangle_id=int(tri[0]))

    def vector_distance_batch(self, points: np.ndarray) -> np.ndarray:
        """Vector from each query point to its closest surface point."""
        q = _as_points(points)
        p, _, _ = self.closest_point_batch(q)
        return p - q

    def vector_distance(self, x: np.ndarray) -> np.ndarray:
        return self.vector_distance_batch(np.asarray(x, dtype=np.float64).reshape(1, 3))[0]

    def parity_votes(self, points: np.ndarray) -> np.ndarray:
        """Full per-point count of odd-parity directions (0..5)."""
        q = _as_points(points)
        votes = np.empty(len(q), dtype=np.int64)
        kernels.parity_votes_many(*self._tree_args(), q, PARITY_DIRECTIONS, votes)
        return votes

    def parity_interior(self, points: np.ndarray) -> np.ndarray:
        """Majority-vote interior flags; equivalent to parity_votes >= majority."""
        q = _as_points(points)
        flags = np.empty(len(q), dtype=np.uint8)
        kernels.parity_majority_many(
            *self._tree_args(), q, PARITY_DIRECTIONS, PARITY_MAJORITY, flags
        )
        return flags.astype(bool)

    def contains_batch(self, points: np.ndarray, surf_eps: float | None = None) -> np.ndarray:
        """True where a point is on the boundary (within surf_eps) or interior
        by majority crossing parity."""
        if surf_eps is None:
            surf_eps = self.surf_eps
        q = _as_points(points)
        _, dist, _ = self.closest_point_batch(q)
        on_boundary = dist <= surf_eps
        return on_boundary | self.parity_interior(q)

    def contains(self, x: np.ndarray, surf_eps: float | None = None) -> bool:
        return bool(self.contains_batch(np.asarray(x, dtype=np.float64).reshape(1, 3), surf_eps)[0])

    def signed_distance_batch(self, points: np.ndarray) -> np.ndarray:
        """Distance to the surface, negated for interior points."""
        q = _as_points(points)
        _, dist, _ = self.closest_point_batch(q)
        sign = np.where(self.parity_interior(q), -1.0, 1.0)
        # zero on the surface regardless of parity
        return np.where(dist == 0.0, 0.0, sign * dist)

    def signed_distance(self, x: np.ndarray) -> float:
        return float(self.signed_distance_batch(np.asarray(x, dtype=np.float64).reshape(1, 3))[0])

    def ray_first_hit_batch(
        self, origins: np.ndarray, directions: np.ndarray, t_max: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """First hits of unit-direction rays: (t (N,), tri id (N,)), id -1 on miss."""
        o = _as_points(origins)
        d = _as_points(directions)
        tm = np.ascontiguousarray(np.asarray(t_max, dtype=np.float64).reshape(-1))
        if not (len(o) == len(d) == len(tm)):
            raise ValueError("origins, directions, t_max length mismatch")
        norms = np.linalg.norm(d, axis=1)
        if np.abs(norms - 1.0).max(initial=0.0) > _UNIT_TOL:
            raise ValueError("ray directions must be unit vectors")
        if (tm < 0).any():
            raise ValueError("t_max must be non-negative")
        out_t = np.empty(len(o))
        out_tri = np.empty(len(o), dtype=np.int64)
        kernels.ray_first_hit_many(*self._tree_args(), o, d, tm, out_t, out_tri)
        return out_t, out_tri

    def ray_first_hit(self, origin: np.ndarray, direction: np.ndarray, t_max: float) -> RayHit | None:
        origin = np.asarray(origin, dtype=np.float64).reshape(1, 3)
        direction = np.asarray(direction, dtype=np.float64).reshape(1, 3)
        t, tri = self.ray_first_hit_batch(origin, direction, np.array([float(t_max)]))
        if tri[0] < 0:
            return None
        return RayHit(
            t=float(t[0]),
            point=origin[0] + t[0] * direction[0],
            triangle_id=int(tri[0]),
        )

    def _tree_args(self):
        return (
            self._bmin,
            self._bmax,
            self._left,
            self._right,
            self._start,
            self._count,
            self._tri_ids,
            self._ta,
            self._tb,
            self._tc,
        )


def build_index(mesh: TriangleMesh, max_leaf_size: int = DEFAULT_MAX_LEAF) -> SpatialIndex:
    return SpatialIndex(mesh, max_leaf_size=max_leaf_size)


def _as_points(points: np.ndarray) -> np.ndarray:
    q = np.ascontiguousarray(np.asarray(points, dtype=np.float64))
    if q.ndim != 2 or q.shape[1] != 3:
        raise ValueError(f"expected an (N, 3) array, got shape {q.shape}")
    if q.size and not np.isfinite(q).all():
        raise ValueError("query points must be finite")
    return q


def _build_tree(ta, tb, tc, max_leaf_size):
    """Median split over the longest box axis; stable ordering throughout."""
    n_tri = len(ta)
    tri_min = np.minimum(np.minimum(ta, tb), tc)
    tri_max = np.maximum(np.maximum(ta, tb), tc)
    centroids = (ta + tb + tc) / 3.0

    bmin: list[np.ndarray] = []
    bmax: list[np.ndarray] = []
    left: list[int] = []
    right: list[int] = []
    start: list[int] = []
    count: list[int] = []
    tri_order = np.arange(n_tri, dtype=np.int64)

    def emit(lo: int, hi: int) -> int:
        node = len(bmin)
        sub = tri_order[lo:hi]
        bmin.append(tri_min[sub].min(axis=0))
        bmax.append(tri_max[sub].max(axis=0))
        left.append(-1)
        right.append(-1)
        start.append(lo)
        count.append(0)
        n = hi - lo
        if n <= max_leaf_size:
            count[node] = n
            return node
        ext = bmax[node] - bmin[node]
        axis = int(np.argmax(ext))
        keys = centroids[sub, axis]
        if keys.max() == keys.min():
            # centroids coincide along every informative axis: try the widest
            # centroid spread, give up to a leaf if there is none
            spreads = centroids[sub].max(axis=0) - centroids[sub].min(axis=0)
            axis = int(np.argmax(spreads))
            keys = centroids[sub, axis]
            if keys.max() == keys.min():
                count[node] = n
                return node
        order = np.argsort(keys, kind="stable")
        tri_order[lo:hi] = sub[order]
        mid = lo + n // 2
        left[node] = emit(lo, mid)
        right[node] = emit(mid, hi)
        return node

    import sys

    depth_budget = max(2 * int(np.ceil(np.log2(max(n_tri, 2)))) + 64, 128)
    old_limit = sys.getrecursionlimit()
    if old_limit < depth_budget:
        sys.setrecursionlimit(depth_budget)
    try:
        emit(0, n_tri)
    finally:
        if old_limit < depth_budget:
            sys.setrecursionlimit(old_limit)

    return (
        np.ascontiguousarray(np.array(bmin)),
        np.ascontiguousarray(np.array(bmax)),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(start, dtype=np.int64),
        np.array(count, dtype=np.int64),
        tri_order,
    )
