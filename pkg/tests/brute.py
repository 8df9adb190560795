"""Brute-force oracles: exhaustive all-triangle scans replacing the BVH
traversal. The closest-point scan transliterates the region classification
with identical operation order so equidistant ties (closest point on a
shared edge) break to the same lowest triangle id; the ray scan uses a
genuinely different algorithm (plane intersection + barycentric test)."""

import numpy as np


def brute_closest_point(mesh, q):
    """Exhaustive closest point over all triangles: (point, distance, id)."""
    a, b, c = mesh.triangle_corners()
    q = np.asarray(q, dtype=np.float64)
    n_tri = len(a)
    ab = b - a
    ac = c - a
    ap = q - a
    d1 = ab[:, 0] * ap[:, 0] + ab[:, 1] * ap[:, 1] + ab[:, 2] * ap[:, 2]
    d2 = ac[:, 0] * ap[:, 0] + ac[:, 1] * ap[:, 1] + ac[:, 2] * ap[:, 2]
    bp = q - b
    d3 = ab[:, 0] * bp[:, 0] + ab[:, 1] * bp[:, 1] + ab[:, 2] * bp[:, 2]
    d4 = ac[:, 0] * bp[:, 0] + ac[:, 1] * bp[:, 1] + ac[:, 2] * bp[:, 2]
    cp = q - c
    d5 = ab[:, 0] * cp[:, 0] + ab[:, 1] * cp[:, 1] + ab[:, 2] * cp[:, 2]
    d6 = ac[:, 0] * cp[:, 0] + ac[:, 1] * cp[:, 1] + ac[:, 2] * cp[:, 2]
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    def safe_div(num, den):
        return np.where(den != 0.0, num / np.where(den == 0.0, 1.0, den), 0.0)

    result = np.empty((n_tri, 3))
    remain = np.ones(n_tri, dtype=bool)

    is_a = (d1 <= 0.0) & (d2 <= 0.0)
    result[is_a] = a[is_a]
    remain &= ~is_a

    is_b = (d3 >= 0.0) & (d4 <= d3) & remain
    result[is_b] = b[is_b]
    remain &= ~is_b

    is_ab = (vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0) & remain
    v = safe_div(d1, d1 - d3)
    result[is_ab] = (a + v[:, None] * ab)[is_ab]
    remain &= ~is_ab

    is_c = (d6 >= 0.0) & (d5 <= d6) & remain
    result[is_c] = c[is_c]
    remain &= ~is_c

    is_ac = (vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0) & remain
    w = safe_div(d2, d2 - d6)
    result[is_ac] = (a + w[:, None] * ac)[is_ac]
    remain &= ~is_ac

    is_bc = (va <= 0.0) & ((d4 - d3) >= 0.0) & ((d5 - d6) >= 0.0) & remain
    w = safe_div(d4 - d3, (d4 - d3) + (d5 - d6))
    result[is_bc] = (b + w[:, None] * (c - b))[is_bc]
    remain &= ~is_bc

    denom = va + vb + vc
    v = safe_div(vb, denom)
    w = safe_div(vc, denom)
    face = a + v[:, None] * ab + w[:, None] * ac
    result[remain] = face[remain]

    e = result - q
    dist2 = e[:, 0] * e[:, 0] + e[:, 1] * e[:, 1] + e[:, 2] * e[:, 2]
    tri = int(dist2.argmin())  # first minimum = lowest triangle id
    point = result[tri]
    return point, float(np.linalg.norm(point - q)), tri


def brute_vector_distance(mesh, q):
    point, _, _ = brute_closest_point(mesh, q)
    return point - np.asarray(q, dtype=np.float64)


def brute_ray_first_hit(mesh, origin, direction, t_max):
    """Exhaustive first hit via plane intersection + inclusive barycentric
    containment; returns (t, triangle id) or None."""
    a, b, c = mesh.triangle_corners()
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    n = np.cross(b - a, c - a)
    dn = n @ d
    with np.errstate(divide="ignore", invalid="ignore"):
        t = ((a - o) * n).sum(axis=1) / dn
    hit_point = o + t[:, None] * d
    v0 = b - a
    v1 = c - a
    v2 = hit_point - a
    d00 = (v0 * v0).sum(axis=1)
    d01 = (v0 * v1).sum(axis=1)
    d11 = (v1 * v1).sum(axis=1)
    d20 = (v2 * v0).sum(axis=1)
    d21 = (v2 * v1).sum(axis=1)
    denom = d00 * d11 - d01 * d01
    with np.errstate(divide="ignore", invalid="ignore"):
        bv = (d11 * d20 - d01 * d21) / denom
        bw = (d00 * d21 - d01 * d20) / denom
    ok = (
        (dn != 0.0)
        & np.isfinite(t)
        & (t >= 0.0)
        & (t <= t_max)
        & (bv >= 0.0)
        & (bw >= 0.0)
        & (bv + bw <= 1.0)
        & (denom != 0.0)
    )
    if not ok.any():
        return None
    ts = np.where(ok, t, np.inf)
    best = float(ts.min())
    tri = int(np.flatnonzero(ts == best)[0])  # lowest id among equal-t hits
    return best, tri


def cube_sdf(q, half=0.5, center=(0.0, 0.0, 0.0)):
    """Analytic signed distance of an axis-aligned cube."""
    p = np.abs(np.asarray(q, dtype=np.float64) - np.asarray(center)) - half
    outside = np.linalg.norm(np.maximum(p, 0.0))
    inside = min(p.max(), 0.0)
    return outside + inside


def sphere_sdf(q, radius=1.0, center=(0.0, 0.0, 0.0)):
    return float(np.linalg.norm(np.asarray(q, dtype=np.float64) - np.asarray(center)) - radius)
