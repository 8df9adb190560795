"""Numba kernels for BVH traversal: closest point, ray casting, crossing parity.

All kernels are serial per call and release the GIL, so batch queries from
different worker threads run concurrently. Triangle corner arrays arrive
pre-permuted into leaf order (slot k holds triangle tri_ids[k]) for cache
locality. Tie-breaking is by lowest original triangle id everywhere, which
keeps results independent of traversal order.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# enough for a balanced median-split tree over ~2^60 triangles
_STACK_SIZE = 128


@njit(cache=True, nogil=True, inline="always")
def _box_dist2(bmin, bmax, node, px, py, pz):
    d = 0.0
    v = bmin[node, 0] - px
    if v > 0.0:
        d += v * v
    v = px - bmax[node, 0]
    if v > 0.0:
        d += v * v
    v = bmin[node, 1] - py
    if v > 0.0:
        d += v * v
    v = py - bmax[node, 1]
    if v > 0.0:
        d += v * v
    v = bmin[node, 2] - pz
    if v > 0.0:
        d += v * v
    v = pz - bmax[node, 2]
    if v > 0.0:
        d += v * v
    return d


@njit(cache=True, nogil=True, inline="always")
def _ray_box_entry(bmin, bmax, node, ox, oy, oz, dx, dy, dz, t_limit):
    """Entry parameter of the ray into the node box, or -1.0 on a miss.

    Rays starting inside the box report entry 0. t_limit bounds the search.
    """
    t0 = 0.0
    t1 = t_limit
    for axis in range(3):
        if axis == 0:
            o = ox
            d = dx
        elif axis == 1:
            o = oy
            d = dy
        else:
            o = oz
            d = dz
        lo = bmin[node, axis]
        hi = bmax[node, axis]
        if d == 0.0:
            if o < lo or o > hi:
                return -1.0
        else:
            inv = 1.0 / d
            ta = (lo - o) * inv
            tb = (hi - o) * inv
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
            if t0 > t1:
                return -1.0
    return t0


@njit(cache=True, nogil=True, inline="always")
def _closest_on_tri(ax, ay, az, bx, by, bz, cx, cy, cz, px, py, pz):
    """Closest point on triangle abc to p (Ericson's region classification)."""
    abx = bx - ax
    aby = by - ay
    abz = bz - az
    acx = cx - ax
    acy = cy - ay
    acz = cz - az
    apx = px - ax
    apy = py - ay
    apz = pz - az

    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return ax, ay, az

    bpx = px - bx
    bpy = py - by
    bpz = pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bx, by, bz

    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        denom = d1 - d3
        if denom != 0.0:
            v = d1 / denom
        else:
            v = 0.0
        return ax + v * abx, ay + v * aby, az + v * abz

    cpx = px - cx
    cpy = py - cy
    cpz = pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cx, cy, cz

    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        denom = d2 - d6
        if denom != 0.0:
            w = d2 / denom
        else:
            w = 0.0
        return ax + w * acx, ay + w * acy, az + w * acz

    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        denom = (d4 - d3) + (d5 - d6)
        if denom != 0.0:
            w = (d4 - d3) / denom
        else:
            w = 0.0
        return bx + w * (cx - bx), by + w * (cy - by), bz + w * (cz - bz)

    denom = va + vb + vc
    if denom != 0.0:
        v = vb / denom
        w = vc / denom
    else:
        v = 0.0
        w = 0.0
    return ax + v * abx + w * acx, ay + v * aby + w * acy, az + v * abz + w * acz


@njit(cache=True, nogil=True, inline="always")
def _ray_tri(ox, oy, oz, dx, dy, dz, ax, ay, az, bx, by, bz, cx, cy, cz):
    """Moeller-Trumbore with inclusive edge bounds; -1.0 on a miss.

    Inclusive comparisons make hits exactly on shared edges register on all
    adjacent triangles, so none are lost; the caller tie-breaks by id.
    """
    e1x = bx - ax
    e1y = by - ay
    e1z = bz - az
    e2x = cx - ax
    e2y = cy - ay
    e2z = cz - az
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if det == 0.0:
        return -1.0
    inv = 1.0 / det
    sx = ox - ax
    sy = oy - ay
    sz = oz - az
    u = (sx * px + sy * py + sz * pz) * inv
    if u < 0.0 or u > 1.0:
        return -1.0
    qx = sy * e1z - sz * e1y
    qy = sz * e1x - sx * e1z
    qz = sx * e1y - sy * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return -1.0
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t < 0.0:
        return -1.0
    return t


@njit(cache=True, nogil=True)
def closest_point_many(
    bmin, bmax, left, right, start, count, tri_ids, ta, tb, tc,
    queries, out_point, out_dist2, out_tri,
):
    stack = np.empty(_STACK_SIZE, dtype=np.int64)
    sdist = np.empty(_STACK_SIZE, dtype=np.float64)
    for qi in range(queries.shape[0]):
        px = queries[qi, 0]
        py = queries[qi, 1]
        pz = queries[qi, 2]
        best = np.inf
        best_tri = -1
        bx = 0.0
        by = 0.0
        bz = 0.0
        stack[0] = 0
        sdist[0] = _box_dist2(bmin, bmax, 0, px, py, pz)
        top = 1
        while top > 0:
            top -= 1
            if sdist[top] > best:
                continue
            node = stack[top]
            n = count[node]
            if n > 0:
                s = start[node]
                for k in range(s, s + n):
                    qx, qy, qz = _closest_on_tri(
                        ta[k, 0], ta[k, 1], ta[k, 2],
                        tb[k, 0], tb[k, 1], tb[k, 2],
                        tc[k, 0], tc[k, 1], tc[k, 2],
                        px, py, pz,
                    )
                    ex = qx - px
                    ey = qy - py
                    ez = qz - pz
                    d2 = ex * ex + ey * ey + ez * ez
                    t = tri_ids[k]
                    if d2 < best or (d2 == best and t < best_tri):
                        best = d2
                        best_tri = t
                        bx = qx
                        by = qy
                        bz = qz
            else:
                l = left[node]
                r = right[node]
                dl = _box_dist2(bmin, bmax, l, px, py, pz)
                dr = _box_dist2(bmin, bmax, r, px, py, pz)
                # push the farther child first so the nearer is explored first
                if dl <= dr:
                    if dr <= best:
                        stack[top] = r
                        sdist[top] = dr
                        top += 1
                    if dl <= best:
                        stack[top] = l
                        sdist[top] = dl
                        top += 1
                else:
                    if dl <= best:
                        stack[top] = l
                        sdist[top] = dl
                        top += 1
                    if dr <= best:
                        stack[top] = r
                        sdist[top] = dr
                        top += 1
        out_point[qi, 0] = bx
        out_point[qi, 1] = by
        out_point[qi, 2] = bz
        out_dist2[qi] = best
        out_tri[qi] = best_tri


@njit(cache=True, nogil=True)
def ray_first_hit_many(
    bmin, bmax, left, right, start, count, tri_ids, ta, tb, tc,
    origins, directions, t_max, out_t, out_tri,
):
    stack = np.empty(_STACK_SIZE, dtype=np.int64)
    sentry = np.empty(_STACK_SIZE, dtype=np.float64)
    for qi in range(origins.shape[0]):
        ox = origins[qi, 0]
        oy = origins[qi, 1]
        oz = origins[qi, 2]
        dx = directions[qi, 0]
        dy = directions[qi, 1]
        dz = directions[qi, 2]
        best = t_max[qi]
        best_tri = -1
        entry = _ray_box_entry(bmin, bmax, 0, ox, oy, oz, dx, dy, dz, best)
        top = 0
        if entry >= 0.0:
            stack[0] = 0
            sentry[0] = entry
            top = 1
        while top > 0:
            top -= 1
            if sentry[top] > best:
                continue
            node = stack[top]
            n = count[node]
            if n > 0:
                s = start[node]
                for k in range(s, s + n):
                    t = _ray_tri(
                        ox, oy, oz, dx, dy, dz,
                        ta[k, 0], ta[k, 1], ta[k, 2],
                        tb[k, 0], tb[k, 1], tb[k, 2],
                        tc[k, 0], tc[k, 1], tc[k, 2],
                    )
                    if t < 0.0 or t > best:
                        continue
                    tri = tri_ids[k]
                    if t < best or best_tri < 0 or tri < best_tri:
                        best = t
                        best_tri = tri
            else:
                l = left[node]
                r = right[node]
                el = _ray_box_entry(bmin, bmax, l, ox, oy, oz, dx, dy, dz, best)
                er = _ray_box_entry(bmin, bmax, r, ox, oy, oz, dx, dy, dz, best)
                # push the farther child first so the nearer is explored first
                if el >= 0.0 and (er < 0.0 or el <= er):
                    if er >= 0.0:
                        stack[top] = r
                        sentry[top] = er
                        top += 1
                    stack[top] = l
                    sentry[top] = el
                    top += 1
                elif er >= 0.0:
                    if el >= 0.0:
                        stack[top] = l
                        sentry[top] = el
                        top += 1
                    stack[top] = r
                    sentry[top] = er
                    top += 1
        if best_tri >= 0:
            out_t[qi] = best
        else:
            out_t[qi] = -1.0
        out_tri[qi] = best_tri


@njit(cache=True, nogil=True, inline="always")
def _crossing_parity(
    bmin, bmax, left, right, start, count, ta, tb, tc,
    stack, ox, oy, oz, dx, dy, dz,
):
    crossings = 0
    top = 1
    stack[0] = 0
    while top > 0:
        top -= 1
        node = stack[top]
        if _ray_box_entry(bmin, bmax, node, ox, oy, oz, dx, dy, dz, np.inf) < 0.0:
            continue
        n = count[node]
        if n > 0:
            s = start[node]
            for k in range(s, s + n):
                t = _ray_tri(
                    ox, oy, oz, dx, dy, dz,
                    ta[k, 0], ta[k, 1], ta[k, 2],
                    tb[k, 0], tb[k, 1], tb[k, 2],
                    tc[k, 0], tc[k, 1], tc[k, 2],
                )
                if t > 0.0:
                    crossings += 1
        else:
            stack[top] = left[node]
            top += 1
            stack[top] = right[node]
            top += 1
    return crossings % 2


@njit(cache=True, nogil=True)
def parity_votes_many(
    bmin, bmax, left, right, start, count, tri_ids, ta, tb, tc,
    queries, directions, out_votes,
):
    """For each query, count directions whose crossing parity is odd."""
    stack = np.empty(_STACK_SIZE, dtype=np.int64)
    n_dirs = directions.shape[0]
    for qi in range(queries.shape[0]):
        ox = queries[qi, 0]
        oy = queries[qi, 1]
        oz = queries[qi, 2]
        votes = 0
        for di in range(n_dirs):
            votes += _crossing_parity(
                bmin, bmax, left, right, start, count, ta, tb, tc,
                stack, ox, oy, oz,
                directions[di, 0], directions[di, 1], directions[di, 2],
            )
        out_votes[qi] = votes


@njit(cache=True, nogil=True)
def parity_majority_many(
    bmin, bmax, left, right, start, count, tri_ids, ta, tb, tc,
    queries, directions, majority, out_interior,
):
    """Majority crossing-parity vote, stopping as soon as it is decided."""
    stack = np.empty(_STACK_SIZE, dtype=np.int64)
    n_dirs = directions.shape[0]
    for qi in range(queries.shape[0]):
        ox = queries[qi, 0]
        oy = queries[qi, 1]
        oz = queries[qi, 2]
        votes = 0
        for di in range(n_dirs):
            if votes >= majority or votes + (n_dirs - di) < majority:
                break
            votes += _crossing_parity(
                bmin, bmax, left, right, start, count, ta, tb, tc,
                stack, ox, oy, oz,
                directions[di, 0], directions[di, 1], directions[di, 2],
            )
        out_interior[qi] = 1 if votes >= majority else 0
