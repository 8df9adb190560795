"""Shared mesh fixtures: cube, spheres, and procedural random meshes."""

import numpy as np

from geowalk.mesh import TriangleMesh

CUBE_FACES = [
    (0, 1, 3), (0, 3, 2),  # x = -h
    (4, 6, 7), (4, 7, 5),  # x = +h
    (0, 4, 5), (0, 5, 1),  # y = -h
    (2, 3, 7), (2, 7, 6),  # y = +h
    (0, 2, 6), (0, 6, 4),  # z = -h
    (1, 5, 7), (1, 7, 3),  # z = +h
]


def cube_mesh(half=0.5, center=(0.0, 0.0, 0.0), source_id="cube", category="other"):
    c = np.asarray(center, dtype=float)
    corners = np.array(
        [[x, y, z] for x in (-half, half) for y in (-half, half) for z in (-half, half)]
    ) + c
    return TriangleMesh(corners, np.array(CUBE_FACES), source_id=source_id, category=category)


def icosphere_mesh(subdiv=2, radius=1.0, source_id="icosphere", category="other"):
    phi = (1 + 5 ** 0.5) / 2
    base_verts = [
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ]
    base_faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(p, dtype=float) / np.linalg.norm(p) for p in base_verts]
    faces = list(base_faces)
    for _ in range(subdiv):
        cache = {}
        refined = []

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                p = verts[i] + verts[j]
                verts.append(p / np.linalg.norm(p))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            refined += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = refined
    return TriangleMesh(
        radius * np.array(verts), np.array(faces), source_id=source_id, category=category
    )


def uv_sphere_mesh(n_theta=72, n_phi=72, radius=1.0, source_id="uvsphere", category="other"):
    """Lat-long sphere with about 2 * n_theta * n_phi triangles."""
    thetas = np.linspace(0.0, np.pi, n_theta + 1)
    phis = np.linspace(0.0, 2 * np.pi, n_phi, endpoint=False)
    verts = [(0.0, 0.0, radius)]
    rows = []
    for t in thetas[1:-1]:
        row = []
        for p in phis:
            row.append(len(verts))
            verts.append(
                (radius * np.sin(t) * np.cos(p), radius * np.sin(t) * np.sin(p), radius * np.cos(t))
            )
        rows.append(row)
    south = len(verts)
    verts.append((0.0, 0.0, -radius))
    faces = []
    for j in range(n_phi):
        faces.append((0, rows[0][j], rows[0][(j + 1) % n_phi]))
    for i in range(len(rows) - 1):
        for j in range(n_phi):
            a, b = rows[i][j], rows[i][(j + 1) % n_phi]
            c, d = rows[i + 1][j], rows[i + 1][(j + 1) % n_phi]
            faces.append((a, c, d))
            faces.append((a, d, b))
    for j in range(n_phi):
        faces.append((south, rows[-1][(j + 1) % n_phi], rows[-1][j]))
    return TriangleMesh(np.array(verts), np.array(faces), source_id=source_id, category=category)


def random_hull_mesh(rng, n_points=40, scale=1.0, source_id="hull", category="other"):
    """Watertight random mesh: convex hull of Gaussian points."""
    from scipy.spatial import ConvexHull

    pts = rng.standard_normal((n_points, 3)) * scale
    hull = ConvexHull(pts)
    used = np.unique(hull.simplices)
    remap = np.full(len(pts), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return TriangleMesh(
        pts[used], remap[hull.simplices], source_id=source_id, category=category
    )


def random_soup_mesh(rng, n_triangles=30, scale=1.0, source_id="soup", category="other"):
    """Open triangle soup: independent random triangles in a ball."""
    centers = rng.standard_normal((n_triangles, 3)) * scale
    offsets = rng.standard_normal((n_triangles, 2, 3)) * (0.3 * scale)
    verts = np.concatenate(
        [centers[:, None, :], centers[:, None, :] + offsets], axis=1
    ).reshape(-1, 3)
    tris = np.arange(n_triangles * 3).reshape(-1, 3)
    return TriangleMesh(verts, tris, source_id=source_id, category=category)
