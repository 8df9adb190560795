"""Triangle mesh loading, validation, and canonical normalization.

Meshes are immutable after construction and safe to share across worker
threads. Only vertex positions and triangle connectivity are handled;
normals, texture coordinates, and materials are ignored on load.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateExtentError,
    EmptyMeshError,
    IndexOutOfRangeError,
    MeshParseError,
)

CATEGORIES = ("car", "airplane", "watercraft", "other")

#: Canonical x-axis length of a normalized mesh.
DEFAULT_X_LENGTH = 5.0

#: Triangles with area at or below this are dropped by validate_mesh.
DEFAULT_AREA_EPS = 1e-12

_ROTATION_TOL = 1e-9


@dataclass(frozen=True)
class TriangleMesh:
    """Indexed triangle soup.

    vertices: (V, 3) float64 positions.
    triangles: (T, 3) int64 vertex indices.
    source_id: opaque identifier for the geometry.
    category: one of CATEGORIES.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    source_id: str = ""
    category: str = "other"

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        t = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int64))
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError(f"vertices must have shape (V, 3), got {v.shape}")
        if t.ndim != 2 or t.shape[1] != 3:
            raise ValueError(f"triangles must have shape (T, 3), got {t.shape}")
        if v.size and not np.isfinite(v).all():
            raise ValueError("vertex coordinates must be finite")
        if t.size:
            if t.min() < 0 or t.max() >= len(v):
                raise IndexOutOfRangeError(
                    f"triangle index out of range (vertex count {len(v)})"
                )
        v.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        if not len(self.vertices):
            raise EmptyMeshError("mesh has no vertices")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def triangle_corners(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-triangle corner arrays (a, b, c), each (T, 3)."""
        tri = self.triangles
        return self.vertices[tri[:, 0]], self.vertices[tri[:, 1]], self.vertices[tri[:, 2]]

    def triangle_areas(self) -> np.ndarray:
        a, b, c = self.triangle_corners()
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


@dataclass(frozen=True)
class NormalizationRecord:
    """Affine transform taking the raw mesh to its normalized copy.

    Applied as scale * (rotation @ x + translation), i.e. rotation first,
    then translation, then scale.
    """

    rotation: np.ndarray
    translation: np.ndarray
    scale: float

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "scale", float(self.scale))
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if np.abs(r.T @ r - np.eye(3)).max() > _ROTATION_TOL:
            raise ValueError("rotation is not orthonormal")

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return self.scale * (pts @ self.rotation.T + self.translation)


@dataclass(frozen=True)
class ValidationReport:
    n_vertices: int
    n_triangles: int
    n_degenerate_dropped: int
    bbox_min: np.ndarray
    bbox_max: np.ndarray
    is_closed: str  # "closed" | "open" | "unknown"

    def to_dict(self) -> dict:
        return {
            "n_vertices": self.n_vertices,
            "n_triangles": self.n_triangles,
            "n_degenerate_dropped": self.n_degenerate_dropped,
            "bbox_min": [float(v) for v in self.bbox_min],
            "bbox_max": [float(v) for v in self.bbox_max],
            "is_closed": self.is_closed,
        }


def load_mesh(data: bytes, fmt: str, source_id: str = "", category: str = "other") -> TriangleMesh:
    """Parse mesh bytes in the given format ("obj" or "stl").

    OBJ: only `v` and `f` records are read; 1-based indices are converted
    to 0-based; polygon faces are fan-triangulated.
    STL (binary): normals are ignored; positions are deduplicated by exact
    bit equality.
    """
    fmt = fmt.lower()
    if fmt == "obj":
        vertices, triangles = _parse_obj(data)
    elif fmt == "stl":
        vertices, triangles = _parse_stl(data)
    else:
        raise ValueError(f"unsupported mesh format {fmt!r}")
    return TriangleMesh(vertices, triangles, source_id=source_id, category=category)


def load_mesh_file(path: str | Path, source_id: str | None = None, category: str = "other") -> TriangleMesh:
    """Load a mesh file, inferring the format from its suffix."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        fmt = "obj"
    elif suffix == ".stl":
        fmt = "stl"
    else:
        raise ValueError(f"cannot infer mesh format from {path.name!r}")
    if source_id is None:
        source_id = path.stem
    return load_mesh(path.read_bytes(), fmt, source_id=source_id, category=category)


def _parse_obj(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    vertices: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    # (face list index, byte offset) for faces with absolute indices,
    # validated once the final vertex count is known
    pending: list[tuple[int, int]] = []
    offset = 0
    for raw in data.splitlines(keepends=True):
        line_offset = offset
        offset += len(raw)
        line = raw.strip()
        if not line or line.startswith(b"#"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == b"v":
            if len(parts) < 4:
                raise MeshParseError("vertex record needs 3 coordinates", line_offset)
            try:
                vertices.append((float(parts[1]), float(parts[2]), float(parts[3])))
            except ValueError as exc:
                raise MeshParseError(f"bad vertex coordinate: {exc}", line_offset) from None
        elif tag == b"f":
            if len(parts) < 4:
                raise MeshParseError("face record needs at least 3 indices", line_offset)
            idx = []
            for token in parts[1:]:
                head = token.split(b"/", 1)[0]
                try:
                    raw_index = int(head)
                except ValueError:
                    raise MeshParseError(f"bad face index {token!r}", line_offset) from None
                if raw_index == 0:
                    raise MeshParseError("face index 0 is not valid in OBJ", line_offset)
                if raw_index < 0:
                    # relative to the vertices seen so far
                    resolved = len(vertices) + raw_index
                    if resolved < 0:
                        raise IndexOutOfRangeError(
                            f"relative face index {raw_index} at byte offset {line_offset} "
                            f"precedes the vertex table"
                        )
                    idx.append(resolved)
                else:
                    idx.append(raw_index - 1)
            for k in range(1, len(idx) - 1):
                faces.append((idx[0], idx[k], idx[k + 1]))
                pending.append((len(faces) - 1, line_offset))
        # all other record types (vn, vt, usemtl, o, g, s, mtllib, l, p) are skipped
    n_vertices = len(vertices)
    for face_i, line_offset in pending:
        for j in faces[face_i]:
            if j >= n_vertices:
                raise IndexOutOfRangeError(
                    f"face index {j + 1} at byte offset {line_offset} exceeds "
                    f"vertex count {n_vertices}"
                )
    v = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    t = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    return v, t


_STL_HEADER = 80
_STL_RECORD = 50  # 12 f32 (normal + 3 vertices) + u16 attribute


def _parse_stl(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    if len(data) < _STL_HEADER + 4:
        raise MeshParseError("file shorter than STL header", len(data))
    (count,) = struct.unpack_from("<I", data, _STL_HEADER)
    expected = _STL_HEADER + 4 + _STL_RECORD * count
    if len(data) < expected:
        raise MeshParseError(
            f"truncated STL: header declares {count} triangles, "
            f"payload holds {(len(data) - _STL_HEADER - 4) // _STL_RECORD}",
            len(data),
        )
    if len(data) > expected:
        raise MeshParseError(f"{len(data) - expected} trailing bytes after STL payload", expected)
    if count == 0:
        return np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64)
    records = np.frombuffer(data, dtype=np.uint8, count=_STL_RECORD * count, offset=_STL_HEADER + 4)
    records = records.reshape(count, _STL_RECORD)
    # skip the 12-byte normal, take 36 bytes of vertex data per record
    corners = records[:, 12:48].copy().view("<f4").reshape(-1, 3)
    # deduplicate by raw bits so -0.0 and 0.0 stay distinct
    bits = corners.view("<u4").reshape(-1, 3)
    _, first, inverse = np.unique(bits, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")  # back to first-occurrence order
    rank = np.empty(len(order), dtype=np.int64)
    rank[order] = np.arange(len(order))
    vertices = corners[first[order]].astype(np.float64)
    triangles = rank[inverse].reshape(-1, 3)
    return vertices, triangles


def validate_mesh(mesh: TriangleMesh, area_eps: float = DEFAULT_AREA_EPS) -> tuple[TriangleMesh, ValidationReport]:
    """Drop degenerate triangles and report mesh statistics.

    Raises EmptyMeshError when no triangle survives.
    """
    if mesh.n_triangles == 0:
        raise EmptyMeshError(f"mesh {mesh.source_id!r} has no triangles")
    areas = mesh.triangle_areas()
    keep = areas > area_eps
    dropped = int((~keep).sum())
    if not keep.any():
        raise EmptyMeshError(
            f"mesh {mesh.source_id!r}: all {mesh.n_triangles} triangles are degenerate"
        )
    cleaned = mesh if dropped == 0 else TriangleMesh(
        mesh.vertices, mesh.triangles[keep], source_id=mesh.source_id, category=mesh.category
    )
    bbox_min, bbox_max = cleaned.bbox
    report = ValidationReport(
        n_vertices=cleaned.n_vertices,
        n_triangles=cleaned.n_triangles,
        n_degenerate_dropped=dropped,
        bbox_min=bbox_min,
        bbox_max=bbox_max,
        is_closed=_closedness(cleaned.triangles),
    )
    return cleaned, report


def _closedness(triangles: np.ndarray) -> str:
    edges = np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]], axis=0
    )
    edges = np.sort(edges, axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    if (counts == 2).all():
        return "closed"
    if (counts == 1).any():
        return "open"
    return "unknown"  # no boundary edges, but non-manifold multiplicities


def normalize_mesh(
    mesh: TriangleMesh,
    target_x_length: float = DEFAULT_X_LENGTH,
    rotation: np.ndarray | None = None,
) -> tuple[TriangleMesh, NormalizationRecord]:
    """Rotate, center x/y, rest the bottom on z=0, and scale to a fixed x-length.

    The rotation (default identity) is applied first and is caller-supplied:
    meshes from canonically aligned datasets need none.
    """
    if mesh.n_vertices == 0 or mesh.n_triangles == 0:
        raise EmptyMeshError("cannot normalize an empty mesh")
    if target_x_length <= 0:
        raise ValueError("target_x_length must be positive")
    if rotation is None:
        rotation = np.eye(3)
    rotation = np.asarray(rotation, dtype=np.float64).reshape(3, 3)
    if np.abs(rotation.T @ rotation - np.eye(3)).max() > _ROTATION_TOL:
        raise ValueError("rotation is not orthonormal")

    rotated = mesh.vertices @ rotation.T
    lo = rotated.min(axis=0)
    hi = rotated.max(axis=0)
    extent_x = hi[0] - lo[0]
    if extent_x <= 0:
        raise DegenerateExtentError(
            f"mesh {mesh.source_id!r} has zero x-extent after rotation"
        )
    translation = np.array(
        [-(lo[0] + hi[0]) / 2.0, -(lo[1] + hi[1]) / 2.0, -lo[2]]
    )
    scale = target_x_length / extent_x
    record = NormalizationRecord(rotation=rotation, translation=translation, scale=scale)
    normalized = TriangleMesh(
        record.apply(mesh.vertices),
        mesh.triangles,
        source_id=mesh.source_id,
        category=mesh.category,
    )
    return normalized, record


def dump_obj(mesh: TriangleMesh) -> str:
    """Serialize a mesh as ASCII OBJ (v/f records only)."""
    out = io.StringIO()
    for x, y, z in mesh.vertices.tolist():
        out.write(f"v {x!r} {y!r} {z!r}\n")
    for i, j, k in mesh.triangles.tolist():
        out.write(f"f {i + 1} {j + 1} {k + 1}\n")
    return out.getvalue()


def save_obj(mesh: TriangleMesh, path: str | Path) -> None:
    Path(path).write_text(dump_obj(mesh))
