"""Bit-exact binary shard format and dataset manifest.

One shard holds one sample record: a fixed header followed by little-endian
payload arrays (positions, velocities, feature trajectory, stuck steps).
The header checksum covers the payload; the manifest additionally records a
whole-file checksum per shard, so any single corrupted byte is detectable.
The full layout is documented in FORMAT.md.
"""

from __future__ import annotations

import hashlib
import json
import re
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath
from typing import BinaryIO

import numpy as np

from .errors import (
    BadMagicError,
    ChecksumMismatchError,
    DanglingShardError,
    ShardError,
    TruncatedShardError,
    VersionMismatchError,
)
from .walk import FEATURE_CHANNELS, FeatureTrajectory, SampleRecord

MAGIC = b"GEOWALK1"
FORMAT_VERSION = 1
SHARD_SUFFIX = ".gws"
MANIFEST_NAME = "manifest.json"

FEATURE_KIND_CODES = {"vector_distance": 0, "sdf": 1}
FEATURE_KIND_NAMES = {v: k for k, v in FEATURE_KIND_CODES.items()}
STICKING_MODE_CODES = {"ray_clamped": 0, "literal": 1}
STICKING_MODE_NAMES = {v: k for k, v in STICKING_MODE_CODES.items()}
VECTOR_CONVENTION_CODES = {"query_to_surface": 0}
VECTOR_CONVENTION_NAMES = {v: k for k, v in VECTOR_CONVENTION_CODES.items()}

# after magic and the length-prefixed geometry id:
# dynamics_index u32, n_points u32, tau u16, feature_kind u8, sticking_mode u8,
# vector_convention u8, v_max f64, payload checksum u64
_FIXED_TAIL = struct.Struct("<IIHBBBdQ")


def payload_checksum(payload: bytes) -> int:
    """64-bit BLAKE2b digest of the payload bytes."""
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def file_checksum(path: str | Path) -> str:
    """Hex 64-bit BLAKE2b digest of an entire file."""
    h = hashlib.blake2b(digest_size=8)
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _payload_bytes(record: SampleRecord) -> bytes:
    parts = [
        np.ascontiguousarray(record.positions_0.astype("<f4")).tobytes(),
        np.ascontiguousarray(record.velocities.astype("<f4")).tobytes(),
        np.ascontiguousarray(record.feature_trajectory.features.astype("<f4")).tobytes(),
        np.ascontiguousarray(record.stuck_steps.astype("<u2")).tobytes(),
    ]
    return b"".join(parts)


def shard_bytes(record: SampleRecord) -> bytes:
    gid = record.geometry_id.encode("utf-8")
    if len(gid) > 0xFFFF:
        raise ShardError("geometry id longer than 65535 bytes")
    payload = _payload_bytes(record)
    header = b"".join(
        [
            MAGIC,
            struct.pack("<H", FORMAT_VERSION),
            struct.pack("<H", len(gid)),
            gid,
            _FIXED_TAIL.pack(
                record.dynamics_index,
                record.n_points,
                record.tau,
                FEATURE_KIND_CODES[record.feature_kind],
                STICKING_MODE_CODES[record.sticking_mode],
                VECTOR_CONVENTION_CODES[record.vector_convention],
                record.v_max,
                payload_checksum(payload),
            ),
        ]
    )
    return header + payload


def write_shard(record: SampleRecord, sink: BinaryIO) -> int:
    """Serialize the record into the sink; returns the byte count written."""
    data = shard_bytes(record)
    sink.write(data)
    return len(data)


def read_shard(data: bytes) -> SampleRecord:
    """Exact inverse of write_shard; raises a named error on any defect."""
    if len(data) < len(MAGIC):
        raise TruncatedShardError(f"shard holds {len(data)} bytes, shorter than the magic")
    if data[: len(MAGIC)] != MAGIC:
        raise BadMagicError(f"bad magic {data[:len(MAGIC)]!r}")
    pos = len(MAGIC)
    if len(data) < pos + 4:
        raise TruncatedShardError("shard truncated inside the header")
    (version,) = struct.unpack_from("<H", data, pos)
    pos += 2
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"format version {version}, expected {FORMAT_VERSION}")
    (gid_len,) = struct.unpack_from("<H", data, pos)
    pos += 2
    if len(data) < pos + gid_len + _FIXED_TAIL.size:
        raise TruncatedShardError("shard truncated inside the header")
    try:
        geometry_id = data[pos : pos + gid_len].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ShardError(f"geometry id is not valid UTF-8: {exc}") from None
    pos += gid_len
    (
        dynamics_index,
        n_points,
        tau,
        feature_code,
        mode_code,
        convention_code,
        v_max,
        checksum,
    ) = _FIXED_TAIL.unpack_from(data, pos)
    pos += _FIXED_TAIL.size
    if feature_code not in FEATURE_KIND_NAMES:
        raise ShardError(f"unknown feature kind code {feature_code}")
    if mode_code not in STICKING_MODE_NAMES:
        raise ShardError(f"unknown sticking mode code {mode_code}")
    if convention_code not in VECTOR_CONVENTION_NAMES:
        raise ShardError(f"unknown vector convention code {convention_code}")
    feature_kind = FEATURE_KIND_NAMES[feature_code]
    channels = FEATURE_CHANNELS[feature_kind]
    expected_payload = n_points * 3 * 4 * 2 + n_points * (tau + 1) * channels * 4 + n_points * 2
    payload = data[pos:]
    if len(payload) < expected_payload:
        raise TruncatedShardError(
            f"payload holds {len(payload)} bytes, header implies {expected_payload}"
        )
    if len(payload) > expected_payload:
        raise ShardError(f"{len(payload) - expected_payload} trailing bytes after payload")
    if payload_checksum(payload) != checksum:
        raise ChecksumMismatchError("payload checksum mismatch")

    offset = 0

    def take(count: int, dtype: str) -> np.ndarray:
        nonlocal offset
        width = np.dtype(dtype).itemsize * count
        arr = np.frombuffer(payload, dtype=dtype, count=count, offset=offset).copy()
        offset += width
        return arr

    positions = take(n_points * 3, "<f4").reshape(n_points, 3)
    velocities = take(n_points * 3, "<f4").reshape(n_points, 3)
    features = take(n_points * (tau + 1) * channels, "<f4").reshape(n_points, tau + 1, channels)
    stuck = take(n_points, "<u2")
    return SampleRecord(
        geometry_id=geometry_id,
        dynamics_index=dynamics_index,
        positions_0=positions,
        velocities=velocities,
        feature_trajectory=FeatureTrajectory(features, feature_kind),
        stuck_steps=stuck,
        tau=tau,
        v_max=v_max,
        sticking_mode=STICKING_MODE_NAMES[mode_code],
        vector_convention=VECTOR_CONVENTION_NAMES[convention_code],
    )


def read_shard_file(path: str | Path) -> SampleRecord:
    return read_shard(Path(path).read_bytes())


_SAFE_ID = re.compile(r"[^A-Za-z0-9._-]")


def shard_relpath(geometry_id: str, dynamics_index: int) -> PurePosixPath:
    """Dataset-relative shard path, directory-sharded by geometry id prefix."""
    safe = _SAFE_ID.sub("_", geometry_id) or "_"
    prefix = safe[:2].ljust(2, "_")
    return PurePosixPath(prefix) / f"{safe}_d{dynamics_index:05d}{SHARD_SUFFIX}"


@dataclass(frozen=True)
class ShardInfo:
    path: str  # dataset-relative, posix separators
    n_bytes: int
    checksum: str

    def to_dict(self) -> dict:
        return {"path": self.path, "bytes": self.n_bytes, "checksum": self.checksum}


@dataclass
class Manifest:
    dataset: str
    master_seed: int
    config: dict
    category_counts: dict
    total_samples: int
    shards: list[ShardInfo]
    skipped: list = field(default_factory=list)
    format_version: int = FORMAT_VERSION

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "format_version": self.format_version,
            "master_seed": self.master_seed,
            "config": self.config,
            "category_counts": self.category_counts,
            "total_samples": self.total_samples,
            "skipped": self.skipped,
            "shards": [s.to_dict() for s in sorted(self.shards, key=lambda s: s.path)],
        }


def write_manifest(manifest: Manifest, path: str | Path) -> None:
    Path(path).write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=False) + "\n")


def read_manifest(path: str | Path) -> Manifest:
    raw = json.loads(Path(path).read_text())
    return Manifest(
        dataset=raw["dataset"],
        master_seed=raw["master_seed"],
        config=raw["config"],
        category_counts=raw["category_counts"],
        total_samples=raw["total_samples"],
        skipped=raw.get("skipped", []),
        format_version=raw.get("format_version", FORMAT_VERSION),
        shards=[
            ShardInfo(path=s["path"], n_bytes=s["bytes"], checksum=s["checksum"])
            for s in raw["shards"]
        ],
    )


def verify_manifest_files(manifest: Manifest, root: str | Path) -> None:
    """Raise DanglingShardError if any listed shard file is missing."""
    root = Path(root)
    for info in manifest.shards:
        if not (root / info.path).is_file():
            raise DanglingShardError(f"manifest references missing shard {info.path}")


class DatasetWriter:
    """Thread-safe sink writing one shard file per record under a root."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self.infos: list[ShardInfo] = []

    def __call__(self, record: SampleRecord) -> ShardInfo:
        rel = shard_relpath(record.geometry_id, record.dynamics_index)
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        data = shard_bytes(record)
        path.write_bytes(data)
        digest = hashlib.blake2b(data, digest_size=8).hexdigest()
        info = ShardInfo(path=str(rel), n_bytes=len(data), checksum=digest)
        with self._lock:
            self.infos.append(info)
        return info
