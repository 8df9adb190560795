"""Exception types shared across the package."""


class GeowalkError(Exception):
    """Base class for all geowalk errors."""


class MeshParseError(GeowalkError):
    """Malformed mesh file. Carries the byte offset where parsing failed."""

    def __init__(self, message: str, byte_offset: int | None = None):
        if byte_offset is not None:
            message = f"{message} (byte offset {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset


class IndexOutOfRangeError(GeowalkError):
    """A face references a vertex index outside the vertex table."""


class EmptyMeshError(GeowalkError):
    """Mesh has no usable triangles."""


class DegenerateExtentError(GeowalkError):
    """Mesh has zero extent along the normalization axis."""


class SamplingQuotaError(GeowalkError):
    """Interior rejection could not reach the requested point count."""


class ShardError(GeowalkError):
    """Base class for shard encoding/decoding failures."""


class BadMagicError(ShardError):
    pass


class VersionMismatchError(ShardError):
    pass


class ChecksumMismatchError(ShardError):
    pass


class TruncatedShardError(ShardError):
    pass


class DanglingShardError(GeowalkError):
    """Manifest references a shard file that does not exist."""
