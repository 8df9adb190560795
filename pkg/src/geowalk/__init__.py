"""geowalk: sticking-boundary particle transport data over triangle meshes.

Library layout mirrors the pipeline: mesh loading and normalization
(geowalk.mesh), accelerated spatial queries (geowalk.spatial), seeded
sampling (geowalk.sampling), trajectory generation (geowalk.walk),
conservation audits (geowalk.conservation), task velocity fields
(geowalk.conditions), binary shards and manifests (geowalk.shards), and
dataset reporting (geowalk.report). The `geowalk` CLI binds them together.
"""

from .mesh import TriangleMesh, NormalizationRecord, ValidationReport
from .sampling import SamplerConfig, SeedPlan
from .spatial import SpatialIndex, build_index
from .walk import SampleRecord, TrackingEnsemble, generate_sample

__version__ = "0.1.0"

__all__ = [
    "TriangleMesh",
    "NormalizationRecord",
    "ValidationReport",
    "SamplerConfig",
    "SeedPlan",
    "SpatialIndex",
    "build_index",
    "SampleRecord",
    "TrackingEnsemble",
    "generate_sample",
    "__version__",
]
