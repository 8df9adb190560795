"""Task-specific per-point velocity fields built from simulation settings.

Direction conventions are fixed once and recorded in the output provenance:
the base flow direction is +x (front faces -x after normalization), yaw and
sideslip rotate about z, angle of attack rotates about y with positive
angles tilting the flow upward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: Recommended velocity-norm intervals by speed regime.
NORM_RANGES = {
    "low_speed": (0.1, 1.0),
    "high_speed": (1.0, 2.0),
}

#: Default linear-decay radius for impact fields: the normalized x-length.
DEFAULT_DECAY_RADIUS = 5.0

_BASE_DIRECTION = np.array([1.0, 0.0, 0.0])


def _rot_z(deg: float) -> np.ndarray:
    r = math.radians(deg)
    c, s = math.cos(r), math.sin(r)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rot_y(deg: float) -> np.ndarray:
    r = math.radians(deg)
    c, s = math.cos(r), math.sin(r)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


@dataclass(frozen=True)
class AeroSpec:
    """Freestream flow: normalized speed, angle of attack, sideslip (degrees)."""

    speed_norm: float
    aoa_deg: float = 0.0
    sideslip_deg: float = 0.0

    def __post_init__(self):
        if self.speed_norm < 0:
            raise ValueError("speed_norm must be non-negative")


@dataclass(frozen=True)
class HydroSpec:
    """Two-phase flow split at a flat interface height, shared yaw direction."""

    water_norm: float
    air_norm: float
    interface_height: float
    yaw_deg: float = 0.0

    def __post_init__(self):
        if self.water_norm < 0 or self.air_norm < 0:
            raise ValueError("phase norms must be non-negative")


@dataclass(frozen=True)
class CrashSpec:
    """Impact field: direction in the x-y plane, norm decaying linearly to zero
    at decay_radius from the impact point."""

    impact_point: tuple[float, float, float]
    impact_angle_deg: float
    max_norm: float
    decay_radius: float = DEFAULT_DECAY_RADIUS

    def __post_init__(self):
        if self.max_norm < 0:
            raise ValueError("max_norm must be non-negative")
        if self.decay_radius <= 0:
            raise ValueError("decay_radius must be positive")


@dataclass(frozen=True)
class DynamicsCondition:
    """Per-point velocities aligned with a point set, plus provenance."""

    velocities: np.ndarray
    provenance: dict

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.velocities, dtype=np.float64))
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError("velocities must be (N, 3)")
        if v.size and not np.isfinite(v).all():
            raise ValueError("velocities must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "velocities", v)

    @property
    def n_points(self) -> int:
        return len(self.velocities)


def _as_points(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("points must be (N, 3)")
    return pts


def build_aero(spec: AeroSpec, points: np.ndarray) -> DynamicsCondition:
    """Uniform field: speed_norm along R_z(sideslip) @ R_y(-aoa) @ (1,0,0)."""
    points = _as_points(points)
    direction = _rot_z(spec.sideslip_deg) @ _rot_y(-spec.aoa_deg) @ _BASE_DIRECTION
    v = spec.speed_norm * direction
    velocities = np.tile(v, (len(points), 1))
    return DynamicsCondition(
        velocities=velocities,
        provenance={
            "kind": "aero",
            "speed_norm": spec.speed_norm,
            "aoa_deg": spec.aoa_deg,
            "sideslip_deg": spec.sideslip_deg,
        },
    )


def build_hydro(spec: HydroSpec, points: np.ndarray) -> DynamicsCondition:
    """Piecewise-constant two-phase field split at z == interface_height.

    Points at or below the interface take the water norm, points above take
    the air norm; both phases share the yawed +x direction.
    """
    points = _as_points(points)
    direction = _rot_z(spec.yaw_deg) @ _BASE_DIRECTION
    water = points[:, 2] <= spec.interface_height
    norms = np.where(water, spec.water_norm, spec.air_norm)
    velocities = norms[:, None] * direction
    return DynamicsCondition(
        velocities=velocities,
        provenance={
            "kind": "hydro",
            "water_norm": spec.water_norm,
            "air_norm": spec.air_norm,
            "interface_height": spec.interface_height,
            "yaw_deg": spec.yaw_deg,
        },
    )


def build_crash(spec: CrashSpec, points: np.ndarray) -> DynamicsCondition:
    """Impact field decaying linearly from max_norm at the impact point to
    zero at decay_radius, all along one direction in the x-y plane."""
    points = _as_points(points)
    direction = _rot_z(spec.impact_angle_deg) @ _BASE_DIRECTION
    dist = np.linalg.norm(points - np.asarray(spec.impact_point, dtype=np.float64), axis=1)
    norms = spec.max_norm * np.maximum(0.0, 1.0 - dist / spec.decay_radius)
    velocities = norms[:, None] * direction
    return DynamicsCondition(
        velocities=velocities,
        provenance={
            "kind": "crash",
            "impact_point": tuple(float(c) for c in spec.impact_point),
            "impact_angle_deg": spec.impact_angle_deg,
            "max_norm": spec.max_norm,
            "decay_radius": spec.decay_radius,
        },
    )


def recommend_norm(regime: str) -> tuple[float, float]:
    """Recommended closed interval for the velocity norm of a speed regime."""
    try:
        return NORM_RANGES[regime]
    except KeyError:
        raise ValueError(
            f"unknown regime {regime!r}; expected one of {sorted(NORM_RANGES)}"
        ) from None


def normalize_real_speed(
    real_speed: float,
    reference_range: tuple[float, float],
    target_range: tuple[float, float],
) -> float:
    """Affine map of a physical speed from its reference range onto a target
    range, clamped to the target."""
    ref_lo, ref_hi = (float(v) for v in reference_range)
    tgt_lo, tgt_hi = (float(v) for v in target_range)
    if ref_lo == ref_hi:
        raise ValueError("reference range is degenerate")
    s = tgt_lo + (float(real_speed) - ref_lo) * (tgt_hi - tgt_lo) / (ref_hi - ref_lo)
    lo, hi = min(tgt_lo, tgt_hi), max(tgt_lo, tgt_hi)
    return min(max(s, lo), hi)
