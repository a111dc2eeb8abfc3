"""Cartesian <-> spherical conversion with sensor field-of-view handling.

Angles are degrees throughout: spherical quantization steps are
degree-valued, so radians would silently change the voxel grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import Frame, PointCloud
from .errors import DataError, FrameError, ParameterError


@dataclass(frozen=True)
class SensorFov:
    """Angular coverage of a LiDAR.

    ``horizontal`` is expressed in the sensor's azimuth frame, i.e. after
    subtracting ``theta_shift`` from the raw ``atan2`` azimuth.
    """

    horizontal: tuple[float, float] = (-180.0, 180.0)
    vertical: tuple[float, float] = (-90.0, 90.0)
    channels: int = 1
    theta_shift: float = 0.0

    def __post_init__(self):
        h0, h1 = self.horizontal
        v0, v1 = self.vertical
        if not (h0 < h1 and v0 < v1):
            raise ParameterError("FoV bounds need min < max on both axes")
        if h1 - h0 > 360 or v1 - v0 > 180:
            raise ParameterError("FoV span exceeds 360 deg horizontal / 180 deg vertical")
        if h0 < -180 or h1 > 180:
            raise ParameterError("horizontal FoV must lie inside [-180, 180]")
        if self.channels < 1:
            raise ParameterError("channels must be positive")

    @property
    def full_circle(self) -> bool:
        return self.horizontal[1] - self.horizontal[0] >= 360.0


SENSOR_PRESETS: dict[str, SensorFov] = {
    # 2D pushbroom scanner: a single narrow vertical band.
    "sick-lms151": SensorFov((-135.0, 135.0), (0.25, 0.5), 1),
    "vlp16": SensorFov((-180.0, 180.0), (-15.0, 15.0), 16),
    "hdl64e": SensorFov((-180.0, 180.0), (-24.8, 2.0), 64),
    "hdl32e": SensorFov((-180.0, 180.0), (-30.67, 10.67), 32),
    "os1-128": SensorFov((-180.0, 180.0), (-22.5, 22.5), 128),
}

FULL_CIRCLE = SENSOR_PRESETS["vlp16"]


def sensor_preset(name: str) -> SensorFov:
    try:
        return SENSOR_PRESETS[name]
    except KeyError:
        raise ParameterError(
            f"unknown sensor preset {name!r}; known: {sorted(SENSOR_PRESETS)}") from None


def wrap_degrees(theta: np.ndarray) -> np.ndarray:
    """Wrap angles into (-180, 180]; values already inside are returned untouched."""
    theta = np.asarray(theta, dtype=np.float64)
    inside = (theta > -180.0) & (theta <= 180.0)
    return np.where(inside, theta, 180.0 - np.mod(180.0 - theta, 360.0))


def to_spherical(cloud: PointCloud, fov: SensorFov = FULL_CIRCLE) -> PointCloud:
    """Return ``(r, theta, phi)`` per point: range, azimuth, polar angle from +z.

    Points at the origin map to ``(0, 0, 0)``. With a partial horizontal FoV,
    a point whose azimuth falls outside the sensor's coverage raises
    ``DataError``.
    """
    if cloud.frame is not Frame.CARTESIAN:
        raise FrameError("to_spherical expects a Cartesian cloud")
    p = cloud.points
    if not np.isfinite(p).all():
        i = int(np.flatnonzero(~np.isfinite(p).all(axis=1))[0])
        raise DataError(f"non-finite coordinates at point index {i}")
    x, y, z = p.T
    r = np.sqrt(x * x + y * y + z * z)
    theta = wrap_degrees(np.degrees(np.arctan2(y, x)) - fov.theta_shift)
    safe_r = np.where(r > 0, r, 1.0)
    phi = np.degrees(np.arccos(np.clip(z / safe_r, -1.0, 1.0)))
    origin = r == 0
    theta[origin] = 0.0
    phi[origin] = 0.0
    if not fov.full_circle:
        h0, h1 = fov.horizontal
        out = ~origin & ((theta < h0) | (theta > h1))
        if out.any():
            i = int(np.flatnonzero(out)[0])
            raise DataError(
                f"point {i} azimuth {theta[i]:.3f} deg outside sensor FoV {fov.horizontal}")
    return cloud.replace(points=np.column_stack([r, theta, phi]), frame=Frame.SPHERICAL)


def from_spherical(cloud: PointCloud, fov: SensorFov = FULL_CIRCLE) -> PointCloud:
    if cloud.frame is not Frame.SPHERICAL:
        raise FrameError("from_spherical expects a spherical cloud")
    r, theta, phi = cloud.points.T
    t = np.radians(theta + fov.theta_shift)
    f = np.radians(phi)
    sf = np.sin(f)
    xyz = np.column_stack([r * sf * np.cos(t), r * sf * np.sin(t), r * np.cos(f)])
    return cloud.replace(points=xyz, frame=Frame.CARTESIAN)
