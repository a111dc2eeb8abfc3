"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class LidarPlaceError(Exception):
    """Base class. ``layer_index`` is set when raised from inside a network layer."""

    layer_index: int | None = None


class FormatError(LidarPlaceError):
    pass


class DataError(LidarPlaceError):
    pass


class EmptyCloudError(DataError):
    pass


class EmptyError(DataError):
    """Empty input where at least one element is required (lists, tensors, sets)."""


class ParameterError(LidarPlaceError):
    pass


class FrameError(LidarPlaceError):
    """Coordinate frame of the input does not match what the operation expects."""


class ShapeError(LidarPlaceError):
    pass


class CoordinateError(LidarPlaceError):
    pass


class DegenerateError(LidarPlaceError):
    pass


class ConfigError(LidarPlaceError):
    pass
