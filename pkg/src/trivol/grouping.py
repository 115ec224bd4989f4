"""Axis grouping: the parameter-free encoder from grid volume to slim volumes.

Along one axis, each run of N = S/G consecutive voxels is folded into the
channel dimension, turning the (C,S,S,S) grid into a (C*N, ...) volume whose
grouped axis has length G. Grouping is a pure reshape: it is bijective and
conserves the element multiset. The channel layout is fixed: original channel
c at within-group offset j lands in output channel j*C + c.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .pointcloud import GridVolume
from .tensor import Tensor

AXES = {"x": 0, "y": 1, "z": 2}


@dataclass
class InitialTriVol:
    """The three grouped volumes: (C*N, G, S, S), (C*N, S, G, S), (C*N, S, S, G)."""

    vx: Tensor
    vy: Tensor
    vz: Tensor
    grid_channels: int
    group_count: int
    resolution: int

    @property
    def group_size(self):
        return self.resolution // self.group_count


def _axis_index(axis):
    if isinstance(axis, str):
        try:
            return AXES[axis]
        except KeyError:
            raise ParameterError(f"axis must be one of x/y/z, got {axis!r}") from None
    if axis in (0, 1, 2):
        return int(axis)
    raise ParameterError(f"axis must be one of x/y/z, got {axis!r}")


def _volume_array(volume):
    if isinstance(volume, GridVolume):
        return volume.data.data
    if isinstance(volume, Tensor):
        return volume.data
    return np.asarray(volume)


def group_axis(volume, axis, group_count):
    """Fold runs of N = S/G voxels along ``axis`` into the channel dimension."""
    arr = _volume_array(volume)
    if arr.ndim != 4:
        raise ShapeError(f"expected a (C,S,S,S) volume, got {arr.shape}")
    ax = _axis_index(axis)
    c = arr.shape[0]
    s = arr.shape[1 + ax]
    g = int(group_count)
    if g < 1 or s % g != 0:
        raise ParameterError(f"axis length {s} is not divisible by group count {g}")
    n = s // g
    # split the grouped axis into (G, N), then move N in front of the channels
    split_shape = list(arr.shape)
    split_shape[1 + ax : 2 + ax] = [g, n]
    parts = arr.reshape(split_shape)
    parts = np.moveaxis(parts, 2 + ax, 0)  # (N, C, ..., G, ...)
    out = parts.reshape((n * c,) + tuple(arr.shape[1:ax + 1]) + (g,) + tuple(arr.shape[ax + 2:]))
    return Tensor(out)


def ungroup_axis(grouped, axis, group_count, grid_channels):
    """Inverse of :func:`group_axis`; reconstructs the (C,S,S,S) volume exactly."""
    arr = _volume_array(grouped)
    if arr.ndim != 4:
        raise ShapeError(f"expected a 4D grouped volume, got {arr.shape}")
    ax = _axis_index(axis)
    c = int(grid_channels)
    g = int(group_count)
    if arr.shape[0] % c != 0:
        raise ShapeError(f"channel count {arr.shape[0]} is not a multiple of {c}")
    n = arr.shape[0] // c
    if arr.shape[1 + ax] != g:
        raise ShapeError(f"grouped axis has length {arr.shape[1 + ax]}, expected {g}")
    parts = arr.reshape((n, c) + arr.shape[1:])
    parts = np.moveaxis(parts, 0, 2 + ax)  # (C, ..., G, N, ...)
    merged_shape = list(parts.shape)
    merged_shape[1 + ax : 3 + ax] = [g * n]
    return Tensor(parts.reshape(merged_shape))


def encode_trivol(volume, group_count):
    """Group the grid volume along x, y, and z independently (no parameters)."""
    if not isinstance(volume, GridVolume):
        raise ParameterError("encode_trivol expects a GridVolume")
    s = volume.resolution
    g = int(group_count)
    if g < 1 or s % g != 0:
        raise ParameterError(f"resolution {s} is not divisible by group count {g}")
    return InitialTriVol(
        vx=group_axis(volume, "x", g),
        vy=group_axis(volume, "y", g),
        vz=group_axis(volume, "z", g),
        grid_channels=volume.channels,
        group_count=g,
        resolution=s,
    )


def trivol_cell_count(resolution, group_count):
    """Total spatial cells across the three slim volumes: 3*G*S^2."""
    return 3 * group_count * resolution**2


def dense_cell_count(resolution):
    return resolution**3
