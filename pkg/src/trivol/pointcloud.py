"""Colored point clouds: file I/O, unit-cube normalization, and voxelization.

The renderer consumes clouds whose coordinates live in [0,1]^3. ``normalize``
maps raw world-space clouds into that domain; ``voxelize`` scatters them into
a dense 4-channel grid (mean RGB plus a soft occupancy channel).
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ParameterError, ParseError, ValidationError
from .tensor import Tensor

GRID_CHANNELS = 4  # RGB mean + occupancy
OCCUPANCY_CAP = 8  # points per voxel at which occupancy saturates


@dataclass
class PointCloud:
    """N colored points; positions (N,3) float64, colors (N,3) in [0,1]."""

    positions: np.ndarray
    colors: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.colors = np.asarray(self.colors, dtype=np.float64)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise ValidationError(f"positions must be (N,3), got {self.positions.shape}")
        if self.colors.shape != self.positions.shape:
            raise ValidationError("colors must match positions in shape")
        if len(self.positions) < 1:
            raise ValidationError("no points")
        if not np.isfinite(self.positions).all():
            raise ValidationError("positions contain non-finite values")
        if self.colors.min() < 0.0 or self.colors.max() > 1.0:
            raise ValidationError("colors must lie in [0,1]")

    def __len__(self):
        return len(self.positions)


@dataclass
class SceneBounds:
    """World-space box that maps onto the unit cube under normalization."""

    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        self.min_corner = np.asarray(self.min_corner, dtype=np.float64)
        self.max_corner = np.asarray(self.max_corner, dtype=np.float64)
        if self.min_corner.shape != (3,) or self.max_corner.shape != (3,):
            raise ValidationError("bounds corners must be 3-vectors")
        if not (self.max_corner > self.min_corner).all():
            raise ValidationError("bounds must have positive extent on every axis")


@dataclass
class GridVolume:
    """Dense voxelization: a (C,S,S,S) tensor over the unit cube."""

    data: Tensor
    resolution: int

    @property
    def channels(self):
        return self.data.shape[0]


def load_point_cloud(path):
    """Parse a plain-text cloud: one "x y z r g b" line per point, '#' comments."""
    positions = []
    colors = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != 6:
                raise ParseError(f"expected 6 values, got {len(fields)}", line=lineno)
            try:
                values = [float(f) for f in fields]
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from exc
            if not all(np.isfinite(values)):
                raise ParseError("non-finite value", line=lineno)
            if any(c < 0.0 or c > 1.0 for c in values[3:]):
                raise ValidationError(f"line {lineno}: color out of [0,1] range")
            positions.append(values[:3])
            colors.append(values[3:])
    if not positions:
        raise ValidationError("no points")
    return PointCloud(np.array(positions), np.array(colors))


def save_point_cloud(path, pc):
    """Write the plain-text format with round-trip-exact decimal literals."""
    with open(path, "w", encoding="utf-8") as fh:
        for pos, col in zip(pc.positions, pc.colors):
            fh.write(" ".join(repr(float(v)) for v in (*pos, *col)) + "\n")


def normalize(pc, margin=0.0):
    """Map a cloud affinely into [margin, 1-margin]^3, preserving aspect ratio.

    The longest axis spans the target interval exactly; shorter axes are
    centered. Returns the normalized cloud and the world-space box that
    corresponds to the full unit cube (for converting cameras).
    """
    if not (0.0 <= margin < 0.5):
        raise ParameterError(f"margin must lie in [0, 0.5), got {margin}")
    lo = pc.positions.min(axis=0)
    hi = pc.positions.max(axis=0)
    extent = hi - lo
    longest = float(extent.max())
    if longest <= 0.0:
        raise ValidationError("degenerate cloud: zero extent on every axis")
    scale = (1.0 - 2.0 * margin) / longest
    center = (lo + hi) / 2.0
    mapped = 0.5 + (pc.positions - center) * scale
    mapped = np.clip(mapped, margin, 1.0 - margin)
    bounds = SceneBounds(center - 0.5 / scale, center + 0.5 / scale)
    return PointCloud(mapped, pc.colors.copy()), bounds


def voxelize(pc, resolution, occupancy_cap=OCCUPANCY_CAP):
    """Scatter a normalized cloud into a (4,S,S,S) grid.

    Each point lands in voxel floor(p*S) (top face clamps to S-1). Channels
    0-2 hold the mean color of the voxel's points, channel 3 holds
    min(1, count/occupancy_cap); empty voxels are all-zero.
    """
    if resolution < 2:
        raise ParameterError(f"grid resolution must be >= 2, got {resolution}")
    p = pc.positions
    if p.min() < 0.0 or p.max() > 1.0:
        raise ContractError("voxelize requires a normalized cloud with coordinates in [0,1]")
    s = int(resolution)
    idx = np.minimum((p * s).astype(np.int64), s - 1)
    flat = (idx[:, 0] * s + idx[:, 1]) * s + idx[:, 2]
    counts = np.bincount(flat, minlength=s**3).astype(np.float64)
    data = np.zeros((GRID_CHANNELS, s**3), dtype=np.float64)
    occupied = counts > 0
    for ch in range(3):
        sums = np.bincount(flat, weights=pc.colors[:, ch], minlength=s**3)
        data[ch, occupied] = sums[occupied] / counts[occupied]
    data[3] = np.minimum(1.0, counts / float(occupancy_cap))
    return GridVolume(Tensor(data.reshape(GRID_CHANNELS, s, s, s)), s)


def save_bounds(path, bounds):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(
            {"min": list(bounds.min_corner), "max": list(bounds.max_corner)},
            fh,
            sort_keys=True,
        )


def load_bounds(path):
    with open(path, "r", encoding="utf-8") as fh:
        blob = json.load(fh)
    return SceneBounds(np.array(blob["min"]), np.array(blob["max"]))
