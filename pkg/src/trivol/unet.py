"""3D UNet decoders that turn each slim grouped volume into a feature volume.

Encoder levels run conv3x3 -> relu -> conv3x3 -> relu, then a stride-2
average-pool on the two full-resolution axes (which must divide by 2^depth).
The short grouped axis keeps its size: it can be as small as a few slabs,
and cross-slab context is already mixed into the channels by the grouping.
Setting ``halve_grouped_axis`` pools it too, halving while even so it never
drops below one cell. The decoder mirrors with nearest-neighbor upsampling
and channel-concatenated skips, ending in a 1x1x1 projection. Spatial shape
is preserved end to end so volume coordinates stay aligned with the unit
cube.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ShapeError
from .grouping import InitialTriVol
from .ops import avg_pool3d, conv3d, nearest_upsample3d
from .tensor import Tensor, concat, parameter


@dataclass
class UNet3DConfig:
    in_channels: int
    out_channels: int
    base_width: int = 16
    depth: int = 2
    kernel: int = 3
    grouped_axis: int | None = None  # spatial axis (0..2) exempt from divisibility
    halve_grouped_axis: bool = False

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigurationError(f"depth must be >= 1, got {self.depth}")
        if self.in_channels < 1 or self.out_channels < 1 or self.base_width < 1:
            raise ConfigurationError("channel counts and base width must be positive")
        if self.kernel != 3:
            raise ConfigurationError("only kernel size 3 is supported")

    def width(self, level):
        return self.base_width * (2**level)


def init_weight(shape, fan_in, rng, name):
    bound = float(np.sqrt(1.0 / fan_in))
    return parameter(rng.uniform(-bound, bound, size=shape), name)


class UNet3D:
    """One decoder network; weights are leaf tensors owned by this object."""

    def __init__(self, cfg, rng, prefix=""):
        self.cfg = cfg
        self.prefix = prefix
        self.params = {}
        k = cfg.kernel
        ch = cfg.in_channels
        for level in range(cfg.depth):
            w = cfg.width(level)
            self._add_conv("enc%d.conv1" % level, ch, w, k, rng)
            self._add_conv("enc%d.conv2" % level, w, w, k, rng)
            ch = w
        bw = cfg.width(cfg.depth)
        self._add_conv("bottleneck.conv1", ch, bw, k, rng)
        self._add_conv("bottleneck.conv2", bw, bw, k, rng)
        ch = bw
        for level in reversed(range(cfg.depth)):
            w = cfg.width(level)
            self._add_conv("dec%d.conv1" % level, ch + w, w, k, rng)
            self._add_conv("dec%d.conv2" % level, w, w, k, rng)
            ch = w
        self._add_conv("head", ch, cfg.out_channels, 1, rng)

    def _add_conv(self, name, cin, cout, k, rng):
        fan_in = cin * k**3
        self.params[name + ".weight"] = init_weight((cout, cin, k, k, k), fan_in, rng, self.prefix + name + ".weight")
        self.params[name + ".bias"] = init_weight((cout,), fan_in, rng, self.prefix + name + ".bias")

    def _conv(self, name, x, padding):
        return conv3d(x, self.params[name + ".weight"], self.params[name + ".bias"], padding=padding)

    def _level_factors(self, spatial):
        """Per-axis pool factor for one level given the current spatial dims."""
        factors = []
        for axis, dim in enumerate(spatial):
            if axis == self.cfg.grouped_axis and not self.cfg.halve_grouped_axis:
                factors.append(1)
            else:
                factors.append(2 if dim % 2 == 0 and dim >= 2 else 1)
        return tuple(factors)

    def check_input_shape(self, shape):
        if shape[0] != self.cfg.in_channels:
            raise ShapeError(f"input has {shape[0]} channels, expected {self.cfg.in_channels}")
        divisor = 2**self.cfg.depth
        for axis, dim in enumerate(shape[1:]):
            if axis == self.cfg.grouped_axis:
                continue
            if dim % divisor != 0:
                raise ConfigurationError(
                    f"spatial axis {axis} of size {dim} is not divisible by 2^depth = {divisor}"
                )

    def forward(self, x):
        """(in_channels, A, B, C) -> (out_channels, A, B, C)."""
        if not isinstance(x, Tensor):
            x = Tensor(x)
        self.check_input_shape(x.shape)
        h = x
        skips = []
        factors = []
        for level in range(self.cfg.depth):
            h = self._conv("enc%d.conv1" % level, h, 1).relu()
            h = self._conv("enc%d.conv2" % level, h, 1).relu()
            skips.append(h)
            f = self._level_factors(h.shape[1:])
            factors.append(f)
            h = avg_pool3d(h, f)
        h = self._conv("bottleneck.conv1", h, 1).relu()
        h = self._conv("bottleneck.conv2", h, 1).relu()
        for level in reversed(range(self.cfg.depth)):
            h = nearest_upsample3d(h, factors[level])
            h = concat([h, skips[level]], axis=0)
            h = self._conv("dec%d.conv1" % level, h, 1).relu()
            h = self._conv("dec%d.conv2" % level, h, 1).relu()
        return self._conv("head", h, 0)

    __call__ = forward

    def parameters(self):
        return list(self.params.values())

    def state_dict(self):
        return {name: t.data for name, t in self.params.items()}

    def load_state_dict(self, state):
        for name, t in self.params.items():
            arr = state[name]
            if tuple(arr.shape) != t.shape:
                raise ShapeError(f"{name}: checkpoint shape {arr.shape} != model shape {t.shape}")
            t.data = np.asarray(arr, dtype=t.data.dtype)


@dataclass
class FeatureTriVol:
    """Decoded slim volumes: (F,G,S,S), (F,S,G,S), (F,S,S,G)."""

    vx: Tensor
    vy: Tensor
    vz: Tensor

    @property
    def feature_channels(self):
        return self.vx.shape[0]

    def detach(self):
        return FeatureTriVol(self.vx.detach(), self.vy.detach(), self.vz.detach())


def decode(initial, dx, dy, dz):
    """Run the three independent (non-weight-sharing) decoders."""
    if not isinstance(initial, InitialTriVol):
        raise ShapeError("decode expects an InitialTriVol")
    return FeatureTriVol(vx=dx(initial.vx), vy=dy(initial.vy), vz=dz(initial.vz))
