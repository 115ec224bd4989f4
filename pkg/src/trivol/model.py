"""The full renderer model: three volume decoders plus the radiance head.

Bundles the grid/grouping geometry with the learned parameters so a single
checkpoint file restores an equivalent model. Parameter names carry the
prefixes ``Dx.``, ``Dy.``, ``Dz.`` and ``g.``.
"""

from dataclasses import dataclass

import numpy as np

from . import checkpoint
from .errors import ConfigurationError
from .grouping import encode_trivol
from .pointcloud import GRID_CHANNELS, voxelize
from .renderer import RadianceHead, render_view
from .tensor import no_grad
from .unet import UNet3D, UNet3DConfig, decode


@dataclass
class ModelConfig:
    resolution: int = 32  # S
    groups: int = 4  # G
    features: int = 8  # F
    unet_depth: int = 2
    unet_base_width: int = 16
    halve_grouped_axis: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.resolution % self.groups != 0:
            raise ConfigurationError(
                f"resolution {self.resolution} not divisible by groups {self.groups}"
            )

    @property
    def group_size(self):
        return self.resolution // self.groups

    @property
    def grouped_channels(self):
        return GRID_CHANNELS * self.group_size


class RenderModel:
    """Decoders Dx/Dy/Dz and head g, built deterministically from a seed."""

    def __init__(self, cfg):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        self.decoders = []
        for axis, name in enumerate(("Dx", "Dy", "Dz")):
            unet_cfg = UNet3DConfig(
                in_channels=cfg.grouped_channels,
                out_channels=cfg.features,
                base_width=cfg.unet_base_width,
                depth=cfg.unet_depth,
                grouped_axis=axis,
                halve_grouped_axis=cfg.halve_grouped_axis,
            )
            self.decoders.append(UNet3D(unet_cfg, rng, prefix=name + "."))
        self.head = RadianceHead(3 * cfg.features, rng, prefix="g.")

    @property
    def dx(self):
        return self.decoders[0]

    @property
    def dy(self):
        return self.decoders[1]

    @property
    def dz(self):
        return self.decoders[2]

    def parameters(self):
        params = []
        for net in self.decoders:
            params.extend(net.parameters())
        params.extend(self.head.parameters())
        return params

    def named_parameters(self):
        named = {}
        for name, net in zip(("Dx", "Dy", "Dz"), self.decoders):
            for key, t in net.params.items():
                named[f"{name}.{key}"] = t
        for key, t in self.head.params.items():
            named[f"g.{key}"] = t
        return named

    def astype(self, dtype):
        """Cast every parameter in place (profile switches)."""
        for t in self.named_parameters().values():
            t.data = t.data.astype(dtype)
        return self

    def state_dict(self):
        return {name: t.data for name, t in self.named_parameters().items()}

    def load_state_dict(self, state):
        for name, t in self.named_parameters().items():
            arr = np.asarray(state[name])
            if tuple(arr.shape) != t.shape:
                raise ConfigurationError(
                    f"{name}: checkpoint shape {arr.shape} != model shape {t.shape}"
                )
            t.data = arr.astype(t.data.dtype)

    # -- scene processing ------------------------------------------------------

    def encode_cloud(self, pc):
        """Voxelize and group a normalized cloud (no learned parameters)."""
        grid = voxelize(pc, self.cfg.resolution)
        return encode_trivol(grid, self.cfg.groups)

    def feature_volumes(self, initial):
        """Run the three decoders; differentiable."""
        return decode(initial, self.dx, self.dy, self.dz)

    def render_image(self, pc, cam, settings):
        """Full pipeline: voxelize -> group -> decode -> render every pixel."""
        initial = self.encode_cloud(pc)
        with no_grad():
            tri = self.feature_volumes(initial)
        return render_view(tri, self.head, cam, settings)

    # -- persistence -------------------------------------------------------------

    def save(self, path):
        state = self.state_dict()
        state["config"] = _config_vector(self.cfg)
        checkpoint.save_tensors(path, state)

    @classmethod
    def load(cls, path):
        state = checkpoint.load_tensors(path)
        cfg = _config_from_vector(state.pop("config"))
        model = cls(cfg)
        model.load_state_dict(state)
        return model


def _config_vector(cfg):
    return np.array(
        [
            cfg.resolution,
            cfg.groups,
            cfg.features,
            cfg.unet_depth,
            cfg.unet_base_width,
            1.0 if cfg.halve_grouped_axis else 0.0,
            cfg.seed,
        ],
        dtype=np.float64,
    )


def _config_from_vector(vec):
    vals = [int(v) for v in np.asarray(vec).reshape(-1)]
    return ModelConfig(
        resolution=vals[0],
        groups=vals[1],
        features=vals[2],
        unet_depth=vals[3],
        unet_base_width=vals[4],
        halve_grouped_axis=bool(vals[5]),
        seed=vals[6],
    )
