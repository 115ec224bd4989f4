"""Radiance evaluation and volume rendering over the feature volumes.

A queried point's feature is the concatenation of one trilinear lookup per
slim volume. A small MLP conditioned on the encoded view direction maps the
feature to density and color; pixels are composited front to back with the
residual transmittance falling on a constant background.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import config
from .camera import pixel_rays
from .errors import ContractError, ShapeError
from .ops import linear, scatter_rows, trilinear_sample
from .sampling import importance_depths, pixel_uniforms, stratified_depths
from .tensor import Tensor, concat, exclusive_cumsum, no_grad
from .unet import FeatureTriVol, init_weight

DIRECTION_BANDS = 4
HEAD_WIDTH = 64

JITTER_STREAM = 0  # stateless stream ids for per-pixel randomness
FINE_STREAM = 1


def encode_direction(directions):
    """Frequency-encode unit directions: sin/cos of 2^k * pi * d, k < 4 -> (Q,24)."""
    d = np.asarray(directions, dtype=config.default_dtype())
    parts = []
    for band in range(DIRECTION_BANDS):
        scaled = (2.0**band) * np.pi * d
        parts.append(np.sin(scaled))
        parts.append(np.cos(scaled))
    return np.concatenate(parts, axis=-1)


def query_feature(tri, points):
    """Interpolate all three volumes at ``points`` (Q,3); concatenated (x,y,z)."""
    if not isinstance(tri, FeatureTriVol):
        raise ShapeError("query_feature expects a FeatureTriVol")
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    fx = trilinear_sample(tri.vx, pts)
    fy = trilinear_sample(tri.vy, pts)
    fz = trilinear_sample(tri.vz, pts)
    return concat([fx, fy, fz], axis=1)


@dataclass
class RadianceSample:
    sigma: float
    color: np.ndarray


class RadianceHead:
    """MLP g: (feature, direction) -> (density, color).

    Three relu layers of width 64 form the trunk; density is a softplus read
    of the trunk alone (so it cannot depend on the viewing direction), and
    color passes one more relu layer fed with the encoded direction before a
    sigmoid output.
    """

    def __init__(self, feature_dim, rng, width=HEAD_WIDTH, prefix="g."):
        self.feature_dim = feature_dim
        self.width = width
        self.params = {}
        dims = [feature_dim, width, width, width]
        for i in range(3):
            self._add("trunk%d" % i, dims[i + 1], dims[i], rng, prefix)
        self._add("sigma", 1, width, rng, prefix)
        dir_dim = 6 * DIRECTION_BANDS
        self._add("color_hidden", width, width + dir_dim, rng, prefix)
        self._add("color_out", 3, width, rng, prefix)

    def _add(self, name, dout, din, rng, prefix):
        self.params[name + ".weight"] = init_weight((dout, din), din, rng, prefix + name + ".weight")
        self.params[name + ".bias"] = init_weight((dout,), din, rng, prefix + name + ".bias")

    def _layer(self, name, x):
        return linear(x, self.params[name + ".weight"], self.params[name + ".bias"])

    def _trunk(self, features):
        if features.shape[-1] != self.feature_dim:
            raise ShapeError(
                f"feature dim {features.shape[-1]} != configured {self.feature_dim}"
            )
        h = features
        for i in range(3):
            h = self._layer("trunk%d" % i, h).relu()
        return h

    def forward(self, features, directions=None, encoded=None):
        """features: Tensor (Q,3F); directions: (Q,3) unit vectors (or their
        precomputed frequency encoding). Returns (sigma (Q,), color (Q,3))."""
        h = self._trunk(features)
        sigma = self._layer("sigma", h).softplus().reshape((features.shape[0],))
        if encoded is None:
            encoded = encode_direction(directions)
        ch = concat([h, Tensor(encoded)], axis=1)
        ch = self._layer("color_hidden", ch).relu()
        color = self._layer("color_out", ch).sigmoid()
        return sigma, color

    __call__ = forward

    def density(self, features):
        """sigma alone; reads only the trunk, so it never sees the direction."""
        h = self._trunk(features)
        return self._layer("sigma", h).softplus().reshape((features.shape[0],))

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


def composite_batch(sigma, colors, deltas, background):
    """Front-to-back compositing of (R,M) densities and (R,M,3) colors.

    T_i = exp(-sum_{j<i} sigma_j delta_j), alpha_i = 1 - exp(-sigma_i delta_i);
    the pixel is sum_i T_i alpha_i c_i plus residual transmittance times the
    background. Returns (color (R,3), opacity (R,), weights (R,M)).
    """
    if isinstance(sigma, Tensor) and (sigma.data < 0).any():
        raise ContractError("negative density reached the compositor")
    deltas = np.asarray(deltas, dtype=config.default_dtype())
    if (deltas < 0).any():
        raise ContractError("sample deltas must be non-negative")
    rays, m = deltas.shape
    sd = sigma * Tensor(deltas)
    trans = (exclusive_cumsum(sd, axis=1) * (-1.0)).exp()  # T_i
    alpha = ((sd * (-1.0)).exp() * (-1.0)) + 1.0  # 1 - exp(-sigma delta)
    weights = trans * alpha
    opacity = weights.sum(axis=1)
    residual = (sd.sum(axis=1) * (-1.0)).exp()
    bg = np.asarray(background, dtype=config.default_dtype()).reshape(1, 3)
    color = (weights.reshape((rays, m, 1)) * colors).sum(axis=1) + residual.reshape(
        (rays, 1)
    ) * Tensor(bg)
    return color, opacity, weights


def compositing_weights(sigma, deltas):
    """Plain-array T_i * alpha_i per sample (importance-sampling weights)."""
    sd = np.asarray(sigma) * np.asarray(deltas)
    exclusive = np.cumsum(sd, axis=1) - sd
    return np.exp(-exclusive) * (1.0 - np.exp(-sd))


def composite(samples, deltas, background=(0.0, 0.0, 0.0)):
    """Single-ray convenience over a list of :class:`RadianceSample`."""
    sigma = Tensor(np.array([[s.sigma for s in samples]]))
    colors = Tensor(np.array([[list(np.asarray(s.color)) for s in samples]]))
    deltas = np.asarray(deltas, dtype=np.float64).reshape(1, -1)
    color, opacity, _ = composite_batch(sigma, colors, deltas, background)
    return color.data[0], float(opacity.data[0])


@dataclass
class RenderSettings:
    m_coarse: int = 64
    m_fine: int = 64
    background: tuple = (1.0, 1.0, 1.0)
    jitter: bool = False
    seed: int = 0
    chunk: int = 1024


def _shade(tri, head, origins, dirs, sample_batch):
    """sigma (R,M) and color (R,M,3) tensors at every sample of the batch."""
    r, m = sample_batch.depths.shape
    pts = sample_batch.positions(origins, dirs).reshape(-1, 3)
    feats = query_feature(tri, pts)
    encoded = np.repeat(encode_direction(dirs), m, axis=0)
    sigma, color = head(feats, encoded=encoded)
    return sigma.reshape((r, m)), color.reshape((r, m, 3))


def _shade_density(tri, head, origins, dirs, sample_batch):
    """sigma (R,M) only; used for the coarse importance pass."""
    r, m = sample_batch.depths.shape
    pts = sample_batch.positions(origins, dirs).reshape(-1, 3)
    feats = query_feature(tri, pts)
    return head.density(feats).reshape((r, m))


def render_ray_batch(tri, head, rays, settings, jitter_u=None, fine_u=None, pixel_ids=None):
    """Differentiable colors (R,3) for a :class:`RayBatch`; misses get background.

    Uniform draws may be passed explicitly (training) or derived statelessly
    from ``(settings.seed, pixel id)`` when ``pixel_ids`` is given (rendering).
    The coarse pass only steers fine sampling, so it runs without gradients;
    the merged coarse+fine pass produces the returned color.
    """
    n = len(rays)
    bg = np.asarray(settings.background, dtype=config.default_dtype())
    template = np.broadcast_to(bg, (n, 3))
    hit = np.flatnonzero(rays.hit)
    if hit.size == 0:
        return Tensor(template.copy())

    origins = rays.origins[hit]
    dirs = rays.directions[hit]
    z_near = rays.z_near[hit]
    z_far = rays.z_far[hit]

    if settings.jitter and jitter_u is None:
        if pixel_ids is None:
            raise ContractError("jittered rendering needs explicit uniforms or pixel ids")
        jitter_u = pixel_uniforms(settings.seed, pixel_ids[hit], JITTER_STREAM, settings.m_coarse)
    elif jitter_u is not None:
        jitter_u = np.asarray(jitter_u)[hit] if len(jitter_u) == n else jitter_u
    if settings.m_fine > 0 and fine_u is None:
        if pixel_ids is None:
            raise ContractError("fine sampling needs explicit uniforms or pixel ids")
        fine_u = pixel_uniforms(settings.seed, pixel_ids[hit], FINE_STREAM, settings.m_fine)
    elif fine_u is not None and settings.m_fine > 0:
        fine_u = np.asarray(fine_u)[hit] if len(fine_u) == n else fine_u

    coarse = stratified_depths(z_near, z_far, settings.m_coarse, jitter_u if settings.jitter else None)
    batch = coarse
    if settings.m_fine > 0:
        with no_grad():
            sigma = _shade_density(tri, head, origins, dirs, coarse)
            weights = compositing_weights(sigma.data, coarse.deltas)
        batch = importance_depths(z_near, z_far, weights, settings.m_fine, fine_u, coarse.depths)
    sigma, color = _shade(tri, head, origins, dirs, batch)
    final, _, _ = composite_batch(sigma, color, batch.deltas, bg)
    if hit.size == n:
        return final
    return scatter_rows(final, hit, template)


def render_pixels(tri, head, cam, pixel_ids, settings):
    """Colors for arbitrary flat pixel ids of one camera (inference, no tape)."""
    with no_grad():
        rays = pixel_rays(cam, pixel_ids)
        out = render_ray_batch(tri, head, rays, settings, pixel_ids=np.asarray(pixel_ids))
    return out.data


def render_pixel(tri, head, cam, px, py, settings):
    """Color of a single pixel; identical to the batched result for that pixel."""
    return render_pixels(tri, head, cam, np.array([py * cam.width + px]), settings)[0]


def render_view(tri, head, cam, settings):
    """Full (H,W,3) image. Pixels are processed in fixed-size chunks; worker
    threads (TRIVOL_THREADS) only spread chunks, so output is schedule-independent."""
    total = cam.pixel_count
    out = np.empty((total, 3), dtype=config.default_dtype())
    chunks = [
        np.arange(lo, min(lo + settings.chunk, total))
        for lo in range(0, total, settings.chunk)
    ]

    def run(ids):
        out[ids] = render_pixels(tri, head, cam, ids, settings)

    workers = config.thread_count()
    # enter no-grad before fanning out so worker-local toggles are no-ops
    with no_grad():
        if workers > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(run, chunks))
        else:
            for ids in chunks:
                run(ids)
    return out.reshape(cam.height, cam.width, 3)
