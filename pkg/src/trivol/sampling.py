"""Depth sampling along rays: stratified bins plus importance resampling.

Randomness comes in as explicit uniform arrays so callers control the
stream: training draws from one sequential generator, while image rendering
derives a stateless stream per (seed, pixel) so any parallel schedule
produces bit-identical output.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

# splitmix64 constants
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix64(x):
    x = (x + _GAMMA).astype(np.uint64)
    x ^= x >> np.uint64(30)
    x *= _M1
    x ^= x >> np.uint64(27)
    x *= _M2
    x ^= x >> np.uint64(31)
    return x


def pixel_uniforms(seed, pixel_ids, stream, count):
    """(Q, count) uniforms in [0,1), a fixed function of (seed, pixel, stream, draw).

    Counter-based: no state, so chunked/threaded rendering is schedule-independent.
    """
    pixel_ids = np.asarray(pixel_ids, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = _mix64(np.uint64(seed) * np.uint64(0x9E3779B1) + np.uint64(stream))
        draws = np.arange(count, dtype=np.uint64)
        keys = _mix64(pixel_ids[:, None] * np.uint64(0xD1342543DE82EF95) + base)
        bits = _mix64(keys + draws[None, :] * np.uint64(0x2545F4914F6CDD1D))
    return (bits >> np.uint64(11)).astype(np.float64) * (2.0**-53)


@dataclass
class RaySampleBatch:
    """Per-ray ascending depths with forward differences (last delta runs to z_far)."""

    depths: np.ndarray  # (R, M)
    deltas: np.ndarray  # (R, M)

    @property
    def count(self):
        return self.depths.shape[1]

    def positions(self, origins, directions):
        return origins[:, None, :] + self.depths[..., None] * directions[:, None, :]


def _with_deltas(depths, z_far):
    deltas = np.empty_like(depths)
    deltas[:, :-1] = depths[:, 1:] - depths[:, :-1]
    deltas[:, -1] = z_far - depths[:, -1]
    return RaySampleBatch(depths, np.maximum(deltas, 0.0))


def stratified_depths(z_near, z_far, count, jitter_u=None):
    """Split [z_near, z_far] into ``count`` equal bins, one sample per bin.

    ``jitter_u`` (R, count) picks the position inside each bin; None means
    bin centers.
    """
    if count < 1:
        raise ParameterError(f"sample count must be >= 1, got {count}")
    z_near = np.asarray(z_near, dtype=np.float64)
    z_far = np.asarray(z_far, dtype=np.float64)
    offsets = (
        (np.arange(count) + 0.5) / count
        if jitter_u is None
        else (np.arange(count) + np.asarray(jitter_u)) / count
    )
    depths = z_near[:, None] + (z_far - z_near)[:, None] * offsets
    return _with_deltas(depths, z_far)


def _inverse_cdf_fine(z_near, z_far, weights, n_fine, u):
    """Fine depths via inverse transform on the coarse-bin histogram.

    Zero-weight rays fall back to stratified placement over the full range.
    """
    w = np.asarray(weights, dtype=np.float64)
    if (w < 0).any():
        raise ParameterError("importance weights must be non-negative")
    rays, n_coarse = w.shape
    span = z_far - z_near

    totals = w.sum(axis=1)
    degenerate = totals <= 0.0
    pdf = w / np.where(degenerate, 1.0, totals)[:, None]
    cdf = np.concatenate([np.zeros((rays, 1)), np.cumsum(pdf, axis=1)], axis=1)
    cdf[:, -1] = np.where(degenerate, cdf[:, -1], 1.0)

    fine = np.empty((rays, n_fine))
    grid = np.arange(n_fine)
    for r in range(rays):
        if degenerate[r]:
            fine[r] = z_near[r] + span[r] * (grid + u[r]) / n_fine
            continue
        bins = np.clip(np.searchsorted(cdf[r], u[r], side="right") - 1, 0, n_coarse - 1)
        width = cdf[r, bins + 1] - cdf[r, bins]
        frac = np.where(width > 1e-12, (u[r] - cdf[r, bins]) / np.where(width > 0, width, 1.0), 0.5)
        fine[r] = z_near[r] + span[r] * (bins + frac) / n_coarse
    return fine


def importance_depths(z_near, z_far, coarse_weights, n_fine, u, coarse_depths=None):
    """Importance-sample ``n_fine`` depths and merge them with the coarse ones.

    ``coarse_depths`` defaults to the coarse bin centers; pass the jittered
    depths of the actual coarse pass when there was one. ``u`` is (R, n_fine).
    """
    z_near = np.asarray(z_near, dtype=np.float64)
    z_far = np.asarray(z_far, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    n_coarse = np.asarray(coarse_weights).shape[1]
    fine = _inverse_cdf_fine(z_near, z_far, coarse_weights, n_fine, u)
    if coarse_depths is None:
        coarse_depths = stratified_depths(z_near, z_far, n_coarse).depths
    merged = np.sort(np.concatenate([coarse_depths, fine], axis=1), axis=1)
    return _with_deltas(merged, z_far)


# single-ray conveniences over the batch forms


def stratified_sample(ray, count, jitter=False, rng=None):
    """Stratified depths for one :class:`~trivol.camera.Ray`."""
    u = rng.uniform(size=(1, count)) if jitter and rng is not None else None
    return stratified_depths(np.array([ray.z_near]), np.array([ray.z_far]), count, u)


def importance_sample(ray, coarse_weights, n_fine, rng):
    """Fine depths for one ray, merged with the coarse bin centers."""
    w = np.atleast_2d(np.asarray(coarse_weights, dtype=np.float64))
    u = rng.uniform(size=(1, n_fine))
    return importance_depths(np.array([ray.z_near]), np.array([ray.z_far]), w, n_fine, u)
