"""Differentiable structured ops: 3D convolution, resampling, affine maps,
and trilinear grid sampling.

Convolution uses cross-correlation semantics (no kernel flip) and picks its
algorithm by transient size: one flat gemm over unfolded patches while the
patch buffer stays under a fixed cap, otherwise a shift-and-accumulate over
kernel offsets that keeps transients at activation size. Accumulation orders
are fixed everywhere so repeated runs are bit-identical.
"""

import numpy as np

from . import config
from .errors import NumericError, ParameterError, ShapeError
from .tensor import Tensor, accumulate, as_tensor, record


_IM2COL_BYTE_LIMIT = 256 * 1024 * 1024  # patch-buffer cap before the low-memory path


def _require_finite(arr, what):
    if config.validate_finite() and not np.isfinite(arr).all():
        raise NumericError(f"{what} contains non-finite values")


def conv3d(x, weight, bias=None, stride=1, padding=0):
    """Cross-correlate ``x`` (Cin,D,H,W) with ``weight`` (Cout,Cin,k,k,k).

    Output spatial size per axis is floor((dim + 2*padding - k)/stride) + 1.
    Differentiable w.r.t. input, weight, and bias.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if bias is not None:
        bias = as_tensor(bias)
    if x.ndim != 4 or weight.ndim != 5:
        raise ShapeError(f"conv3d expects (Cin,D,H,W) and (Cout,Cin,k,k,k), got {x.shape} and {weight.shape}")
    cout, cin, k, k2, k3 = weight.shape
    if not (k == k2 == k3):
        raise ShapeError(f"conv3d kernel must be cubic, got {weight.shape[2:]}")
    if k % 2 == 0:
        raise ParameterError(f"conv3d kernel size must be odd, got {k}")
    if padding < 0:
        raise ParameterError(f"conv3d padding must be >= 0, got {padding}")
    if stride < 1:
        raise ParameterError(f"conv3d stride must be >= 1, got {stride}")
    if x.shape[0] != cin:
        raise ShapeError(f"conv3d input has {x.shape[0]} channels, weight expects {cin}")
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(f"conv3d bias must have shape ({cout},), got {bias.shape}")
    spatial = x.shape[1:]
    out_spatial = tuple((d + 2 * padding - k) // stride + 1 for d in spatial)
    if any(d < 1 for d in out_spatial):
        raise ShapeError(
            f"conv3d spatial dims {spatial} too small for kernel {k} with padding {padding}"
        )
    _require_finite(x.data, "conv3d input")

    p = padding
    xp = np.pad(x.data, ((0, 0), (p, p), (p, p), (p, p))) if p else x.data
    do, ho, wo = out_spatial
    n_out = do * ho * wo

    # One flat gemm over unfolded patches when the patch buffer is modest;
    # otherwise 27 shifted tensordots, which keep transients at activation size.
    use_im2col = cin * k**3 * n_out * xp.itemsize <= _IM2COL_BYTE_LIMIT

    def offset_slice(a, b, c):
        return (
            slice(None),
            slice(a, a + stride * (do - 1) + 1, stride),
            slice(b, b + stride * (ho - 1) + 1, stride),
            slice(c, c + stride * (wo - 1) + 1, stride),
        )

    w2 = weight.data.reshape(cout, cin * k**3)
    if use_im2col:
        sc, sd, sh, sw = xp.strides
        patches = np.lib.stride_tricks.as_strided(
            xp,
            shape=(cin, k, k, k, do, ho, wo),
            strides=(sc, sd, sh, sw, sd * stride, sh * stride, sw * stride),
        )
        cols = np.ascontiguousarray(patches.reshape(cin * k**3, n_out))
        out_data = (w2 @ cols).reshape((cout,) + out_spatial)
    else:
        cols = None
        out_data = np.zeros((cout,) + out_spatial, dtype=xp.dtype)
        for a in range(k):
            for b2 in range(k):
                for c in range(k):
                    out_data += np.tensordot(
                        weight.data[:, :, a, b2, c], xp[offset_slice(a, b2, c)], axes=1
                    )
    if bias is not None:
        out_data += bias.data[:, None, None, None]

    inputs = (x, weight) if bias is None else (x, weight, bias)

    def backward_fn(g):
        g2 = g.reshape(cout, n_out)
        if bias is not None and bias.requires_grad:
            accumulate(bias, g2.sum(axis=1))
        if weight.requires_grad:
            if cols is not None:
                accumulate(weight, (g2 @ cols.T).reshape(weight.shape))
            else:
                dw = np.empty_like(weight.data)
                for a in range(k):
                    for b2 in range(k):
                        for c in range(k):
                            dw[:, :, a, b2, c] = np.tensordot(
                                g, xp[offset_slice(a, b2, c)], axes=([1, 2, 3], [1, 2, 3])
                            )
                accumulate(weight, dw)
        if x.requires_grad:
            dxp = np.zeros_like(xp)
            if cols is not None:
                dcols = (w2.T @ g2).reshape(cin, k, k, k, do, ho, wo)
                for a in range(k):
                    for b2 in range(k):
                        for c in range(k):
                            dxp[offset_slice(a, b2, c)] += dcols[:, a, b2, c]
            else:
                for a in range(k):
                    for b2 in range(k):
                        for c in range(k):
                            dxp[offset_slice(a, b2, c)] += np.tensordot(
                                weight.data[:, :, a, b2, c].T, g, axes=1
                            )
            if p:
                dxp = dxp[:, p:-p, p:-p, p:-p]
            accumulate(x, dxp)

    return record("conv3d", out_data, inputs, backward_fn)


def _as_factors(factor):
    if isinstance(factor, (tuple, list)):
        factors = tuple(int(f) for f in factor)
        if len(factors) != 3 or any(f < 1 for f in factors):
            raise ParameterError(f"per-axis factors must be three ints >= 1, got {factor}")
        return factors
    f = int(factor)
    if f < 2:
        raise ParameterError(f"scalar resampling factor must be >= 2, got {factor}")
    return (f, f, f)


def nearest_upsample3d(x, factor):
    """Replicate each voxel of ``x`` (C,D,H,W) ``factor`` times per axis.

    ``factor`` may be a single int (>= 2) or a per-axis triple (each >= 1).
    The gradient of each input voxel is the sum over its replicated block.
    """
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"nearest_upsample3d expects (C,D,H,W), got {x.shape}")
    f0, f1, f2 = _as_factors(factor)
    c, d, h, w = x.shape
    expanded = np.broadcast_to(
        x.data[:, :, None, :, None, :, None], (c, d, f0, h, f1, w, f2)
    )
    out_data = expanded.reshape(c, d * f0, h * f1, w * f2).copy()

    def backward_fn(g):
        accumulate(x, g.reshape(c, d, f0, h, f1, w, f2).sum(axis=(2, 4, 6)))

    return record("nearest_upsample3d", out_data, (x,), backward_fn)


def avg_pool3d(x, factor):
    """Mean over non-overlapping blocks; the stride-``factor`` downsampler."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"avg_pool3d expects (C,D,H,W), got {x.shape}")
    f0, f1, f2 = _as_factors(factor)
    c, d, h, w = x.shape
    if d % f0 or h % f1 or w % f2:
        raise ShapeError(f"avg_pool3d dims {x.shape[1:]} not divisible by factors {(f0, f1, f2)}")
    do, ho, wo = d // f0, h // f1, w // f2
    blocks = x.data.reshape(c, do, f0, ho, f1, wo, f2)
    out_data = blocks.mean(axis=(2, 4, 6))
    inv = 1.0 / (f0 * f1 * f2)

    def backward_fn(g):
        spread = np.broadcast_to(
            g[:, :, None, :, None, :, None] * inv, (c, do, f0, ho, f1, wo, f2)
        )
        accumulate(x, spread.reshape(c, d, h, w).copy())

    return record("avg_pool3d", out_data, (x,), backward_fn)


def subsample3d(x, factor):
    """Keep every ``factor``-th voxel per axis (inverse of nearest upsampling)."""
    x = as_tensor(x)
    f0, f1, f2 = _as_factors(factor)
    out_data = x.data[:, ::f0, ::f1, ::f2].copy()

    def backward_fn(g):
        full = np.zeros_like(x.data)
        full[:, ::f0, ::f1, ::f2] = g
        accumulate(x, full)

    return record("subsample3d", out_data, (x,), backward_fn)


def linear(x, weight, bias=None):
    """Affine map on the last axis: x (...,Din) @ weight (Dout,Din)^T + bias."""
    x, weight = as_tensor(x), as_tensor(weight)
    if bias is not None:
        bias = as_tensor(bias)
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(
            f"linear input has last dim {x.shape[-1]}, weight expects {weight.shape[1]}"
        )
    dout = weight.shape[0]
    if bias is not None and bias.shape != (dout,):
        raise ShapeError(f"linear bias must have shape ({dout},), got {bias.shape}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, x.shape[-1])
    y2 = x2 @ weight.data.T
    if bias is not None:
        y2 += bias.data
    out_data = y2.reshape(lead + (dout,))
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def backward_fn(g):
        g2 = g.reshape(-1, dout)
        if bias is not None and bias.requires_grad:
            accumulate(bias, g2.sum(axis=0))
        if weight.requires_grad:
            accumulate(weight, g2.T @ x2)
        if x.requires_grad:
            accumulate(x, (g2 @ weight.data).reshape(x.shape))

    return record("linear", out_data, inputs, backward_fn)


def scatter_rows(values, row_indices, template):
    """Place ``values`` (Q,...) at ``row_indices`` of a constant ``template`` copy.

    Rows not listed keep the template's content and receive no gradient.
    """
    values = as_tensor(values)
    template = np.asarray(template)
    row_indices = np.asarray(row_indices, dtype=np.int64)
    if len(np.unique(row_indices)) != len(row_indices):
        raise ParameterError("scatter_rows requires unique row indices")
    out_data = template.astype(values.data.dtype, copy=True)
    out_data[row_indices] = values.data

    def backward_fn(g):
        accumulate(values, g[row_indices])

    return record("scatter_rows", out_data, (values,), backward_fn)


def trilinear_sample(volume, points):
    """Trilinearly interpolate ``volume`` (F,A,B,C) at ``points`` (Q,3).

    The volume spans the unit cube with the cell-center convention: the
    center of cell ``i`` along an axis of ``n`` cells sits at ``(i+0.5)/n``.
    Queries between the outermost centers and the cube faces clamp to the
    edge cell; queries outside [0,1]^3 return the zero vector.

    Differentiable w.r.t. the volume values and, when tracked, the points.
    """
    volume = as_tensor(volume)
    pts = points if isinstance(points, Tensor) else Tensor(points)
    if volume.ndim != 4:
        raise ShapeError(f"trilinear_sample expects a (F,A,B,C) volume, got {volume.shape}")
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ShapeError(f"trilinear_sample expects (Q,3) points, got {pts.shape}")
    nf = volume.shape[0]
    dims = np.array(volume.shape[1:])
    cells = int(dims.prod())
    p = pts.data
    inside = ((p >= 0.0) & (p <= 1.0)).all(axis=1)

    u = p * dims - 0.5
    i_lo = np.floor(u).astype(np.int64)
    frac = u - i_lo
    lo = np.clip(i_lo, 0, dims - 1)
    hi = np.clip(i_lo + 1, 0, dims - 1)

    vol_cells = np.ascontiguousarray(volume.data.reshape(nf, cells).T)  # (cells, F)
    dtype = volume.data.dtype

    # all 8 corners at once: bit b of the corner id selects hi on axis b
    bits = np.array([[(corner >> axis) & 1 for axis in range(3)] for corner in range(8)])
    strides = np.array([dims[1] * dims[2], dims[2], 1])
    base = lo @ strides
    step = (hi - lo) * strides  # per-axis flat-index delta when picking hi
    flats = base[:, None] + step @ bits.T  # (Q, 8)
    axis_w = np.stack([1.0 - frac, frac], axis=2).astype(dtype)  # (Q, 3, 2)
    weights = (
        axis_w[:, 0, bits[:, 0]] * axis_w[:, 1, bits[:, 1]] * axis_w[:, 2, bits[:, 2]]
    )  # (Q, 8)
    weights *= inside[:, None].astype(dtype)
    gathered = vol_cells[flats]  # (Q, 8, F)
    out_data = (weights[:, None, :] @ gathered)[:, 0, :]

    def backward_fn(g):
        if volume.requires_grad:
            flat_ids = flats.ravel()
            dvol = np.empty((nf, cells), dtype=dtype)
            contrib = weights[:, :, None] * g[:, None, :]  # (Q, 8, F)
            for ch in range(nf):
                dvol[ch] = np.bincount(flat_ids, weights=contrib[:, :, ch].ravel(), minlength=cells)
            accumulate(volume, dvol.reshape(volume.shape))
        if pts.requires_grad:
            corner_dot = (gathered @ g[:, :, None])[:, :, 0]
            dp = np.empty_like(p)
            for axis in range(3):
                others = [a for a in range(3) if a != axis]
                other_w = (
                    axis_w[:, others[0], bits[:, others[0]]]
                    * axis_w[:, others[1], bits[:, others[1]]]
                )
                signs = np.where(bits[:, axis] == 1, 1.0, -1.0)
                dp[:, axis] = (corner_dot * other_w * signs).sum(axis=1) * dims[axis]
            dp *= inside[:, None]
            accumulate(pts, dp)

    return record("trilinear_sample", out_data, (volume, pts), backward_fn)
