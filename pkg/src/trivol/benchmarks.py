"""Decoder cost comparison: slim triple volumes vs a dense voxel UNet.

The dense baseline exists only for this harness; it reuses the same UNet
implementation on the raw (C,S,S,S) grid with every axis downsampled. Peak
transient memory is taken from tracemalloc (numpy routes its allocations
through it) and wall time from a warm repeated forward.
"""

import csv
import time
import tracemalloc
from dataclasses import dataclass

import numpy as np

from .grouping import dense_cell_count, trivol_cell_count
from .pointcloud import GRID_CHANNELS
from .tensor import Tensor, no_grad
from .unet import UNet3D, UNet3DConfig


@dataclass
class DecoderCost:
    cells: int
    peak_bytes: int
    seconds: float


def _measure(fn, repeats=1):
    fn()  # warmup: first call pays allocator and thread-pool startup
    tracemalloc.start()
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    elapsed = (time.perf_counter() - t0) / repeats
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    return peak, elapsed


def trivol_decoder_cost(resolution, groups, features=8, base_width=16, depth=2, seed=0, repeats=1):
    """Forward cost of the three slim-volume decoders at (S, G)."""
    s, g = int(resolution), int(groups)
    n = s // g
    rng = np.random.default_rng(seed)
    shapes = [(GRID_CHANNELS * n, g, s, s), (GRID_CHANNELS * n, s, g, s), (GRID_CHANNELS * n, s, s, g)]
    nets = []
    inputs = []
    for axis, shape in enumerate(shapes):
        cfg = UNet3DConfig(
            in_channels=GRID_CHANNELS * n,
            out_channels=features,
            base_width=base_width,
            depth=depth,
            grouped_axis=axis,
        )
        nets.append(UNet3D(cfg, rng))
        inputs.append(Tensor(rng.standard_normal(shape) * 0.1))

    def forward():
        with no_grad():
            for net, x in zip(nets, inputs):
                net(x)

    peak, elapsed = _measure(forward, repeats)
    return DecoderCost(trivol_cell_count(s, g), peak, elapsed)


def dense_decoder_cost(resolution, features=8, base_width=16, depth=2, seed=0, repeats=1):
    """Forward cost of one dense UNet on the full (C,S,S,S) grid."""
    s = int(resolution)
    rng = np.random.default_rng(seed)
    cfg = UNet3DConfig(
        in_channels=GRID_CHANNELS,
        out_channels=features,
        base_width=base_width,
        depth=depth,
        grouped_axis=None,
    )
    net = UNet3D(cfg, rng)
    x = Tensor(rng.standard_normal((GRID_CHANNELS, s, s, s)) * 0.1)

    def forward():
        with no_grad():
            net(x)

    peak, elapsed = _measure(forward, repeats)
    return DecoderCost(dense_cell_count(s), peak, elapsed)


BENCH_COLUMNS = [
    "S",
    "G",
    "trivol_cells",
    "dense_cells",
    "trivol_peak_bytes",
    "dense_peak_bytes",
    "trivol_seconds",
    "dense_seconds",
]


def run_bench(s_values, g_values, out_path, measure=False, base_width=16, depth=2):
    """Sweep (S, G); always reports cell counts, optionally measured costs."""
    rows = []
    for s in s_values:
        dense = dense_decoder_cost(s, base_width=base_width, depth=depth) if measure else None
        for g in g_values:
            if s % g != 0:
                continue
            row = {
                "S": s,
                "G": g,
                "trivol_cells": trivol_cell_count(s, g),
                "dense_cells": dense_cell_count(s),
                "trivol_peak_bytes": "",
                "dense_peak_bytes": "",
                "trivol_seconds": "",
                "dense_seconds": "",
            }
            if measure:
                tri = trivol_decoder_cost(s, g, base_width=base_width, depth=depth)
                row.update(
                    trivol_peak_bytes=tri.peak_bytes,
                    dense_peak_bytes=dense.peak_bytes,
                    trivol_seconds=repr(tri.seconds),
                    dense_seconds=repr(dense.seconds),
                )
            rows.append(row)
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return rows
