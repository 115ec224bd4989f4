"""Cloud I/O, normalization geometry, and voxelization against counting oracles."""

import numpy as np
import pytest

from trivol.errors import ContractError, ParameterError, ParseError, ValidationError
from trivol.pointcloud import (
    PointCloud,
    load_point_cloud,
    normalize,
    save_point_cloud,
    voxelize,
)


class TestLoad:
    def test_single_red_point(self, tmp_path):
        path = tmp_path / "p.txt"
        path.write_text("0 0 0 1 0 0\n")
        pc = load_point_cloud(path)
        assert len(pc) == 1
        assert np.array_equal(pc.positions[0], [0, 0, 0])
        assert np.array_equal(pc.colors[0], [1, 0, 0])

    def test_comments_and_blank_lines(self, tmp_path):
        path = tmp_path / "p.txt"
        path.write_text("# header\n\n0.5 0.5 0.5 0.1 0.2 0.3  # trailing\n")
        assert len(load_point_cloud(path)) == 1

    def test_empty_file_reports_no_points(self, tmp_path):
        path = tmp_path / "p.txt"
        path.write_text("# nothing\n")
        with pytest.raises(ValidationError, match="no points"):
            load_point_cloud(path)

    def test_malformed_line_carries_line_number(self, tmp_path):
        path = tmp_path / "p.txt"
        path.write_text("0 0 0 1 0 0\n1 2 3 4\n")
        with pytest.raises(ParseError, match="line 2"):
            load_point_cloud(path)

    def test_color_out_of_range(self, tmp_path):
        path = tmp_path / "p.txt"
        path.write_text("0 0 0 2.0 0 0\n")
        with pytest.raises(ValidationError):
            load_point_cloud(path)

    def test_large_cloud_round_trips_bit_identically(self, tmp_path, rng):
        pc = PointCloud(rng.standard_normal((100_000, 3)) * 37.5, rng.uniform(size=(100_000, 3)))
        path = tmp_path / "big.txt"
        save_point_cloud(path, pc)
        loaded = load_point_cloud(path)
        assert np.array_equal(loaded.positions, pc.positions)
        assert np.array_equal(loaded.colors, pc.colors)


class TestNormalize:
    def test_corner_map(self):
        pc = PointCloud(np.array([[0.0, 0, 0], [2.0, 2, 2]]), np.zeros((2, 3)))
        out, bounds = normalize(pc, margin=0.0)
        assert np.allclose(out.positions, [[0, 0, 0], [1, 1, 1]])
        assert np.allclose(bounds.min_corner, [0, 0, 0])
        assert np.allclose(bounds.max_corner, [2, 2, 2])

    def test_degenerate_cloud_rejected(self):
        pc = PointCloud(np.tile([[1.0, 2.0, 3.0]], (5, 1)), np.zeros((5, 3)))
        with pytest.raises(ValidationError):
            normalize(pc)

    def test_margin_validated(self, rng):
        pc = PointCloud(rng.standard_normal((4, 3)), np.zeros((4, 3)))
        with pytest.raises(ParameterError):
            normalize(pc, margin=0.5)

    def test_random_cloud_fits_box_and_longest_axis_spans(self, rng):
        margin = 0.1
        for _ in range(10):
            pc = PointCloud(rng.standard_normal((200, 3)) * rng.uniform(0.1, 10, 3), np.zeros((200, 3)))
            out, _ = normalize(pc, margin)
            assert out.positions.min() >= margin - 1e-12
            assert out.positions.max() <= 1 - margin + 1e-12
            extents = out.positions.max(axis=0) - out.positions.min(axis=0)
            assert np.isclose(extents.max(), 1 - 2 * margin, atol=1e-12)

    def test_idempotent(self, rng):
        pc = PointCloud(rng.standard_normal((50, 3)) * 4, np.zeros((50, 3)))
        once, _ = normalize(pc, 0.05)
        twice, _ = normalize(once, 0.05)
        assert np.allclose(once.positions, twice.positions, atol=1e-12)


def test_bounds_file_round_trip(tmp_path, rng):
    from trivol.pointcloud import load_bounds, save_bounds

    pc = PointCloud(rng.standard_normal((40, 3)) * 3, np.zeros((40, 3)))
    _, bounds = normalize(pc, 0.1)
    path = tmp_path / "bounds.json"
    save_bounds(path, bounds)
    loaded = load_bounds(path)
    assert np.allclose(loaded.min_corner, bounds.min_corner)
    assert np.allclose(loaded.max_corner, bounds.max_corner)


class TestVoxelize:
    def test_single_point_assignment(self):
        eps = 1e-6
        pc = PointCloud(np.array([[0.5 + eps] * 3]), np.array([[1.0, 0, 0]]))
        grid = voxelize(pc, 2)
        data = grid.data.data
        assert np.allclose(data[:, 1, 1, 1], [1, 0, 0, 0.125])
        data[:, 1, 1, 1] = 0
        assert np.all(data == 0)

    def test_two_points_mean_color(self):
        pc = PointCloud(
            np.array([[0.1, 0.1, 0.1], [0.12, 0.12, 0.12]]),
            np.array([[1.0, 0, 0], [0.0, 0, 1.0]]),
        )
        data = voxelize(pc, 4).data.data
        assert np.allclose(data[:3, 0, 0, 0], [0.5, 0, 0.5])
        assert np.isclose(data[3, 0, 0, 0], 0.25)

    def test_counts_match_hash_map_oracle(self, rng):
        n, s = 10_000, 8
        pc = PointCloud(rng.uniform(size=(n, 3)), rng.uniform(size=(n, 3)))
        grid = voxelize(pc, s)
        occupancy = grid.data.data[3] * 8.0  # counts below the cap
        oracle = {}
        for p in pc.positions:
            key = tuple(np.minimum((p * s).astype(int), s - 1))
            oracle[key] = oracle.get(key, 0) + 1
        recovered = {
            idx: occupancy[idx] for idx in zip(*np.nonzero(occupancy))
        }
        total = 0
        for key, count in oracle.items():
            expected = min(count, 8) / 8.0 * 8.0
            assert np.isclose(recovered[key], expected)
            total += count
        assert total == n

    def test_boundary_coordinate_clamps_to_last_voxel(self):
        pc = PointCloud(np.array([[1.0, 1.0, 1.0]]), np.array([[0.5, 0.5, 0.5]]))
        data = voxelize(pc, 4).data.data
        assert data[3, 3, 3, 3] > 0

    def test_unnormalized_input_is_contract_error(self):
        pc = PointCloud(np.array([[1.5, 0.5, 0.5]]), np.array([[0.5, 0.5, 0.5]]))
        with pytest.raises(ContractError):
            voxelize(pc, 4)

    def test_resolution_minimum(self):
        pc = PointCloud(np.array([[0.5, 0.5, 0.5]]), np.array([[0.5, 0.5, 0.5]]))
        with pytest.raises(ParameterError):
            voxelize(pc, 1)

    def test_permutation_invariant(self, rng):
        n = 500
        pos = rng.uniform(size=(n, 3))
        col = rng.uniform(size=(n, 3))
        perm = rng.permutation(n)
        a = voxelize(PointCloud(pos, col), 8).data.data
        b = voxelize(PointCloud(pos[perm], col[perm]), 8).data.data
        assert np.allclose(a, b, atol=1e-12)

    def test_occupied_voxel_count_bounded(self, rng):
        n, s = 300, 16
        pc = PointCloud(rng.uniform(size=(n, 3)), rng.uniform(size=(n, 3)))
        occupied = (voxelize(pc, s).data.data[3] > 0).sum()
        assert occupied <= min(n, s**3)
