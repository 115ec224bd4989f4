"""Structured ops against independent oracles: loop-nest conv, block rules."""

import numpy as np
import pytest

from trivol.errors import NumericError, ParameterError, ShapeError
from trivol.gradcheck import finite_difference_check, max_rel_err
from trivol.ops import (
    avg_pool3d,
    conv3d,
    linear,
    nearest_upsample3d,
    scatter_rows,
    subsample3d,
    trilinear_sample,
)
from trivol.tensor import Tensor, backward, parameter

TOL = 1e-4


def conv3d_loop_oracle(x, w, b, stride=1, padding=0):
    """Direct seven-nested-loop cross-correlation."""
    cin, d, h, wd = x.shape
    cout, _, k, _, _ = w.shape
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding), (padding, padding)))
    do = (d + 2 * padding - k) // stride + 1
    ho = (h + 2 * padding - k) // stride + 1
    wo = (wd + 2 * padding - k) // stride + 1
    out = np.zeros((cout, do, ho, wo))
    for co in range(cout):
        for ci in range(cin):
            for i in range(do):
                for j in range(ho):
                    for l in range(wo):
                        for a in range(k):
                            for bb in range(k):
                                for c in range(k):
                                    out[co, i, j, l] += (
                                        w[co, ci, a, bb, c]
                                        * xp[ci, i * stride + a, j * stride + bb, l * stride + c]
                                    )
        out[co] += b[co]
    return out


class TestConv3d:
    def test_zero_input_gives_bias(self, rng):
        w = Tensor(rng.standard_normal((3, 2, 3, 3, 3)))
        b = Tensor(np.array([1.5, -2.0, 0.25]))
        out = conv3d(Tensor(np.zeros((2, 4, 4, 4))), w, b, padding=1)
        for ch, bias in enumerate(b.data):
            assert np.allclose(out.data[ch], bias)

    def test_scalar_product(self):
        out = conv3d(Tensor(np.full((1, 1, 1, 1), 2.0)), Tensor(np.full((1, 1, 1, 1, 1), 3.0)), Tensor(np.zeros(1)))
        assert np.isclose(out.data.item(), 6.0)

    def test_matches_loop_oracle_random_case(self, rng):
        x = rng.standard_normal((2, 4, 4, 4))
        w = rng.standard_normal((3, 2, 3, 3, 3))
        b = rng.standard_normal(3)
        out = conv3d(Tensor(x), Tensor(w), Tensor(b), padding=1)
        assert np.allclose(out.data, conv3d_loop_oracle(x, w, b, padding=1), atol=1e-10)

    @pytest.mark.parametrize("shape,k,stride,padding", [
        ((1, 3, 3, 3), 1, 1, 0),
        ((2, 5, 4, 3), 3, 1, 1),
        ((3, 5, 5, 5), 3, 2, 1),
        ((1, 4, 5, 4), 3, 1, 2),
        ((2, 5, 5, 5), 5, 1, 2),
    ])
    def test_matches_loop_oracle_small_shapes(self, rng, shape, k, stride, padding):
        cout = 2
        x = rng.standard_normal(shape)
        w = rng.standard_normal((cout, shape[0], k, k, k))
        b = rng.standard_normal(cout)
        out = conv3d(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=padding)
        oracle = conv3d_loop_oracle(x, w, b, stride=stride, padding=padding)
        assert out.shape == oracle.shape
        assert np.allclose(out.data, oracle, atol=1e-10)

    def test_output_shape_formula(self, rng):
        out = conv3d(Tensor(rng.standard_normal((1, 8, 6, 7))), Tensor(rng.standard_normal((2, 1, 3, 3, 3))), None, stride=2, padding=1)
        assert out.shape == (2, 4, 3, 4)

    def test_gradients(self, rng):
        x = parameter(rng.standard_normal((2, 4, 4, 4)), "x")
        w = parameter(rng.standard_normal((3, 2, 3, 3, 3)) * 0.3, "w")
        b = parameter(rng.standard_normal(3) * 0.1, "b")
        build = lambda: (conv3d(x, w, b, padding=1) ** 2).sum()
        assert max_rel_err(finite_difference_check(build, [x, w, b], 40)) < TOL

    def test_shape_and_parameter_errors(self, rng):
        x = Tensor(rng.standard_normal((2, 4, 4, 4)))
        w = Tensor(rng.standard_normal((3, 2, 3, 3, 3)))
        with pytest.raises(ShapeError):
            conv3d(Tensor(rng.standard_normal((1, 4, 4, 4))), w, None)
        with pytest.raises(ParameterError):
            conv3d(x, Tensor(rng.standard_normal((3, 2, 2, 2, 2))), None)
        with pytest.raises(ParameterError):
            conv3d(x, w, None, padding=-1)
        with pytest.raises(ShapeError):
            conv3d(Tensor(rng.standard_normal((2, 1, 1, 1))), w, None)

    def test_non_finite_input_rejected(self, rng):
        x = np.ones((1, 3, 3, 3))
        x[0, 1, 1, 1] = np.nan
        with pytest.raises(NumericError):
            conv3d(Tensor(x), Tensor(np.ones((1, 1, 3, 3, 3))), None, padding=1)


class TestResampling:
    def test_upsample_replicates(self):
        out = nearest_upsample3d(Tensor(np.full((1, 1, 1, 1), 5.0)), 2)
        assert out.shape == (1, 2, 2, 2)
        assert np.all(out.data == 5.0)

    def test_upsample_backward_is_block_sum(self):
        u = parameter(np.ones((1, 2, 2, 2)), "u")
        backward(nearest_upsample3d(u, 2).sum())
        assert np.all(u.grad == 8.0)

    def test_upsample_then_subsample_is_identity(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 4, 2)))
        assert np.array_equal(subsample3d(nearest_upsample3d(x, 3), 3).data, x.data)

    def test_factor_below_two_rejected(self):
        with pytest.raises(ParameterError):
            nearest_upsample3d(Tensor(np.ones((1, 2, 2, 2))), 1)

    def test_avg_pool_means_blocks(self):
        x = np.arange(8.0).reshape(1, 2, 2, 2)
        out = avg_pool3d(Tensor(x), (2, 2, 2))
        assert np.isclose(out.data.item(), x.mean())

    def test_pool_gradients(self, rng):
        u = parameter(rng.standard_normal((2, 2, 4, 2)), "u")
        build = lambda: (avg_pool3d(u, (2, 2, 1)) ** 2).sum()
        assert max_rel_err(finite_difference_check(build, [u], 15)) < TOL


class TestLinear:
    def test_identity(self, rng):
        x = Tensor(rng.standard_normal((4, 3)))
        out = linear(x, Tensor(np.eye(3)), Tensor(np.zeros(3)))
        assert np.allclose(out.data, x.data)

    def test_all_ones_weight_sums(self):
        out = linear(Tensor(np.array([[1.0, 2.0, 3.0]])), Tensor(np.ones((1, 3))), Tensor(np.zeros(1)))
        assert np.isclose(out.data.item(), 6.0)

    def test_matches_loop_oracle(self, rng):
        x = rng.standard_normal((2, 5, 4))
        w = rng.standard_normal((3, 4))
        b = rng.standard_normal(3)
        out = linear(Tensor(x), Tensor(w), Tensor(b))
        expected = np.zeros((2, 5, 3))
        for i in range(2):
            for j in range(5):
                for o in range(3):
                    expected[i, j, o] = b[o] + sum(x[i, j, q] * w[o, q] for q in range(4))
        assert np.allclose(out.data, expected, atol=1e-10)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ShapeError):
            linear(Tensor(np.ones((2, 4))), Tensor(np.ones((3, 5))), None)

    def test_gradients(self, rng):
        x = parameter(rng.standard_normal((6, 4)), "x")
        w = parameter(rng.standard_normal((3, 4)), "w")
        b = parameter(rng.standard_normal(3), "b")
        build = lambda: (linear(x, w, b).sigmoid()).sum()
        assert max_rel_err(finite_difference_check(build, [x, w, b], 30)) < TOL


class TestTrilinear:
    def test_cell_center_reproduces_stored_value(self, rng):
        vol = rng.standard_normal((2, 3, 4, 5))
        dims = np.array([3, 4, 5])
        for idx in [(0, 0, 0), (2, 3, 4), (1, 2, 2)]:
            pt = (np.array(idx) + 0.5) / dims
            out = trilinear_sample(Tensor(vol), pt[None, :])
            assert np.allclose(out.data[0], vol[:, idx[0], idx[1], idx[2]], atol=1e-12)

    def test_linear_field_reproduced_in_interior(self, rng):
        dims = (6, 5, 7)
        centers = np.stack(
            np.meshgrid(*[(np.arange(d) + 0.5) / d for d in dims], indexing="ij"), axis=-1
        )
        field = 2 * centers[..., 0] + 3 * centers[..., 1] - centers[..., 2]
        vol = field[None]
        lo = [(0.5) / d for d in dims]
        hi = [1 - 0.5 / d for d in dims]
        pts = np.stack([rng.uniform(l, h, 200) for l, h in zip(lo, hi)], axis=1)
        out = trilinear_sample(Tensor(vol), pts)
        expected = 2 * pts[:, 0] + 3 * pts[:, 1] - pts[:, 2]
        assert np.allclose(out.data[:, 0], expected, atol=1e-9)

    def test_out_of_bounds_is_zero(self, rng):
        vol = Tensor(rng.standard_normal((3, 4, 4, 4)))
        pts = np.array([[-0.1, 0.5, 0.5], [0.5, 1.2, 0.5], [0.5, 0.5, -1e-9]])
        assert np.array_equal(trilinear_sample(vol, pts).data, np.zeros((3, 3)))

    def test_gradients_wrt_volume_and_points(self, rng):
        vol = parameter(rng.standard_normal((2, 3, 4, 5)), "vol")
        pts = parameter(rng.uniform(0.15, 0.85, (10, 3)), "pts")
        build = lambda: (trilinear_sample(vol, pts) ** 2).sum()
        assert max_rel_err(finite_difference_check(build, [vol, pts], 40)) < TOL


def test_scatter_rows_places_values_and_routes_gradient(rng):
    vals = parameter(rng.standard_normal((2, 3)), "vals")
    template = np.zeros((5, 3))
    out = scatter_rows(vals, np.array([1, 4]), template)
    assert np.array_equal(out.data[[1, 4]], vals.data)
    assert np.array_equal(out.data[[0, 2, 3]], np.zeros((3, 3)))
    backward((out * 2.0).sum())
    assert np.array_equal(vals.grad, np.full((2, 3), 2.0))
