"""Model bundle: checkpoint round trips and the full render pipeline."""

import numpy as np

from trivol.grouping import encode_trivol
from trivol.model import ModelConfig, RenderModel
from trivol.pointcloud import GridVolume, PointCloud
from trivol.renderer import RenderSettings, render_view
from trivol.scenes import ring_cameras, build_scene, sample_points
from trivol.tensor import Tensor, no_grad


def small_model(seed=5):
    return RenderModel(
        ModelConfig(resolution=16, groups=4, features=4, unet_depth=1, unet_base_width=4, seed=seed)
    )


def test_checkpoint_round_trip_preserves_forward(tmp_path, rng):
    model = small_model()
    path = str(tmp_path / "m.triv")
    model.save(path)
    loaded = RenderModel.load(path)
    assert loaded.cfg == model.cfg
    x = Tensor(rng.standard_normal((16, 4, 16, 16)) * 0.1)
    assert np.array_equal(model.dx(x).data, loaded.dx(x).data)
    feats = Tensor(rng.standard_normal((5, 12)))
    dirs = np.tile([0.0, 0.0, 1.0], (5, 1))
    s0, c0 = model.head(feats, dirs)
    s1, c1 = loaded.head(feats, dirs)
    assert np.array_equal(s0.data, s1.data) and np.array_equal(c0.data, c1.data)


def test_parameter_names_carry_module_prefixes():
    names = small_model().named_parameters().keys()
    for prefix in ("Dx.", "Dy.", "Dz.", "g."):
        assert any(n.startswith(prefix) for n in names)


def test_render_image_on_empty_grid_is_finite(rng):
    """All-zero occupancy and an untrained net still produce a clean image."""
    model = small_model()
    zero = encode_trivol(GridVolume(Tensor(np.zeros((4, 16, 16, 16))), 16), 4)
    with no_grad():
        tri = model.feature_volumes(zero)
    cam = ring_cameras(1, 8, 8)[0]
    st = RenderSettings(m_coarse=8, m_fine=4, background=(1, 1, 1), seed=0)
    img = render_view(tri, model.head, cam, st)
    assert img.shape == (8, 8, 3)
    assert np.isfinite(img).all()


def test_render_image_deterministic_across_runs(rng):
    model = small_model()
    pc = sample_points(build_scene("sphere"), 800, np.random.default_rng(3))
    cam = ring_cameras(2, 12, 12)[1]
    st = RenderSettings(m_coarse=8, m_fine=8, background=(1, 1, 1), seed=9, jitter=True)
    a = model.render_image(pc, cam, st)
    b = model.render_image(pc, cam, st)
    assert np.array_equal(a, b)
