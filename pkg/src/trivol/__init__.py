"""Differentiable point-cloud renderer built on triple slim feature volumes.

A colored point cloud is voxelized into a dense grid, folded into three
slim volumes by a parameter-free axis grouping, decoded by three 3D UNets
into feature volumes, and rendered with ray sampling, trilinear feature
queries, an MLP radiance head, and front-to-back compositing. Everything is
trainable end to end through the bundled reverse-mode autodiff engine.
"""

from . import config
from .camera import Camera, Ray, RayBatch, generate_ray, load_cameras, look_at_camera, pixel_rays, save_cameras
from .checkpoint import load_tensors, save_tensors
from .grouping import InitialTriVol, encode_trivol, group_axis, ungroup_axis
from .metrics import psnr, ssim
from .model import ModelConfig, RenderModel
from .ops import avg_pool3d, conv3d, linear, nearest_upsample3d, trilinear_sample
from .pointcloud import (
    GridVolume,
    PointCloud,
    SceneBounds,
    load_point_cloud,
    normalize,
    save_point_cloud,
    voxelize,
)
from .renderer import (
    RadianceHead,
    RadianceSample,
    RenderSettings,
    composite,
    composite_batch,
    query_feature,
    render_pixel,
    render_view,
)
from .sampling import (
    RaySampleBatch,
    importance_depths,
    importance_sample,
    stratified_depths,
    stratified_sample,
)
from .scenes import AnalyticScene, build_scene, load_scene_dir, make_benchmark, render_ground_truth, sample_points
from .tensor import Tape, Tensor, backward, concat, no_grad, parameter
from .trainer import AdamW, TrainConfig, Trainer, lr_schedule, mse_loss
from .unet import FeatureTriVol, UNet3D, UNet3DConfig, decode

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
