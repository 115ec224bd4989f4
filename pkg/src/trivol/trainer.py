"""End-to-end optimization of the decoders and radiance head.

One step renders a random batch of rays from one view of one scene, takes the
mean-squared rendering error, backpropagates through compositing, the MLP,
interpolation, and the three UNets, and applies a decoupled-weight-decay
adaptive-moment update. Voxelization and grouping are parameter-free, so each
scene's grouped volumes are computed once and cached; the decoders rerun
every step because their weights move.

Everything is driven by one sequential generator seeded from the config, so
(seed, config, data) fully determine the loss trajectory, and checkpoints
carry the generator state for bit-exact resumption.
"""

import json
import os
from dataclasses import dataclass, fields

import numpy as np

from . import checkpoint, config
from .camera import RayBatch
from .errors import ConfigurationError, ContractError, NumericError, ParameterError
from .metrics import PSNR_CAP
from .model import ModelConfig, RenderModel, _config_from_vector, _config_vector
from .renderer import RenderSettings, render_ray_batch
from .tensor import Tensor, backward, reset_tape, zero_grads


@dataclass
class TrainConfig:
    rays_per_step: int = 1024
    m_coarse: int = 64
    m_fine: int = 64
    lr_initial: float = 1e-3
    lr_after: float = 1e-4
    lr_switch_epoch: int = 100
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_epochs: int = 20
    steps_per_epoch: int = 100  # "epoch" is a fixed step count; ray draws are stochastic
    seed: int = 0
    jitter: bool = True
    precision: str = "float64"
    checkpoint_every: int = 0  # 0: final checkpoint only

    def __post_init__(self):
        if self.rays_per_step < 1:
            raise ConfigurationError("rays_per_step must be >= 1")
        for name in ("lr_initial", "lr_after", "beta1", "beta2", "eps"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.precision not in ("float32", "float64"):
            raise ConfigurationError(f"unknown precision {self.precision!r}")

    @property
    def max_steps(self):
        return self.max_epochs * self.steps_per_epoch


def lr_schedule(cfg, epoch):
    """Step schedule: the initial rate until the switch epoch, then the late rate."""
    return cfg.lr_initial if epoch < cfg.lr_switch_epoch else cfg.lr_after


def mse_loss(rendered, target):
    """Mean over rays and channels of the squared color error."""
    target = np.asarray(target)
    if not isinstance(rendered, Tensor):
        rendered = Tensor(rendered)
    if rendered.shape != target.shape:
        raise ContractError(f"loss shapes differ: {rendered.shape} vs {target.shape}")
    diff = rendered - Tensor(target)
    return (diff * diff).mean()


class AdamW:
    """Decoupled weight decay plus bias-corrected moment update, in name order."""

    def __init__(self, named_params, cfg):
        self.params = dict(sorted(named_params.items()))
        self.cfg = cfg
        self.count = 0
        self.m = {k: np.zeros(p.shape, dtype=np.float64) for k, p in self.params.items()}
        self.v = {k: np.zeros(p.shape, dtype=np.float64) for k, p in self.params.items()}

    def step(self, lr):
        cfg = self.cfg
        for name, p in self.params.items():
            if p.grad is not None and not np.isfinite(p.grad).all():
                raise NumericError(f"non-finite gradient for {name}; aborting the step")
        self.count += 1
        t = self.count
        bias1 = 1.0 - cfg.beta1**t
        bias2 = 1.0 - cfg.beta2**t
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else 0.0
            if cfg.weight_decay:
                p.data -= (lr * cfg.weight_decay) * p.data
            m = self.m[name]
            v = self.v[name]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * np.square(g)
            update = (m / bias1) / (np.sqrt(v / bias2) + cfg.eps)
            p.data -= (lr * update).astype(p.data.dtype)

    def state_dict(self):
        state = {"opt.step": np.array([float(self.count)])}
        for name in self.params:
            state[f"opt.m.{name}"] = self.m[name]
            state[f"opt.v.{name}"] = self.v[name]
        return state

    def load_state_dict(self, state):
        self.count = int(state["opt.step"][0])
        for name in self.params:
            self.m[name] = np.asarray(state[f"opt.m.{name}"], dtype=np.float64)
            self.v[name] = np.asarray(state[f"opt.v.{name}"], dtype=np.float64)


def _take_rays(batch, idx):
    return RayBatch(
        batch.origins[idx],
        batch.directions[idx],
        batch.z_near[idx],
        batch.z_far[idx],
        batch.hit[idx],
    )


def _rng_state_to_json(rng):
    state = rng.bit_generator.state
    return {
        "bit_generator": state["bit_generator"],
        "state": str(state["state"]["state"]),
        "inc": str(state["state"]["inc"]),
        "has_uint32": state["has_uint32"],
        "uinteger": state["uinteger"],
    }


def _rng_state_from_json(blob):
    rng = np.random.default_rng(0)
    rng.bit_generator.state = {
        "bit_generator": blob["bit_generator"],
        "state": {"state": int(blob["state"]), "inc": int(blob["inc"])},
        "has_uint32": blob["has_uint32"],
        "uinteger": blob["uinteger"],
    }
    return rng


def save_train_state(path, model, optimizer, next_step, rng):
    state = model.state_dict()
    state["config"] = _config_vector(model.cfg)
    state.update(optimizer.state_dict())
    checkpoint.save_tensors(path, state)
    meta = {"next_step": next_step, "rng": _rng_state_to_json(rng)}
    with open(path + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)


def load_train_state(path, train_cfg):
    state = checkpoint.load_tensors(path)
    model = RenderModel(_config_from_vector(state["config"]))
    model.load_state_dict({k: v for k, v in state.items() if not k.startswith("opt.") and k != "config"})
    optimizer = AdamW(model.named_parameters(), train_cfg)
    optimizer.load_state_dict(state)
    with open(path + ".meta.json", "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    rng = _rng_state_from_json(meta["rng"])
    return model, optimizer, int(meta["next_step"]), rng


@dataclass
class ViewCache:
    rays: RayBatch
    targets: np.ndarray  # (H*W, 3)


class Trainer:
    """Owns the model, optimizer, cached scene encodings, and the loss log."""

    def __init__(self, scenes, model, cfg, out_dir=None, resume=None):
        if not scenes:
            raise ConfigurationError("training needs at least one scene")
        for scene in scenes:
            if not any(img is not None for img in scene.gt_images):
                raise ConfigurationError("every scene needs at least one ground-truth view")
        if cfg.precision == "float32":
            config.use_speed_profile()
        self.scenes = scenes
        self.cfg = cfg
        self.out_dir = out_dir
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
        if resume:
            self.model, self.optimizer, self.next_step, self.rng = load_train_state(resume, cfg)
        else:
            self.model = model
            self.optimizer = AdamW(model.named_parameters(), cfg)
            self.next_step = 0
            self.rng = np.random.default_rng(cfg.seed)
        self.model.astype(config.default_dtype())
        self.encoded = [self.model.encode_cloud(s.cloud) for s in scenes]
        self.views = [self._cache_views(s) for s in scenes]
        self.history = []

    def _cache_views(self, scene):
        from .camera import pixel_rays

        cached = []
        for cam, gt in zip(scene.cameras, scene.gt_images):
            if gt is None:
                continue
            rays = pixel_rays(cam, np.arange(cam.pixel_count))
            cached.append(ViewCache(rays, gt.reshape(-1, 3)))
        return cached

    def _settings(self, scene):
        return RenderSettings(
            m_coarse=self.cfg.m_coarse,
            m_fine=self.cfg.m_fine,
            background=scene.background,
            jitter=self.cfg.jitter,
        )

    def run_step(self, step):
        cfg = self.cfg
        epoch = step // cfg.steps_per_epoch
        lr = lr_schedule(cfg, epoch)
        scene_idx = int(self.rng.integers(len(self.scenes))) if len(self.scenes) > 1 else 0
        scene = self.scenes[scene_idx]
        views = self.views[scene_idx]
        view_idx = int(self.rng.integers(len(views)))
        view = views[view_idx]
        pix = self.rng.integers(len(view.targets), size=cfg.rays_per_step)
        jitter_u = self.rng.uniform(size=(cfg.rays_per_step, cfg.m_coarse)) if cfg.jitter else None
        fine_u = self.rng.uniform(size=(cfg.rays_per_step, cfg.m_fine)) if cfg.m_fine > 0 else None

        reset_tape()
        tri = self.model.feature_volumes(self.encoded[scene_idx])
        colors = render_ray_batch(
            tri, self.model.head, _take_rays(view.rays, pix), self._settings(scene),
            jitter_u=jitter_u, fine_u=fine_u,
        )
        loss = mse_loss(colors, view.targets[pix].astype(config.default_dtype()))
        loss_value = loss.item()
        backward(loss)
        self.optimizer.step(lr)
        zero_grads(self.model.parameters())
        batch_psnr = PSNR_CAP if loss_value <= 0 else min(PSNR_CAP, float(-10.0 * np.log10(loss_value)))
        return {"step": step, "epoch": epoch, "lr": lr, "loss": loss_value, "psnr": batch_psnr}

    def train(self, max_steps=None):
        """Run to ``max_steps`` (default from the config); returns the history rows."""
        total = self.cfg.max_steps if max_steps is None else max_steps
        log_path = os.path.join(self.out_dir, "loss_log.csv") if self.out_dir else None
        log = None
        if log_path:
            mode = "a" if self.next_step > 0 and os.path.exists(log_path) else "w"
            log = open(log_path, mode, encoding="utf-8")
            if mode == "w":
                log.write("step,epoch,lr,loss,psnr\n")
        try:
            while self.next_step < total:
                row = self.run_step(self.next_step)
                self.history.append(row)
                if log:
                    log.write(
                        f"{row['step']},{row['epoch']},{row['lr']!r},{row['loss']!r},{row['psnr']!r}\n"
                    )
                self.next_step += 1
                if (
                    self.out_dir
                    and self.cfg.checkpoint_every
                    and self.next_step % self.cfg.checkpoint_every == 0
                    and self.next_step < total
                ):
                    self.save(os.path.join(self.out_dir, f"ckpt_{self.next_step:06d}.triv"))
        finally:
            if log:
                log.close()
        if self.out_dir:
            self.save(os.path.join(self.out_dir, "model.triv"))
        return self.history

    def save(self, path):
        save_train_state(path, self.model, self.optimizer, self.next_step, self.rng)


def _coerce(kind, value):
    if kind == "bool" or kind is bool:
        return value.lower() in ("1", "true", "yes", "on")
    if kind == "int" or kind is int:
        return int(value)
    if kind == "float" or kind is float:
        return float(value)
    return value


def parse_run_config(path):
    """Read a key=value text file into (ModelConfig, TrainConfig).

    Keys prefixed ``model.`` configure the model (e.g. model.resolution=32);
    bare keys configure training. Unknown keys are rejected. '#' comments ok.
    """
    train_fields = {f.name: f.type for f in fields(TrainConfig)}
    model_fields = {f.name: f.type for f in fields(ModelConfig)}
    train_kwargs = {}
    model_kwargs = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key.startswith("model."):
                name = key[len("model."):]
                if name not in model_fields:
                    raise ParameterError(f"{path}:{lineno}: unknown model key {name!r}")
                model_kwargs[name] = _coerce(model_fields[name], value)
            elif key in train_fields:
                train_kwargs[key] = _coerce(train_fields[key], value)
            else:
                raise ParameterError(f"{path}:{lineno}: unknown training key {key!r}")
    return ModelConfig(**model_kwargs), TrainConfig(**train_kwargs)
