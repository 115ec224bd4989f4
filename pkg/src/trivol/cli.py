"""Command-line surface: scene generation, training, rendering, evaluation,
gradient checking, and the decoder cost sweep."""

import argparse
import csv
import os
import sys

import numpy as np

from . import config
from .benchmarks import run_bench
from .errors import ParameterError
from .image_io import quantize, write_ppm
from .metrics import PSNR_CAP, psnr, ssim
from .model import ModelConfig, RenderModel
from .renderer import RenderSettings, render_view
from .scenes import load_scene_dir, make_benchmark
from .tensor import no_grad
from .trainer import TrainConfig, Trainer, parse_run_config


def _fail(message, code=2):
    print(f"error: {message}", file=sys.stderr)
    raise SystemExit(code)


def _require_file(path, what):
    if not os.path.exists(path):
        _fail(f"{what} not found: {path}")
    return path


def _parse_views(text, available):
    if text is None:
        return list(range(available))
    views = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part and not part.startswith("-"):
            lo, hi = part.split("-", 1)
            views.extend(range(int(lo), int(hi) + 1))
        elif part:
            views.append(int(part))
    bad = [v for v in views if v < 0 or v >= available]
    if bad:
        _fail(f"view indices {bad} out of range (scene has {available} views)")
    return views


def _parse_size(text):
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        _fail(f"--size expects WxH, got {text!r}")


def _load_scene(path):
    _require_file(path, "scene directory")
    _require_file(os.path.join(path, "points.txt"), "point-cloud file")
    _require_file(os.path.join(path, "cameras.json"), "camera file")
    return load_scene_dir(path)


def cmd_make_scene(args):
    make_benchmark(
        args.name,
        args.out,
        views=args.views_count,
        size=_parse_size(args.size),
        n_points=args.points,
        seed=args.seed,
    )
    print(f"wrote scene {args.name!r} to {args.out}")
    return 0


def cmd_train(args):
    scene = _load_scene(args.scene)
    if args.config:
        model_cfg, train_cfg = parse_run_config(_require_file(args.config, "config file"))
    else:
        model_cfg, train_cfg = ModelConfig(), TrainConfig()
    if args.seed is not None:
        model_cfg.seed = args.seed
        train_cfg.seed = args.seed
    if args.views is not None:
        keep = set(_parse_views(args.views, len(scene.cameras)))
        scene.gt_images = [
            img if i in keep else None for i, img in enumerate(scene.gt_images)
        ]
    if args.resume:
        _require_file(args.resume, "checkpoint")
    model = RenderModel(model_cfg)
    trainer = Trainer([scene], model, train_cfg, out_dir=args.out, resume=args.resume)
    steps = args.steps if args.steps is not None else train_cfg.max_steps
    history = trainer.train(steps)
    if history:
        last = history[-1]
        print(f"finished at step {last['step']}: loss {last['loss']:.6f}, batch psnr {last['psnr']:.2f} dB")
    print(f"checkpoint: {os.path.join(args.out, 'model.triv')}")
    return 0


def _render_views(args, want_images):
    scene = _load_scene(args.scene)
    model = RenderModel.load(_require_file(args.checkpoint, "checkpoint"))
    if args.precision == "float32":
        config.use_speed_profile()
        model.astype(np.float32)
    views = _parse_views(args.views, len(scene.cameras))
    settings = RenderSettings(
        m_coarse=args.m_coarse,
        m_fine=args.m_fine,
        background=scene.background,
        seed=args.seed or 0,
    )
    initial = model.encode_cloud(scene.cloud)
    with no_grad():
        tri = model.feature_volumes(initial)
    for view in views:
        image = render_view(tri, model.head, scene.cameras[view], settings)
        yield view, image, scene.gt_images[view] if want_images else None


def cmd_render(args):
    os.makedirs(args.out, exist_ok=True)
    for view, image, _ in _render_views(args, want_images=False):
        path = os.path.join(args.out, "render_%03d.ppm" % view)
        write_ppm(path, image)
        print(f"wrote {path}")
    return 0


def cmd_eval(args):
    rows = []
    if args.out:
        os.makedirs(args.out, exist_ok=True)
    for view, image, gt in _render_views(args, want_images=True):
        if gt is None:
            _fail(f"scene has no ground truth for view {view}")
        image = quantize(image) / 255.0  # score the 8-bit image the user receives
        rows.append(
            {
                "view": view,
                "psnr": repr(min(psnr(image, gt), PSNR_CAP)),
                "ssim": repr(ssim(image, gt)),
            }
        )
        if args.out:
            write_ppm(os.path.join(args.out, "render_%03d.ppm" % view), image)
    report = (
        open(os.path.join(args.out, "report.csv"), "w", newline="", encoding="utf-8")
        if args.out
        else sys.stdout
    )
    writer = csv.DictWriter(report, fieldnames=["view", "psnr", "ssim"])
    writer.writeheader()
    writer.writerows(rows)
    if report is not sys.stdout:
        report.close()
        print(f"wrote {os.path.join(args.out, 'report.csv')}")
    return 0


def cmd_gradcheck(args):
    from .gradcheck import finite_difference_check, max_rel_err
    from .ops import avg_pool3d, conv3d, linear, nearest_upsample3d, trilinear_sample
    from .tensor import Tensor, concat, exclusive_cumsum, parameter

    config.use_accuracy_profile()
    rng = np.random.default_rng(args.seed or 0)
    failures = 0

    def check(name, build, leaves, n=25):
        nonlocal failures
        err = max_rel_err(finite_difference_check(build, leaves, n_coords=n, seed=args.seed or 0))
        ok = err < 1e-4
        failures += 0 if ok else 1
        print(f"{'PASS' if ok else 'FAIL'} {name}: max rel err {err:.3e}")

    x = parameter(rng.standard_normal((3, 4, 6, 6)), "x")
    w = parameter(rng.standard_normal((4, 3, 3, 3, 3)) * 0.3, "w")
    b = parameter(rng.standard_normal(4) * 0.1, "b")
    check("conv3d", lambda: (conv3d(x, w, b, padding=1) ** 2).sum(), [x, w, b])
    check("conv3d stride2", lambda: (conv3d(x, w, b, stride=2, padding=1) ** 2).sum(), [x, w, b])
    u = parameter(rng.standard_normal((2, 2, 2, 2)), "u")
    probe = Tensor(rng.standard_normal((2, 4, 4, 4)))
    check("nearest_upsample3d", lambda: (nearest_upsample3d(u, 2) * probe).sum(), [u])
    check("avg_pool3d", lambda: (avg_pool3d(u, (2, 1, 2)) ** 2).sum(), [u])
    xl = parameter(rng.standard_normal((6, 5)), "xl")
    wl = parameter(rng.standard_normal((4, 5)), "wl")
    bl = parameter(rng.standard_normal(4), "bl")
    check("linear+sigmoid", lambda: (linear(xl, wl, bl).sigmoid() ** 2).sum(), [xl, wl, bl])
    check("softplus", lambda: xl.softplus().sum(), [xl])
    vol = parameter(rng.standard_normal((3, 4, 4, 4)), "vol")
    qp = parameter(rng.uniform(0.1, 0.9, (12, 3)), "qp")
    check("trilinear_sample", lambda: (trilinear_sample(vol, qp) ** 2).sum(), [vol, qp])
    cc = parameter(rng.standard_normal((3, 5)), "cc")
    check(
        "concat+exclusive_cumsum",
        lambda: (exclusive_cumsum(concat([cc, cc * 0.5], axis=1), axis=1).exp()).sum(),
        [cc],
    )
    print("gradcheck:", "all passed" if failures == 0 else f"{failures} failures")
    return 0 if failures == 0 else 1


def cmd_bench(args):
    s_values = [int(v) for v in args.s_list.split(",")]
    g_values = [int(v) for v in args.g_list.split(",")]
    rows = run_bench(s_values, g_values, args.out, measure=args.measure)
    for row in rows:
        print(
            f"S={row['S']} G={row['G']}: slim cells {row['trivol_cells']}, dense cells {row['dense_cells']}"
        )
    print(f"wrote {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="trivol", description="Point-cloud renderer built on triple slim feature volumes"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-scene", help="generate a synthetic benchmark scene")
    p.add_argument("--name", default="sphere", choices=["sphere", "checker-cube", "two-object"])
    p.add_argument("--out", required=True)
    p.add_argument("--views", dest="views_count", type=int, default=8)
    p.add_argument("--size", default="64x64")
    p.add_argument("--points", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_make_scene)

    p = sub.add_parser("train", help="optimize decoders and radiance head on a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="key=value training/model config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--views", default=None, help="training view list, e.g. 0-7 or 0,2,4")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--resume", default=None)
    p.set_defaults(fn=cmd_train)

    for name, fn in (("render", cmd_render), ("eval", cmd_eval)):
        p = sub.add_parser(name, help=f"{name} checkpoint views against a scene")
        p.add_argument("--scene", required=True)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--out", required=(name == "render"), default=None)
        p.add_argument("--views", default=None)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--m-coarse", type=int, default=64)
        p.add_argument("--m-fine", type=int, default=64)
        p.add_argument("--precision", default="float64", choices=["float32", "float64"])
        p.set_defaults(fn=fn)

    p = sub.add_parser("gradcheck", help="finite-difference validation of every op")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("bench", help="cell/memory/time sweep vs the dense baseline")
    p.add_argument("--s-list", default="32,64")
    p.add_argument("--g-list", default="4,8,16")
    p.add_argument("--out", required=True)
    p.add_argument("--measure", action="store_true", help="also measure memory and wall time")
    p.set_defaults(fn=cmd_bench)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ParameterError as exc:
        _fail(str(exc))


if __name__ == "__main__":
    raise SystemExit(main())
