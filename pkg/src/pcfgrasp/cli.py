"""Command-line front end: ``pcfgrasp <subcommand> ...``.

Every subcommand reads and writes plain files, so the stages chain through
the filesystem::

    scenegen -> view -> complete -> features -> train / propose -> filter -> eval

plus ``bench`` for kernel timings. Failures print one JSON line
``{"code": ..., "message": ...}`` on stderr and exit with status 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import bench
from .checkpoint import save_checkpoint
from .cloud import Cloud, read_ply, write_ply
from .completion import load_completion, make_provider
from .config import PipelineConfig, load_config
from .errors import ArgumentError, FormatError, PcfGraspError
from .evaluate import evaluate
from .grasp import dump_poses, load_poses
from .net import decode_grasps, forward
from .pcf import concat_points, dump_features, load_features, pcf_forward
from .pipeline import complete, prepare_example, sample_original
from .scene import KINDS, Scene, ViewSpec, gen_antipodal_labels, labels_in_camera, make_scene, random_view, render_view
from .score_filter import RobotFrame, apply_filter
from .tensor import Tensor
from .train import fit, init_params, params_from_checkpoint

log = logging.getLogger("pcfgrasp")

MAX_PROPOSALS = 1024


def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=Path(__file__).parent,
                             capture_output=True, text=True, timeout=5)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


def view_sidecar(cloud_path) -> Path:
    return Path(cloud_path).with_suffix(".json")


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1) + "\n")


def _read_json(path) -> object:
    p = Path(path)
    if not p.exists():
        raise ArgumentError(f"file not found: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{p}: invalid JSON ({exc})") from None


def _load_cloud(path) -> Cloud:
    if not Path(path).exists():
        raise ArgumentError(f"file not found: {path}")
    return read_ply(path)


def _load_view(path) -> ViewSpec:
    try:
        return ViewSpec.from_json(_read_json(path))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: not a view record ({exc})") from None


def _load_scene(path) -> Scene:
    try:
        return Scene.from_json(_read_json(path))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: not a scene record ({exc})") from None


def _inputs(args, cfg: PipelineConfig) -> tuple[Cloud, Cloud]:
    """Sampled original points and their completion, both in the camera frame."""
    original = sample_original(_load_cloud(args.cloud), cfg.net.n_points)
    if args.completion:
        if not Path(args.completion).exists():
            raise ArgumentError(f"file not found: {args.completion}")
        completion = load_completion(args.completion, cfg.net.n_points)
    else:
        completion = complete(original)
    return original, completion


# ---------------------------------------------------------------------------
def cmd_scenegen(args, cfg: PipelineConfig) -> None:
    rng = np.random.default_rng(cfg.seed)
    scene = make_scene(args.kind, rng)
    scene.labels = gen_antipodal_labels(scene, args.labels, rng, gripper=cfg.gripper)
    scene.save(args.out)
    log.info("scene with %d labels -> %s", len(scene.labels), args.out)


def cmd_view(args, cfg: PipelineConfig) -> None:
    scene = _load_scene(args.scene)
    rng = np.random.default_rng(cfg.seed)
    view = random_view(scene, rng)
    cloud = render_view(scene, view, rng, n_samples=args.samples)
    if len(cloud) == 0:
        raise ArgumentError("the rendered view contains no points")
    write_ply(args.out, cloud)
    sidecar = Path(args.view_out) if args.view_out else view_sidecar(args.out)
    _write_json(sidecar, view.to_json())
    log.info("%d points -> %s (view %s)", len(cloud), args.out, sidecar)


def cmd_complete(args, cfg: PipelineConfig) -> None:
    original = sample_original(_load_cloud(args.cloud), cfg.net.n_points)
    out = complete(original, make_provider(args.provider))
    write_ply(args.out, out)


def cmd_features(args, cfg: PipelineConfig) -> None:
    params = params_from_checkpoint(args.checkpoint)
    original, completion = _inputs(args, cfg)
    F = pcf_forward(original, concat_points(original, completion), cfg.pcf, params)
    dump_features(args.out, F)
    log.info("features %s -> %s", F.shape, args.out)


def cmd_train(args, cfg: PipelineConfig) -> None:
    params = init_params(cfg.pcf, cfg.net, cfg.seed)
    if args.steps > 0:
        if not args.scene or len(args.scene) != len(args.cloud):
            raise ArgumentError("training needs matching --scene/--cloud pairs")
        examples = []
        for i, (scene_path, cloud_path) in enumerate(zip(args.scene, args.cloud)):
            scene = _load_scene(scene_path)
            view = _load_view(view_sidecar(cloud_path))
            examples.append(prepare_example(f"{i}:{scene_path}", _load_cloud(cloud_path),
                                            labels_in_camera(scene, view), cfg.pcf, cfg.net, cfg.gripper))
        fit(examples, params, args.steps, cfg.pcf, cfg.net, cfg.gripper, metrics_path=args.metrics,
            checkpoint_path=args.out, decay_every=args.decay_every, decay_factor=args.decay_factor,
            log_every=args.log_every)
    else:
        save_checkpoint(args.out, params)
    log.info("checkpoint -> %s", args.out)


def cmd_propose(args, cfg: PipelineConfig) -> None:
    params = params_from_checkpoint(args.checkpoint)
    original, completion = _inputs(args, cfg)
    if args.features:
        F = Tensor(load_features(args.features))
    else:
        F = pcf_forward(original, concat_points(original, completion), cfg.pcf, params)
    pred = forward(original, F, cfg.net, params)
    decoded = decode_grasps(pred, original, cfg.gripper)
    if decoded.degenerate:
        log.warning("%d points gave degenerate directions and were dropped", decoded.degenerate)
    order = sorted(range(len(decoded.poses)), key=lambda i: -decoded.poses[i].score)[: args.max]
    poses = [decoded.poses[i] for i in order]
    dump_poses(poses, args.out, frame="camera",
               provenance={"config_hash": cfg.digest(), "seed": cfg.seed, "git": git_describe(),
                           "checkpoint": str(args.checkpoint)})
    log.info("%d grasps -> %s", len(poses), args.out)


def cmd_filter(args, cfg: PipelineConfig) -> None:
    if args.robot_frame:
        frame = RobotFrame.load(args.robot_frame)
    elif args.view:
        # world frame = robot base frame up to the base offset, folded into the origin
        view = _load_view(args.view)
        frame = RobotFrame(np.asarray(args.base, dtype=np.float64) - view.t, np.array([0.0, 0.0, 1.0]), view.R)
    else:
        raise ArgumentError("filter needs --robot-frame or --view")
    record = _read_json(args.grasps)
    poses = apply_filter(load_poses(args.grasps), frame)
    meta = {k: v for k, v in record.items() if k != "grasps"} if isinstance(record, dict) else {}
    meta["robot_frame"] = frame.to_json()
    dump_poses(poses, args.out, **meta)


def cmd_eval(args, cfg: PipelineConfig) -> None:
    scene = _load_scene(args.scene)
    view = _load_view(args.view)
    proposals = load_poses(args.grasps)
    cloud = _load_cloud(args.cloud) if args.cloud else None
    metrics = evaluate(proposals, labels_in_camera(scene, view), cloud, cfg.eval, cfg.gripper)
    if args.out:
        _write_json(args.out, metrics)
    print(json.dumps(metrics))


def cmd_bench(args, cfg: PipelineConfig) -> None:
    record = bench.run(args.kernel, args.n, args.m, repeats=args.repeats, threads=args.threads, seed=cfg.seed)
    if args.out:
        _write_json(args.out, record)
    print(json.dumps(record))


# ---------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value settings file; flags take precedence")
    common.add_argument("--seed", type=int, help="random seed (default from config, else 0)")
    common.add_argument("--n-points", type=int, help="points sampled from the view (net.n_points)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="pcfgrasp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scenegen", parents=[common], help="synthetic scene with antipodal labels")
    p.add_argument("--kind", choices=KINDS, default="cylinder")
    p.add_argument("--labels", type=int, default=300, help="number of label grasps")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scenegen)

    p = sub.add_parser("view", parents=[common], help="render a single-view cloud (PLY) and its camera")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--view-out", help="camera record path (default: OUT with a .json suffix)")
    p.add_argument("--samples", type=int, default=200_000, help="surface samples before z-buffering")
    p.set_defaults(func=cmd_view)

    p = sub.add_parser("complete", parents=[common], help="completion points for a view")
    p.add_argument("--cloud", required=True)
    p.add_argument("--provider", default="mirror", help='"mirror" or "file:<ply>"')
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_complete)

    for name, func, text in (("features", cmd_features, "dump the shape feature matrix"),
                             ("propose", cmd_propose, "grasp proposals from a checkpoint")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--cloud", required=True)
        p.add_argument("--completion", help="completion PLY (default: mirror completion)")
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--out", required=True)
        p.set_defaults(func=func)
        if name == "propose":
            p.add_argument("--features", help="precomputed feature dump")
            p.add_argument("--max", type=int, default=MAX_PROPOSALS, help="keep the highest-scoring N")

    p = sub.add_parser("train", parents=[common], help="train, or write a random-init checkpoint with --steps 0")
    p.add_argument("--scene", action="append", default=[])
    p.add_argument("--cloud", action="append", default=[], help="view PLY; its camera JSON sits alongside")
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--metrics", help="append JSON-lines loss records here")
    p.add_argument("--lr", type=float)
    p.add_argument("--decay-every", type=int, default=0)
    p.add_argument("--decay-factor", type=float, default=1.0)
    p.add_argument("--log-every", type=int, default=10)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("filter", parents=[common], help="re-rank grasps by robot-relative direction")
    p.add_argument("--grasps", required=True)
    p.add_argument("--robot-frame", help="RobotFrame JSON")
    p.add_argument("--view", help="camera JSON; the world frame is taken as the robot frame")
    p.add_argument("--base", type=float, nargs=3, default=(-0.6, 0.0, 0.0), metavar=("X", "Y", "Z"),
                   help="robot base in the world frame when using --view")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("eval", parents=[common], help="precision@k, coverage and collision rate")
    p.add_argument("--grasps", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--view", required=True)
    p.add_argument("--cloud", help="view PLY for the collision check")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", parents=[common], help="time a kernel")
    p.add_argument("kernel", choices=bench.KERNELS)
    p.add_argument("--n", type=int, default=20_000)
    p.add_argument("--m", type=int, default=2048)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)
    return parser


def _overrides(args) -> dict[str, object]:
    out: dict[str, object] = {}
    if args.seed is not None:
        out["seed"] = args.seed
    if args.n_points is not None:
        out["net.n_points"] = args.n_points
    if getattr(args, "lr", None) is not None:
        out["net.lr"] = args.lr
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
        args.func(args, cfg)
    except PcfGraspError as exc:
        print(json.dumps({"code": exc.code, "message": str(exc)}), file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"code": "IO", "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
