"""Command line entry points: scene synthesis, training, evaluation,
rendering, headless simulation, benchmarking, and the streaming service."""

import argparse
import dataclasses
import json
import os
import sys

import numpy as np


def _load_config_file(path):
    if path.endswith(".toml"):
        try:
            import tomllib
        except ImportError:
            import tomli as tomllib
        with open(path, "rb") as f:
            return tomllib.load(f)
    with open(path) as f:
        return json.load(f)


def _apply_fields(obj, values, label):
    fields = {f.name for f in dataclasses.fields(obj)}
    for key, val in values.items():
        if key not in fields:
            raise SystemExit(f"unknown {label} option {key!r}")
        setattr(obj, key, val)
    return obj


def _build_train_config(args):
    from .losses import LossWeights
    from .trainer import TrainConfig

    config = TrainConfig()
    if args.config:
        doc = _load_config_file(args.config)
        weights = doc.pop("weights", {})
        _apply_fields(config, doc, "train config")
        _apply_fields(config.weights, weights, "loss weight")
    if args.iters is not None:
        config.iterations = args.iters
    if args.seed is not None:
        config.seed = args.seed
    if args.virtual_per_iter is not None:
        config.virtual_per_iter = args.virtual_per_iter
    if not isinstance(config.weights, LossWeights):
        config.weights = LossWeights(**config.weights)
    for name in ("lambda_depth", "lambda_dist", "lambda_tv", "lambda_dssim"):
        val = getattr(args, name)
        if val is not None:
            setattr(config.weights, name, val)
    return config


def cmd_synth(args):
    from .io import save_cloud, save_scene
    from .synthetic import SyntheticSpec, assign_splits, generate

    spec = SyntheticSpec()
    if args.spec:
        _apply_fields(spec, _load_config_file(args.spec), "synthetic spec")
    if args.seed is not None:
        spec.seed = args.seed
    cloud, bundle = generate(spec)
    if args.train_views:
        assign_splits(bundle, args.train_views)
    save_scene(args.out, bundle)
    save_cloud(os.path.join(args.out, "ground_truth.gsc"), cloud)
    n_train = len(bundle.views("train"))
    print(json.dumps({
        "out": args.out,
        "views": len(bundle.records),
        "train_views": n_train,
        "gaussians": len(cloud.positions),
    }))


def cmd_train(args):
    from .io import load_scene, save_cloud
    from .trainer import train

    bundle = load_scene(args.scene)
    config = _build_train_config(args)
    cloud, report = train(bundle, config)
    save_cloud(args.out, cloud)
    if args.report:
        with open(args.report, "w") as f:
            for row in report.rows:
                f.write(json.dumps(row) + "\n")
            f.write(json.dumps({
                "final": True,
                "wall_time_s": report.wall_time_s,
                "seed": report.seed,
                "gaussians": report.final_gaussians,
                "metrics": report.metrics,
            }) + "\n")
    print(json.dumps({"out": args.out, "gaussians": report.final_gaussians,
                      "metrics": report.metrics}))


def cmd_eval(args):
    from .io import load_cloud, load_scene
    from .trainer import TrainConfig, evaluate

    bundle = load_scene(args.scene)
    cloud = load_cloud(args.cloud)
    config = TrainConfig(sh_degree=cloud.sh_degree)
    records = bundle.views(args.split)
    if not records:
        raise SystemExit(f"scene has no {args.split!r} views")
    metrics = evaluate(cloud, records, config)
    print(json.dumps({"cloud": args.cloud, "split": args.split, **metrics}))


def cmd_render(args):
    from .io import load_cloud, load_scene, save_image, write_pfm
    from .rasterizer import render

    cloud = load_cloud(args.cloud)
    bundle = load_scene(args.scene)
    records = bundle.views(args.split) if args.split else bundle.records
    os.makedirs(args.out, exist_ok=True)
    for i, rec in enumerate(records):
        out = render(cloud, rec.camera)
        name = rec.name or f"view_{i:04d}"
        save_image(os.path.join(args.out, name + ".png"), np.clip(out.rgb, 0, 1))
        if args.dump_aux:
            alpha = np.maximum(out.alpha, 1e-8)
            write_pfm(os.path.join(args.out, name + "_depth.pfm"), out.depth / alpha)
            write_pfm(os.path.join(args.out, name + "_alpha.pfm"), out.alpha)
            write_pfm(os.path.join(args.out, name + "_dist.pfm"), out.distortion)
    print(json.dumps({"out": args.out, "views": len(records)}))


def _force_from_event(ev):
    from .simulator.mpm import ForceEvent

    return ForceEvent(position=ev["position"], direction=ev["direction"],
                      magnitude=ev["magnitude"], radius=ev["radius"])


def cmd_simulate(args):
    from .io import load_cloud
    from .simulator.bench import deform_dense
    from .simulator.deform import deform_cloud
    from .simulator.mpm import (
        MaterialParams, MpmGrid, dense_particles_from_cloud,
        mpm_substep, nodes_from_cloud,
    )
    from .simulator.sampling import bind_gaussians

    cloud = load_cloud(args.cloud)
    params = MaterialParams()
    if args.params:
        _apply_fields(params, _load_config_file(args.params), "material")
    script = {}
    if args.script:
        with open(args.script) as f:
            for ev in json.load(f):
                script.setdefault(int(ev["frame"]), []).append(ev)

    if args.mode == "sparse":
        state, _ = nodes_from_cloud(cloud, args.nodes, seed=args.seed, params=params,
                                    anchor_margin=args.anchor_margin)
        binding = bind_gaussians(cloud.positions, state.rest_positions, k=4)
    else:
        state = dense_particles_from_cloud(cloud, params=params,
                                           anchor_margin=args.anchor_margin)
        binding = None
    grid = MpmGrid.around(cloud.positions, params.grid_resolution)

    force = None
    rows = []
    for frame in range(args.frames):
        for ev in script.get(frame, ()):
            force = None if ev.get("action") == "release" else _force_from_event(ev)
        for _ in range(params.substeps):
            mpm_substep(state, grid, params, force=force)
        rows.append({
            "frame": frame + 1,
            "disp_max": state.max_displacement(),
            "kinetic_energy": state.kinetic_energy(),
        })
    if args.out:
        deformed = (deform_cloud(cloud, binding, state) if binding is not None
                    else deform_dense(cloud, state))
        np.savez(
            args.out,
            positions=deformed.positions,
            covariances=deformed.world_covariances(),
            node_positions=state.positions,
            node_velocities=state.velocities,
        )
    json.dump({"mode": args.mode, "frames": rows}, sys.stdout)
    print()


def cmd_bench(args):
    from .io import load_cloud
    from .simulator.bench import run_benchmark
    from .simulator.mpm import MaterialParams

    params = MaterialParams()
    if args.params:
        _apply_fields(params, _load_config_file(args.params), "material")
    reports = []
    for path in args.cloud:
        cloud = load_cloud(path)
        rep = run_benchmark(cloud, n_nodes=args.nodes, frames=args.frames,
                            params=params, seed=args.seed)
        rep["cloud"] = path
        reports.append(rep)
    doc = {"scenes": reports}
    if args.out:
        with open(args.out, "w") as f:
            json.dump(doc, f, indent=2)
    json.dump(doc, sys.stdout)
    print()


def cmd_serve(args):
    from .service import serve

    serve(args.clouds, host=args.host, port=args.port)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="splatsim")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene directory")
    p.add_argument("--spec", help="toml/json file overriding synthetic defaults")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--train-views", type=int, help="restrict training split size")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="optimize a cloud on a scene directory")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="toml/json file mirroring the train config")
    p.add_argument("--report", help="write per-iteration rows as JSON lines")
    p.add_argument("--iters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--virtual-per-iter", type=int, dest="virtual_per_iter")
    for name in ("lambda-depth", "lambda-dist", "lambda-tv", "lambda-dssim"):
        p.add_argument(f"--{name}", type=float, dest=name.replace("-", "_"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metrics of a cloud against scene views")
    p.add_argument("--cloud", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--split", default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="render scene views from a cloud")
    p.add_argument("--cloud", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default=None)
    p.add_argument("--dump-aux", action="store_true",
                   help="also write depth/alpha/distortion PFMs")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("simulate", help="headless simulation run")
    p.add_argument("--cloud", required=True)
    p.add_argument("--nodes", type=int, default=512)
    p.add_argument("--mode", choices=("sparse", "dense"), default="sparse")
    p.add_argument("--script", help="json list of timed force events")
    p.add_argument("--frames", type=int, default=60)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--params", help="toml/json material parameter overrides")
    p.add_argument("--anchor-margin", type=float, default=0.1)
    p.add_argument("--out", help="write final state as npz")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="sparse vs dense speed report")
    p.add_argument("--cloud", nargs="+", required=True)
    p.add_argument("--nodes", type=int, default=512)
    p.add_argument("--frames", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--params", help="toml/json material parameter overrides")
    p.add_argument("--out", help="write the report JSON here as well")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="run the websocket streaming service")
    p.add_argument("--clouds", required=True, help="directory of .gsc files")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)

    args = parser.parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
