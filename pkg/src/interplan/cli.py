"""Batch command-line entry point.

Subcommands cover the whole pipeline: gen (scenario files), predict
(marginals + convergence reports), plan (ego trajectory selection),
train (weight fitting), eval (metric suites + trajectory CSV dumps),
oracle-check (message passing vs exact enumeration, planner vs
recomputation) and bench (accelerated vs plain collision kernels).

Configuration comes from built-in defaults, optionally overlaid by a
JSON config file (--config), overlaid by explicit flags; flags win.
Every output is deterministic given the seed: sample sets are derived
per (seed, scene, vehicle), files are written with canonical key order
and no timestamps, so a rerun is byte-identical.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import sys
import time

import numpy as np

from . import energy as energy_mod
from . import inference, kernels, learning, metrics, planner, scenario, serialize
from .errors import InterplanError
from .sampler import EGO_SLOT, SamplerConfig, derive_seed, sample_trajectories
from .types import Trajectory, TrajectorySet

PREDICTIONS_FORMAT = "interplan-predictions"
PLANS_FORMAT = "interplan-plans"
ARTIFACT_VERSION = 1

DEFAULTS = {
    "seed": 0,
    "samples": 200,
    "bp_iters": 5,
    "bp_tol": 1e-6,
    "gamma": 3.0,
    "lambda": 40.0,
    "count": 20,
    "template": {
        "kind": "lane_follow",
        "num_actors": [2, 4],
        "speed_range": [5.0, 12.0],
        "accel_noise": 0.5,
        "lateral_jitter": 0.0,
    },
    "sampler": {
        "mode_weights": [0.3, 0.2, 0.5],
        "accel_range": [-4.0, 3.0],
        "radius_range": [6.0, 200.0],
        "clothoid_sharpness_range": [-0.02, 0.02],
    },
    "train": {
        "alpha": 1.0,
        "lr": 0.05,
        "epochs": 20,
        "batch_size": 8,
        "k_train": 100,
        "grad_check": False,
        "learn_gamma": False,
        "freeze_marginals": False,
        "momentum": 0.0,
        "penalty_collision": 2.0,
        "penalty_lane": 2.0,
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key in out and isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _effective_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if getattr(args, "config", None):
        file_cfg = serialize.load_json(args.config)
        if not isinstance(file_cfg, dict):
            raise InterplanError(f"{args.config}: config must be a JSON object")
        cfg = _deep_merge(cfg, file_cfg)
    for flag, key in [
        ("seed", "seed"),
        ("samples", "samples"),
        ("bp_iters", "bp_iters"),
        ("bp_tol", "bp_tol"),
        ("gamma", "gamma"),
        ("lam", "lambda"),
        ("count", "count"),
    ]:
        value = getattr(args, flag, None)
        if value is not None:
            cfg[key] = value
    if getattr(args, "template_kind", None) is not None:
        cfg["template"]["kind"] = args.template_kind
    return cfg


def _sampler_config(cfg: dict, num_samples: int, rng_seed) -> SamplerConfig:
    s = cfg["sampler"]
    return SamplerConfig(
        mode_weights=tuple(s["mode_weights"]),
        accel_range=tuple(s["accel_range"]),
        radius_range=tuple(s["radius_range"]),
        clothoid_sharpness_range=tuple(s["clothoid_sharpness_range"]),
        num_samples=num_samples,
        rng_seed=rng_seed,
    )


def _template(cfg: dict) -> scenario.ScenarioTemplate:
    t = cfg["template"]
    return scenario.ScenarioTemplate(
        kind=t["kind"],
        num_actors=tuple(int(v) for v in t["num_actors"]),
        speed_range=tuple(t["speed_range"]),
        accel_noise=t["accel_noise"],
        lateral_jitter=t["lateral_jitter"],
    )


def _load_weights(cfg: dict, args):
    """Weights file if given, else reference weights; flag gamma/lambda win."""
    path = getattr(args, "weights", None)
    if path:
        ew, pw = serialize.load_weights(path)
    else:
        ew = energy_mod.EnergyWeights.reference(gamma=cfg["gamma"])
        pw = planner.PlannerWeights.reference(collision_lambda=cfg["lambda"])
    if getattr(args, "gamma", None) is not None:
        ew = energy_mod.EnergyWeights(ew.unary_feature_weights, args.gamma)
    if getattr(args, "lam", None) is not None:
        pw = planner.PlannerWeights(pw.traj_cost_feature_weights, args.lam)
    return ew, pw


def _actor_sets(scene, cfg: dict, seed: int, num_samples: int):
    return [
        sample_trajectories(
            actor.state,
            _sampler_config(cfg, num_samples, derive_seed(seed, scene.scene_id, i)),
            scene.grid,
        )
        for i, actor in enumerate(scene.actors)
    ]


def _scene_inference(scene, cfg, seed, num_samples, ew):
    sets = _actor_sets(scene, cfg, seed, num_samples)
    footprints = [a.footprint for a in scene.actors]
    if scene.actors:
        unary = energy_mod.build_unary_table(scene, sets, ew)
        edges = energy_mod.build_collision_edges(sets, footprints)
    else:
        unary = energy_mod.UnaryTable(np.zeros((0, num_samples)))
        edges = energy_mod.CollisionEdges(0, (), ())
    marg, report = inference.run_bp(
        unary, edges, ew.gamma, iters=cfg["bp_iters"], tol=cfg["bp_tol"]
    )
    return sets, marg, report


def cmd_gen(cfg, args) -> int:
    scenes = scenario.generate(_template(cfg), cfg["count"], cfg["seed"])
    scenario.save(scenes, args.out)
    print(f"wrote {len(scenes)} scenes to {args.out}")
    return 0


def cmd_predict(cfg, args) -> int:
    scenes = scenario.load(args.scenes)
    ew, _ = _load_weights(cfg, args)
    out_scenes = []
    for scene in scenes:
        _, marg, report = _scene_inference(scene, cfg, cfg["seed"], cfg["samples"], ew)
        out_scenes.append(
            {
                "id": scene.scene_id,
                "marginals": [[float(v) for v in row] for row in marg],
                "bp_report": report.to_json_dict(),
            }
        )
    doc = {
        "format": PREDICTIONS_FORMAT,
        "version": ARTIFACT_VERSION,
        "seed": cfg["seed"],
        "samples": cfg["samples"],
        "gamma": ew.gamma,
        "scenes": out_scenes,
    }
    serialize.write_json(args.out, doc, pretty=False)
    print(f"wrote predictions for {len(scenes)} scenes to {args.out}")
    return 0


def _load_predictions(path, scenes):
    doc = serialize.load_json(path)
    serialize.check_format(doc, path, PREDICTIONS_FORMAT, ARTIFACT_VERSION)
    by_id = {s["id"]: s for s in doc["scenes"]}
    missing = [s.scene_id for s in scenes if s.scene_id not in by_id]
    if missing:
        raise InterplanError(f"{path}: no predictions for scenes {missing[:3]}")
    return doc, by_id


def cmd_plan(cfg, args) -> int:
    scenes = scenario.load(args.scenes)
    _, pw = _load_weights(cfg, args)
    pred_doc, pred_by_id = _load_predictions(args.predictions, scenes)
    seed, samples = pred_doc["seed"], pred_doc["samples"]
    out_scenes = []
    for scene in scenes:
        marg = np.array(pred_by_id[scene.scene_id]["marginals"], dtype=np.float64)
        if marg.size == 0:
            marg = marg.reshape(0, samples)
        sets = _actor_sets(scene, cfg, seed, samples)
        ego_set = planner.ego_trajectory_set(
            scene.ego_state,
            _sampler_config(cfg, samples, derive_seed(seed, scene.scene_id, EGO_SLOT)),
            scene.grid,
        )
        result = planner.plan(scene, marg, sets, pw, ego_set)
        out_scenes.append({"id": scene.scene_id, **result.to_json_dict()})
    doc = {
        "format": PLANS_FORMAT,
        "version": ARTIFACT_VERSION,
        "seed": seed,
        "samples": samples,
        "lambda": pw.collision_lambda,
        "scenes": out_scenes,
    }
    serialize.write_json(args.out, doc, pretty=False)
    print(f"wrote plans for {len(scenes)} scenes to {args.out}")
    return 0


def cmd_train(cfg, args) -> int:
    scenes = scenario.load(args.scenes)
    t = cfg["train"]
    tc = learning.TrainConfig(
        alpha=t["alpha"],
        lr=t["lr"],
        epochs=t["epochs"],
        batch_size=t["batch_size"],
        k_train=t["k_train"],
        seed=cfg["seed"],
        grad_check=t["grad_check"],
        gamma=cfg["gamma"],
        collision_lambda=cfg["lambda"],
        learn_gamma=t["learn_gamma"],
        freeze_marginals=t["freeze_marginals"],
        bp_iters=cfg["bp_iters"],
        penalty_collision=t["penalty_collision"],
        penalty_lane=t["penalty_lane"],
        momentum=t["momentum"],
    )
    report = learning.train(scenes, tc)
    serialize.save_weights(args.out_weights, report.energy_weights, report.planner_weights)
    if args.out_report:
        serialize.write_json(args.out_report, report.to_json_dict())
    final = report.loss_total[-1] if report.loss_total else float("nan")
    print(f"trained on {len(scenes)} scenes, final loss {final:.6f}, weights at {args.out_weights}")
    return 0


def _rebuild_plans(path, scenes):
    doc = serialize.load_json(path)
    serialize.check_format(doc, path, PLANS_FORMAT, ARTIFACT_VERSION)
    by_id = {s["id"]: s for s in doc["scenes"]}
    plans = []
    for scene in scenes:
        if scene.scene_id not in by_id:
            raise InterplanError(f"{path}: no plan for scene {scene.scene_id}")
        d = by_id[scene.scene_id]
        plans.append(
            planner.PlanResult(
                chosen_index=d["chosen_index"],
                trajectory=Trajectory(np.array(d["waypoints"], dtype=np.float64)),
                traj_costs=np.array(d["traj_costs"], dtype=np.float64),
                collision_costs=np.array(d["expected_collision_costs"], dtype=np.float64),
            )
        )
    return doc, plans


def _trajectory_csv(scenes, marginals_by_id, sets_by_id, plans) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["scene_id", "actor_id", "sample_id", "t", "x", "y", "heading", "probability"]
    )
    for si, scene in enumerate(scenes):
        marg = marginals_by_id[scene.scene_id]
        sets = sets_by_id[scene.scene_id]
        for ai in range(len(scene.actors)):
            wp = sets[ai].waypoints
            for k in range(wp.shape[0]):
                prob = repr(float(marg[ai][k]))
                for row in wp[k]:
                    writer.writerow(
                        [scene.scene_id, ai, k, repr(row[3]), repr(row[0]), repr(row[1]), repr(row[2]), prob]
                    )
        if plans is not None:
            plan = plans[si]
            for row in plan.trajectory.waypoints:
                writer.writerow(
                    [scene.scene_id, "ego", plan.chosen_index, repr(row[3]), repr(row[0]), repr(row[1]), repr(row[2]), "1.0"]
                )
    return buf.getvalue()


def cmd_eval(cfg, args) -> int:
    scenes = scenario.load(args.scenes)
    pred_doc, pred_by_id = (None, {})
    if args.predictions:
        pred_doc, pred_by_id = _load_predictions(args.predictions, scenes)
    plans = None
    if args.plans:
        _, plans = _rebuild_plans(args.plans, scenes)

    prediction_metrics = None
    marginals_by_id = {}
    sets_by_id = {}
    if pred_doc is not None:
        seed, samples = pred_doc["seed"], pred_doc["samples"]
        marginals_per_scene = []
        sets_per_scene = []
        for scene in scenes:
            marg = np.array(pred_by_id[scene.scene_id]["marginals"], dtype=np.float64)
            if marg.size == 0:
                marg = marg.reshape(0, samples)
            sets = _actor_sets(scene, cfg, seed, samples)
            marginals_per_scene.append(marg)
            sets_per_scene.append(sets)
            marginals_by_id[scene.scene_id] = marg
            sets_by_id[scene.scene_id] = sets
        prediction_metrics = metrics.eval_prediction(scenes, marginals_per_scene, sets_per_scene)
        serialize.write_json(f"{args.out_prefix}_prediction.json", prediction_metrics.to_json_dict())

    planning_metrics = None
    if plans is not None:
        planning_metrics = metrics.eval_planning(scenes, plans)
        serialize.write_json(f"{args.out_prefix}_planning.json", planning_metrics.to_json_dict())

    serialize.atomic_write_text(
        f"{args.out_prefix}_metrics.csv",
        metrics.metrics_to_csv(prediction_metrics, planning_metrics),
    )
    if pred_doc is not None:
        serialize.atomic_write_text(
            f"{args.out_prefix}_trajectories.csv",
            _trajectory_csv(scenes, marginals_by_id, sets_by_id, plans),
        )
    print(f"wrote metrics with prefix {args.out_prefix}")
    return 0


def cmd_oracle_check(cfg, args) -> int:
    """Cross-check message passing and the planner against brute force."""
    rng = np.random.default_rng(cfg["seed"])
    failures = []

    # chain-structured instances: propagation must be exact
    worst_tree = 0.0
    for _ in range(20):
        n = int(rng.integers(2, 5))
        k = int(rng.integers(2, 5))
        unary = rng.uniform(0.0, 2.0, size=(n, k))
        pairs = tuple((i, i + 1) for i in range(n - 1))
        mats = tuple(rng.random((k, k)) < 0.3 for _ in pairs)
        edges = energy_mod.CollisionEdges(n, pairs, mats)
        gamma = float(rng.uniform(0.0, 5.0))
        approx, _ = inference.run_bp(unary, edges, gamma, iters=2 * n, tol=0.0)
        exact = inference.exact_marginals(unary, edges, gamma)
        worst_tree = max(worst_tree, float(np.abs(approx - exact).max()))
    if worst_tree > 1e-6:
        failures.append(f"tree marginals off by {worst_tree:.2e} (tolerance 1e-6)")

    # planner argmin must equal per-sample recomputation
    scenes = scenario.generate(_template(cfg), 5, cfg["seed"])
    ew, pw = _load_weights(cfg, args)
    for scene in scenes:
        sets, marg, _ = _scene_inference(scene, cfg, cfg["seed"], 40, ew)
        ego_set = planner.ego_trajectory_set(
            scene.ego_state,
            _sampler_config(cfg, 40, derive_seed(cfg["seed"], scene.scene_id, EGO_SLOT)),
            scene.grid,
        )
        result = planner.plan(scene, marg, sets, pw, ego_set)
        footprints = [a.footprint for a in scene.actors]
        totals = []
        for k in range(len(ego_set)):
            tau = ego_set.trajectory(k)
            feats = planner.compute_ego_features(
                scene, TrajectorySet(tau.waypoints[None], [tau.mode])
            )[0]
            cost = float(feats @ pw.traj_cost_feature_weights)
            cost += planner.expected_collision_cost(
                tau, scene.ego_footprint, marg, sets, footprints, pw.collision_lambda
            )
            totals.append(cost)
        if int(np.argmin(totals)) != result.chosen_index:
            failures.append(f"planner argmin mismatch on scene {scene.scene_id}")

    report = {"tree_max_error": worst_tree, "failures": failures}
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0 if not failures else 1


def cmd_bench(cfg, args) -> int:
    """Time the accelerated collision kernels against the plain-array path.

    Both backends get identical pre-built pose arrays, so the comparison
    isolates the kernels themselves.
    """
    from . import _kernels_numpy

    try:
        from . import _kernels_numba

        _kernels_numba.warmup()
        impls = [("numba", _kernels_numba), ("numpy", _kernels_numpy)]
    except ImportError:
        impls = [("numpy", _kernels_numpy)]

    template = scenario.ScenarioTemplate("lane_follow", num_actors=(8, 12))
    scenes = scenario.generate(template, args.bench_scenes, cfg["seed"])
    jobs = []
    for scene in scenes:
        sets = _actor_sets(scene, cfg, cfg["seed"], cfg["samples"])
        prepped = []
        for actor, tset in zip(scene.actors, sets):
            pos, cos, sin = kernels.interpolated_poses(tset.waypoints)
            centers, radii = kernels.trajectory_discs(pos, actor.footprint.circumradius)
            hl, hw = 0.5 * actor.footprint.length, 0.5 * actor.footprint.width
            prepped.append((pos, cos, sin, centers, radii, hl, hw))
        for i in range(len(prepped)):
            for j in range(i + 1, len(prepped)):
                jobs.append((prepped[i], prepped[j]))

    results = {}
    checksums = {}
    for name, impl in impls:
        start = time.perf_counter()
        total = 0
        for a, b in jobs:
            hit = impl.pair_first_hit(
                a[0], a[1], a[2], b[0], b[1], b[2],
                a[5], a[6], b[5], b[6], a[3], a[4], b[3], b[4],
            )
            total += int(hit.sum())
        elapsed = time.perf_counter() - start
        results[name] = {"seconds": elapsed, "pair_jobs": len(jobs)}
        checksums[name] = total
        per_scene = 1000.0 * elapsed / max(1, len(scenes))
        print(f"{name:>6}: {elapsed:.3f} s total, {per_scene:.2f} ms/scene, {len(jobs)} pair jobs")
    if len(results) == 2:
        if checksums["numba"] != checksums["numpy"]:
            print("error: backends disagree on first-hit results", file=sys.stderr)
            return 1
        speedup = results["numpy"]["seconds"] / results["numba"]["seconds"]
        print(f"speedup (numpy/numba): {speedup:.1f}x  [active backend: {kernels.BACKEND}]")
        results["speedup"] = speedup
    if args.out:
        serialize.write_json(args.out, results)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override it")
    common.add_argument("--seed", type=int)
    common.add_argument("--samples", type=int, help="trajectory samples per actor")
    common.add_argument("--bp-iters", dest="bp_iters", type=int)
    common.add_argument("--bp-tol", dest="bp_tol", type=float)
    common.add_argument("--gamma", type=float, help="pairwise collision energy")
    common.add_argument("--lambda", dest="lam", type=float, help="planner collision cost")
    common.add_argument("--dump-config", action="store_true", help="print effective config and exit")

    parser = argparse.ArgumentParser(
        prog="interplan", description="joint trajectory prediction and planning pipeline"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a scenario file")
    p.add_argument("--count", type=int)
    p.add_argument("--template-kind", dest="template_kind", choices=scenario.TEMPLATE_KINDS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("predict", parents=[common], help="marginals + convergence report per scene")
    p.add_argument("--scenes", required=True)
    p.add_argument("--weights")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("plan", parents=[common], help="select ego trajectories")
    p.add_argument("--scenes", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--weights")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("train", parents=[common], help="fit weights on a scenario file")
    p.add_argument("--scenes", required=True)
    p.add_argument("--out-weights", dest="out_weights", required=True)
    p.add_argument("--out-report", dest="out_report")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="metric suites + trajectory dumps")
    p.add_argument("--scenes", required=True)
    p.add_argument("--predictions")
    p.add_argument("--plans")
    p.add_argument("--out-prefix", dest="out_prefix", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle-check", parents=[common], help="cross-check against brute force")
    p.add_argument("--weights")
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("bench", parents=[common], help="compare collision-kernel backends")
    p.add_argument("--bench-scenes", dest="bench_scenes", type=int, default=20)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _effective_config(args)
        if getattr(args, "dump_config", False):
            print(serialize.canonical_dumps(cfg), end="")
            return 0
        return args.func(cfg, args)
    except InterplanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
