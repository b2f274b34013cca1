"""Command-line entry point: run, benchmark, plan, replay, serve."""
from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from .envcore import load_config
from .envs import ENV_IDS, default_config, make_env, scripted_expert
from .errors import LapkitError
from .kinematics import InstrumentLimits, PTSDState
from .planner import (
    CollisionWorld,
    PlanRequest,
    StaticBox,
    StaticCapsule,
    rrt_plan,
    write_path,
)
from .sensors import render, write_ppm
from .trajstore import read as read_traj
from .trajstore import record as record_traj
from .trajstore import write as write_traj

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lapkit", description="Simulated laparoscopy environments"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="roll out a policy and print results")
    run.add_argument("--env", required=True)
    run.add_argument("--config", default=None, help="EnvConfig JSON file")
    run.add_argument("--policy", choices=("random", "scripted"), default="random")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--episodes", type=int, default=1)
    run.add_argument("--record", default=None, help="write last episode here")
    run.add_argument("--json", action="store_true", dest="as_json")

    bench = sub.add_parser("benchmark", help="measure stepping throughput")
    bench.add_argument("--env", required=True)
    bench.add_argument("--steps", type=int, default=200)
    bench.add_argument("--json", action="store_true", dest="as_json")

    plan = sub.add_parser("plan", help="RRT plan from a request file")
    plan.add_argument("--space", choices=("cartesian", "tpsd"), required=True)
    plan.add_argument("--request", required=True, help="JSON request file")
    plan.add_argument("--out", required=True, help="path output (JSON Lines)")

    replay = sub.add_parser("replay", help="re-render a trajectory to frames")
    replay.add_argument("--traj", required=True)
    replay.add_argument("--frames", required=True, help="output directory")

    srv = sub.add_parser("serve", help="start the environment server")
    srv.add_argument("--addr", default=None, help="host:port")
    srv.add_argument("--transport", choices=("tcp", "websocket"), default="tcp")
    return parser


def _cmd_run(args) -> int:
    config = load_config(args.config) if args.config else default_config(args.env)
    env = make_env(args.env, config)

    def policy(e):
        if args.policy == "scripted":
            return scripted_expert(e)
        return policy.rng.uniform(-1, 1, size=e.action_dim)

    results = []
    last_traj = None
    for ep in range(args.episodes):
        seed = args.seed + ep
        policy.rng = np.random.default_rng(seed)
        traj = record_traj(env, policy, env_id=args.env, seed=seed,
                           source="scripted" if args.policy == "scripted"
                           else "agent")
        last_traj = traj
        total = sum(s.reward for s in traj.steps)
        success = bool(traj.steps and traj.steps[-1].terminated
                       and traj.steps[-1].reward_breakdown
                       and any(fid == "success" and v > 0
                               for fid, v in traj.steps[-1].reward_breakdown))
        results.append({"episode": ep, "seed": seed, "steps": len(traj.steps),
                        "return": total, "success": success})
        if not args.as_json:
            print(f"episode {ep} seed {seed}: return {total:.4f} "
                  f"steps {len(traj.steps)} success {success}")
    summary = {
        "episodes": args.episodes,
        "mean_return": float(np.mean([r["return"] for r in results])),
        "success_rate": float(np.mean([r["success"] for r in results])),
    }
    if args.record and last_traj is not None:
        write_traj(last_traj, args.record)
    if args.as_json:
        print(json.dumps({"results": results, "summary": summary}))
    else:
        print(f"summary: mean return {summary['mean_return']:.4f} "
              f"success rate {summary['success_rate']:.2%}")
    return EXIT_OK


def _cmd_benchmark(args) -> int:
    env = make_env(args.env)
    env.reset(seed=0)
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    done_steps = 0
    while done_steps < args.steps:
        result = env.step(rng.uniform(-1, 1, size=env.action_dim))
        done_steps += 1
        if result.terminated or result.truncated:
            env.reset(seed=done_steps)
    elapsed = time.perf_counter() - t0
    rate = args.steps / elapsed
    if args.as_json:
        print(json.dumps({"env": args.env, "steps": args.steps,
                          "seconds": elapsed, "steps_per_second": rate}))
    else:
        print(f"{args.env}: {args.steps} steps in {elapsed:.2f}s "
              f"({rate:.1f} steps/s)")
    return EXIT_OK


def _load_plan_request(args) -> PlanRequest:
    with open(args.request, encoding="utf-8") as fh:
        spec = json.load(fh)
    world = CollisionWorld(
        capsules=[StaticCapsule(tuple(c["a"]), tuple(c["b"]), float(c["radius"]))
                  for c in spec.get("capsules", [])],
        boxes=[StaticBox(tuple(b["low"]), tuple(b["high"]))
               for b in spec.get("boxes", [])],
        clearance=float(spec.get("clearance", 0.0)),
    )
    if "limits" in spec:
        lim = spec["limits"]
        limits = InstrumentLimits(
            ptsd_low=PTSDState.from_array(lim["ptsd_low"]),
            ptsd_high=PTSDState.from_array(lim["ptsd_high"]),
            cartesian_low=tuple(lim["cartesian_low"]),
            cartesian_high=tuple(lim["cartesian_high"]),
            velocity_limits=tuple(lim.get("velocity_limits", (30, 30, 60, 50))),
        )
    else:
        from .envs.base import default_limits

        limits = default_limits()
    kwargs = {}
    if args.space == "tpsd":
        from .kinematics import RcmFrame

        rcm = spec.get("rcm", {"position": [0, 0, 120],
                               "orientation": [180, 0, 0]})
        kwargs["rcm"] = RcmFrame(tuple(rcm["position"]),
                                 tuple(rcm["orientation"]))
    return PlanRequest(
        space=args.space,
        start=np.asarray(spec["start"], dtype=float),
        goal=np.asarray(spec["goal"], dtype=float),
        world=world,
        limits=limits,
        step_size=float(spec.get("step_size", 2.0)),
        goal_tolerance=float(spec.get("goal_tolerance", 2.0)),
        goal_bias=float(spec.get("goal_bias", 0.1)),
        max_iterations=int(spec.get("max_iterations", 5000)),
        seed=int(spec.get("seed", 0)),
        **kwargs,
    )


def _cmd_plan(args) -> int:
    request = _load_plan_request(args)
    path = rrt_plan(request)
    write_path(path, request, args.out)
    print(f"path with {len(path)} configurations written to {args.out}")
    return EXIT_OK


def _cmd_replay(args) -> int:
    traj = read_traj(args.traj)
    env = make_env(traj.env_id, traj.config)
    env.reset(seed=traj.seed)
    os.makedirs(args.frames, exist_ok=True)
    frame = render(env.scene(), env.camera())
    count = 0
    for step in traj.steps:
        env.step(np.asarray(step.action, dtype=float))
        frame = render(env.scene(), env.camera())
        out = os.path.join(args.frames, f"frame_{count:05d}.ppm")
        write_ppm(out, frame.rgb)
        count += 1
    print(f"wrote {count} frames to {args.frames}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    from .envserver import serve

    serve(address=args.addr, transport=args.transport)
    return EXIT_OK


def dispatch(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    handlers = {
        "run": _cmd_run,
        "benchmark": _cmd_benchmark,
        "plan": _cmd_plan,
        "replay": _cmd_replay,
        "serve": _cmd_serve,
    }
    try:
        return handlers[args.command](args)
    except LapkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if type(exc).__name__ in ("UnknownEnv", "InvalidConfig"):
            return EXIT_USAGE
        return EXIT_RUNTIME
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - single operator surface
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(dispatch())
