"""Command-line entry point: validate scenarios, run simulations, debug solves."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from .kinematics import AgentState
from .scenario import (
    ScenarioError,
    load_scenario,
    write_timing,
    write_trace,
)
from .sim import Simulation, SolverFailure, detect_actual_collision, run, trace_rows

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_SOLVER = 2


def _load(path: str):
    p = Path(path)
    if not p.exists():
        raise ScenarioError(f"scenario file not found: {p}")
    return load_scenario(p)


def _summary(trace, collisions) -> dict:
    per_agent = {}
    for cfg in trace.scenario.agents:
        recs = trace.agent_records(cfg.agent_id)
        times = np.array([r.solve_time_ms for r in recs])
        v = np.array([r.state.v for r in recs])
        per_agent[str(cfg.agent_id)] = {
            "v_min": float(v.min()),
            "v_max": float(v.max()),
            "solve_ms_median": float(np.median(times)),
            "solve_ms_max": float(times.max()),
            "inner_iterations_max": int(max(r.solver.inner_iterations for r in recs)),
            "statuses": sorted({r.solver.status for r in recs}),
            "min_planner_gap": float(min(min(r.planner_gaps.values()) for r in recs)),
        }
    return {
        "scenario": trace.scenario.name,
        "steps": trace.n_steps,
        "collisions": [
            {"k": k, "i": i, "l": l, "area": area} for k, i, l, area in collisions
        ],
        "agents": per_agent,
    }


def cmd_validate(args) -> int:
    _load(args.scenario)
    print(f"scenario ok: {args.scenario}")
    return EXIT_OK


def cmd_run(args) -> int:
    scenario = _load(args.scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    progress = None
    if not args.quiet:
        progress = lambda done, total: print(f"  step {done}/{total}", file=sys.stderr)
    trace = run(scenario, args.steps, progress=progress)
    rows = trace_rows(trace)
    write_trace(rows, out / "trace.csv")
    write_timing(rows, out / "timing.csv")
    collisions = detect_actual_collision(trace)
    summary = _summary(trace, collisions)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    if not args.quiet:
        print(json.dumps(summary, indent=2))
    if collisions:
        print(f"WARNING: {len(collisions)} footprint overlaps detected", file=sys.stderr)
    return EXIT_OK


def cmd_solve_once(args) -> int:
    scenario = _load(args.scenario)
    sim = Simulation(scenario)
    if args.step_state:
        p = Path(args.step_state)
        if not p.exists():
            raise ScenarioError(f"state file not found: {p}")
        states = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
        for aid_str, st in states.items():
            aid = int(aid_str)
            if aid not in sim.agents:
                raise ScenarioError(f"state file names unknown agent {aid}")
            sim.agents[aid].state = AgentState(
                float(st.get("a_x", 0.0)), float(st["v"]), float(st["s"])
            )
    if args.agent not in sim.agents:
        raise ScenarioError(f"unknown agent id {args.agent}")
    records = sim.step()
    rec = next(r for r in records if r.agent == args.agent)
    print(f"agent {args.agent} step 0")
    print(f"  region              : {rec.region.value}")
    print(f"  active conflicts    : {sorted(rec.conflict_sets.active)}")
    print(f"  preview active      : {rec.preview_active}")
    print(f"  status              : {rec.solver.status}")
    print(f"  u0                  : {rec.u:.6f} m/s^2")
    print(f"  inner/outer iters   : {rec.solver.inner_iterations}/{rec.solver.outer_iterations}")
    print(f"  fixed-point residual: {rec.solver.fp_residual:.3e}")
    print(f"  max psi/beta        : {rec.solver.max_scaled_violation:.3e}")
    print(f"  solve time          : {rec.solve_time_ms:.2f} ms")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="intersection-mpc",
        description="Distributed NMPC intersection coordination simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate a scenario and write trace files")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--steps", type=int, required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--quiet", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_val = sub.add_parser("validate", help="parse and validate a scenario file")
    p_val.add_argument("--scenario", required=True)
    p_val.set_defaults(func=cmd_validate)

    p_one = sub.add_parser("solve-once", help="solve a single agent problem and print diagnostics")
    p_one.add_argument("--scenario", required=True)
    p_one.add_argument("--agent", type=int, required=True)
    p_one.add_argument("--step-state", default=None,
                       help="YAML file mapping agent id to {a_x, v, s} overrides")
    p_one.set_defaults(func=cmd_solve_once)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
