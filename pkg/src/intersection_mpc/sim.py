"""Deterministic closed-loop simulator over an in-process one-step-delayed bus.

Per step every agent builds its problem from the previous step's broadcast
trajectories and the shared measured state snapshot, solves it, and only then
the plant states advance and the mailbox is swapped -- a synchronous barrier,
so per-step results are independent of agent ordering.  The plant model equals
the prediction model (no mismatch, no noise).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import collision
from .coordination import ConflictSets, RegionTag, active_conflict_set, ahead_in_lane, region_of
from .kinematics import AgentState, make_discrete_model
from .ocp import AgentOcpTemplate, ConflictTrajectory, build_problem
from .panoc import SolverResult, penalty_outer_loop
from .path_geometry import fit_path_spline
from .scenario import ScenarioConfig, TraceRow

__all__ = [
    "TrajectoryMessage",
    "StepRecord",
    "SimTrace",
    "SolverFailure",
    "Simulation",
    "message_shift",
    "run",
    "detect_actual_collision",
    "trace_rows",
]


class SolverFailure(RuntimeError):
    def __init__(self, agent_id, k, reason):
        super().__init__(f"solver failure for agent {agent_id} at step {k}: {reason}")
        self.agent_id = agent_id
        self.k = k


@dataclass(frozen=True)
class TrajectoryMessage:
    """Broadcast payload: predicted pose and speed sequences, length N+1."""

    sender: int
    k: int
    x_g: np.ndarray
    y_g: np.ndarray
    psi: np.ndarray
    v: np.ndarray


def message_shift(msg: TrajectoryMessage, sampling_time: float) -> TrajectoryMessage:
    """Align a message from step k-1 with the receiver's horizon at step k.

    Drops the stale first sample and appends one constant-velocity
    extrapolated sample (last pose advanced by v*T_s along its heading), so
    sample j of the result predicts time k+j.
    """
    x = np.empty_like(msg.x_g)
    y = np.empty_like(msg.y_g)
    psi = np.empty_like(msg.psi)
    v = np.empty_like(msg.v)
    x[:-1] = msg.x_g[1:]
    y[:-1] = msg.y_g[1:]
    psi[:-1] = msg.psi[1:]
    v[:-1] = msg.v[1:]
    x[-1] = msg.x_g[-1] + msg.v[-1] * sampling_time * np.cos(msg.psi[-1])
    y[-1] = msg.y_g[-1] + msg.v[-1] * sampling_time * np.sin(msg.psi[-1])
    psi[-1] = msg.psi[-1]
    v[-1] = msg.v[-1]
    return TrajectoryMessage(sender=msg.sender, k=msg.k + 1, x_g=x, y_g=y, psi=psi, v=v)


@dataclass
class StepRecord:
    k: int
    t: float
    agent: int
    state: AgentState
    x_g: float
    y_g: float
    psi: float
    u: float
    region: RegionTag
    conflict_sets: ConflictSets
    effective_s_cr_out: float
    preview_active: bool
    solver: SolverResult
    solve_time_ms: float
    planner_gaps: dict  # other id -> signed distance of own safety region to its box


@dataclass
class SimTrace:
    scenario: ScenarioConfig
    steps: list = field(default_factory=list)  # one list of StepRecord per k

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    def agent_records(self, agent_id) -> list:
        return [rec for step in self.steps for rec in step if rec.agent == agent_id]


class _AgentRuntime:
    def __init__(self, cfg, horizon):
        self.cfg = cfg
        self.spline = fit_path_spline(cfg.waypoints)
        self.model = make_discrete_model(cfg.dynamics)
        self.template = AgentOcpTemplate(
            agent_id=cfg.agent_id,
            model=self.model,
            spline=self.spline,
            weights=cfg.weights,
            limits=cfg.limits,
            safety=cfg.safety,
            geometry=cfg.geometry,
            boundaries=cfg.regions,
            horizon=horizon,
            v_ref=cfg.v_ref,
        )
        self.state = AgentState(cfg.a_x_init, cfg.v_init, cfg.s_init)
        self.warm_u = np.zeros(horizon)

    def pose(self):
        p = self.spline.position(float(self.state.s))
        psi = self.spline.heading(float(self.state.s))
        return float(p[0]), float(p[1]), float(psi)


class Simulation:
    """Owns world state: agent runtimes, mailbox and the step counter."""

    def __init__(self, scenario: ScenarioConfig):
        self.scenario = scenario
        self.k = 0
        self.agents = {
            cfg.agent_id: _AgentRuntime(cfg, scenario.horizon)
            for cfg in sorted(scenario.agents, key=lambda c: c.agent_id)
        }
        self.gamma = scenario.priorities
        self.ahead_static = self._ahead_sets()
        self.mailbox = {aid: self._bootstrap_message(aid) for aid in self.agents}

    # -- helpers ----------------------------------------------------------

    def _ahead_sets(self) -> dict:
        """Same-lane-and-ahead relations from the current snapshot."""
        out = {}
        half_lane = 0.5 * self.scenario.lane_width
        for i, rt_i in self.agents.items():
            xi, yi, psii = rt_i.pose()
            members = set()
            for l, rt_l in self.agents.items():
                if l == i:
                    continue
                if ahead_in_lane((xi, yi), psii, rt_l.spline, float(rt_l.state.s), half_lane):
                    members.add(l)
            out[i] = frozenset(members)
        return out

    def _bootstrap_message(self, aid) -> TrajectoryMessage:
        """Cold-start stand-in for the missing step -1 broadcast.

        Constant-velocity straight-line extrapolation of the initial pose;
        sample 1 coincides with the true initial pose so the shifted message
        aligns exactly with the first control step.
        """
        rt = self.agents[aid]
        n = self.scenario.horizon
        t_s = self.scenario.sampling_time
        x0, y0, psi0 = rt.pose()
        v0 = rt.state.v
        steps = (np.arange(n + 1) - 1.0) * t_s * v0
        return TrajectoryMessage(
            sender=aid,
            k=-1,
            x_g=x0 + steps * np.cos(psi0),
            y_g=y0 + steps * np.sin(psi0),
            psi=np.full(n + 1, psi0),
            v=np.full(n + 1, v0),
        )

    def _compose_message(self, aid, u_opt) -> TrajectoryMessage:
        rt = self.agents[aid]
        traj = np.empty((self.scenario.horizon + 1, 3))
        x = rt.state.as_array()
        traj[0] = x
        for j, u in enumerate(u_opt):
            x = rt.model.A_d @ x + rt.model.B_d * u
            traj[j + 1] = x
        s_seq = traj[:, 2]
        pos = rt.spline.position(s_seq)
        psi = rt.spline.heading(s_seq)
        return TrajectoryMessage(
            sender=aid, k=self.k,
            x_g=pos[:, 0].copy(), y_g=pos[:, 1].copy(),
            psi=np.asarray(psi, dtype=float), v=traj[:, 1].copy(),
        )

    def _planner_gaps(self, aid, poses) -> dict:
        """Signed safety-region distance of this agent to every other, now."""
        xi, yi, psii = poses[aid]
        rt = self.agents[aid]
        v_i = rt.state.v
        gaps = {}
        for l, rt_l in self.agents.items():
            if l == aid:
                continue
            xl, yl, psil = poses[l]
            n_psi = collision.heading_unit_vector(psii, psil)
            d = collision.safety_distances(v_i, rt_l.state.v, n_psi, rt.cfg.safety)
            region = collision.safety_region_corners(rt.cfg.geometry, d)
            box = collision.overapprox_bounding_box(
                collision.Pose2D(xl, yl, psil, rt_l.state.v), rt_l.cfg.geometry,
                collision.Pose2D(xi, yi, psii, v_i),
            )
            gaps[l] = collision.signed_box_distance(region, box)
        return gaps

    def _solve_with_fallback(self, make_problem, warm_u):
        """Warm-started solve with deterministic multi-start recovery.

        The penalty landscape of a crossing conflict has separate pass and
        yield minima; a warm start carried over from free driving can lock
        the solver into an infeasible attempt between them.  When the outer
        loop cannot meet the constraint tolerance, the problem is re-solved
        from a full-throttle and then a full-braking initialization (fresh
        problem instances, so weights restart at beta_init).  The first
        feasible candidate wins -- progress is preferred over halting, and
        braking is the safety net; with no feasible candidate the least
        violated one is kept.
        """
        pcfg = self.scenario.penalty
        scfg = self.scenario.solver
        problem = make_problem()
        result = penalty_outer_loop(problem, warm_u, pcfg, scfg)
        if result.max_scaled_violation < pcfg.constraint_tolerance:
            return result, problem
        best = (result, problem)
        limits = problem.template.limits
        for u_init_value in (limits.a_x_max, limits.a_x_min):
            cand_problem = make_problem()
            cand = penalty_outer_loop(
                cand_problem, np.full_like(warm_u, u_init_value), pcfg, scfg
            )
            if cand.max_scaled_violation < pcfg.constraint_tolerance:
                return cand, cand_problem
            if cand.max_scaled_violation < best[0].max_scaled_violation:
                best = (cand, cand_problem)
        return best

    # -- stepping ----------------------------------------------------------

    def step(self) -> list:
        """Advance the world by one control period; returns the step records."""
        t_s = self.scenario.sampling_time
        ids = sorted(self.agents)
        poses = {aid: self.agents[aid].pose() for aid in ids}
        past_own_cr = {
            aid: self.agents[aid].state.s >= self.agents[aid].cfg.regions.s_cr_out
            for aid in ids
        }
        ahead_dyn = self._ahead_sets()

        records = []
        new_messages = {}
        applied = {}
        for aid in ids:
            rt = self.agents[aid]
            region = region_of(rt.state.s, rt.cfg.regions)
            sets = active_conflict_set(
                aid, self.gamma, region,
                {l: past_own_cr[l] for l in ids if l != aid},
                self.ahead_static[aid],
                frozenset(ahead_dyn[aid] - self.ahead_static[aid]),
            )
            conflict_data = {}
            for l in sets.active:
                shifted = message_shift(self.mailbox[l], t_s)
                conflict_data[l] = ConflictTrajectory(
                    agent_id=l,
                    geometry=self.agents[l].cfg.geometry,
                    x_g=shifted.x_g[1:], y_g=shifted.y_g[1:],
                    psi=shifted.psi[1:], v=shifted.v[1:],
                )
            def make_problem():
                return build_problem(
                    rt.template, rt.state, sets.active, conflict_data,
                    sets.prioritized_active, self.scenario.penalty.beta_init,
                )

            tic = time.perf_counter()
            result, problem = self._solve_with_fallback(make_problem, rt.warm_u)
            solve_ms = (time.perf_counter() - tic) * 1e3
            if not np.all(np.isfinite(result.u_opt)):
                raise SolverFailure(aid, self.k, "non-finite control sequence")

            u0 = float(result.u_opt[0])
            applied[aid] = u0
            rt.warm_u = np.append(result.u_opt[1:], result.u_opt[-1])
            new_messages[aid] = self._compose_message(aid, result.u_opt)
            records.append(StepRecord(
                k=self.k,
                t=self.k * t_s,
                agent=aid,
                state=rt.state,
                x_g=poses[aid][0], y_g=poses[aid][1], psi=poses[aid][2],
                u=u0,
                region=region,
                conflict_sets=sets,
                effective_s_cr_out=problem.effective_s_cr_out,
                preview_active=problem.preview_active,
                solver=result,
                solve_time_ms=solve_ms,
                planner_gaps=self._planner_gaps(aid, poses),
            ))

        # Barrier: plants advance and the mailbox swaps only after all solves.
        for aid in ids:
            rt = self.agents[aid]
            x_next = rt.model.A_d @ rt.state.as_array() + rt.model.B_d * applied[aid]
            rt.state = AgentState.from_array(x_next)
        self.mailbox = new_messages
        self.k += 1
        return records

    def run(self, n_steps: int, progress=None) -> SimTrace:
        trace = SimTrace(scenario=self.scenario)
        for step_idx in range(n_steps):
            trace.steps.append(self.step())
            if progress is not None and (step_idx + 1) % 50 == 0:
                progress(step_idx + 1, n_steps)
        return trace


def run(scenario: ScenarioConfig, n_steps: int, progress=None) -> SimTrace:
    """Fresh simulation of the scenario for n_steps; deterministic."""
    return Simulation(scenario).run(n_steps, progress=progress)


def detect_actual_collision(trace: SimTrace, geometries: dict | None = None, tol: float = 1e-9):
    """Ground-truth footprint intersection check over a trace.

    Computes the exact rotated-rectangle overlap of the physical footprints
    (no safety margins) for every unordered pair at every recorded step, via
    polygon clipping.  Returns a list of (k, i, l, area); empty means
    collision-free.
    """
    from shapely.geometry import Polygon

    if geometries is None:
        geometries = {cfg.agent_id: cfg.geometry for cfg in trace.scenario.agents}
    hits = []
    for step in trace.steps:
        polys = {}
        for rec in step:
            pose = collision.Pose2D(rec.x_g, rec.y_g, rec.psi, rec.state.v)
            polys[rec.agent] = Polygon(collision.footprint_corners(pose, geometries[rec.agent]))
        ids = sorted(polys)
        for a_pos, i in enumerate(ids):
            for l in ids[a_pos + 1:]:
                area = polys[i].intersection(polys[l]).area
                if area > tol:
                    hits.append((step[0].k, i, l, area))
    return hits


def trace_rows(trace: SimTrace) -> list:
    """Flatten a trace into serializable rows (see scenario.write_trace)."""
    rows = []
    for step in trace.steps:
        for rec in step:
            rows.append(TraceRow(
                k=rec.k,
                t=rec.t,
                agent=rec.agent,
                x_g=rec.x_g,
                y_g=rec.y_g,
                psi=rec.psi,
                v=rec.state.v,
                a_x=rec.state.a_x,
                u=rec.u,
                s=rec.state.s,
                region=rec.region.value,
                active_conflicts=tuple(sorted(rec.conflict_sets.active)),
                solve_time_ms=rec.solve_time_ms,
                inner_iterations=rec.solver.inner_iterations,
                outer_iterations=rec.solver.outer_iterations,
                max_constraint_residual=rec.solver.max_scaled_violation,
            ))
    return rows
