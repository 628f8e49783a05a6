"""Scenario configuration ingestion, validation and trace serialization.

Scenario files are YAML: global block (sampling time, horizon, solver and
penalty settings, lane width) plus one block per agent (path waypoints,
dynamics, geometry, limits, weights, safety distances, region boundaries,
priority and initial state).  Traces are written as comma-separated text with
9-significant-digit floats so identical runs serialize byte-identically;
wall-clock solve times go to a separate timing file because they are the one
nondeterministic output.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import yaml

from .collision import AgentGeometry, SafetyParams
from .coordination import PriorityMap, RegionBoundaries
from .kinematics import AgentDynamicsParams
from .ocp import AgentLimits, CostWeights
from .panoc import PenaltyConfig, SolverConfig

__all__ = [
    "ScenarioError",
    "ParseError",
    "ValidationError",
    "AgentConfig",
    "ScenarioConfig",
    "TraceRow",
    "parse_scenario",
    "serialize_scenario",
    "load_scenario",
    "bundled_scenario_path",
    "write_trace",
    "write_timing",
    "TRACE_COLUMNS",
]


class ScenarioError(Exception):
    pass


class ParseError(ScenarioError):
    pass


class ValidationError(ScenarioError):
    pass


@dataclass
class AgentConfig:
    agent_id: int
    priority: int
    waypoints: np.ndarray
    dynamics: AgentDynamicsParams
    geometry: AgentGeometry
    weights: CostWeights
    limits: AgentLimits
    safety: SafetyParams
    regions: RegionBoundaries
    v_ref: float
    v_init: float
    s_init: float = 0.0
    a_x_init: float = 0.0


@dataclass
class ScenarioConfig:
    name: str
    sampling_time: float
    horizon: int
    lane_width: float
    solver: SolverConfig
    penalty: PenaltyConfig
    agents: list

    @property
    def priorities(self) -> PriorityMap:
        return PriorityMap({a.agent_id: a.priority for a in self.agents})


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ValidationError(f"missing field '{key}' in {where}")
    return mapping[key]


def _build_agent(raw: dict) -> AgentConfig:
    where = f"agent {raw.get('id', '?')}"
    try:
        wp = np.asarray(_require(raw, "waypoints", where), dtype=float)
        if wp.ndim != 2 or wp.shape[1] != 2:
            raise ValidationError(f"{where}: waypoints must be a list of [x, y] pairs")
        lim = _require(raw, "limits", where)
        saf = _require(raw, "safety", where)
        wgt = _require(raw, "weights", where)
        reg = _require(raw, "regions", where)
        return AgentConfig(
            agent_id=int(_require(raw, "id", where)),
            priority=int(_require(raw, "priority", where)),
            waypoints=wp,
            dynamics=AgentDynamicsParams(
                drivetrain_time_constant=float(_require(raw, "drivetrain_time_constant", where)),
                sampling_time=float(raw["_sampling_time"]),
            ),
            geometry=AgentGeometry(
                length=float(_require(raw, "length", where)),
                width=float(_require(raw, "width", where)),
            ),
            weights=CostWeights(
                q=float(_require(wgt, "q", where)),
                q_terminal=float(_require(wgt, "q_terminal", where)),
                r=float(_require(wgt, "r", where)),
            ),
            limits=AgentLimits(
                a_x_min=float(_require(lim, "a_x_min", where)),
                a_x_max=float(_require(lim, "a_x_max", where)),
                v_max=float(_require(lim, "v_max", where)),
                a_y_max=float(_require(lim, "a_y_max", where)),
                a_tot_max=float(_require(lim, "a_tot_max", where)),
            ),
            safety=SafetyParams(
                d_long_front=float(_require(saf, "d_long_front", where)),
                d_long_rear=float(_require(saf, "d_long_rear", where)),
                d_lat_left=float(_require(saf, "d_lat_left", where)),
                d_lat_right=float(_require(saf, "d_lat_right", where)),
                t_gap_x=float(_require(saf, "t_gap_x", where)),
                t_gap_y=float(_require(saf, "t_gap_y", where)),
            ),
            regions=RegionBoundaries(
                s_icr_in=float(_require(reg, "icr_in", where)),
                s_bs_in=float(_require(reg, "bs_in", where)),
                s_cr_in=float(_require(reg, "cr_in", where)),
                s_cr_out=float(_require(reg, "cr_out", where)),
                s_icr_out=float(_require(reg, "icr_out", where)),
                s_stop=float(_require(reg, "stop", where)),
            ),
            v_ref=float(_require(raw, "v_ref", where)),
            v_init=float(_require(raw, "v_init", where)),
            s_init=float(raw.get("s_init", 0.0)),
            a_x_init=float(raw.get("a_x_init", 0.0)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"{where}: {exc}") from exc


def parse_scenario(text: str) -> ScenarioConfig:
    """Parse and fully validate a scenario document."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"malformed scenario file: {exc}") from exc
    if not isinstance(raw, dict):
        raise ParseError("scenario file must contain a mapping at top level")

    t_s = float(_require(raw, "sampling_time", "scenario"))
    horizon = int(_require(raw, "horizon", "scenario"))
    if t_s <= 0:
        raise ValidationError("sampling_time must be positive")
    if horizon < 1:
        raise ValidationError("horizon must be >= 1")
    lane_width = float(raw.get("lane_width", 3.5))
    if lane_width <= 0:
        raise ValidationError("lane_width must be positive")

    sol = raw.get("solver", {}) or {}
    pen = raw.get("penalty", {}) or {}
    try:
        solver = SolverConfig(
            tol=float(sol.get("tol", 1e-4)),
            tol_intermediate=float(sol.get("tol_intermediate", 1e-3)),
            max_iterations=int(sol.get("max_iterations", 500)),
            lbfgs_memory=int(sol.get("lbfgs_memory", 10)),
        )
        penalty = PenaltyConfig(
            constraint_tolerance=float(pen.get("constraint_tolerance", 1e-4)),
            beta_init=float(pen.get("beta_init", 100.0)),
            escalation_factor=float(pen.get("escalation_factor", 10.0)),
            max_outer_iterations=int(pen.get("max_outer_iterations", 10)),
        )
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc

    agents_raw = _require(raw, "agents", "scenario")
    if not agents_raw:
        raise ValidationError("scenario defines no agents")
    agents = []
    for a in agents_raw:
        a = dict(a)
        a["_sampling_time"] = t_s
        agents.append(_build_agent(a))

    ids = [a.agent_id for a in agents]
    if len(set(ids)) != len(ids):
        raise ValidationError("agent ids must be unique")
    ranks = sorted(a.priority for a in agents)
    if ranks != list(range(1, len(agents) + 1)):
        raise ValidationError("priorities must be a bijection onto 1..n_agents")
    for a in agents:
        if a.waypoints.shape[0] < 4:
            raise ValidationError(f"agent {a.agent_id}: needs at least 4 waypoints")
        if not (0.0 <= a.v_init <= a.limits.v_max):
            raise ValidationError(f"agent {a.agent_id}: v_init outside [0, v_max]")

    return ScenarioConfig(
        name=str(raw.get("name", "scenario")),
        sampling_time=t_s,
        horizon=horizon,
        lane_width=lane_width,
        solver=solver,
        penalty=penalty,
        agents=agents,
    )


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


def serialize_scenario(cfg: ScenarioConfig) -> str:
    """Canonical YAML form; parse(serialize(cfg)) is equivalent to cfg."""
    doc = {
        "name": cfg.name,
        "sampling_time": float(cfg.sampling_time),
        "horizon": int(cfg.horizon),
        "lane_width": float(cfg.lane_width),
        "solver": {
            "tol": float(cfg.solver.tol),
            "tol_intermediate": float(cfg.solver.tol_intermediate),
            "max_iterations": int(cfg.solver.max_iterations),
            "lbfgs_memory": int(cfg.solver.lbfgs_memory),
        },
        "penalty": {
            "constraint_tolerance": float(cfg.penalty.constraint_tolerance),
            "beta_init": float(cfg.penalty.beta_init),
            "escalation_factor": float(cfg.penalty.escalation_factor),
            "max_outer_iterations": int(cfg.penalty.max_outer_iterations),
        },
        "agents": [
            {
                "id": int(a.agent_id),
                "priority": int(a.priority),
                "drivetrain_time_constant": float(a.dynamics.drivetrain_time_constant),
                "length": float(a.geometry.length),
                "width": float(a.geometry.width),
                "v_ref": float(a.v_ref),
                "v_init": float(a.v_init),
                "s_init": float(a.s_init),
                "a_x_init": float(a.a_x_init),
                "weights": {
                    "q": float(a.weights.q),
                    "q_terminal": float(a.weights.q_terminal),
                    "r": float(a.weights.r),
                },
                "limits": {
                    "a_x_min": float(a.limits.a_x_min),
                    "a_x_max": float(a.limits.a_x_max),
                    "v_max": float(a.limits.v_max),
                    "a_y_max": float(a.limits.a_y_max),
                    "a_tot_max": float(a.limits.a_tot_max),
                },
                "safety": {
                    "d_long_front": float(a.safety.d_long_front),
                    "d_long_rear": float(a.safety.d_long_rear),
                    "d_lat_left": float(a.safety.d_lat_left),
                    "d_lat_right": float(a.safety.d_lat_right),
                    "t_gap_x": float(a.safety.t_gap_x),
                    "t_gap_y": float(a.safety.t_gap_y),
                },
                "regions": {
                    "icr_in": float(a.regions.s_icr_in),
                    "bs_in": float(a.regions.s_bs_in),
                    "stop": float(a.regions.s_stop),
                    "cr_in": float(a.regions.s_cr_in),
                    "cr_out": float(a.regions.s_cr_out),
                    "icr_out": float(a.regions.s_icr_out),
                },
                "waypoints": [[round(float(x), 9), round(float(y), 9)] for x, y in a.waypoints],
            }
            for a in cfg.agents
        ],
    }
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)


def load_scenario(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def bundled_scenario_path(name: str = "paper_scenario"):
    """Filesystem path of a scenario shipped with the package."""
    return resources.files("intersection_mpc").joinpath(f"scenarios/{name}.yaml")


# ---------------------------------------------------------------------------
# Trace serialization
# ---------------------------------------------------------------------------

TRACE_COLUMNS = [
    "k", "t", "agent", "x_g", "y_g", "psi", "v", "a_x", "u", "s",
    "region", "active_conflicts", "inner_iterations", "outer_iterations",
    "max_constraint_residual",
]


@dataclass
class TraceRow:
    k: int
    t: float
    agent: int
    x_g: float
    y_g: float
    psi: float
    v: float
    a_x: float
    u: float
    s: float
    region: str
    active_conflicts: tuple
    solve_time_ms: float
    inner_iterations: int
    outer_iterations: int
    max_constraint_residual: float


def _row_text(row: TraceRow) -> str:
    return ",".join([
        str(row.k),
        _fmt(row.t),
        str(row.agent),
        _fmt(row.x_g),
        _fmt(row.y_g),
        _fmt(row.psi),
        _fmt(row.v),
        _fmt(row.a_x),
        _fmt(row.u),
        _fmt(row.s),
        row.region,
        ";".join(str(i) for i in row.active_conflicts),
        str(row.inner_iterations),
        str(row.outer_iterations),
        _fmt(row.max_constraint_residual),
    ])


def write_trace(rows, destination) -> int:
    """Write trace rows as deterministic comma-separated text.

    destination may be a path or a binary file object.  Returns the number of
    bytes written.  Wall-clock timing is excluded here (see write_timing) so
    that identical runs produce byte-identical files.
    """
    buf = io.StringIO()
    buf.write(",".join(TRACE_COLUMNS) + "\n")
    for row in rows:
        buf.write(_row_text(row) + "\n")
    data = buf.getvalue().encode("utf-8")
    if hasattr(destination, "write"):
        destination.write(data)
    else:
        with open(destination, "wb") as fh:
            fh.write(data)
    return len(data)


def write_timing(rows, destination) -> int:
    """Per-solve wall-clock times, one line per (step, agent)."""
    buf = io.StringIO()
    buf.write("k,agent,solve_time_ms\n")
    for row in rows:
        buf.write(f"{row.k},{row.agent},{row.solve_time_ms:.3f}\n")
    data = buf.getvalue().encode("utf-8")
    if hasattr(destination, "write"):
        destination.write(data)
    else:
        with open(destination, "wb") as fh:
            fh.write(data)
    return len(data)
