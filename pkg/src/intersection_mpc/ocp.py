"""Per-step optimal control problem of one agent after state elimination.

The decision variable is the control sequence alone; the state trajectory is
an affine function of it.  Velocity tracking and control effort form the
objective, the input box stays a hard set for the solver, and every other
constraint (speed band, lateral acceleration, friction circle, collision
avoidance, conditional stop) enters as a quadratic penalty with an individual
weight per (constraint kind, horizon step, conflict pair).

The gradient of the penalized cost is assembled analytically by chain rule
through the affine rollout, the spline frame and the overlap geometry, with
derivative 0 at every max-kink.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .collision import AgentGeometry, SafetyParams, overlap_with_gradient
from .coordination import RegionBoundaries, preview_constraint_value
from .kinematics import AgentState, DiscreteModel, control_to_state_maps
from .panoc import BoxSet
from .path_geometry import PathSpline

__all__ = [
    "CostWeights",
    "AgentLimits",
    "ConflictTrajectory",
    "ConstraintResiduals",
    "AgentOcpTemplate",
    "OcpProblem",
    "MissingTrajectory",
    "stage_cost",
    "terminal_cost",
    "inequality_residuals",
    "ca_residuals",
    "penalty_cost",
    "grad_penalty_cost",
    "build_problem",
]


class MissingTrajectory(RuntimeError):
    """An agent in the active conflict set has no received trajectory."""


@dataclass(frozen=True)
class CostWeights:
    q: float
    q_terminal: float
    r: float

    def __post_init__(self):
        if not (self.q > 0 and self.q_terminal > 0 and self.r > 0):
            raise ValueError("cost weights must be positive")


@dataclass(frozen=True)
class AgentLimits:
    a_x_min: float
    a_x_max: float
    v_max: float
    a_y_max: float
    a_tot_max: float

    def __post_init__(self):
        if not (self.a_x_min < 0.0 < self.a_x_max):
            raise ValueError("a_x bounds must straddle zero")
        if not (self.v_max > 0 and self.a_y_max > 0 and self.a_tot_max > 0):
            raise ValueError("v_max, a_y_max, a_tot_max must be positive")


@dataclass(frozen=True)
class ConflictTrajectory:
    """Received (shifted) trajectory of one conflicting agent, steps 1..N."""

    agent_id: object
    geometry: AgentGeometry
    x_g: np.ndarray
    y_g: np.ndarray
    psi: np.ndarray
    v: np.ndarray


@dataclass
class ConstraintResiduals:
    """Raw constraint values: h for equalities, g for inequalities."""

    eq: dict
    ineq: dict

    def scaled_violations(self) -> dict:
        """Per-term psi/beta values: h^2 and clipped g^2."""
        out = {k: v ** 2 for k, v in self.eq.items()}
        out.update({k: np.maximum(0.0, v) ** 2 for k, v in self.ineq.items()})
        return out


def stage_cost(x_j: AgentState, u_j: float, v_ref_j: float, w: CostWeights) -> float:
    return w.q * (x_j.v - v_ref_j) ** 2 + w.r * u_j ** 2


def terminal_cost(x_terminal: AgentState, v_ref: float, w: CostWeights) -> float:
    return w.q_terminal * (x_terminal.v - v_ref) ** 2


@dataclass
class AgentOcpTemplate:
    """Static per-agent problem data, shared by every control step."""

    agent_id: object
    model: DiscreteModel
    spline: PathSpline
    weights: CostWeights
    limits: AgentLimits
    safety: SafetyParams
    geometry: AgentGeometry
    boundaries: RegionBoundaries
    horizon: int
    v_ref: float
    phi: np.ndarray = field(init=False, repr=False)
    gamma_map: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.phi, self.gamma_map = control_to_state_maps(self.model, self.horizon)


@dataclass
class OcpProblem:
    """One agent's parametric penalty problem at a single control step."""

    template: AgentOcpTemplate
    x_k: AgentState
    conflicts: list
    effective_s_cr_out: float
    preview_active: bool
    betas_eq: dict
    betas_ineq: dict
    # derived arrays
    free_a: np.ndarray = field(init=False, repr=False)
    free_v: np.ndarray = field(init=False, repr=False)
    free_s: np.ndarray = field(init=False, repr=False)
    g_a: np.ndarray = field(init=False, repr=False)
    g_v: np.ndarray = field(init=False, repr=False)
    g_s: np.ndarray = field(init=False, repr=False)
    v_ref: np.ndarray = field(init=False, repr=False)
    v_max: np.ndarray = field(init=False, repr=False)
    box: BoxSet = field(init=False, repr=False)

    def __post_init__(self):
        t = self.template
        x0 = self.x_k.as_array()
        free = t.phi @ x0  # (N+1, 3)
        self.free_a, self.free_v, self.free_s = free[:, 0], free[:, 1], free[:, 2]
        self.g_a = t.gamma_map[:, 0, :]
        self.g_v = t.gamma_map[:, 1, :]
        self.g_s = t.gamma_map[:, 2, :]
        n = t.horizon
        self.v_ref = np.full(n + 1, t.v_ref)
        self.v_max = np.full(n, t.limits.v_max)
        self.box = BoxSet.uniform(n, t.limits.a_x_min, t.limits.a_x_max)

    @property
    def horizon(self) -> int:
        return self.template.horizon

    def trajectories(self, u: np.ndarray):
        """State component sequences (a, v, s), each of length N+1."""
        return (
            self.free_a + self.g_a @ u,
            self.free_v + self.g_v @ u,
            self.free_s + self.g_s @ u,
        )

    def objective(self, u: np.ndarray) -> float:
        _, v, _ = self.trajectories(u)
        w = self.template.weights
        dv = v - self.v_ref
        return float(
            w.q * np.sum(dv[:-1] ** 2) + w.r * np.sum(u ** 2) + w.q_terminal * dv[-1] ** 2
        )

    # -- residual evaluation -------------------------------------------------

    def residuals(self, u: np.ndarray) -> ConstraintResiduals:
        a, v, s = self.trajectories(u)
        frame = self.template.spline.frame(s[1:])
        ineq = _inequality_terms(a, v, frame["curvature"], self.v_max, self.template.limits)
        eq = {}
        for ct in self.conflicts:
            area, *_ = _conflict_overlap(frame, v[1:], ct, self.template)
            eq[("ca", ct.agent_id)] = area
        if self.preview_active:
            h = preview_constraint_value(
                float(s[-1]), self.effective_s_cr_out, self.template.boundaries.s_stop
            )
            eq["preview"] = np.array([h])
        return ConstraintResiduals(eq=eq, ineq=ineq)

    # -- penalized cost and exact gradient ------------------------------------

    def cost_and_grad(self, u: np.ndarray):
        t = self.template
        w = t.weights
        lim = t.limits
        n = t.horizon
        a, v, s = self.trajectories(u)
        frame = t.spline.frame(s[1:])
        kappa = frame["curvature"]
        dkappa = frame["dcurvature"]

        dv_ref = v - self.v_ref
        cost = w.q * np.sum(dv_ref[:-1] ** 2) + w.r * np.sum(u ** 2) + w.q_terminal * dv_ref[-1] ** 2

        # Weight vectors over the state sequence, mapped through the rollout
        # at the end: grad = 2 r u + G_a' W_a + G_v' W_v + G_s' W_s.
        w_a = np.zeros(n + 1)
        w_v = np.zeros(n + 1)
        w_s = np.zeros(n + 1)
        w_v[:-1] += 2.0 * w.q * dv_ref[:-1]
        w_v[-1] += 2.0 * w.q_terminal * dv_ref[-1]
        grad = 2.0 * w.r * u.copy()

        v1, a1 = v[1:], a[1:]
        ay = kappa * v1 ** 2
        day_dv = 2.0 * kappa * v1
        day_ds = dkappa * v1 ** 2

        def add_ineq(key, g, dg_da=None, dg_dv=None, dg_ds=None):
            nonlocal cost
            beta = self.betas_ineq[key]
            pos = np.maximum(0.0, g)
            cost += float(np.sum(beta * pos ** 2))
            coef = 2.0 * beta * pos  # zero where inactive, kink derivative 0
            if dg_da is not None:
                w_a[1:] += coef * dg_da
            if dg_dv is not None:
                w_v[1:] += coef * dg_dv
            if dg_ds is not None:
                w_s[1:] += coef * dg_ds

        ones = np.ones(n)
        add_ineq("v_hi", v1 - self.v_max, dg_dv=ones)
        add_ineq("v_lo", -v1, dg_dv=-ones)
        add_ineq("ay_hi", ay - lim.a_y_max, dg_dv=day_dv, dg_ds=day_ds)
        add_ineq("ay_lo", -ay - lim.a_y_max, dg_dv=-day_dv, dg_ds=-day_ds)
        add_ineq(
            "a_tot",
            a1 ** 2 + ay ** 2 - lim.a_tot_max ** 2,
            dg_da=2.0 * a1,
            dg_dv=2.0 * ay * day_dv,
            dg_ds=2.0 * ay * day_ds,
        )

        for ct in self.conflicts:
            area, da_dx, da_dy, da_dpsi, da_dv = _conflict_overlap(frame, v1, ct, t)
            beta = self.betas_eq[("ca", ct.agent_id)]
            cost += float(np.sum(beta * area ** 2))
            coef = 2.0 * beta * area
            # chain pose derivatives back to (s, v)
            da_ds = da_dx * frame["dx"] + da_dy * frame["dy"] + da_dpsi * frame["dheading"]
            w_s[1:] += coef * da_ds
            w_v[1:] += coef * da_dv

        if self.preview_active:
            beta = float(self.betas_eq["preview"][0])
            s_n = float(s[-1])
            fac_cross = max(0.0, self.effective_s_cr_out - s_n)
            fac_stop = max(0.0, s_n - t.boundaries.s_stop)
            h = fac_cross * fac_stop
            cost += beta * h ** 2
            dh = (-(1.0 if fac_cross > 0.0 else 0.0) * fac_stop
                  + fac_cross * (1.0 if fac_stop > 0.0 else 0.0))
            w_s[-1] += 2.0 * beta * h * dh

        grad += self.g_a.T @ w_a + self.g_v.T @ w_v + self.g_s.T @ w_s
        return float(cost), grad

    def kink_margin(self, u: np.ndarray) -> float:
        """Distance of the iterate to the nearest derivative kink.

        Used by finite-difference gradient checks to exclude sample points on
        which one-sided derivatives would disagree.
        """
        res = self.residuals(u)
        margins = [np.min(np.abs(g)) for g in res.ineq.values()]
        a, v, s = self.trajectories(u)
        frame = self.template.spline.frame(s[1:])
        for ct in self.conflicts:
            margins.append(_conflict_kink_margin(frame, v[1:], ct, self.template))
        if self.preview_active:
            s_n = float(s[-1])
            margins.append(abs(self.effective_s_cr_out - s_n))
            margins.append(abs(s_n - self.template.boundaries.s_stop))
        return float(min(margins)) if margins else np.inf


def _inequality_terms(a, v, kappa, v_max, limits: AgentLimits) -> dict:
    v1, a1 = v[1:], a[1:]
    ay = kappa * v1 ** 2
    return {
        "v_hi": v1 - v_max,
        "v_lo": -v1,
        "ay_hi": ay - limits.a_y_max,
        "ay_lo": -ay - limits.a_y_max,
        "a_tot": a1 ** 2 + ay ** 2 - limits.a_tot_max ** 2,
    }


def _conflict_overlap(frame: dict, v1: np.ndarray, ct: ConflictTrajectory, t: AgentOcpTemplate):
    return overlap_with_gradient(
        frame["x"], frame["y"], frame["heading"], v1,
        t.geometry, t.safety,
        ct.x_g, ct.y_g, ct.psi, ct.v,
        ct.geometry,
    )


def _conflict_kink_margin(frame, v1, ct: ConflictTrajectory, t: AgentOcpTemplate) -> float:
    from .collision import overlap_kink_margins

    return float(np.min(overlap_kink_margins(
        frame["x"], frame["y"], frame["heading"], v1,
        t.geometry, t.safety,
        ct.x_g, ct.y_g, ct.psi, ct.v,
        ct.geometry,
    )))


# -- spec-level free functions ------------------------------------------------

def inequality_residuals(x_traj: np.ndarray, u_seq, limits: AgentLimits, spline: PathSpline,
                         v_max=None) -> ConstraintResiduals:
    """Speed-band, lateral-acceleration and friction-circle residuals.

    x_traj is the (N+1, 3) rollout; residuals cover steps 1..N and are
    nonpositive exactly when the constraints hold.
    """
    x_traj = np.asarray(x_traj, dtype=float)
    n = x_traj.shape[0] - 1
    if v_max is None:
        v_max = np.full(n, limits.v_max)
    kappa = spline.frame(x_traj[1:, 2])["curvature"]
    return ConstraintResiduals(
        eq={}, ineq=_inequality_terms(x_traj[:, 0], x_traj[:, 1], kappa, np.asarray(v_max), limits)
    )


def ca_residuals(x_traj: np.ndarray, conflicts, safety: SafetyParams,
                 geometry: AgentGeometry, spline: PathSpline) -> ConstraintResiduals:
    """Collision-avoidance overlap areas against each received trajectory."""
    if any(ct is None for ct in conflicts):
        raise MissingTrajectory("active conflict without a received trajectory")
    x_traj = np.asarray(x_traj, dtype=float)
    frame = spline.frame(x_traj[1:, 2])
    v1 = x_traj[1:, 1]
    eq = {}
    for ct in conflicts:
        area, *_ = overlap_with_gradient(
            frame["x"], frame["y"], frame["heading"], v1,
            geometry, safety,
            ct.x_g, ct.y_g, ct.psi, ct.v,
            ct.geometry,
        )
        eq[("ca", ct.agent_id)] = area
    return ConstraintResiduals(eq=eq, ineq={})


def penalty_cost(u_seq, problem: OcpProblem) -> float:
    return problem.cost_and_grad(np.asarray(u_seq, dtype=float))[0]


def grad_penalty_cost(u_seq, problem: OcpProblem) -> np.ndarray:
    return problem.cost_and_grad(np.asarray(u_seq, dtype=float))[1]


def build_problem(
    template: AgentOcpTemplate,
    x_k: AgentState,
    active_ids,
    conflict_data: dict,
    prioritized_active,
    beta_init: float,
) -> OcpProblem:
    """Assemble the step problem from measured state and received messages.

    conflict_data maps agent id to a ConflictTrajectory; every id in
    active_ids must be present.  The critical-region exit requirement is
    liveness-adjusted and the conditional stop constraint is attached only
    while the agent is inside its brake-safe region.
    """
    conflicts = []
    for l in sorted(active_ids, key=str):
        if l not in conflict_data or conflict_data[l] is None:
            raise MissingTrajectory(f"no trajectory received from agent {l!r}")
        conflicts.append(conflict_data[l])
    b = template.boundaries
    preview_active = b.s_bs_in <= x_k.s < b.s_cr_in
    effective = 0.0 if not prioritized_active else b.s_cr_out
    n = template.horizon
    betas_ineq = {k: np.full(n, beta_init) for k in ("v_hi", "v_lo", "ay_hi", "ay_lo", "a_tot")}
    betas_eq = {("ca", ct.agent_id): np.full(n, beta_init) for ct in conflicts}
    if preview_active:
        betas_eq["preview"] = np.array([beta_init])
    return OcpProblem(
        template=template,
        x_k=x_k,
        conflicts=conflicts,
        effective_s_cr_out=effective,
        preview_active=preview_active,
        betas_eq=betas_eq,
        betas_ineq=betas_ineq,
    )
