#!/usr/bin/env python
"""Generate the bundled four-agent crossing scenario file.

Road layout: two perpendicular roads through the origin, one lane per
direction with centerlines at +/-2 m.  Agent 1 drives north->south, agent 2
approaches from the west and turns left into the northbound lane via a
circular fillet, agent 3 drives east->west and agent 4 south->north.

Region boundaries are derived from the transversal crossing points between
path centerlines: the critical region covers all crossings with a margin of
path arc length on each side, the brake-safe region starts 20 m before it,
the stop line 2 m before, and the intersection control region 50 m before.
Agent 2's critical region is extended through its merge point so that lower
priority agents keep yielding until it has fully joined the northbound lane;
agent 4's control region is extended past the merge point so it guards the
lane-merge window while agent 2 still crosses.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from intersection_mpc.collision import AgentGeometry, SafetyParams
from intersection_mpc.coordination import RegionBoundaries
from intersection_mpc.kinematics import AgentDynamicsParams
from intersection_mpc.ocp import AgentLimits, CostWeights
from intersection_mpc.panoc import PenaltyConfig, SolverConfig
from intersection_mpc.scenario import AgentConfig, ScenarioConfig, serialize_scenario

TURN_RADIUS = 20.0
LANE_OFFSET = 2.0
WAYPOINT_SPACING = 2.0
T_S = 0.1
HORIZON = 50

CR_MARGIN = 6.0
BSR_SETBACK = 20.0
STOP_SETBACK = 2.0
ICR_SETBACK = 50.0
ICR_EXIT_MARGIN = 15.0


def straight(p0, p1, spacing=WAYPOINT_SPACING):
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    length = np.linalg.norm(p1 - p0)
    n = max(int(round(length / spacing)), 1)
    ts = np.linspace(0.0, 1.0, n + 1)
    return p0 + ts[:, None] * (p1 - p0)


def left_turn_path(radius):
    """West approach on y=-2, quarter-circle left turn, exit north on x=+2."""
    arc_start_x = LANE_OFFSET - radius
    approach = straight((-82.0, -LANE_OFFSET), (arc_start_x, -LANE_OFFSET))
    center = np.array([arc_start_x, -LANE_OFFSET + radius])
    arc_len = radius * np.pi / 2.0
    n_arc = int(round(arc_len / WAYPOINT_SPACING))
    angles = -np.pi / 2.0 + np.linspace(0.0, np.pi / 2.0, n_arc + 1)[1:]
    arc = center + radius * np.column_stack([np.cos(angles), np.sin(angles)])
    exit_start = arc[-1]
    exit_leg = straight(exit_start, (LANE_OFFSET, 80.0))[1:]
    merge_s = (arc_start_x - (-82.0)) + arc_len
    return np.vstack([approach, arc, exit_leg]), merge_s


def polyline_arclengths(pts):
    d = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(d)])


def _point_at(pts, s_grid, s):
    s = np.clip(s, 0.0, s_grid[-1])
    return np.array([np.interp(s, s_grid, pts[:, 0]), np.interp(s, s_grid, pts[:, 1])])


def crossings(pts_a, pts_b, probe=1.5):
    """Transversal intersections of two dense polylines.

    Returns deduplicated (s_a, s_b) arc lengths.  A hit counts only when path
    a actually changes side of path b around it, which excludes tangential
    lane merges.
    """
    sa = polyline_arclengths(pts_a)
    sb = polyline_arclengths(pts_b)
    raw = []
    for i in range(len(pts_a) - 1):
        p, r = pts_a[i], pts_a[i + 1] - pts_a[i]
        for j in range(len(pts_b) - 1):
            q, s = pts_b[j], pts_b[j + 1] - pts_b[j]
            denom = r[0] * s[1] - r[1] * s[0]
            if abs(denom) < 1e-9:
                continue
            d = q - p
            t = (d[0] * s[1] - d[1] * s[0]) / denom
            u = (d[0] * r[1] - d[1] * r[0]) / denom
            if -1e-9 <= t <= 1.0 + 1e-9 and -1e-9 <= u <= 1.0 + 1e-9:
                raw.append((sa[i] + t * np.linalg.norm(r), sb[j] + u * np.linalg.norm(s), s / np.linalg.norm(s)))
    out = []
    for s_a, s_b, dir_b in raw:
        if any(abs(s_a - prev) < 0.5 for prev, _ in out):
            continue
        x_pt = _point_at(pts_a, sa, s_a)
        before = _point_at(pts_a, sa, s_a - probe) - x_pt
        after = _point_at(pts_a, sa, s_a + probe) - x_pt
        side_before = dir_b[0] * before[1] - dir_b[1] * before[0]
        side_after = dir_b[0] * after[1] - dir_b[1] * after[0]
        if side_before * side_after < -1e-6:
            out.append((s_a, s_b))
    return out


def densify(pts, step=0.25):
    s = polyline_arclengths(pts)
    grid = np.arange(0.0, s[-1], step)
    x = np.interp(grid, s, pts[:, 0])
    y = np.interp(grid, s, pts[:, 1])
    return np.column_stack([x, y])


def make_scenario() -> ScenarioConfig:
    path2, merge_s2 = left_turn_path(TURN_RADIUS)
    paths = {
        1: straight((-LANE_OFFSET, 82.0), (-LANE_OFFSET, -80.0)),
        2: path2,
        3: straight((69.0, LANE_OFFSET), (-90.0, LANE_OFFSET)),
        4: straight((LANE_OFFSET, -39.0), (LANE_OFFSET, 120.0)),
    }
    priorities = {1: 3, 2: 1, 3: 4, 4: 2}
    v_ref = {1: 14.0, 2: 14.0, 3: 14.0, 4: 8.0}

    dense = {i: densify(p) for i, p in paths.items()}
    cross_s = {i: [] for i in paths}
    for i in paths:
        for l in paths:
            if l <= i:
                continue
            for s_i, s_l in crossings(dense[i], dense[l]):
                cross_s[i].append(s_i)
                cross_s[l].append(s_l)

    # Merge point of agent 2 into agent 4's lane, in each path's arc length.
    merge_on_4 = 12.0 + 39.0  # arc ends at (2, radius - lane_offset)
    merge_on_4 = (TURN_RADIUS - LANE_OFFSET) + 39.0

    regions = {}
    for i in paths:
        cs = sorted(cross_s[i])
        cr_in = cs[0] - CR_MARGIN
        cr_out = cs[-1] + CR_MARGIN
        if i == 2:
            # Keep agent 2 "in its critical region" until the turn is complete
            # so yielding agents hold on until it has merged.
            cr_out = max(cr_out, merge_s2)
        icr_out = cr_out + ICR_EXIT_MARGIN
        if i == 4:
            # Guard the merge window: agent 4 must keep carrying the rear
            # collision constraint while agent 2 is still turning in behind.
            icr_out = max(icr_out, merge_on_4 + 10.0)
        regions[i] = RegionBoundaries(
            s_icr_in=cr_in - ICR_SETBACK,
            s_bs_in=cr_in - BSR_SETBACK,
            s_stop=cr_in - STOP_SETBACK,
            s_cr_in=cr_in,
            s_cr_out=cr_out,
            s_icr_out=icr_out,
        )

    agents = []
    for i in sorted(paths):
        agents.append(AgentConfig(
            agent_id=i,
            priority=priorities[i],
            waypoints=paths[i],
            dynamics=AgentDynamicsParams(drivetrain_time_constant=0.3, sampling_time=T_S),
            geometry=AgentGeometry(length=5.0, width=2.0),
            weights=CostWeights(q=1.0, q_terminal=1.0, r=10.0),
            limits=AgentLimits(a_x_min=-7.0, a_x_max=4.0, v_max=15.0, a_y_max=3.5, a_tot_max=7.0),
            safety=SafetyParams(d_long_front=2.0, d_long_rear=2.0,
                                d_lat_left=1.0, d_lat_right=1.0,
                                t_gap_x=1.0, t_gap_y=1.0),
            regions=regions[i],
            v_ref=v_ref[i],
            v_init=v_ref[i],
            s_init=0.0,
            a_x_init=0.0,
        ))

    return ScenarioConfig(
        name="paper_scenario",
        sampling_time=T_S,
        horizon=HORIZON,
        lane_width=3.5,
        solver=SolverConfig(),
        penalty=PenaltyConfig(beta_init=1000.0),
        agents=agents,
    )


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    default_out = Path(__file__).resolve().parents[1] / "src/intersection_mpc/scenarios/paper_scenario.yaml"
    parser.add_argument("--out", default=str(default_out))
    args = parser.parse_args()
    cfg = make_scenario()
    text = serialize_scenario(cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")
    for a in cfg.agents:
        r = a.regions
        print(f"agent {a.agent_id}: cr=[{r.s_cr_in:.2f}, {r.s_cr_out:.2f}] "
              f"stop={r.s_stop:.2f} icr=[{r.s_icr_in:.2f}, {r.s_icr_out:.2f}] "
              f"len={polyline_arclengths(a.waypoints)[-1]:.1f}")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
