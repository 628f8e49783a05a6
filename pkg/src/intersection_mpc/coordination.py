"""Intersection regions, fixed priorities, conflict sets and the stop rule.

Each agent classifies its scalar path coordinate into nested intersection
regions and derives, per control step, the set of agents it must actively
avoid.  Coupling is fully decoupled: for every conflicting pair exactly one
of the two agents carries the avoidance constraint, decided by fixed
priorities, region membership and lane relations.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RegionBoundaries",
    "RegionTag",
    "PriorityMap",
    "ConflictSets",
    "region_of",
    "prioritized_conflict_set",
    "active_conflict_set",
    "liveness_update",
    "preview_constraint_value",
    "ahead_in_lane",
]


@dataclass(frozen=True)
class RegionBoundaries:
    """Per-agent region limits along its own path [m]."""

    s_icr_in: float
    s_bs_in: float
    s_cr_in: float
    s_cr_out: float
    s_icr_out: float
    s_stop: float

    def __post_init__(self):
        ok = (
            self.s_icr_in <= self.s_bs_in <= self.s_stop < self.s_cr_in
            and self.s_cr_in <= self.s_cr_out <= self.s_icr_out
        )
        if not ok:
            raise ValueError(
                "region boundaries must satisfy "
                "icr_in <= bs_in <= stop < cr_in <= cr_out <= icr_out"
            )


class RegionTag(enum.Enum):
    """Partition of the path coordinate axis; intervals are left-closed."""

    OUTSIDE_BEFORE = "outside_before"
    ICR_PRE_BSR = "icr_pre_bsr"
    BSR = "bsr"
    CR = "cr"
    INSIDE_AFTER_CR = "inside_after_cr"
    OUTSIDE_AFTER = "outside_after"

    @property
    def inside_icr(self) -> bool:
        return self in (RegionTag.ICR_PRE_BSR, RegionTag.BSR, RegionTag.CR, RegionTag.INSIDE_AFTER_CR)

    @property
    def past_cr(self) -> bool:
        return self in (RegionTag.INSIDE_AFTER_CR, RegionTag.OUTSIDE_AFTER)


def region_of(s: float, b: RegionBoundaries) -> RegionTag:
    if s < b.s_icr_in:
        return RegionTag.OUTSIDE_BEFORE
    if s < b.s_bs_in:
        return RegionTag.ICR_PRE_BSR
    if s < b.s_cr_in:
        return RegionTag.BSR
    if s < b.s_cr_out:
        return RegionTag.CR
    if s < b.s_icr_out:
        return RegionTag.INSIDE_AFTER_CR
    return RegionTag.OUTSIDE_AFTER


@dataclass(frozen=True)
class PriorityMap:
    """Bijective agent-id -> rank map; rank 1 is the highest priority."""

    ranks: dict

    def __post_init__(self):
        ids = list(self.ranks)
        vals = sorted(self.ranks.values())
        if vals != list(range(1, len(ids) + 1)):
            raise ValueError("priorities must be a bijection onto 1..n_agents")

    def rank(self, agent_id) -> int:
        return self.ranks[agent_id]


def prioritized_conflict_set(agent_id, gamma: PriorityMap) -> frozenset:
    """Agents with strictly higher priority (lower rank) than the given one."""
    mine = gamma.rank(agent_id)
    return frozenset(l for l, r in gamma.ranks.items() if r < mine)


@dataclass(frozen=True)
class ConflictSets:
    """All conflict sets of one agent at one control step."""

    prioritized: frozenset        # higher-priority agents, time invariant
    prioritized_active: frozenset  # subset not yet past their own CR
    ahead_static: frozenset       # always same lane and ahead (from t0)
    ahead_dynamic: frozenset      # currently same lane and ahead
    active: frozenset             # union per the case a/b/c rule
    case: str                     # "a", "b" or "c"


def ahead_in_lane(rear_pos, rear_heading, front_spline, front_s, lane_halfwidth: float) -> bool:
    """True when the front agent drives ahead of the rear one in the same lane.

    The rear agent's position is projected onto the front agent's path; they
    share a lane when the lateral offset is below half a lane width and the
    rear agent's heading aligns with the path tangent there.  "Ahead" means
    the front agent's own arc length exceeds the projected one.
    """
    s_proj, lateral = front_spline.project(rear_pos)
    if lateral >= lane_halfwidth:
        return False
    tangent_heading = front_spline.heading(min(max(s_proj, 0.0), front_spline.s_max))
    if np.cos(rear_heading - tangent_heading) <= 0.0:
        return False
    return front_s > s_proj


def active_conflict_set(
    agent_id,
    gamma: PriorityMap,
    region: RegionTag,
    others_past_own_cr: dict,
    ahead_static: frozenset,
    ahead_dynamic: frozenset,
) -> ConflictSets:
    """Assemble one agent's conflict sets for the current step.

    others_past_own_cr maps every other agent id to whether its measured path
    coordinate has passed its own critical-region exit.
    """
    prioritized = prioritized_conflict_set(agent_id, gamma)
    prioritized_active = frozenset(l for l in prioritized if not others_past_own_cr[l])
    if region.inside_icr and not region.past_cr:
        case = "a"
        active = prioritized | ahead_static
    elif region.inside_icr:
        case = "b"
        active = ahead_static | ahead_dynamic | prioritized_active
    else:
        case = "c"
        active = ahead_static | ahead_dynamic
    return ConflictSets(
        prioritized=prioritized,
        prioritized_active=prioritized_active,
        ahead_static=ahead_static,
        ahead_dynamic=ahead_dynamic,
        active=frozenset(active),
        case=case,
    )


def liveness_update(prioritized_active: frozenset, s_cr_out: float) -> float:
    """Critical-region exit requirement, dropped once all higher-priority
    agents have cleared their critical regions."""
    return 0.0 if not prioritized_active else s_cr_out


def preview_constraint_value(s_terminal: float, effective_s_cr_out: float, s_stop: float) -> float:
    """Conditional stop constraint as a plus-operator product.

    Zero iff the terminal path coordinate either reaches past the (liveness
    adjusted) critical-region exit or stays at or before the stop line.
    """
    return max(0.0, effective_s_cr_out - s_terminal) * max(0.0, s_terminal - s_stop)
