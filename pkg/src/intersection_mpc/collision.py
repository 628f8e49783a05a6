"""Safety regions, body-frame bounding boxes and their overlap area.

Collision avoidance between two agents is encoded as the overlap area between
the ego agent's motion-dependent safety region and the other agent's
(over-approximated) bounding box, both expressed in the ego body frame.  The
area is zero iff the rectangles are separated or touching.

All max/min kinks use the one-sided derivative convention with value 0 at the
kink, so the derivative of an inactive term is exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "AgentGeometry",
    "SafetyParams",
    "Pose2D",
    "Box2D",
    "heading_unit_vector",
    "safety_distances",
    "safety_region_corners",
    "overapprox_bounding_box",
    "overlap_area",
    "signed_box_distance",
    "overlap_with_gradient",
    "overlap_kink_margins",
    "footprint_corners",
]


@dataclass(frozen=True)
class AgentGeometry:
    """Vehicle footprint: length along heading, width across [m]."""

    length: float
    width: float

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0):
            raise ValueError("length and width must be positive")


@dataclass(frozen=True)
class SafetyParams:
    """Basic safety distances [m] and velocity time gaps [s] of one agent."""

    d_long_front: float
    d_long_rear: float
    d_lat_left: float
    d_lat_right: float
    t_gap_x: float
    t_gap_y: float

    def __post_init__(self):
        for name, val in self.__dict__.items():
            if val < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class Pose2D:
    """Global planar pose plus speed: one time slice of a trajectory."""

    x_g: float
    y_g: float
    psi: float
    v: float


@dataclass(frozen=True)
class Box2D:
    """Axis-aligned rectangle in the ego body frame, by two corners."""

    p_lower: tuple
    p_upper: tuple


def heading_unit_vector(psi_i: float, psi_l: float) -> np.ndarray:
    """Unit vector of agent l's motion direction in agent i's body frame."""
    d = psi_l - psi_i
    return np.array([np.cos(d), np.sin(d)])


def safety_distances(v_i: float, v_l: float, n_psi, params: SafetyParams):
    """Velocity- and heading-dependent safety distances (front, rear, left, right).

    The rear distance inflates only when the other agent moves in roughly the
    same direction as the ego (positive longitudinal heading projection); the
    lateral distances inflate with the other agent's speed when it points
    toward the respective side.
    """
    n_x, n_y = float(n_psi[0]), float(n_psi[1])
    d_xf = params.d_long_front + v_i * params.t_gap_x
    d_xr = params.d_long_rear + v_i * params.t_gap_x * max(0.0, n_x)
    d_yl = params.d_lat_left + v_l * params.t_gap_y * max(0.0, -n_y)
    d_yr = params.d_lat_right + v_l * params.t_gap_y * max(0.0, n_y)
    return d_xf, d_xr, d_yl, d_yr


def safety_region_corners(geom_i: AgentGeometry, d) -> Box2D:
    """Ego safety region box from its footprint and the four distances."""
    d_xf, d_xr, d_yl, d_yr = d
    half_l, half_w = 0.5 * geom_i.length, 0.5 * geom_i.width
    return Box2D(
        p_lower=(-half_l - d_xr, -half_w - d_yr),
        p_upper=(half_l + d_xf, half_w + d_yl),
    )


def footprint_corners(pose: Pose2D, geom: AgentGeometry) -> np.ndarray:
    """Global positions of the four footprint corners, shape (4, 2)."""
    half_l, half_w = 0.5 * geom.length, 0.5 * geom.width
    local = np.array([[half_l, half_w], [half_l, -half_w], [-half_l, -half_w], [-half_l, half_w]])
    c, s = np.cos(pose.psi), np.sin(pose.psi)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([pose.x_g, pose.y_g])


def overapprox_bounding_box(pose_l: Pose2D, geom_l: AgentGeometry, pose_i: Pose2D) -> Box2D:
    """Axis-aligned box around agent l's footprint in agent i's body frame.

    Exact when the heading difference is a multiple of pi/2, otherwise an
    over-approximation of the rotated rectangle.
    """
    corners = footprint_corners(pose_l, geom_l)
    c, s = np.cos(pose_i.psi), np.sin(pose_i.psi)
    rot_inv = np.array([[c, s], [-s, c]])
    rel = (corners - np.array([pose_i.x_g, pose_i.y_g])) @ rot_inv.T
    return Box2D(p_lower=tuple(rel.min(axis=0)), p_upper=tuple(rel.max(axis=0)))


def overlap_area(region_i: Box2D, box_l: Box2D):
    """Overlap (area, length, width) of two axis-aligned boxes.

    The area is max(0, L) * max(0, W), so separated or touching boxes give
    exactly zero.
    """
    l_ov = min(region_i.p_upper[0], box_l.p_upper[0]) - max(region_i.p_lower[0], box_l.p_lower[0])
    w_ov = min(region_i.p_upper[1], box_l.p_upper[1]) - max(region_i.p_lower[1], box_l.p_lower[1])
    return max(0.0, l_ov) * max(0.0, w_ov), l_ov, w_ov


def signed_box_distance(region_i: Box2D, box_l: Box2D) -> float:
    """Euclidean gap between boxes; negative penetration depth when overlapping."""
    _, l_ov, w_ov = overlap_area(region_i, box_l)
    if l_ov > 0.0 and w_ov > 0.0:
        return -min(l_ov, w_ov)
    return float(np.hypot(max(0.0, -l_ov), max(0.0, -w_ov)))


# ---------------------------------------------------------------------------
# Vectorized overlap + gradient with respect to the ego pose, used by the OCP.
# ---------------------------------------------------------------------------

def overlap_with_gradient(
    ego_x, ego_y, ego_psi, ego_v,
    geom_i: AgentGeometry, safety: SafetyParams,
    oth_x, oth_y, oth_psi, oth_v,
    geom_l: AgentGeometry,
):
    """Overlap areas and their derivatives along a predicted pose sequence.

    All pose inputs are 1-D arrays of equal length (one entry per horizon
    step).  The other agent's poses are parameters; derivatives are taken with
    respect to the ego pose (x, y, psi) and speed v only.

    Returns
    -------
    area, dA_dx, dA_dy, dA_dpsi, dA_dv : 1-D arrays.
    """
    ego_x = np.asarray(ego_x, dtype=float)
    ego_y = np.asarray(ego_y, dtype=float)
    ego_psi = np.asarray(ego_psi, dtype=float)
    ego_v = np.asarray(ego_v, dtype=float)
    oth_x = np.asarray(oth_x, dtype=float)
    oth_y = np.asarray(oth_y, dtype=float)
    oth_psi = np.asarray(oth_psi, dtype=float)
    oth_v = np.asarray(oth_v, dtype=float)
    n = ego_x.size

    half_li, half_wi = 0.5 * geom_i.length, 0.5 * geom_i.width
    half_ll, half_wl = 0.5 * geom_l.length, 0.5 * geom_l.width

    d_psi = oth_psi - ego_psi
    n_x, n_y = np.cos(d_psi), np.sin(d_psi)
    # d n / d ego_psi
    dnx = n_y
    dny = -n_x

    v_i, v_l = ego_v, oth_v
    tgx, tgy = safety.t_gap_x, safety.t_gap_y

    # Ego safety-region sides and their derivatives w.r.t. (psi, v).
    ub_ix = half_li + safety.d_long_front + v_i * tgx
    ub_ix_dv = np.full(n, tgx)
    ub_ix_dpsi = np.zeros(n)

    rear_gate = np.maximum(0.0, n_x)
    lb_ix = -half_li - (safety.d_long_rear + v_i * tgx * rear_gate)
    lb_ix_dv = -tgx * rear_gate
    lb_ix_dpsi = -v_i * tgx * np.where(n_x > 0.0, dnx, 0.0)

    left_gate = np.maximum(0.0, -n_y)
    ub_iy = half_wi + safety.d_lat_left + v_l * tgy * left_gate
    ub_iy_dpsi = v_l * tgy * np.where(-n_y > 0.0, -dny, 0.0)

    right_gate = np.maximum(0.0, n_y)
    lb_iy = -half_wi - (safety.d_lat_right + v_l * tgy * right_gate)
    lb_iy_dpsi = -v_l * tgy * np.where(n_y > 0.0, dny, 0.0)

    zeros = np.zeros(n)

    # Other agent's footprint corners mapped into the ego frame.
    ci, si = np.cos(ego_psi), np.sin(ego_psi)
    dx, dy = oth_x - ego_x, oth_y - ego_y
    rel_x = ci * dx + si * dy
    rel_y = -si * dx + ci * dy
    cl, sl = np.cos(d_psi), np.sin(d_psi)
    qx = np.array([half_ll, half_ll, -half_ll, -half_ll])
    qy = np.array([half_wl, -half_wl, -half_wl, half_wl])
    # corner m in ego frame: rel + R(d_psi) q_m, shape (n, 4)
    cx = rel_x[:, None] + cl[:, None] * qx[None, :] - sl[:, None] * qy[None, :]
    cy = rel_y[:, None] + sl[:, None] * qx[None, :] + cl[:, None] * qy[None, :]

    # Rotating the ego frame sweeps frame points perpendicular to themselves:
    # d c / d ego_psi = (c_y, -c_x); translation derivative is -R(-psi).
    amax_x = np.argmax(cx, axis=1)
    amin_x = np.argmin(cx, axis=1)
    amax_y = np.argmax(cy, axis=1)
    amin_y = np.argmin(cy, axis=1)
    rows = np.arange(n)
    ub_lx, lb_lx = cx[rows, amax_x], cx[rows, amin_x]
    ub_ly, lb_ly = cy[rows, amax_y], cy[rows, amin_y]

    def corner_grads(sel_x_kind, sel):
        """(d/dx, d/dy, d/dpsi) of the selected corner coordinate."""
        if sel_x_kind == "x":
            val_other = cy[rows, sel]
            return -ci, -si, val_other
        val_other = cx[rows, sel]
        return si, -ci, -val_other

    ub_lx_dx, ub_lx_dy, ub_lx_dpsi = corner_grads("x", amax_x)
    lb_lx_dx, lb_lx_dy, lb_lx_dpsi = corner_grads("x", amin_x)
    ub_ly_dx, ub_ly_dy, ub_ly_dpsi = corner_grads("y", amax_y)
    lb_ly_dx, lb_ly_dy, lb_ly_dpsi = corner_grads("y", amin_y)

    # Overlap extents; min/max select which side's derivative propagates.
    ego_hi_x = ub_ix <= ub_lx
    hi_x = np.where(ego_hi_x, ub_ix, ub_lx)
    ego_lo_x = lb_ix >= lb_lx
    lo_x = np.where(ego_lo_x, lb_ix, lb_lx)
    l_ov = hi_x - lo_x

    ego_hi_y = ub_iy <= ub_ly
    hi_y = np.where(ego_hi_y, ub_iy, ub_ly)
    ego_lo_y = lb_iy >= lb_ly
    lo_y = np.where(ego_lo_y, lb_iy, lb_ly)
    w_ov = hi_y - lo_y

    def extent_grads(ego_hi, ego_lo, ub_i_d, lb_i_d, ub_l_d, lb_l_d):
        hi_d = np.where(ego_hi, ub_i_d[0], ub_l_d[0]), np.where(ego_hi, ub_i_d[1], ub_l_d[1]), np.where(ego_hi, ub_i_d[2], ub_l_d[2]), np.where(ego_hi, ub_i_d[3], ub_l_d[3])
        lo_d = np.where(ego_lo, lb_i_d[0], lb_l_d[0]), np.where(ego_lo, lb_i_d[1], lb_l_d[1]), np.where(ego_lo, lb_i_d[2], lb_l_d[2]), np.where(ego_lo, lb_i_d[3], lb_l_d[3])
        return tuple(h - l for h, l in zip(hi_d, lo_d))

    # Derivative tuples ordered (d/dx, d/dy, d/dpsi, d/dv).
    l_dx, l_dy, l_dpsi, l_dv = extent_grads(
        ego_hi_x, ego_lo_x,
        (zeros, zeros, ub_ix_dpsi, ub_ix_dv),
        (zeros, zeros, lb_ix_dpsi, lb_ix_dv),
        (ub_lx_dx, ub_lx_dy, ub_lx_dpsi, zeros),
        (lb_lx_dx, lb_lx_dy, lb_lx_dpsi, zeros),
    )
    w_dx, w_dy, w_dpsi, w_dv = extent_grads(
        ego_hi_y, ego_lo_y,
        (zeros, zeros, ub_iy_dpsi, zeros),
        (zeros, zeros, lb_iy_dpsi, zeros),
        (ub_ly_dx, ub_ly_dy, ub_ly_dpsi, zeros),
        (lb_ly_dx, lb_ly_dy, lb_ly_dpsi, zeros),
    )

    l_pos = np.maximum(0.0, l_ov)
    w_pos = np.maximum(0.0, w_ov)
    area = l_pos * w_pos
    l_act = (l_ov > 0.0).astype(float)
    w_act = (w_ov > 0.0).astype(float)
    # d area = [W]_+ [L>0] dL + [L]_+ [W>0] dW
    fac_l = w_pos * l_act
    fac_w = l_pos * w_act
    dA_dx = fac_l * l_dx + fac_w * w_dx
    dA_dy = fac_l * l_dy + fac_w * w_dy
    dA_dpsi = fac_l * l_dpsi + fac_w * w_dpsi
    dA_dv = fac_l * l_dv + fac_w * w_dv
    return area, dA_dx, dA_dy, dA_dpsi, dA_dv


def overlap_kink_margins(
    ego_x, ego_y, ego_psi, ego_v,
    geom_i: AgentGeometry, safety: SafetyParams,
    oth_x, oth_y, oth_psi, oth_v,
    geom_l: AgentGeometry,
) -> np.ndarray:
    """Per-step distance to the nearest overlap-gradient branch point.

    The overlap area is piecewise smooth; its gradient switches branch
    wherever a max/min argument changes sign or the selected corner/side
    swaps.  Finite-difference checks use this to skip near-kink samples.
    """
    ego_psi = np.asarray(ego_psi, dtype=float)
    oth_psi = np.asarray(oth_psi, dtype=float)
    n = ego_psi.size
    half_li, half_wi = 0.5 * geom_i.length, 0.5 * geom_i.width
    half_ll, half_wl = 0.5 * geom_l.length, 0.5 * geom_l.width

    d_psi = oth_psi - ego_psi
    n_x, n_y = np.cos(d_psi), np.sin(d_psi)
    v_i = np.asarray(ego_v, dtype=float)
    v_l = np.asarray(oth_v, dtype=float)

    ub_ix = half_li + safety.d_long_front + v_i * safety.t_gap_x
    lb_ix = -half_li - (safety.d_long_rear + v_i * safety.t_gap_x * np.maximum(0.0, n_x))
    ub_iy = half_wi + safety.d_lat_left + v_l * safety.t_gap_y * np.maximum(0.0, -n_y)
    lb_iy = -half_wi - (safety.d_lat_right + v_l * safety.t_gap_y * np.maximum(0.0, n_y))

    ci, si = np.cos(ego_psi), np.sin(ego_psi)
    dx = np.asarray(oth_x, dtype=float) - np.asarray(ego_x, dtype=float)
    dy = np.asarray(oth_y, dtype=float) - np.asarray(ego_y, dtype=float)
    rel_x = ci * dx + si * dy
    rel_y = -si * dx + ci * dy
    cl, sl = np.cos(d_psi), np.sin(d_psi)
    qx = np.array([half_ll, half_ll, -half_ll, -half_ll])
    qy = np.array([half_wl, -half_wl, -half_wl, half_wl])
    cx = rel_x[:, None] + cl[:, None] * qx[None, :] - sl[:, None] * qy[None, :]
    cy = rel_y[:, None] + sl[:, None] * qx[None, :] + cl[:, None] * qy[None, :]
    cx_sorted = np.sort(cx, axis=1)
    cy_sorted = np.sort(cy, axis=1)
    ub_lx, lb_lx = cx_sorted[:, 3], cx_sorted[:, 0]
    ub_ly, lb_ly = cy_sorted[:, 3], cy_sorted[:, 0]
    l_ov = np.minimum(ub_ix, ub_lx) - np.maximum(lb_ix, lb_lx)
    w_ov = np.minimum(ub_iy, ub_ly) - np.maximum(lb_iy, lb_ly)

    big = np.inf
    inner = np.minimum(np.abs(l_ov), np.abs(w_ov))
    # Selection ties: the propagated derivative swaps sides at these.
    for gap in (ub_ix - ub_lx, lb_ix - lb_lx, ub_iy - ub_ly, lb_iy - lb_ly):
        inner = np.minimum(inner, np.abs(gap))
    # Gate kinks count only where the corresponding ego side is the selected
    # overlap boundary; corner-argmax swaps only where the other agent's
    # corner is selected.
    ego_lo_x = lb_ix >= lb_lx
    ego_hi_y = ub_iy <= ub_ly
    ego_lo_y = lb_iy >= lb_ly
    inner = np.minimum(inner, np.where(ego_lo_x, np.abs(n_x), big))
    n_y_margin = np.where(ego_hi_y | ego_lo_y, np.abs(n_y), big)
    inner = np.minimum(inner, n_y_margin)
    gap_x = np.minimum(cx_sorted[:, 3] - cx_sorted[:, 2], cx_sorted[:, 1] - cx_sorted[:, 0])
    gap_y = np.minimum(cy_sorted[:, 3] - cy_sorted[:, 2], cy_sorted[:, 1] - cy_sorted[:, 0])
    inner = np.minimum(inner, np.where((ub_ix > ub_lx) | (~ego_lo_x), gap_x, big))
    inner = np.minimum(inner, np.where((~ego_hi_y) | (~ego_lo_y), gap_y, big))
    # While the boxes are separated along some axis the area is identically
    # zero in a neighborhood, so the only margin that matters is the gap; the
    # internal gate/selection kinks are irrelevant there.
    separation = np.maximum(-l_ov, -w_ov)
    return np.where(separation > 0.0, separation, inner)
