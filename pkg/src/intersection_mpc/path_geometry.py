"""Cubic B-spline path maps from the scalar path coordinate to the global frame.

A path is fitted once from waypoints (chord-length parameterization, so the
parameter approximates arc length) and then queried for position, heading and
curvature.  Heading and curvature are derived from the spline derivatives
rather than fitted separately, which keeps the three maps consistent.
Queries outside the fitted domain extrapolate linearly along the end tangents
with zero curvature, so a prediction horizon may safely overrun a short path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline, make_interp_spline

__all__ = [
    "Waypoint",
    "PathSpline",
    "PathGeometryError",
    "TooFewWaypoints",
    "DegenerateWaypoints",
    "SingularTangent",
    "fit_path_spline",
]

SPLINE_DEGREE = 3
_TANGENT_EPS = 1e-9


class PathGeometryError(ValueError):
    pass


class TooFewWaypoints(PathGeometryError):
    pass


class DegenerateWaypoints(PathGeometryError):
    pass


class SingularTangent(PathGeometryError):
    pass


@dataclass(frozen=True)
class Waypoint:
    x_g: float
    y_g: float


@dataclass
class PathSpline:
    """Interpolating cubic B-spline path with tangent extrapolation.

    Attributes
    ----------
    degree : spline degree (always 3).
    knots : nondecreasing knot vector shared by both coordinate splines.
    coef_x, coef_y : B-spline coefficients of the coordinate maps [m].
    s_max : parameter value of the last waypoint [m].
    """

    degree: int
    knots: np.ndarray
    coef_x: np.ndarray
    coef_y: np.ndarray
    s_max: float
    _bsplines: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        base = BSpline(self.knots, np.column_stack([self.coef_x, self.coef_y]), self.degree)
        # Derivatives up to third order; cubic third derivative is piecewise constant.
        self._bsplines = [base, base.derivative(1), base.derivative(2), base.derivative(3)]

    # -- raw derivative evaluation with tangent extrapolation -------------

    def _derivs(self, s) -> np.ndarray:
        """Stacked derivatives, shape (4, n, 2): position, d1, d2, d3."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        s_clip = np.clip(s, 0.0, self.s_max)
        out = np.stack([bs(s_clip) for bs in self._bsplines])
        below = s < 0.0
        above = s > self.s_max
        if below.any() or above.any():
            outside = below | above
            # Position continues along the boundary tangent; higher derivatives
            # vanish so heading holds constant and curvature is zero outside.
            p = out[0]
            d1 = out[1]
            p[outside] = p[outside] + d1[outside] * (s[outside] - s_clip[outside])[:, None]
            out[2][outside] = 0.0
            out[3][outside] = 0.0
        return out

    # -- public evaluation -------------------------------------------------

    def position(self, s) -> np.ndarray:
        """Global (x_g, y_g) at path coordinate s; shape (2,) or (n, 2)."""
        p = self._derivs(s)[0]
        return p[0] if np.isscalar(s) else p

    def heading(self, s):
        """Tangent heading angle psi = atan2(y', x') [rad]."""
        d1 = self._derivs(s)[1]
        norm = np.hypot(d1[:, 0], d1[:, 1])
        if np.any(norm < _TANGENT_EPS):
            raise SingularTangent("path tangent vanishes at requested parameter")
        psi = np.arctan2(d1[:, 1], d1[:, 0])
        return float(psi[0]) if np.isscalar(s) else psi

    def curvature(self, s):
        """Signed curvature kappa = (x'y'' - y'x'') / (x'^2 + y'^2)^(3/2) [1/m]."""
        d = self._derivs(s)
        d1, d2 = d[1], d[2]
        sq = d1[:, 0] ** 2 + d1[:, 1] ** 2
        if np.any(np.sqrt(sq) < _TANGENT_EPS):
            raise SingularTangent("path tangent vanishes at requested parameter")
        kappa = (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / sq ** 1.5
        return float(kappa[0]) if np.isscalar(s) else kappa

    def frame(self, s) -> dict:
        """Everything the OCP needs at once, vectorized over s.

        Returns a dict of arrays: x, y, heading and curvature plus their
        derivatives with respect to s (dx, dy, dheading, dcurvature).
        """
        d = self._derivs(np.asarray(s, dtype=float))
        p, d1, d2, d3 = d
        x1, y1 = d1[:, 0], d1[:, 1]
        x2, y2 = d2[:, 0], d2[:, 1]
        x3, y3 = d3[:, 0], d3[:, 1]
        sq = x1 ** 2 + y1 ** 2
        if np.any(np.sqrt(sq) < _TANGENT_EPS):
            raise SingularTangent("path tangent vanishes at requested parameter")
        cross = x1 * y2 - y1 * x2
        kappa = cross / sq ** 1.5
        # d(psi)/ds = cross / sq;  d(kappa)/ds from the quotient rule.
        dpsi = cross / sq
        dcross = x1 * y3 - y1 * x3
        dsq = 2.0 * (x1 * x2 + y1 * y2)
        dkappa = (dcross * sq - 1.5 * cross * dsq) / sq ** 2.5
        return {
            "x": p[:, 0], "y": p[:, 1],
            "dx": x1, "dy": y1,
            "heading": np.arctan2(y1, x1),
            "dheading": dpsi,
            "curvature": kappa,
            "dcurvature": dkappa,
        }

    def project(self, point, grid_step: float = 0.5) -> tuple[float, float]:
        """Closest path coordinate to a global point, including the end rays.

        Coarse grid search over the fitted domain refined by ternary search,
        plus closed-form projection onto the two tangent extension rays.
        Returns (s_star, distance).
        """
        point = np.asarray(point, dtype=float)
        grid = np.arange(0.0, self.s_max + grid_step, grid_step)
        pts = self.position(grid)
        d2 = np.sum((pts - point) ** 2, axis=1)
        i = int(np.argmin(d2))
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, grid.size - 1)]
        for _ in range(60):
            m1 = lo + (hi - lo) / 3.0
            m2 = hi - (hi - lo) / 3.0
            f1 = np.sum((self.position(m1) - point) ** 2)
            f2 = np.sum((self.position(m2) - point) ** 2)
            if f1 <= f2:
                hi = m2
            else:
                lo = m1
        s_best = 0.5 * (lo + hi)
        best = (float(s_best), float(np.linalg.norm(self.position(s_best) - point)))

        # Tangent extension rays beyond both ends.
        for s_end, sign in ((self.s_max, 1.0), (0.0, -1.0)):
            d = self._derivs(s_end)
            p0, t = d[0][0], d[1][0]
            t = t / np.linalg.norm(t)
            proj = float(np.dot(point - p0, t))
            if sign * proj > 0.0:
                s_ray = s_end + proj
                dist = float(np.linalg.norm(p0 + proj * t - point))
                if dist < best[1]:
                    best = (s_ray, dist)
        return best


def fit_path_spline(waypoints) -> PathSpline:
    """Interpolating cubic spline through waypoints, chord-length parameterized.

    Parameters
    ----------
    waypoints : sequence of (x, y) pairs or Waypoint objects, at least 4,
        with no two consecutive points identical.
    """
    pts = np.array(
        [[w.x_g, w.y_g] if isinstance(w, Waypoint) else [w[0], w[1]] for w in waypoints],
        dtype=float,
    )
    if pts.ndim != 2 or pts.shape[0] < 4:
        raise TooFewWaypoints(f"need at least 4 waypoints, got {0 if pts.ndim != 2 else pts.shape[0]}")
    if not np.all(np.isfinite(pts)):
        raise DegenerateWaypoints("waypoints must be finite")
    chords = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    if np.any(chords < 1e-12):
        raise DegenerateWaypoints("consecutive waypoints coincide")
    params = np.concatenate([[0.0], np.cumsum(chords)])
    spl = make_interp_spline(params, pts, k=SPLINE_DEGREE)  # not-a-knot ends
    return PathSpline(
        degree=SPLINE_DEGREE,
        knots=spl.t,
        coef_x=np.ascontiguousarray(spl.c[:, 0]),
        coef_y=np.ascontiguousarray(spl.c[:, 1]),
        s_max=float(params[-1]),
    )
