"""Longitudinal agent model: first-order drivetrain lag plus double integrator.

The continuous-time state is (a_x, v, s) driven by a requested acceleration
u = a_x_ref.  The model is linear time-invariant, so the zero-order-hold
discretization is exact and the control-to-state map over a horizon is a
plain affine function (used by the OCP for state elimination).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "AgentDynamicsParams",
    "AgentState",
    "DiscreteModel",
    "continuous_matrices",
    "discretize_exact",
    "rollout",
]


@dataclass(frozen=True)
class AgentDynamicsParams:
    """Drivetrain time constant and sampling time, both in seconds."""

    drivetrain_time_constant: float
    sampling_time: float

    def __post_init__(self):
        if not (self.drivetrain_time_constant > 0.0 and math.isfinite(self.drivetrain_time_constant)):
            raise ValueError("drivetrain_time_constant must be positive and finite")
        if not (self.sampling_time > 0.0 and math.isfinite(self.sampling_time)):
            raise ValueError("sampling_time must be positive and finite")


@dataclass(frozen=True)
class AgentState:
    """One agent's longitudinal state: acceleration [m/s^2], velocity [m/s], path coordinate [m]."""

    a_x: float
    v: float
    s: float

    def as_array(self) -> np.ndarray:
        return np.array([self.a_x, self.v, self.s], dtype=float)

    @staticmethod
    def from_array(x) -> "AgentState":
        return AgentState(float(x[0]), float(x[1]), float(x[2]))


@dataclass(frozen=True)
class DiscreteModel:
    """Exact ZOH discretization x+ = A_d x + B_d u of the continuous model."""

    A_d: np.ndarray  # (3, 3)
    B_d: np.ndarray  # (3,)
    sampling_time: float


def continuous_matrices(params: AgentDynamicsParams) -> tuple[np.ndarray, np.ndarray]:
    """Continuous-time (A, B) for state (a_x, v, s) and input a_x_ref."""
    inv_t = 1.0 / params.drivetrain_time_constant
    A = np.array([[-inv_t, 0.0, 0.0],
                  [1.0, 0.0, 0.0],
                  [0.0, 1.0, 0.0]])
    B = np.array([inv_t, 0.0, 0.0])
    return A, B


def discretize_exact(A: np.ndarray, B: np.ndarray, T_s: float) -> DiscreteModel:
    """Exact zero-order-hold discretization.

    Uses the closed form of exp(A*T_s) for this lower-triangular A (three
    scalar formulas per column) instead of a general matrix exponential.
    For T_s = 0 this returns the identity map.
    """
    if T_s < 0:
        raise ValueError("T_s must be nonnegative")
    inv_t = -A[0, 0]
    tau = 1.0 / inv_t  # drivetrain time constant
    e = math.exp(-T_s / tau)

    # First column of exp(A T_s): response of (a, v, s) to a unit initial a_x.
    # a(t) = e^{-t/tau}, v(t) = tau (1 - e^{-t/tau}),
    # s(t) = tau t - tau^2 (1 - e^{-t/tau}).
    a_a = e
    v_a = tau * (1.0 - e)
    s_a = tau * T_s - tau * tau * (1.0 - e)
    A_d = np.array([[a_a, 0.0, 0.0],
                    [v_a, 1.0, 0.0],
                    [s_a, T_s, 1.0]])

    # B_d = integral of exp(A tau') B dtau'; B injects u/tau into a_x, so the
    # entries are the integrals of the first-column responses scaled by 1/tau.
    b_a = 1.0 - e
    b_v = T_s - tau * (1.0 - e)
    b_s = 0.5 * T_s * T_s - tau * T_s + tau * tau * (1.0 - e)
    # s-entry: integral of v-response of B: int_0^T (t' - tau(1-e^{-t'/tau})) dt'
    B_d = np.array([b_a, b_v, b_s])
    return DiscreteModel(A_d=A_d, B_d=B_d, sampling_time=T_s)


def make_discrete_model(params: AgentDynamicsParams) -> DiscreteModel:
    """Convenience: continuous matrices + exact discretization in one call."""
    A, B = continuous_matrices(params)
    return discretize_exact(A, B, params.sampling_time)


def rollout(model: DiscreteModel, x0: AgentState, u_seq) -> np.ndarray:
    """Propagate the discrete model over a control sequence.

    Returns an (N+1, 3) array of states; row 0 is x0.
    """
    u_seq = np.asarray(u_seq, dtype=float)
    if u_seq.ndim != 1 or u_seq.size < 1:
        raise ValueError("u_seq must be a nonempty 1-D sequence")
    n = u_seq.size
    traj = np.empty((n + 1, 3))
    traj[0] = x0.as_array()
    A_d, B_d = model.A_d, model.B_d
    for j in range(n):
        traj[j + 1] = A_d @ traj[j] + B_d * u_seq[j]
    return traj


def control_to_state_maps(model: DiscreteModel, horizon: int) -> tuple[np.ndarray, np.ndarray]:
    """Affine maps of the eliminated state sequence.

    Returns (Phi, Gamma) with Phi of shape (N+1, 3, 3) and Gamma of shape
    (N+1, 3, N) such that x_j = Phi[j] @ x0 + Gamma[j] @ u for j = 0..N.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    A_d, B_d = model.A_d, model.B_d
    phi = np.empty((horizon + 1, 3, 3))
    gamma = np.zeros((horizon + 1, 3, horizon))
    phi[0] = np.eye(3)
    for j in range(1, horizon + 1):
        phi[j] = A_d @ phi[j - 1]
        gamma[j] = A_d @ gamma[j - 1]
        gamma[j, :, j - 1] = B_d
    return phi, gamma
