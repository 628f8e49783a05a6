"""Box-constrained nonconvex solver: projected gradient with L-BFGS
acceleration, globalized by the forward-backward envelope, wrapped in a
quadratic-penalty outer loop with per-constraint weight escalation.

The inner solver needs only a combined cost/gradient callback and the box; it
keeps no problem knowledge.  The outer loop drives any problem object exposing
``cost_and_grad(u)``, ``residuals(u)`` (raw equality/inequality values) and
mutable ``betas_eq`` / ``betas_ineq`` weight dictionaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BoxSet",
    "SolverConfig",
    "PenaltyConfig",
    "PanocDiagnostics",
    "SolverResult",
    "project_box",
    "fbe_value",
    "panoc_solve",
    "penalty_outer_loop",
]


@dataclass(frozen=True)
class BoxSet:
    """Per-coordinate bounds; the only hard constraint the solver sees."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("box bounds must satisfy lower <= upper elementwise")

    @staticmethod
    def uniform(n: int, lo: float, hi: float) -> "BoxSet":
        return BoxSet(np.full(n, lo), np.full(n, hi))

    def project(self, u: np.ndarray) -> np.ndarray:
        return np.clip(u, self.lower, self.upper)


def project_box(u, box: BoxSet) -> np.ndarray:
    """Elementwise clamp onto the box; idempotent."""
    return box.project(np.asarray(u, dtype=float))


@dataclass(frozen=True)
class SolverConfig:
    """Inner-solver parameters.

    tol is the final stopping threshold on the scaled fixed-point residual
    ||u - T(u)||_inf / gamma; tol_intermediate is used for the cheap early
    passes of the penalty loop.
    """

    tol: float = 1e-4
    tol_intermediate: float = 1e-3
    max_iterations: int = 500
    lbfgs_memory: int = 10
    lipschitz_delta: float = 1e-6
    gamma_safety: float = 0.95
    gamma_min: float = 1e-14
    linesearch_shrink: float = 0.5
    sufficient_decrease: float = 1e-6
    tau_min: float = 2.0 ** -20

    def __post_init__(self):
        if self.tol <= 0 or self.lbfgs_memory < 1 or not (0 < self.linesearch_shrink < 1):
            raise ValueError("invalid solver configuration")


@dataclass(frozen=True)
class PenaltyConfig:
    constraint_tolerance: float = 1e-4
    beta_init: float = 100.0
    escalation_factor: float = 10.0
    max_outer_iterations: int = 10

    def __post_init__(self):
        if self.constraint_tolerance <= 0 or self.escalation_factor <= 1:
            raise ValueError("invalid penalty configuration")


@dataclass
class PanocDiagnostics:
    iterations: int = 0
    n_evals: int = 0
    fp_residual: float = np.inf
    converged: bool = False
    linesearch_stalls: int = 0
    gamma_halvings: int = 0
    lbfgs_resets: int = 0
    gamma: float = 0.0
    fbe_monotone: bool = True
    fbe_max_jump: float = 0.0


@dataclass
class SolverResult:
    u_opt: np.ndarray
    inner_iterations: int
    outer_iterations: int
    fp_residual: float
    max_scaled_violation: float
    status: str  # "converged" | "max_outer" | "max_inner"
    preview_residual: float = 0.0
    fbe_monotone: bool = True
    fbe_max_jump: float = 0.0
    linesearch_stalls: int = 0
    n_evals: int = 0


def fbe_value(u: np.ndarray, cost: float, grad: np.ndarray, gamma: float, box: BoxSet) -> float:
    """Forward-backward envelope at u given its cost and gradient."""
    step = box.project(u - gamma * grad)
    d = step - u
    return float(cost + grad @ d + (d @ d) / (2.0 * gamma))


def _lbfgs_direction(residual: np.ndarray, s_mem: list, y_mem: list) -> np.ndarray:
    """Two-loop recursion; returns H @ residual (identity when memory empty)."""
    q = residual.copy()
    if not s_mem:
        return q
    alphas = []
    for s_vec, y_vec, rho in reversed(list(zip(s_mem, y_mem, _rhos(s_mem, y_mem)))):
        alpha = rho * (s_vec @ q)
        q -= alpha * y_vec
        alphas.append(alpha)
    s_last, y_last = s_mem[-1], y_mem[-1]
    q *= (s_last @ y_last) / (y_last @ y_last)
    for (s_vec, y_vec, rho), alpha in zip(zip(s_mem, y_mem, _rhos(s_mem, y_mem)), reversed(alphas)):
        beta = rho * (y_vec @ q)
        q += s_vec * (alpha - beta)
    return q


def _rhos(s_mem, y_mem):
    return [1.0 / (s @ y) for s, y in zip(s_mem, y_mem)]


def panoc_solve(cost_and_grad, box: BoxSet, u_init, cfg: SolverConfig, tol=None):
    """Minimize a smooth cost over a box.

    Parameters
    ----------
    cost_and_grad : callable u -> (float, ndarray), deterministic.
    box : hard feasible set; the returned point lies in it exactly.
    u_init : initial iterate (projected before use).
    tol : override of cfg.tol for this call.

    Returns
    -------
    (u, PanocDiagnostics)
    """
    tol = cfg.tol if tol is None else tol
    diag = PanocDiagnostics()

    def fg(u):
        diag.n_evals += 1
        return cost_and_grad(u)

    u = box.project(np.asarray(u_init, dtype=float))
    f, g = fg(u)

    # Finite-difference probe for the initial Lipschitz estimate.
    n = u.size
    delta = cfg.lipschitz_delta * (1.0 + np.linalg.norm(u)) / np.sqrt(n) * np.ones(n)
    _, g_probe = fg(u + delta)
    lip = np.linalg.norm(g_probe - g) / np.linalg.norm(delta)
    lip = max(lip, 1e-9)
    gamma = cfg.gamma_safety / lip

    s_mem: list = []
    y_mem: list = []
    r_prev = None
    u_prev = None
    fbe_prev = None
    u_ret, best_rinf = u, np.inf

    for it in range(cfg.max_iterations):
        diag.iterations = it + 1
        # Forward-backward step with descent-lemma safeguarding of gamma.
        while True:
            tu = box.project(u - gamma * g)
            d = tu - u
            dd = float(d @ d)
            f_tu, g_tu = fg(tu)
            quad = f + float(g @ d) + dd / (2.0 * gamma)
            if f_tu <= quad + 1e-10 * (1.0 + abs(f)) or gamma <= cfg.gamma_min:
                break
            gamma *= 0.5
            diag.gamma_halvings += 1
            s_mem.clear()
            y_mem.clear()
            r_prev = None
            fbe_prev = None  # envelope changes with gamma

        rinf = float(np.max(np.abs(d))) / gamma
        fbe = f + float(g @ d) + dd / (2.0 * gamma)
        if fbe_prev is not None:
            jump = fbe - fbe_prev
            if jump > 1e-12 * (1.0 + abs(fbe_prev)):
                diag.fbe_monotone = False
                diag.fbe_max_jump = max(diag.fbe_max_jump, jump)
        fbe_prev = fbe

        u_ret, best_rinf = tu, rinf
        if rinf <= tol:
            diag.converged = True
            break

        r = u - tu
        if r_prev is not None:
            s_vec = u - u_prev
            y_vec = r - r_prev
            sy = float(s_vec @ y_vec)
            if sy > 1e-12 * np.linalg.norm(s_vec) * np.linalg.norm(y_vec):
                s_mem.append(s_vec)
                y_mem.append(y_vec)
                if len(s_mem) > cfg.lbfgs_memory:
                    s_mem.pop(0)
                    y_mem.pop(0)
            else:
                s_mem.clear()
                y_mem.clear()
                diag.lbfgs_resets += 1
        u_prev, r_prev = u, r

        direction = -_lbfgs_direction(r, s_mem, y_mem)
        decrease = cfg.sufficient_decrease * float(r @ r) / gamma
        tau = 1.0
        accepted = False
        while tau >= cfg.tau_min:
            u_new = u + (1.0 - tau) * d + tau * direction
            f_new, g_new = fg(u_new)
            if fbe_value(u_new, f_new, g_new, gamma, box) <= fbe - decrease:
                accepted = True
                break
            tau *= cfg.linesearch_shrink
        if not accepted:
            # Fall back to the plain projected-gradient step, which always
            # decreases the envelope under the safeguarded gamma.
            diag.linesearch_stalls += 1
            u_new, f_new, g_new = tu, f_tu, g_tu
        u, f, g = u_new, f_new, g_new
    else:
        # Iteration cap: return the projected point of the last iterate.
        tu = box.project(u - gamma * g)
        u_ret = tu
        best_rinf = float(np.max(np.abs(tu - u))) / gamma

    diag.fp_residual = best_rinf
    diag.gamma = gamma
    return u_ret, diag


def _max_violation(violations: dict) -> float:
    worst = 0.0
    for arr in violations.values():
        if arr.size:
            worst = max(worst, float(np.max(arr)))
    return worst


def penalty_outer_loop(problem, u_warm, pcfg: PenaltyConfig, scfg: SolverConfig) -> SolverResult:
    """Quadratic-penalty loop around the inner solver.

    After each inner solve the scaled violations psi/beta (h^2 for equalities,
    clipped g^2 for inequalities) are checked against the constraint
    tolerance; only the weights of violated terms are escalated, and the next
    inner solve warm-starts from the current iterate.  Once every term passes
    at the cheap tolerance, a final tightened solve confirms the result.
    """
    u = np.asarray(u_warm, dtype=float)
    inner_total = 0
    evals_total = 0
    stalls = 0
    monotone = True
    max_jump = 0.0
    diag = None
    outer_done = 0
    status = "max_outer"
    prev_violation = np.inf

    for outer in range(pcfg.max_outer_iterations):
        outer_done = outer + 1
        u, diag = panoc_solve(problem.cost_and_grad, problem.box, u, scfg,
                              tol=scfg.tol_intermediate)
        inner_total += diag.iterations
        evals_total += diag.n_evals
        stalls += diag.linesearch_stalls
        monotone = monotone and diag.fbe_monotone
        max_jump = max(max_jump, diag.fbe_max_jump)

        res = problem.residuals(u)
        viol = res.scaled_violations()
        worst_now = _max_violation(viol)
        if worst_now >= pcfg.constraint_tolerance and worst_now > 0.9 * prev_violation:
            # Escalation stall: the violated terms sit where the penalty has
            # no usable descent direction (e.g. a contained-overlap plateau),
            # so further weight growth cannot help.  Bail out early and let
            # the caller try a different initialization.
            break
        prev_violation = worst_now
        if worst_now < pcfg.constraint_tolerance:
            u, diag = panoc_solve(problem.cost_and_grad, problem.box, u, scfg, tol=scfg.tol)
            inner_total += diag.iterations
            evals_total += diag.n_evals
            stalls += diag.linesearch_stalls
            monotone = monotone and diag.fbe_monotone
            max_jump = max(max_jump, diag.fbe_max_jump)
            res = problem.residuals(u)
            viol = res.scaled_violations()
            if _max_violation(viol) < pcfg.constraint_tolerance:
                status = "converged" if diag.converged else "max_inner"
                break
        _escalate(problem, viol, pcfg)
    else:
        res = problem.residuals(u)
        viol = res.scaled_violations()

    preview = 0.0
    if "preview" in res.eq:
        preview = float(res.eq["preview"][0])
    return SolverResult(
        u_opt=u,
        inner_iterations=inner_total,
        outer_iterations=outer_done,
        fp_residual=diag.fp_residual if diag else np.inf,
        max_scaled_violation=_max_violation(viol),
        status=status,
        preview_residual=preview,
        fbe_monotone=monotone,
        fbe_max_jump=max_jump,
        linesearch_stalls=stalls,
        n_evals=evals_total,
    )


def _escalate(problem, violations: dict, pcfg: PenaltyConfig) -> None:
    for key, arr in violations.items():
        mask = arr >= pcfg.constraint_tolerance
        if not np.any(mask):
            continue
        if key in problem.betas_eq:
            problem.betas_eq[key][mask] *= pcfg.escalation_factor
        else:
            problem.betas_ineq[key][mask] *= pcfg.escalation_factor
