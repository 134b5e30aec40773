"""Deterministic variational integrators for holonomically constrained systems.

All steps solve an implicit system built from a discrete action: internal
stage velocities and Lagrange multipliers are the Newton unknowns, internal
positions are explicit combinations of them, and the configuration
constraint is imposed at every internal position.  The momentum produced by
the discrete action does not automatically satisfy the hidden velocity
constraint, so each step ends with a projection that adds a constraint
force to the momentum; for the trapezoidal (RATTLE) scheme that projection
is part of the step's own equations.

Every function broadcasts over leading batch dimensions of the state
arrays, which is how trajectory ensembles are integrated in one sweep.
"""

from dataclasses import dataclass

import numpy as np

from .model import State, legendre_velocity
from .solver import DEFAULT_NEWTON, newton_solve, schur_multiplier_solve
from .exceptions import NoConvergence
from .tableau import ButcherTableau, check_admissibility

__all__ = [
    "InternalStages",
    "StepResult",
    "EulerIntermediate",
    "projection_step",
    "variational_euler_a_step",
    "variational_euler_b_step",
    "euler_a_with_projection",
    "euler_b_with_projection",
    "rattle_step",
    "vprk_step",
]


@dataclass
class InternalStages:
    """Internal positions, velocities, momenta and multipliers of one step.

    Arrays have shapes (..., s, n) for Q, V, P and (..., s, k) for Lambda.
    """

    Q: np.ndarray
    V: np.ndarray
    P: np.ndarray
    Lambda: np.ndarray


@dataclass
class StepResult:
    state: State
    stages: InternalStages | None
    multipliers: list
    newton_iters: int
    velocity: np.ndarray = None
    warm: np.ndarray = None


@dataclass
class EulerIntermediate:
    """Unprojected output (q_next, p_hat) of a first-order variational step."""

    q: np.ndarray
    p_hat: np.ndarray
    v_hat: np.ndarray
    multiplier: np.ndarray
    newton_iters: int


def _gt(mat):
    return np.swapaxes(mat, -1, -2)


def _apply(mat, vec):
    return (mat @ vec[..., None])[..., 0]


# ---------------------------------------------------------------------------
# Hidden-constraint projection


def _project(system, q, p_hat, scale, config=None, v0=None):
    """Add a constraint force scale * dg_dq^T mu to p_hat so that the
    Legendre velocity at (q, p) is annihilated by the constraint Jacobian.

    Each iteration solves one saddle system; for Lagrangians quadratic in v
    a single iteration is exact.  Returns (p, v, mu, iterations).
    """
    cfg = config or DEFAULT_NEWTON
    G = system.dg_dq(q)
    GT = _gt(G)
    k = G.shape[-2]
    v = legendre_velocity(system, q, p_hat, cfg) if v0 is None else np.array(v0)
    mu = np.zeros(q.shape[:-1] + (k,))
    iterations = 0
    for iterations in range(cfg.max_iter + 1):
        p_cur = p_hat + scale * _apply(GT, mu)
        r1 = system.dL_dv(q, v) - p_cur
        r2 = _apply(G, v)
        res = max(float(np.max(np.abs(r1))), float(np.max(np.abs(r2))))
        if res <= cfg.tol_residual:
            return p_cur, v, mu, iterations
        M = system.d2L_dv2(q, v)
        dv, lam = schur_multiplier_solve(M, G, -r1, -r2)
        v = v + dv
        mu = mu - lam / scale
    raise NoConvergence(res, iterations, "hidden-constraint projection stalled")


def projection_step(system, q, p_hat, h, config=None) -> State:
    """Project a momentum onto the hidden velocity constraint at fixed q.

    Returns the state (q, p) with p = p_hat + h * dg_dq(q)^T mu and
    dg_dq(q) . v = 0 for the Legendre velocity v of the new momentum.
    Fixed point of itself: momenta already satisfying the constraint are
    returned unchanged with mu = 0.
    """
    q = np.asarray(q, dtype=float)
    p_hat = np.asarray(p_hat, dtype=float)
    p, _, _, _ = _project(system, q, p_hat, h, config)
    return State(q=q, p=p)


# ---------------------------------------------------------------------------
# First-order variational Euler steps


def _saddle_jacobian(J11, J12, J21):
    batch = J11.shape[:-2]
    n = J11.shape[-1]
    k = J12.shape[-1]
    J = np.zeros(batch + (n + k, n + k))
    J[..., :n, :n] = J11
    J[..., :n, n:] = J12
    J[..., n:, :n] = J21
    return J


def variational_euler_a_step(system, x: State, h, config=None, warm=None):
    """One step of the first variational Euler scheme.

    The position update is q_next = q + h * v_hat with the momentum drift
    and the Legendre pairing both evaluated at (q, v_hat).  The returned
    momentum p_hat satisfies g(q_next) = 0 but not, in general, the hidden
    velocity constraint; compose with ``projection_step``.
    """
    cfg = config or DEFAULT_NEWTON
    q, p = x.q, x.p
    n = system.dim_q
    k = system.dim_g
    GT_k = _gt(system.dg_dq(q))

    def residual(u):
        v_hat, lam = u[..., :n], u[..., n:]
        r1 = system.dL_dv(q, v_hat) - p - h * (
            system.dL_dq(q, v_hat) + _apply(GT_k, lam)
        )
        r2 = system.constraint(q + h * v_hat)
        return np.concatenate([r1, r2], axis=-1)

    def jacobian(u):
        v_hat = u[..., :n]
        J11 = system.d2L_dv2(q, v_hat) - h * _gt(system.d2L_dqdv(q, v_hat))
        J21 = h * system.dg_dq(q + h * v_hat)
        return _saddle_jacobian(J11, -h * GT_k, J21)

    if warm is None:
        v0 = legendre_velocity(system, q, p, cfg)
        warm = np.concatenate([v0, np.zeros(q.shape[:-1] + (k,))], axis=-1)
    sol = newton_solve(residual, warm, cfg, jacobian=jacobian)
    v_hat, lam = sol.x[..., :n], sol.x[..., n:]
    return EulerIntermediate(
        q=q + h * v_hat,
        p_hat=system.dL_dv(q, v_hat),
        v_hat=v_hat,
        multiplier=lam,
        newton_iters=sol.iterations,
    )


def _euler_b_core(system, x: State, h, kick, config=None, v=None, warm=None):
    """Shared implicit solve for the second Euler scheme and its stochastic
    extension: drift at (q, v) with v the current Legendre velocity, an
    additive momentum kick, and the Legendre pairing at the new position.
    """
    cfg = config or DEFAULT_NEWTON
    q, p = x.q, x.p
    n = system.dim_q
    k = system.dim_g
    if v is None:
        v = legendre_velocity(system, q, p, cfg)
    GT_k = _gt(system.dg_dq(q))
    drift = p + h * system.dL_dq(q, v)
    if kick is not None:
        drift = drift + kick

    def residual(u):
        v_hat, lam = u[..., :n], u[..., n:]
        q_next = q + h * v_hat
        r1 = system.dL_dv(q_next, v_hat) - drift - h * _apply(GT_k, lam)
        r2 = system.constraint(q_next)
        return np.concatenate([r1, r2], axis=-1)

    def jacobian(u):
        v_hat = u[..., :n]
        q_next = q + h * v_hat
        J11 = system.d2L_dv2(q_next, v_hat) + h * system.d2L_dqdv(q_next, v_hat)
        J21 = h * system.dg_dq(q_next)
        return _saddle_jacobian(J11, -h * GT_k, J21)

    if warm is None:
        warm = np.concatenate([v, np.zeros(q.shape[:-1] + (k,))], axis=-1)
    sol = newton_solve(residual, warm, cfg, jacobian=jacobian)
    v_hat, lam = sol.x[..., :n], sol.x[..., n:]
    q_next = q + h * v_hat
    return EulerIntermediate(
        q=q_next,
        p_hat=system.dL_dv(q_next, v_hat),
        v_hat=v_hat,
        multiplier=lam,
        newton_iters=sol.iterations,
    )


def variational_euler_b_step(system, x: State, h, config=None, v=None, warm=None):
    """One step of the implicit-Euler variational scheme.

    The momentum drift uses the current velocity while the Legendre pairing
    is taken at the new position.  As with the first Euler scheme the
    result needs ``projection_step`` to satisfy the hidden constraint.
    """
    return _euler_b_core(system, x, h, kick=None, config=config, v=v, warm=warm)


def _projected_step(system, intermediate, h, config) -> StepResult:
    p, v, mu, proj_iters = _project(
        system, intermediate.q, intermediate.p_hat, h, config, v0=intermediate.v_hat
    )
    return StepResult(
        state=State(q=intermediate.q, p=p),
        stages=None,
        multipliers=[intermediate.multiplier, mu],
        newton_iters=intermediate.newton_iters + proj_iters,
        velocity=v,
        warm=np.concatenate([intermediate.v_hat, intermediate.multiplier], axis=-1),
    )


def euler_a_with_projection(system, x: State, h, config=None, warm=None) -> StepResult:
    return _projected_step(
        system, variational_euler_a_step(system, x, h, config, warm), h, config
    )


def euler_b_with_projection(
    system, x: State, h, config=None, v=None, warm=None
) -> StepResult:
    return _projected_step(
        system, variational_euler_b_step(system, x, h, config, v, warm), h, config
    )


# ---------------------------------------------------------------------------
# RATTLE


def rattle_step(system, x: State, h, config=None, v=None, warm=None) -> StepResult:
    """One step of variational RATTLE (two-stage trapezoidal scheme).

    Solves for the two stage velocities and the position multiplier, then
    determines the velocity multiplier from the hidden constraint at the
    new state.  Agrees with ``vprk_step`` on the trapezoidal tableau.
    """
    cfg = config or DEFAULT_NEWTON
    q, p = x.q, x.p
    n = system.dim_q
    k = system.dim_g
    if v is None:
        v = legendre_velocity(system, q, p, cfg)
    G_k = system.dg_dq(q)
    GT_k = _gt(G_k)

    def unpack(u):
        return u[..., :n], u[..., n : 2 * n], u[..., 2 * n :]

    def residual(u):
        V1, V2, lam1 = unpack(u)
        q_next = q + 0.5 * h * (V1 + V2)
        P1 = system.dL_dv(q, V1)
        r1 = P1 - p - 0.5 * h * (system.dL_dq(q, V1) + _apply(GT_k, lam1))
        r2 = system.dL_dv(q_next, V2) - P1
        r3 = system.constraint(q_next)
        return np.concatenate([r1, r2, r3], axis=-1)

    def jacobian(u):
        V1, V2, _ = unpack(u)
        q_next = q + 0.5 * h * (V1 + V2)
        M1 = system.d2L_dv2(q, V1)
        M2 = system.d2L_dv2(q_next, V2)
        C2 = system.d2L_dqdv(q_next, V2)
        Gn = system.dg_dq(q_next)
        batch = V1.shape[:-1]
        J = np.zeros(batch + (2 * n + k, 2 * n + k))
        J[..., :n, :n] = M1 - 0.5 * h * _gt(system.d2L_dqdv(q, V1))
        J[..., :n, 2 * n :] = -0.5 * h * GT_k
        J[..., n : 2 * n, :n] = 0.5 * h * C2 - M1
        J[..., n : 2 * n, n : 2 * n] = 0.5 * h * C2 + M2
        J[..., 2 * n :, :n] = 0.5 * h * Gn
        J[..., 2 * n :, n : 2 * n] = 0.5 * h * Gn
        return J

    if warm is None:
        warm = np.concatenate([v, v, np.zeros(q.shape[:-1] + (k,))], axis=-1)
    sol = newton_solve(residual, warm, cfg, jacobian=jacobian)
    V1, V2, lam1 = unpack(sol.x)
    q_next = q + 0.5 * h * (V1 + V2)
    P1 = system.dL_dv(q, V1)
    p_hat = P1 + 0.5 * h * system.dL_dq(q_next, V2)
    p_next, v_next, lam2, proj_iters = _project(
        system, q_next, p_hat, 0.5 * h, cfg, v0=V2
    )
    stages = InternalStages(
        Q=np.stack([q, q_next], axis=-2),
        V=np.stack([V1, V2], axis=-2),
        P=np.stack([P1, system.dL_dv(q_next, V2)], axis=-2),
        Lambda=np.stack([lam1, lam2], axis=-2),
    )
    return StepResult(
        state=State(q=q_next, p=p_next),
        stages=stages,
        multipliers=[lam1, lam2],
        newton_iters=sol.iterations + proj_iters,
        velocity=v_next,
        warm=sol.x,
    )


# ---------------------------------------------------------------------------
# General constrained partitioned Runge-Kutta step


def _vprk_core(system, tableau, x, h, config, nu, dW, v, warm):
    """Shared implicit solve behind the deterministic and stochastic
    partitioned Runge-Kutta steps.

    Unknowns are the s stage velocities and the first s-1 multipliers.
    Because the tableau is stiffly accurate with an explicit first stage,
    the first internal position equals the current position (so its
    constraint is vacuous) and the last multiplier enters only the final
    momentum update, where it is determined by the end-of-step projection.
    When ``nu``/``dW`` are given, stage noise increments weighted by
    nu_j * (1 - a_ji / b_i) enter the internal momenta and nu-weighted
    increments enter the final momentum.
    """
    cfg = config or DEFAULT_NEWTON
    q, p = x.q, x.p
    n = system.dim_q
    k = system.dim_g
    s = tableau.s
    a, b = tableau.a, tableau.b
    ahat = tableau.conjugate_weights()
    batch = q.shape[:-1]
    with_noise = dW is not None and system.num_noise > 0
    if with_noise:
        dW = np.asarray(dW, dtype=float)
        stage_noise_w = tableau.noise_stage_weights() * np.asarray(nu)[None, :]

    if v is None:
        v = legendre_velocity(system, q, p, cfg)

    def stage_sigma(Q):
        grads = np.stack([dg(Q) for dg in system.dgamma_dq], axis=-2)
        return np.einsum("...m,...smn->...sn", dW, grads)

    def assemble(u):
        V = u[..., : s * n].reshape(batch + (s, n))
        lam = u[..., s * n :].reshape(batch + (s - 1, k))
        lam_full = np.concatenate([lam, np.zeros(batch + (1, k))], axis=-2)
        Q = q[..., None, :] + h * np.einsum("ij,...jn->...in", a, V)
        forces = system.dL_dq(Q, V) + _apply(_gt(system.dg_dq(Q)), lam_full)
        return V, lam, Q, forces

    def residual(u):
        V, _, Q, forces = assemble(u)
        r1 = (
            system.dL_dv(Q, V)
            - p[..., None, :]
            - h * np.einsum("ij,...jn->...in", ahat, forces)
        )
        if with_noise:
            r1 = r1 - np.einsum("ij,...jn->...in", stage_noise_w, stage_sigma(Q))
        r2 = system.constraint(Q[..., 1:, :])
        return np.concatenate(
            [r1.reshape(batch + (s * n,)), r2.reshape(batch + ((s - 1) * k,))],
            axis=-1,
        )

    if warm is None:
        warm = np.concatenate(
            [np.broadcast_to(v[..., None, :], batch + (s, n)).reshape(batch + (s * n,)),
             np.zeros(batch + ((s - 1) * k,))],
            axis=-1,
        )
    sol = newton_solve(residual, warm, cfg)
    V, lam, Q, forces = assemble(sol.x)
    q_next = q + h * np.einsum("j,...jn->...n", b, V)
    p_hat = p + h * np.einsum("j,...jn->...n", b, forces)
    if with_noise:
        sigma = stage_sigma(Q)
        p_hat = p_hat + np.einsum("j,...jn->...n", np.asarray(nu, dtype=float), sigma)
    p_next, v_next, mu, proj_iters = _project(system, q_next, p_hat, h, cfg, v0=V[..., -1, :])
    # The projection multiplier carries weight h; expressed as the last
    # internal multiplier (weight h * b_s) it must be rescaled by 1 / b_s.
    lam_last = mu / b[-1]
    stages = InternalStages(
        Q=Q,
        V=V,
        P=system.dL_dv(Q, V),
        Lambda=np.concatenate([lam, lam_last[..., None, :]], axis=-2),
    )
    return StepResult(
        state=State(q=q_next, p=p_next),
        stages=stages,
        multipliers=[lam, lam_last],
        newton_iters=sol.iterations + proj_iters,
        velocity=v_next,
        warm=sol.x,
    )


def vprk_step(
    system, tableau: ButcherTableau, x: State, h, config=None, v=None, warm=None
) -> StepResult:
    """One step of the constrained variational partitioned Runge-Kutta scheme.

    Requires an admissible tableau (see ``check_admissibility``); raises
    ConditionViolated otherwise.  The returned state satisfies both the
    configuration constraint and the hidden velocity constraint to solver
    tolerance, and the internal stages satisfy the discrete stage equations.
    """
    check_admissibility(tableau).require()
    return _vprk_core(system, tableau, x, h, config, nu=None, dW=None, v=v, warm=warm)
