"""Damped Newton iteration and the saddle-point solve for multipliers.

Both routines broadcast over leading batch dimensions: a residual of shape
(..., d) with unknowns of shape (..., d) is solved independently for every
batch element.  Convergence, damping and freezing are tracked per element,
so the result for one element does not depend on how many iterations its
batch neighbours needed.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import NoConvergence, RankDeficient, SingularJacobian

__all__ = ["NewtonConfig", "NewtonResult", "newton_solve", "schur_multiplier_solve"]

_MAX_HALVINGS = 30


@dataclass(frozen=True)
class NewtonConfig:
    """Stopping and differencing parameters for the Newton iteration."""

    tol_residual: float = 1e-12
    max_iter: int = 50
    fd_jacobian_eps: float = 1e-7

    def __post_init__(self):
        if not self.tol_residual > 0:
            raise ValueError("tol_residual must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


DEFAULT_NEWTON = NewtonConfig()


@dataclass
class NewtonResult:
    x: np.ndarray
    iterations: int
    residual: float


def _inf_norm(r):
    return np.max(np.abs(r), axis=-1)


def _fd_jacobian(F, x, Fx, eps):
    d = x.shape[-1]
    J = np.empty(x.shape + (d,))
    for j in range(d):
        step = eps * (1.0 + np.abs(x[..., j]))
        xp = x.copy()
        xp[..., j] += step
        J[..., :, j] = (F(xp) - Fx) / step[..., None]
    return J


def _solve_linear(J, r):
    try:
        delta = np.linalg.solve(J, r[..., None])[..., 0]
    except np.linalg.LinAlgError as err:
        raise SingularJacobian(str(err)) from err
    if not np.all(np.isfinite(delta)):
        raise SingularJacobian("linear solve produced non-finite update")
    return delta


def newton_solve(F, x0, config=None, jacobian=None) -> NewtonResult:
    """Solve F(x) = 0 with damped Newton iteration.

    Parameters
    ----------
    F : callable mapping (..., d) arrays to (..., d) arrays.
    x0 : initial guess, shape (..., d).
    config : NewtonConfig, defaults to the module default.
    jacobian : optional callable returning (..., d, d); finite differences
        are used when omitted.

    Stops when the per-element infinity norm of the residual is at or below
    ``tol_residual``.  Full steps are halved (up to 30 times, per element)
    whenever they fail to reduce the residual.  Raises NoConvergence when
    the iteration budget runs out or an element stalls, SingularJacobian
    when the linear solve fails.
    """
    cfg = config or DEFAULT_NEWTON
    x = np.array(x0, dtype=float)
    if x.ndim == 0:
        raise ValueError("x0 must have at least one dimension")
    Fx = np.asarray(F(x), dtype=float)
    if Fx.shape != x.shape:
        raise ValueError(f"F returned shape {Fx.shape}, expected {x.shape}")
    norm = _inf_norm(Fx)
    converged = norm <= cfg.tol_residual
    iterations = 0
    for iterations in range(1, cfg.max_iter + 1):
        if np.all(converged):
            iterations -= 1
            break
        J = jacobian(x) if jacobian is not None else _fd_jacobian(
            F, x, Fx, cfg.fd_jacobian_eps
        )
        delta = _solve_linear(J, Fx)
        alpha = np.ones(norm.shape)
        accepted = converged.copy()
        trial_x = x.copy()
        trial_F = Fx.copy()
        for _ in range(_MAX_HALVINGS + 1):
            candidate = x - alpha[..., None] * delta
            Fc = np.asarray(F(candidate), dtype=float)
            cnorm = _inf_norm(Fc)
            better = ~accepted & ((cnorm < norm) | (cnorm <= cfg.tol_residual))
            if better.ndim == 0:
                if better:
                    trial_x, trial_F = candidate, Fc
                    accepted = np.asarray(True)
            else:
                trial_x[better] = candidate[better]
                trial_F[better] = Fc[better]
                accepted = accepted | better
            if np.all(accepted):
                break
            alpha = np.where(accepted, alpha, alpha / 2.0)
        if not np.all(accepted):
            worst = float(np.max(norm))
            raise NoConvergence(
                worst,
                iterations,
                f"Newton step stalled after {_MAX_HALVINGS} halvings "
                f"(residual {worst:.3e})",
            )
        x, Fx = trial_x, trial_F
        norm = _inf_norm(Fx)
        converged = norm <= cfg.tol_residual
    if not np.all(converged):
        raise NoConvergence(float(np.max(norm)), cfg.max_iter)
    return NewtonResult(x=x, iterations=iterations, residual=float(np.max(norm)))


def schur_multiplier_solve(M, G, rhs_primal, rhs_constraint, cond_limit=1e12):
    """Solve the saddle system M x + G^T lam = rhs_primal, G x = rhs_constraint.

    M is (..., n, n) invertible, G is (..., k, n) with full row rank.  The
    multiplier is eliminated through the Schur complement S = G M^{-1} G^T;
    raises RankDeficient when S is numerically singular (condition number at
    or above ``cond_limit``).  Returns (x, lam) with shapes (..., n) and
    (..., k).
    """
    M = np.asarray(M, dtype=float)
    G = np.asarray(G, dtype=float)
    rp = np.asarray(rhs_primal, dtype=float)
    rc = np.asarray(rhs_constraint, dtype=float)
    try:
        stacked = np.linalg.solve(
            M, np.concatenate([np.swapaxes(G, -1, -2), rp[..., None]], axis=-1)
        )
    except np.linalg.LinAlgError as err:
        raise RankDeficient(f"primal block not invertible: {err}") from err
    MinvGT = stacked[..., :-1]
    Minv_rp = stacked[..., -1]
    S = G @ MinvGT
    if S.shape[-1] == 1:
        # A 1x1 Schur complement has condition number one; only an exact or
        # non-finite zero is degenerate.
        s = S[..., 0, 0]
        bad = ~np.isfinite(s) | (s == 0.0)
        if np.any(bad):
            raise RankDeficient("Schur complement numerically singular (zero pivot)")
    else:
        cond = np.linalg.cond(S)
        if not np.all(np.isfinite(cond)) or np.max(cond) >= cond_limit:
            raise RankDeficient(
                f"Schur complement numerically singular (cond = {np.max(cond):.3e})"
            )
    resid = (G @ Minv_rp[..., None])[..., 0] - rc
    lam = np.linalg.solve(S, resid[..., None])[..., 0]
    x = Minv_rp - (MinvGT @ lam[..., None])[..., 0]
    return x, lam
