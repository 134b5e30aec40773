"""Mechanical systems with holonomic constraints and their builtin examples.

A system is described by closed-form callbacks for the Lagrangian L(q, v),
the constraint g(q), the stochastic potentials gamma_r(q) and every
derivative the integrators need.  All callbacks must broadcast over leading
batch dimensions (positions of shape (..., n) and so on) and must be pure,
so one system value can be shared across concurrent simulations.

Derivative conventions:

- ``dg_dq(q)`` has shape (..., k, n), row r is the gradient of g_r.
- ``d2L_dv2(q, v)`` is the (..., n, n) Jacobian of ``dL_dv`` in v.
- ``d2L_dqdv(q, v)`` is the (..., n, n) Jacobian of ``dL_dv`` in q
  (entry (a, b) is the derivative of dL/dv_a with respect to q_b); the
  reduced dynamics contract it with v on the right.
- ``d2g_dq2_vv(q, v)`` is the constraint Hessian contracted twice with v,
  shape (..., k); the full third-order tensor is never needed.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import DerivativeMismatch, RankDeficient
from .solver import DEFAULT_NEWTON, newton_solve

__all__ = [
    "MechanicalSystem",
    "State",
    "spherical_pendulum",
    "builtin_models",
    "without_noise",
    "validate_system",
    "ValidationReport",
    "legendre_velocity",
    "energy",
    "constraint_residual",
    "hidden_residual",
    "project_state",
    "noise_gradients",
]


@dataclass(frozen=True)
class MechanicalSystem:
    """Callbacks defining a constrained mechanical system on R^n."""

    dim_q: int
    dim_g: int
    num_noise: int
    lagrangian: callable
    dL_dq: callable
    dL_dv: callable
    d2L_dv2: callable
    d2L_dqdv: callable
    constraint: callable
    dg_dq: callable
    d2g_dq2_vv: callable
    gamma: tuple = field(default=())
    dgamma_dq: tuple = field(default=())

    def __post_init__(self):
        if not 0 < self.dim_g < self.dim_q:
            raise ValueError("need 0 < dim_g < dim_q")
        if len(self.gamma) != self.num_noise or len(self.dgamma_dq) != self.num_noise:
            raise ValueError("gamma and dgamma_dq must each have num_noise entries")
        object.__setattr__(self, "gamma", tuple(self.gamma))
        object.__setattr__(self, "dgamma_dq", tuple(self.dgamma_dq))


@dataclass
class State:
    """A phase-space point (q, p); arrays may carry leading batch dimensions."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.q.shape != self.p.shape:
            raise ValueError("q and p must have matching shapes")


def spherical_pendulum() -> MechanicalSystem:
    """Unit-mass pendulum on the unit sphere with gravity along e3.

    L(q, v) = ||v||^2 / 2 - q . e3, constraint g(q) = ||q||^2 - 1, and three
    stochastic potentials gamma_i(q) = sin(q_i), one per coordinate axis.
    """
    e3 = np.array([0.0, 0.0, 1.0])

    def lagrangian(q, v):
        return 0.5 * np.sum(v * v, axis=-1) - q @ e3

    def dL_dq(q, v):
        return np.broadcast_to(-e3, q.shape).copy()

    def dL_dv(q, v):
        return np.array(v, dtype=float, copy=True)

    def d2L_dv2(q, v):
        return np.broadcast_to(np.eye(3), q.shape + (3,)).copy()

    def d2L_dqdv(q, v):
        return np.zeros(q.shape + (3,))

    def constraint(q):
        return (np.sum(q * q, axis=-1) - 1.0)[..., None]

    def dg_dq(q):
        return 2.0 * q[..., None, :]

    def d2g_dq2_vv(q, v):
        return 2.0 * np.sum(v * v, axis=-1)[..., None]

    def make_gamma(i):
        def gamma_i(q):
            return np.sin(q[..., i])

        def dgamma_i(q):
            out = np.zeros_like(q)
            out[..., i] = np.cos(q[..., i])
            return out

        return gamma_i, dgamma_i

    gammas, dgammas = zip(*(make_gamma(i) for i in range(3)))
    return MechanicalSystem(
        dim_q=3,
        dim_g=1,
        num_noise=3,
        lagrangian=lagrangian,
        dL_dq=dL_dq,
        dL_dv=dL_dv,
        d2L_dv2=d2L_dv2,
        d2L_dqdv=d2L_dqdv,
        constraint=constraint,
        dg_dq=dg_dq,
        d2g_dq2_vv=d2g_dq2_vv,
        gamma=gammas,
        dgamma_dq=dgammas,
    )


def builtin_models() -> dict:
    return {"spherical_pendulum": spherical_pendulum}


def without_noise(system: MechanicalSystem) -> MechanicalSystem:
    """Copy of a system with all noise channels removed."""
    return replace(system, num_noise=0, gamma=(), dgamma_dq=())


def noise_gradients(system, q):
    """Stack the stochastic potential gradients into shape (..., m, n)."""
    if system.num_noise == 0:
        return np.zeros(q.shape[:-1] + (0, q.shape[-1]))
    return np.stack([dg(q) for dg in system.dgamma_dq], axis=-2)


# ---------------------------------------------------------------------------
# Legendre transform, energy and manifold utilities


def legendre_velocity(system, q, p, config=None, v0=None):
    """Invert the Legendre transform: the v with dL_dv(q, v) = p.

    Newton iteration with the exact Jacobian d2L_dv2; a single iteration
    suffices when L is quadratic in v.
    """
    cfg = config or DEFAULT_NEWTON
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)

    def residual(v):
        return system.dL_dv(q, v) - p

    def jac(v):
        return system.d2L_dv2(q, v)

    start = np.zeros_like(p) if v0 is None else np.asarray(v0, dtype=float)
    return newton_solve(residual, start, cfg, jacobian=jac).x


def energy(system, q, p=None, v=None, config=None):
    """Legendre-consistent energy <p, v> - L(q, v)."""
    if v is None:
        v = legendre_velocity(system, q, p, config)
    if p is None:
        p = system.dL_dv(q, v)
    return np.sum(p * v, axis=-1) - system.lagrangian(q, v)


def constraint_residual(system, q):
    """Max-norm of g(q) over constraint components."""
    return np.max(np.abs(system.constraint(q)), axis=-1)


def hidden_residual(system, q, p=None, v=None, config=None):
    """Max-norm of dg_dq(q) . v with v Legendre-consistent when p is given."""
    if v is None:
        v = legendre_velocity(system, q, p, config)
    Gv = (system.dg_dq(q) @ v[..., None])[..., 0]
    return np.max(np.abs(Gv), axis=-1)


def project_state(system, q, p, tol=1e-13, max_iter=50, config=None) -> State:
    """Retract an ambient point onto the phase-space constraint set.

    The position is moved onto g = 0 by Gauss-Newton along constraint
    gradients; the momentum then receives a constraint-force correction
    p + dg_dq^T mu chosen so the hidden velocity constraint holds.  Points
    already on the constraint set are fixed (to solver tolerance), which is
    the property the symplecticity check and state validation rely on.
    """
    q = np.array(q, dtype=float)
    p = np.array(p, dtype=float)
    for _ in range(max_iter):
        g = system.constraint(q)
        if np.max(np.abs(g)) <= tol:
            break
        G = system.dg_dq(q)
        gram = G @ np.swapaxes(G, -1, -2)
        try:
            w = np.linalg.solve(gram, g[..., None])[..., 0]
        except np.linalg.LinAlgError as err:
            raise RankDeficient(f"constraint gradients degenerate: {err}") from err
        q = q - (np.swapaxes(G, -1, -2) @ w[..., None])[..., 0]
    else:
        raise RankDeficient("position projection did not converge")

    cfg = config or DEFAULT_NEWTON
    G = system.dg_dq(q)
    GT = np.swapaxes(G, -1, -2)
    k = G.shape[-2]

    def residual(mu):
        v = legendre_velocity(system, q, p + (GT @ mu[..., None])[..., 0], cfg)
        return (G @ v[..., None])[..., 0]

    mu0 = np.zeros(q.shape[:-1] + (k,))
    mu = newton_solve(residual, mu0, cfg).x
    return State(q=q, p=p + (GT @ mu[..., None])[..., 0])


# ---------------------------------------------------------------------------
# Finite-difference validation of the derivative callbacks


@dataclass
class ValidationReport:
    """Per-callback outcome of the finite-difference consistency sweep."""

    max_errors: dict
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(e <= self.tolerance for e in self.max_errors.values())

    def failures(self):
        return {k: v for k, v in self.max_errors.items() if v > self.tolerance}


def _central_q(f, q, v, eps):
    """Central-difference Jacobian of f(q[, v]) in q; f maps to (...,) or (..., r)."""
    n = q.shape[-1]
    cols = []
    for j in range(n):
        dq = np.zeros_like(q)
        dq[..., j] = eps
        hi = f(q + dq, v) if v is not None else f(q + dq)
        lo = f(q - dq, v) if v is not None else f(q - dq)
        cols.append((np.asarray(hi) - np.asarray(lo)) / (2 * eps))
    return np.stack(cols, axis=-1)


def _central_v(f, q, v, eps):
    n = v.shape[-1]
    cols = []
    for j in range(n):
        dv = np.zeros_like(v)
        dv[..., j] = eps
        cols.append((np.asarray(f(q, v + dv)) - np.asarray(f(q, v - dv))) / (2 * eps))
    return np.stack(cols, axis=-1)


def _rel_err(approx, exact):
    scale = 1.0 + np.max(np.abs(exact))
    return float(np.max(np.abs(approx - exact)) / scale)


def validate_system(system, samples, tol=1e-5, eps=1e-6) -> ValidationReport:
    """Check every derivative callback against finite differences.

    ``samples`` is a list of (q, v) pairs; each q must satisfy
    |g(q)| <= 1e-8.  Raises DerivativeMismatch naming the worst callback
    when any check exceeds ``tol``; otherwise returns the all-pass report.
    """
    errors = {
        "dL_dq": 0.0,
        "dL_dv": 0.0,
        "d2L_dv2": 0.0,
        "d2L_dqdv": 0.0,
        "dg_dq": 0.0,
        "d2g_dq2_vv": 0.0,
    }
    if system.num_noise:
        errors["dgamma_dq"] = 0.0
    for q, v in samples:
        q = np.asarray(q, dtype=float)
        v = np.asarray(v, dtype=float)
        if np.max(np.abs(system.constraint(q))) > 1e-8:
            raise ValueError("validation samples must lie on the constraint set")
        checks = {
            "dL_dq": (_central_q(system.lagrangian, q, v, eps), system.dL_dq(q, v)),
            "dL_dv": (_central_v(system.lagrangian, q, v, eps), system.dL_dv(q, v)),
            "d2L_dv2": (_central_v(system.dL_dv, q, v, eps), system.d2L_dv2(q, v)),
            "d2L_dqdv": (_central_q(system.dL_dv, q, v, eps), system.d2L_dqdv(q, v)),
            "dg_dq": (_central_q(system.constraint, q, None, eps), system.dg_dq(q)),
        }
        # Second difference of g along v approximates the (v, v)-contracted Hessian.
        e2 = np.sqrt(eps)
        second = (
            system.constraint(q + e2 * v)
            - 2.0 * system.constraint(q)
            + system.constraint(q - e2 * v)
        ) / e2**2
        checks["d2g_dq2_vv"] = (second, system.d2g_dq2_vv(q, v))
        for r in range(system.num_noise):
            fd = _central_q(system.gamma[r], q, None, eps)
            errors["dgamma_dq"] = max(
                errors["dgamma_dq"], _rel_err(fd, system.dgamma_dq[r](q))
            )
        for name, (fd, exact) in checks.items():
            errors[name] = max(errors[name], _rel_err(fd, exact))
    report = ValidationReport(max_errors=errors, tolerance=tol)
    if not report.passed:
        worst = max(report.failures().items(), key=lambda kv: kv[1])
        raise DerivativeMismatch(worst[0], worst[1], report)
    return report
