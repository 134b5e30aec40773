"""Stochastic constrained integrators and the trajectory driver.

The stochastic steps reuse the deterministic implicit cores: Brownian
increments enter the residuals as fixed per-step constants (no
approximation is involved, the increments are known once the step begins),
so setting all increments to zero reproduces the deterministic schemes
exactly, down to the bit pattern of the Newton iterates.
"""

from dataclasses import dataclass

import numpy as np

from .deterministic import (
    StepResult,
    _euler_b_core,
    _projected_step,
    _vprk_core,
    euler_a_with_projection,
    euler_b_with_projection,
    rattle_step,
    vprk_step,
)
from .exceptions import ConditionViolated
from .model import (
    State,
    energy,
    legendre_velocity,
    noise_gradients,
)
from .reduction import reduced_drift_diffusion
from .solver import DEFAULT_NEWTON
from .tableau import check_admissibility, tableau_from_config

__all__ = [
    "StochasticQuadrature",
    "default_quadrature",
    "stochastic_variational_euler_step",
    "stochastic_vprk_step",
    "euler_maruyama_reference_step",
    "simulate_path",
    "Trajectory",
    "make_stepper",
]


@dataclass(frozen=True)
class StochasticQuadrature:
    """Stage weights for the noise quadrature of the stochastic RK step.

    The shipped realization draws phi_r from the step's Brownian increment
    and sets psi_r to zero, which yields the first-order schemes; the
    higher-order realizations require auxiliary random variables that this
    package does not generate.  ``nu`` should sum to one for consistency.
    """

    nu: np.ndarray
    kappa: np.ndarray
    phi_source: str = "brownian_increment"
    psi_source: str = "zero"

    def __post_init__(self):
        nu = np.array(self.nu, dtype=float)
        kappa = np.array(self.kappa, dtype=float)
        if nu.shape != kappa.shape or nu.ndim != 1:
            raise ValueError("nu and kappa must be vectors of the stage count")
        if self.phi_source != "brownian_increment" or self.psi_source != "zero":
            raise ValueError(
                "only phi_source='brownian_increment', psi_source='zero' is realized"
            )
        nu.setflags(write=False)
        kappa.setflags(write=False)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "kappa", kappa)


def default_quadrature(tableau) -> StochasticQuadrature:
    """nu = b (summing to one for a consistent tableau), kappa = 0."""
    return StochasticQuadrature(nu=tableau.b.copy(), kappa=np.zeros(tableau.s))


def stochastic_variational_euler_step(
    system, x: State, dW, h, config=None, v=None, warm=None
) -> StepResult:
    """One step of the constrained stochastic variational Euler scheme.

    The momentum drift uses the current velocity, the Brownian increments
    kick the momentum through the stochastic potential gradients at the
    current position, the configuration constraint is enforced at the new
    position, and the end-of-step projection restores the hidden velocity
    constraint.  With zero increments this is exactly the deterministic
    implicit-Euler variational step composed with the projection.
    """
    q = x.q
    if dW is None or system.num_noise == 0:
        kick = None
    else:
        dW = np.asarray(dW, dtype=float)
        kick = np.einsum("...m,...mn->...n", dW, noise_gradients(system, q))
    intermediate = _euler_b_core(system, x, h, kick=kick, config=config, v=v, warm=warm)
    return _projected_step(system, intermediate, h, config)


def stochastic_vprk_step(
    system, tableau, quad: StochasticQuadrature | None, x: State, dW, h,
    config=None, v=None, warm=None,
) -> StepResult:
    """One step of the stochastic constrained partitioned Runge-Kutta scheme.

    Requires an admissible tableau.  ``quad`` defaults to nu = b, kappa = 0.
    The increments ``dW`` (shape (..., m)) are treated as known constants
    inside the implicit stage equations.
    """
    check_admissibility(tableau).require()
    if quad is None:
        quad = default_quadrature(tableau)
    if len(quad.nu) != tableau.s:
        raise ConditionViolated(
            [f"quadrature has {len(quad.nu)} weights for {tableau.s} stages"]
        )
    return _vprk_core(
        system, tableau, x, h, config, nu=quad.nu, dW=dW, v=v, warm=warm
    )


def euler_maruyama_reference_step(system, q, v, dW, h, config=None):
    """Explicit Euler-Maruyama step of the multiplier-eliminated dynamics.

    Integrates the reduced momentum equation without re-enforcing the
    constraint, so trajectories drift off the constraint set at O(h); the
    scheme exists as an error oracle and negative control, not as a
    production integrator.  Returns (q_next, v_next, p_next).
    """
    cfg = config or DEFAULT_NEWTON
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    p = system.dL_dv(q, v)
    dyn = reduced_drift_diffusion(system, q, v)
    p_next = p + h * dyn.drift_p
    if dW is not None and system.num_noise > 0:
        dW = np.asarray(dW, dtype=float)
        p_next = p_next + np.einsum("...nm,...m->...n", dyn.diffusion_p, dW)
    q_next = q + h * v
    v_next = legendre_velocity(system, q_next, p_next, cfg, v0=v)
    return q_next, v_next, p_next


# ---------------------------------------------------------------------------
# Method registry and the trajectory driver


class _Stepper:
    """Uniform stepping interface: mutable warm state, batched step call."""

    uses_noise = False

    def __init__(self, system, config):
        self.system = system
        self.config = config

    def step(self, state, v, dW, h, warm):
        raise NotImplementedError


class _RattleStepper(_Stepper):
    def step(self, state, v, dW, h, warm):
        res = rattle_step(self.system, state, h, self.config, v=v, warm=warm)
        return res, res.velocity, res.warm


class _VprkStepper(_Stepper):
    def __init__(self, system, config, tableau, quad=None, stochastic=False):
        super().__init__(system, config)
        check_admissibility(tableau).require()
        self.tableau = tableau
        self.quad = quad or default_quadrature(tableau)
        self.uses_noise = stochastic

    def step(self, state, v, dW, h, warm):
        res = _vprk_core(
            self.system, self.tableau, state, h, self.config,
            nu=self.quad.nu if self.uses_noise else None,
            dW=dW if self.uses_noise else None,
            v=v, warm=warm,
        )
        return res, res.velocity, res.warm


class _EulerAStepper(_Stepper):
    def step(self, state, v, dW, h, warm):
        res = euler_a_with_projection(self.system, state, h, self.config, warm=warm)
        return res, res.velocity, res.warm


class _EulerBStepper(_Stepper):
    def step(self, state, v, dW, h, warm):
        res = euler_b_with_projection(
            self.system, state, h, self.config, v=v, warm=warm
        )
        return res, res.velocity, res.warm


class _SveStepper(_Stepper):
    uses_noise = True

    def step(self, state, v, dW, h, warm):
        res = stochastic_variational_euler_step(
            self.system, state, dW, h, self.config, v=v, warm=warm
        )
        return res, res.velocity, res.warm


class _EmStepper(_Stepper):
    uses_noise = True

    def step(self, state, v, dW, h, warm):
        if v is None:
            v = legendre_velocity(self.system, state.q, state.p, self.config)
        q_next, v_next, p_next = euler_maruyama_reference_step(
            self.system, state.q, v, dW, h, self.config
        )
        res = StepResult(
            state=State(q=q_next, p=p_next),
            stages=None,
            multipliers=[],
            newton_iters=0,
        )
        return res, v_next, None


def make_stepper(system, method, config=None) -> _Stepper:
    """Build a stepper from a method spec.

    ``method`` is either a name or a dict {"method": name, "tableau": ...,
    "quad": {"nu": ..., "kappa": ...}}.  Known names: rattle, vprk,
    euler_a, euler_b, stochastic_variational_euler, stochastic_vprk,
    euler_maruyama_ref.
    """
    if isinstance(method, str):
        method = {"method": method}
    name = method["method"]
    cfg = config or DEFAULT_NEWTON
    if name == "rattle":
        return _RattleStepper(system, cfg)
    if name in ("vprk", "stochastic_vprk"):
        tableau = tableau_from_config(method.get("tableau", "rattle_trapezoidal"))
        quad = None
        if "quad" in method:
            quad = StochasticQuadrature(
                nu=method["quad"]["nu"],
                kappa=method["quad"].get("kappa", np.zeros(len(method["quad"]["nu"]))),
            )
        return _VprkStepper(
            system, cfg, tableau, quad, stochastic=(name == "stochastic_vprk")
        )
    if name == "euler_a":
        return _EulerAStepper(system, cfg)
    if name == "euler_b":
        return _EulerBStepper(system, cfg)
    if name == "stochastic_variational_euler":
        return _SveStepper(system, cfg)
    if name == "euler_maruyama_ref":
        return _EmStepper(system, cfg)
    from .exceptions import NameNotFound

    raise NameNotFound(f"unknown integrator {name!r}")


@dataclass
class Trajectory:
    """Recorded output of ``simulate_path``.

    Arrays are indexed by step: ``q``/``p``/``v`` have N + 1 rows (initial
    state included), the residual and energy series likewise; multipliers
    and Newton iteration counts have one entry per executed step.
    """

    times: np.ndarray
    q: np.ndarray
    p: np.ndarray
    v: np.ndarray
    constraint: np.ndarray
    hidden: np.ndarray
    energy: np.ndarray
    multipliers: list
    newton_iters: np.ndarray

    @property
    def states(self):
        return [State(q=self.q[i], p=self.p[i]) for i in range(self.q.shape[0])]

    @property
    def final_state(self):
        return State(q=self.q[-1], p=self.p[-1])


def simulate_path(
    system,
    method,
    x0: State,
    increments=None,
    path_index=0,
    h=None,
    num_steps=None,
    config=None,
) -> Trajectory:
    """Integrate one sample path, recording invariants along the way.

    ``increments`` is an IncrementView (or anything with ``increments`` of
    shape (paths, channels, steps) plus ``h``); its resolution must match
    ``h`` when both are given.  Deterministic methods may omit it.  Errors
    raised by a step are re-raised with the step index prepended.
    """
    cfg = config or DEFAULT_NEWTON
    stepper = make_stepper(system, method, cfg)
    inc = None
    if increments is not None:
        inc = increments.increments[path_index]
        h_view = increments.h
        if h is None:
            h = h_view
        elif abs(h - h_view) > 1e-12 * max(1.0, abs(h_view)):
            raise ValueError(
                f"step size {h} does not match increment resolution {h_view}"
            )
        if num_steps is None:
            num_steps = inc.shape[-1]
        elif num_steps > inc.shape[-1]:
            raise ValueError("num_steps exceeds available increments")
    else:
        if stepper.uses_noise and system.num_noise > 0:
            raise ValueError("stochastic method requires increments")
        if num_steps is None:
            raise ValueError("num_steps required without increments")
        if h is None:
            raise ValueError("h required without increments")

    n = system.dim_q
    q = np.array(x0.q, dtype=float)
    p = np.array(x0.p, dtype=float)
    v = legendre_velocity(system, q, p, cfg)

    times = np.empty(num_steps + 1)
    qs = np.empty((num_steps + 1, n))
    ps = np.empty((num_steps + 1, n))
    vs = np.empty((num_steps + 1, n))
    cons = np.empty(num_steps + 1)
    hid = np.empty(num_steps + 1)
    en = np.empty(num_steps + 1)
    iters = np.zeros(num_steps, dtype=int)
    multipliers = []

    def record(i, t, q, p, v):
        times[i] = t
        qs[i], ps[i], vs[i] = q, p, v
        cons[i] = np.max(np.abs(system.constraint(q)))
        hid[i] = np.max(np.abs(system.dg_dq(q) @ v))
        en[i] = energy(system, q, p=p, v=v)

    record(0, 0.0, q, p, v)
    state = State(q=q, p=p)
    warm = None
    for step_index in range(num_steps):
        dW = inc[:, step_index] if inc is not None else None
        try:
            result, v, warm = stepper.step(state, v, dW, h, warm)
        except Exception as err:
            err.args = (f"step {step_index}: {err.args[0] if err.args else err}",)
            raise
        state = result.state
        iters[step_index] = result.newton_iters
        if result.multipliers:
            multipliers.append(np.concatenate([np.atleast_1d(m) for m in result.multipliers]))
        record(step_index + 1, (step_index + 1) * h, state.q, state.p, v)
    return Trajectory(
        times=times,
        q=qs,
        p=ps,
        v=vs,
        constraint=cons,
        hidden=hid,
        energy=en,
        multipliers=multipliers,
        newton_iters=iters,
    )
