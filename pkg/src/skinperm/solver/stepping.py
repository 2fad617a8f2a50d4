"""
Implicit Euler time stepping with step-doubling error control.

Every attempt takes one full step of size tau and two half steps; the
half-step result is kept. The relative max-norm difference of the two is
the error estimate, which is O(tau^2) for implicit Euler.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from ..assembly import FieldState
from ..errors import ConfigError, DomainError
from .multigrid import SolverConfig, solve_linear

log = logging.getLogger("skinperm.solver")


@dataclass(frozen=True)
class TimeController:
    """Step-size bounds (hours) and error target of the adaptive integrator.

    ``error_floor`` bounds the denominator of the relative error from
    below so a field that has almost vanished does not force tiny steps.
    ``fixed_step`` disables adaptivity: every step has size ``tau_init``.
    """

    tau_init: float = 1e-3
    tau_min: float = 1e-8
    tau_max: float = 2.0
    safety: float = 0.9
    target_error: float = 1e-3
    t_end: float = 0.0
    output_times: tuple = ()
    error_floor: float = 1e-12
    fixed_step: bool = False

    def __post_init__(self):
        for name in ("tau_init", "tau_min", "tau_max", "target_error", "error_floor"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ConfigError(f"controller.{name} must be finite and > 0, got {value!r}")
        if not self.tau_min <= self.tau_init <= self.tau_max:
            raise ConfigError(
                f"controller needs tau_min <= tau_init <= tau_max, got "
                f"{self.tau_min!r}, {self.tau_init!r}, {self.tau_max!r}")
        if not (0.0 < self.safety <= 1.0):
            raise ConfigError(f"controller.safety must lie in (0, 1], got {self.safety!r}")
        if not (math.isfinite(self.t_end) and self.t_end >= 0):
            raise ConfigError(f"controller.t_end must be finite and >= 0, got {self.t_end!r}")
        times = tuple(float(t) for t in self.output_times)
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError("controller.output_times must be strictly increasing")
        if times and (times[0] < 0 or times[-1] > self.t_end * (1 + 1e-12)):
            raise ConfigError("controller.output_times must lie within [0, t_end]")
        object.__setattr__(self, "output_times", times)

    def propose(self, tau, error):
        """Next step size after an accepted step of size ``tau`` with error ``error``."""
        if error == 0.0:
            return self.tau_max
        tau_new = self.safety * tau * math.sqrt(self.target_error / error)
        return min(max(tau_new, self.tau_min), self.tau_max)


@dataclass
class StepResult:
    state: FieldState
    tau_used: float
    error: float
    tau_next: float
    rejections: int = 0
    forced: bool = False
    midpoint: FieldState = None
    cycles: int = 0
    residual: float = 0.0


def implicit_euler_step(hier, u, tau, solver=None):
    """Solve ``(M + tau A) u_next = M u`` under the finest-level constraints.

    Returns ``(u_next, LinearSolve)``.
    """
    if not tau > 0:
        raise DomainError(f"time step must be > 0, got {tau!r}")
    solver = solver or SolverConfig()
    sys = hier.system
    rhs = sys.mass @ u
    g = sys.boundary_vector()
    if np.any(g):
        rhs -= (sys.mass + tau * sys.stiffness) @ g
    rhs[sys.dirichlet] = sys.dirichlet_values
    x0 = np.array(u, dtype=float, copy=True)
    x0[sys.dirichlet] = sys.dirichlet_values
    out = solve_linear(hier.operator(tau, solver), rhs, solver, x0=x0)
    return out.x, out


def advance(state, sys, controller, hier, tau=None, solver=None):
    """Take one accepted step from ``state``.

    ``sys`` must be the finest-level system of ``hier`` (it is passed for
    clarity at call sites and checked). ``tau`` defaults to
    ``controller.tau_init``; a step is never larger than ``tau`` but may be
    smaller than ``controller.tau_min`` when the caller asks for it (e.g.
    to land on ``t_end``).
    """
    if sys is not hier.system:
        raise DomainError("advance: sys is not the finest system of the hierarchy")
    solver = solver or SolverConfig()
    tau = controller.tau_init if tau is None else float(tau)
    if not tau > 0:
        raise DomainError(f"time step must be > 0, got {tau!r}")
    u = state.u

    if controller.fixed_step:
        u_new, lin = implicit_euler_step(hier, u, tau, solver)
        return StepResult(state=FieldState(u_new, state.t + tau), tau_used=tau,
                          error=float("nan"), tau_next=tau, cycles=lin.cycles,
                          residual=lin.residual)

    rejections, cycles = 0, 0
    while True:
        full, l1 = implicit_euler_step(hier, u, tau, solver)
        mid, l2 = implicit_euler_step(hier, u, 0.5 * tau, solver)
        half, l3 = implicit_euler_step(hier, mid, 0.5 * tau, solver)
        cycles += l1.cycles + l2.cycles + l3.cycles
        scale = max(float(np.max(np.abs(half), initial=0.0)), controller.error_floor)
        error = float(np.max(np.abs(half - full), initial=0.0)) / scale
        if error <= controller.target_error:
            forced = False
            break
        if tau <= controller.tau_min * (1 + 1e-12):
            forced = True
            log.warning("step size reached tau_min=%g at t=%g with error %.3e > target %.1e; "
                        "accepting the step", controller.tau_min, state.t, error,
                        controller.target_error)
            break
        rejections += 1
        tau = max(0.5 * tau, controller.tau_min)

    return StepResult(
        state=FieldState(half, state.t + tau),
        tau_used=tau,
        error=error,
        tau_next=controller.propose(tau, error),
        rejections=rejections,
        forced=forced,
        midpoint=FieldState(mid, state.t + 0.5 * tau),
        cycles=cycles,
        residual=max(l2.residual, l3.residual),
    )


def log_step(result):
    """Progress line for one accepted step."""
    log.info("t=%.9g tau=%.6g cycles=%d resid=%.3e eps=%.3e", result.state.t,
             result.tau_used, result.cycles, result.residual, result.error)
