"""
End-to-end finite-dose simulation: mesh, parameters, assembly, multigrid
hierarchy and the adaptive time loop with dense output.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from .analysis import MassSeries, layer_masses, sink_flux, summarize
from .assembly import FieldState, initial_condition_finite_dose
from .chem import resolve_params
from .errors import SkinpermError
from .geometry import BoundaryTag, SkinLayer, generate_mesh, mesh_hierarchy
from .solver.multigrid import MeshHierarchy
from .solver.stepping import advance, implicit_euler_step, log_step

log = logging.getLogger("skinperm.simulation")


class _Stage:
    """Tag any package error raised inside the block with a stage name."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, kind, exc, tb):
        if isinstance(exc, SkinpermError) and not hasattr(exc, "stage"):
            exc.stage = self.name
        return False


@dataclass
class StepStats:
    accepted: int = 0
    rejected: int = 0
    forced: int = 0
    cycles: int = 0
    tau_min_used: float = float("inf")
    tau_max_used: float = 0.0
    taus: list = field(default_factory=list)

    def add(self, result):
        self.accepted += 1
        self.rejected += result.rejections
        self.forced += int(result.forced)
        self.cycles += result.cycles
        self.tau_min_used = min(self.tau_min_used, result.tau_used)
        self.tau_max_used = max(self.tau_max_used, result.tau_used)
        self.taus.append(result.tau_used)

    def to_dict(self):
        return {"accepted_steps": self.accepted, "rejected_steps": self.rejected,
                "forced_steps": self.forced, "multigrid_cycles": self.cycles,
                "tau_min_hours": self.tau_min_used if self.accepted else None,
                "tau_max_hours": self.tau_max_used if self.accepted else None}


@dataclass
class SimulationResult:
    config: object
    mesh: object
    boxes: object
    params: object
    hierarchy: object
    series: MassSeries
    summary: object
    stats: StepStats
    states: list = None

    @property
    def system(self):
        return self.hierarchy.system

    @property
    def drift(self):
        return self.summary.drift


class _Recorder:
    """Samples masses at the output times from piecewise-linear u(t)."""

    def __init__(self, times, mesh, boxes, params, stiffness, keep_states):
        self.times = np.asarray(times, dtype=float)
        self.mesh, self.boxes, self.params = mesh, boxes, params
        self.stiffness = stiffness
        self.bottom = mesh.boundary_vertices(BoundaryTag.BOT)
        self.rows = []
        self.states = [] if keep_states else None
        self.k = 0

    def flux(self, u):
        return sink_flux(u, self.stiffness, self.bottom, self.mesh.width)

    def _record(self, u, released):
        m = layer_masses(u, self.mesh, self.boxes, self.params)
        self.rows.append((m[SkinLayer.DEPOS], m[SkinLayer.SC], m[SkinLayer.VE],
                          m[SkinLayer.DE], released, self.flux(u)))
        if self.states is not None:
            self.states.append(u.copy())

    def segment(self, t0, u0, r0, t1, u1, r1):
        """Record every pending output time up to ``t1`` (linear in between)."""
        tol = 1e-9 * max(1.0, abs(t1))
        while self.k < len(self.times) and self.times[self.k] <= t1 + tol:
            t = self.times[self.k]
            theta = 1.0 if t1 <= t0 else min(max((t - t0) / (t1 - t0), 0.0), 1.0)
            if theta == 1.0:
                self._record(u1, r1)
            elif theta == 0.0:
                self._record(u0, r0)
            else:
                self._record((1 - theta) * u0 + theta * u1, (1 - theta) * r0 + theta * r1)
            self.k += 1

    def series(self):
        data = np.array(self.rows, dtype=float).reshape(-1, 6)
        return MassSeries(times=self.times[:len(data)], depos=data[:, 0], sc=data[:, 1],
                          ve=data[:, 2], de=data[:, 3], released=data[:, 4], flux=data[:, 5])


def prepare(config):
    """Build mesh hierarchy, resolved parameters and the initial state."""
    with _Stage("mesh"):
        coarse = generate_mesh(config.profile, config.base_resolution)
        meshes = mesh_hierarchy(coarse, config.refinement_level)
    with _Stage("params"):
        params = resolve_params(config.chemical, config.profile)
    with _Stage("assembly"):
        hier = MeshHierarchy(meshes, params)
        mesh, boxes = meshes[-1], hier.boxes[-1]
        state = initial_condition_finite_dose(mesh, boxes, params, config.c0)
    return hier, params, state


def run_simulation(config, keep_states=False):
    """Run one finite-dose simulation described by a :class:`RunConfig`.

    Masses are sampled at ``config.output_times`` by linear interpolation
    between accepted steps (half-step midpoints included). The released
    mass is accumulated per accepted step with the flux of the implicit
    Euler solutions, so the discrete mass balance closes to solver
    tolerance.
    """
    hier, params, state = prepare(config)
    mesh, boxes, sys = hier.finest_mesh, hier.boxes[-1], hier.system
    ctrl, solver = config.controller, config.solver
    rec = _Recorder(ctrl.output_times, mesh, boxes, params, sys.stiffness, keep_states)
    stats = StepStats()

    t_end = ctrl.t_end
    t, u, released = 0.0, state.u, 0.0
    rec.segment(0.0, u, 0.0, 0.0, u, 0.0)
    tau = ctrl.tau_init
    with _Stage("solve"):
        while t_end - t > 1e-12 * max(1.0, t_end):
            remaining = t_end - t
            final = tau >= remaining * (1 - 1e-9)
            step = remaining if final else tau
            result = advance(FieldState(u, t), sys, ctrl, hier, tau=step, solver=solver)
            t_new = t_end if final and result.rejections == 0 else result.state.t
            h = result.tau_used
            if ctrl.fixed_step:
                r_end = released + h * rec.flux(result.state.u)
                rec.segment(t, u, released, t_new, result.state.u, r_end)
            else:
                mid = result.midpoint.u
                r_mid = released + 0.5 * h * rec.flux(mid)
                r_end = r_mid + 0.5 * h * rec.flux(result.state.u)
                t_mid = t + 0.5 * h
                rec.segment(t, u, released, t_mid, mid, r_mid)
                rec.segment(t_mid, mid, r_mid, t_new, result.state.u, r_end)
            t, u, released = t_new, result.state.u, r_end
            stats.add(result)
            log_step(result)
            tau = result.tau_next
    with _Stage("analysis"):
        series = rec.series()
        summary = summarize(series)
    return SimulationResult(config=config, mesh=mesh, boxes=boxes, params=params,
                            hierarchy=hier, series=series, summary=summary, stats=stats,
                            states=rec.states)


def fixed_step_solution(config, tau, t_end=None):
    """Field at ``t_end`` after uniform implicit Euler steps of size ``tau``.

    Used for temporal convergence studies; the number of steps is
    ``round(t_end / tau)``.
    """
    hier, _, state = prepare(config)
    t_end = config.controller.t_end if t_end is None else t_end
    n = int(round(t_end / tau))
    u = state.u
    for _ in range(n):
        u, _ = implicit_euler_step(hier, u, tau, config.solver)
    return u, hier
