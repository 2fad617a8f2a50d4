"""
Finite-volume (box method) discretisation of the partition-weighted
diffusion equation ``div(K D grad u) = d(K u)/dt``.

The unknown ``u`` is the chemical potential, continuous across layer
interfaces; the concentration in a triangle is ``c = K * u``. ``A`` is the
stiffness matrix of the sub-edge fluxes, ``M`` the lumped mass matrix of
``K`` over the boxes, so the semi-discrete system reads ``M u' = -A u``.
"""
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyError, ConfigError, DomainError, ResolutionError
from .geometry import BoundaryTag, SkinLayer


@dataclass(frozen=True, eq=False)
class SystemMatrices:
    """Stiffness and lumped mass matrices plus Dirichlet bookkeeping.

    ``stiffness`` and ``mass`` are never modified by boundary handling;
    the elimination happens in :func:`step_system`. ``dof_map`` is the
    identity (one row per vertex).
    """

    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    dirichlet: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    dirichlet_values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n(self):
        return self.stiffness.shape[0]

    @property
    def dof_map(self):
        return np.arange(self.n)

    @property
    def free(self):
        """Boolean mask of unconstrained rows."""
        mask = np.ones(self.n, dtype=bool)
        mask[self.dirichlet] = False
        return mask

    def boundary_vector(self):
        """Vector holding the Dirichlet values, zero elsewhere."""
        g = np.zeros(self.n)
        g[self.dirichlet] = self.dirichlet_values
        return g


@dataclass(frozen=True)
class FieldState:
    """Chemical potential per vertex at time ``t`` (hours)."""

    u: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.u)):
            raise DomainError("field state contains non-finite values")


def element_coefficients(mesh, params):
    """Per-triangle ``K`` and ``D`` from the layer tags."""
    try:
        k, d = params.partition(), params.diffusivity()
    except ResolutionError as exc:
        raise AssemblyError(f"unresolved parameters: {exc}") from exc
    return k[mesh.layers], d[mesh.layers]


def assemble(mesh, boxes, params):
    """Assemble ``A`` and lumped ``M`` from the sub-edge fluxes.

    For a sub-edge of triangle ``t`` separating boxes ``i`` and ``j`` with
    unit normal ``n`` (from ``i`` to ``j``) and length ``l``, the outward
    flux of box ``i`` is ``(K D)_t grad(u)_t . n * l``; its negative, split
    into hat-function gradients, gives the row entries of ``A``.
    """
    area = mesh.triangle_areas
    if np.any(area < 1e-12):
        raise AssemblyError("degenerate triangle (area below 1e-12 um^2)")
    k_el, d_el = element_coefficients(mesh, params)
    kappa = k_el * d_el

    p = mesh.vertices[mesh.triangles]
    # gradients of the three hat functions on every triangle: (T, 3, 2)
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    grad = np.stack([-e[..., 1], e[..., 0]], axis=-1) / (2.0 * area)[:, None, None]

    t_idx = boxes.subedge_triangle
    nl = boxes.subedge_normal * boxes.subedge_length[:, None]
    # flux weight of hat j across each sub-edge: (S, 3)
    w = np.einsum("sjd,sd->sj", grad[t_idx], nl) * kappa[t_idx, None]
    cols = mesh.triangles[t_idx]
    i, j = boxes.subedge_pair[:, 0], boxes.subedge_pair[:, 1]
    rows = np.concatenate([np.repeat(i, 3), np.repeat(j, 3)])
    vals = np.concatenate([-w.ravel(), w.ravel()])
    n = mesh.n_vertices
    A = sp.csr_matrix((vals, (rows, np.concatenate([cols.ravel(), cols.ravel()]))), shape=(n, n))
    A.sum_duplicates()
    A.eliminate_zeros()

    m = np.bincount(mesh.triangles.ravel(),
                    weights=np.repeat(k_el * boxes.fragment_area, 3), minlength=n)
    M = sp.diags(m, format="csr")
    return SystemMatrices(stiffness=A.tocsr(), mass=M)


def fem_stiffness(mesh, params):
    """P1 finite-element stiffness ``sum_t (K D)_t int grad(phi_i).grad(phi_j)``.

    Independent construction used to cross-check :func:`assemble`.
    """
    area = mesh.triangle_areas
    k_el, d_el = element_coefficients(mesh, params)
    p = mesh.vertices[mesh.triangles]
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    local = np.einsum("tid,tjd->tij", e, e) / (4.0 * area)[:, None, None]
    local *= (k_el * d_el)[:, None, None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.n_vertices
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def with_dirichlet(sys, vertices, values=0.0):
    """Add Dirichlet constraints (merging with existing ones)."""
    vertices = np.asarray(vertices, dtype=np.int64)
    values = np.broadcast_to(np.asarray(values, dtype=float), vertices.shape)
    merged = dict(zip(sys.dirichlet.tolist(), sys.dirichlet_values.tolist()))
    merged.update(zip(vertices.tolist(), values.tolist()))
    idx = np.array(sorted(merged), dtype=np.int64)
    return replace(sys, dirichlet=idx, dirichlet_values=np.array([merged[i] for i in idx.tolist()]))


def apply_dirichlet_bottom(sys, mesh):
    """Constrain every vertex on a BOT edge to ``u = 0`` (the sink)."""
    bottom = mesh.boundary_vertices(BoundaryTag.BOT)
    if bottom.size == 0:
        raise ConfigError("mesh has no BOT boundary for the sink condition")
    return with_dirichlet(sys, bottom, 0.0)


def eliminate(matrix, sys):
    """Symmetric Dirichlet elimination of ``matrix`` for the constraints of ``sys``.

    Constrained rows and columns are zeroed and a unit diagonal is set.
    """
    keep = sys.free.astype(float)
    D = sp.diags(keep)
    out = D @ matrix @ D + sp.diags(1.0 - keep)
    out = out.tocsr()
    out.sum_duplicates()
    out.eliminate_zeros()
    out.sort_indices()
    return out


def elimination_rhs(matrix, sys, rhs):
    """Right-hand side matching :func:`eliminate`: lifts the boundary values."""
    g = sys.boundary_vector()
    out = np.asarray(rhs, dtype=float).copy()
    if sys.dirichlet.size:
        out -= matrix @ g
        out[sys.dirichlet] = sys.dirichlet_values
    return out


def step_system(sys, tau, u_now):
    """Implicit Euler system ``(M + tau A) u_next = M u_now`` with constraints applied.

    Returns ``(matrix, rhs)``.
    """
    if not tau > 0:
        raise DomainError(f"time step must be > 0, got {tau!r}")
    S = (sys.mass + tau * sys.stiffness).tocsr()
    return eliminate(S, sys), elimination_rhs(S, sys, sys.mass @ u_now)


def steady_system(sys, rhs=None):
    """Eliminated ``A`` and right-hand side for ``A u = rhs`` under the constraints."""
    rhs = np.zeros(sys.n) if rhs is None else rhs
    return eliminate(sys.stiffness, sys), elimination_rhs(sys.stiffness, sys, rhs)


def lumped_load(mesh, boxes, f):
    """Box-quadrature load vector ``b_i = f(x_i) |B_i|`` for a callable ``f(x, y)``."""
    x, y = mesh.vertices.T
    return np.asarray(f(x, y), dtype=float) * boxes.box_area


def initial_condition_finite_dose(mesh, boxes, params, c0):
    """Finite dose: concentration ``c0`` in the DEPOS layer, zero below.

    Nodal values are the lumped projection of that concentration field,
    ``u_i = sum_frag c |frag| / sum_frag K |frag|`` over the box fragments of
    vertex ``i``. Vertices inside DEPOS get ``c0 / K_DEPOS``; vertices on the
    DEPOS/SC interface get the value that keeps the total dose exactly
    ``c0 * |DEPOS|``.
    """
    if not (np.isfinite(c0) and c0 > 0):
        raise DomainError(f"c0 must be finite and > 0, got {c0!r}")
    k_el, _ = element_coefficients(mesh, params)
    n = mesh.n_vertices
    c_el = np.where(mesh.layers == SkinLayer.DEPOS, float(c0), 0.0)
    num = np.bincount(mesh.triangles.ravel(),
                      weights=np.repeat(c_el * boxes.fragment_area, 3), minlength=n)
    den = np.bincount(mesh.triangles.ravel(),
                      weights=np.repeat(k_el * boxes.fragment_area, 3), minlength=n)
    return FieldState(u=num / den, t=0.0)


def element_concentration(mesh, params, u):
    """Per-triangle concentration ``K_t * mean(u over the triangle)``."""
    k_el, _ = element_coefficients(mesh, params)
    return k_el * u[mesh.triangles].mean(axis=1)
