"""
Geometric multigrid on a red-refinement mesh hierarchy.

Level 0 is the coarsest mesh and is solved directly. Prolongation is linear
interpolation along the refinement lineage (injection for inherited
vertices, edge averages for midpoints); restriction is its transpose.
Dirichlet vertices are removed from both so coarse corrections never
touch constrained values.
"""
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..assembly import assemble, eliminate
from ..errors import ConfigError, SolverError
from ..geometry import BoundaryTag, build_dual_boxes
from .smoothers import SMOOTHERS

#: Largest coarse system handed to the direct solver.
MAX_COARSE_UNKNOWNS = 2000

CYCLES = {"V": 1, "W": 2}


@dataclass(frozen=True)
class SolverConfig:
    cycle: str = "V"
    smoother: str = "gauss_seidel"
    pre_sweeps: int = 2
    post_sweeps: int = 2
    tolerance: float = 1e-10
    max_cycles: int = 50
    coarsening: str = "geometric"

    def __post_init__(self):
        if self.cycle not in CYCLES:
            raise ConfigError(f"solver.cycle must be one of {sorted(CYCLES)}, got {self.cycle!r}")
        if self.smoother not in SMOOTHERS:
            raise ConfigError(
                f"solver.smoother must be one of {sorted(SMOOTHERS)}, got {self.smoother!r}")
        if self.coarsening not in ("geometric", "galerkin"):
            raise ConfigError(f"solver.coarsening must be 'geometric' or 'galerkin', "
                              f"got {self.coarsening!r}")
        for name in ("pre_sweeps", "post_sweeps", "max_cycles"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"solver.{name} must be an integer >= 1, got {value!r}")
        if not (0.0 < self.tolerance < 1.0):
            raise ConfigError(f"solver.tolerance must lie in (0, 1), got {self.tolerance!r}")

    @property
    def gamma(self):
        return CYCLES[self.cycle]


def prolongation(fine_mesh, n_coarse):
    """Linear interpolation from a mesh to its red refinement."""
    pe = fine_mesh.parent_edges
    if pe is None or n_coarse + len(pe) != fine_mesh.n_vertices:
        raise SolverError("fine mesh does not carry a refinement lineage of the coarse mesh")
    m = len(pe)
    rows = np.concatenate([np.arange(n_coarse), n_coarse + np.arange(m), n_coarse + np.arange(m)])
    cols = np.concatenate([np.arange(n_coarse), pe[:, 0], pe[:, 1]])
    vals = np.concatenate([np.ones(n_coarse), np.full(2 * m, 0.5)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(fine_mesh.n_vertices, n_coarse))


class MultigridHierarchy:
    """Matrices, transfer operators and smoothers of one linear system.

    Parameters
    ----------
    matrices : list of sparse matrices, coarsest first
    prolongations : list with ``prolongations[l]`` mapping level ``l - 1``
        to level ``l`` (entry 0 is ignored)
    smoother : str
    orders : optional list of per-level relaxation orders (entry 0 ignored)
    """

    def __init__(self, matrices, prolongations, smoother="gauss_seidel", orders=None):
        natural = [sp.csr_matrix(A) for A in matrices]
        if natural[0].shape[0] > MAX_COARSE_UNKNOWNS:
            raise SolverError(
                f"coarsest level has {natural[0].shape[0]} unknowns "
                f"(direct solve limit {MAX_COARSE_UNKNOWNS})")
        # every level is stored in its relaxation order so that sweeps,
        # residuals and transfers walk memory sequentially; vectors are
        # permuted only on entry to and exit from a solve
        orders = list(orders or [None] * len(natural))
        orders[0] = None
        self.orders = [None if o is None else np.asarray(o, dtype=np.int64) for o in orders]
        self._finest_natural = natural[-1]
        self.matrices = [_permuted(A, o, o) for A, o in zip(natural, self.orders)]
        self.prolongations = [None] + [
            _permuted(sp.csr_matrix(P), self.orders[l], self.orders[l - 1])
            for l, P in enumerate(prolongations[1:], start=1)]
        self.restrictions = [None] + [P.T.tocsr() for P in self.prolongations[1:]]
        self.coarse = spla.splu(self.matrices[0].tocsc())
        self.smoothers = [None] + [SMOOTHERS[smoother](A) for A in self.matrices[1:]]
        self.smoother = smoother

    @property
    def levels(self):
        return len(self.matrices) - 1

    @property
    def finest(self):
        """Finest-level matrix in natural vertex numbering."""
        return self._finest_natural

    def to_internal(self, v, level=None):
        order = self.orders[self.levels if level is None else level]
        return np.array(v, dtype=float) if order is None else np.asarray(v, dtype=float)[order]

    def to_natural(self, v, level=None):
        order = self.orders[self.levels if level is None else level]
        if order is None:
            return v
        out = np.empty_like(v)
        out[order] = v
        return out

    def galerkin_defect(self, level):
        """``||A_{l-1} - R A_l P||_max / ||A_l||_max`` on unconstrained entries."""
        P, R = self.prolongations[level], self.restrictions[level]
        rap = R @ self.matrices[level] @ P
        coarse = self.matrices[level - 1]
        # constrained coarse rows carry an identity that R A P lacks
        fixed = np.asarray(abs(P).sum(axis=0)).ravel() == 0
        rap = rap + sp.diags(fixed.astype(float))
        return abs(coarse - rap).max() / abs(self.matrices[level]).max()


def _permuted(A, rows, cols):
    if rows is not None:
        A = A[rows]
    if cols is not None:
        A = A[:, cols]
    A = sp.csr_matrix(A)
    A.sort_indices()
    return A


def _cycle(hier, level, x, b, config):
    if level == 0:
        x[:] = hier.coarse.solve(b)
        return x
    A = hier.matrices[level]
    smoother = hier.smoothers[level]
    smoother.smooth(x, b, config.pre_sweeps)
    r_coarse = hier.restrictions[level] @ (b - A @ x)
    e = np.zeros_like(r_coarse)
    for _ in range(config.gamma if level > 1 else 1):
        e = _cycle(hier, level - 1, e, r_coarse, config)
    x += hier.prolongations[level] @ e
    smoother.smooth(x, b, config.post_sweeps)
    return x


def mg_cycle(hier, level, x, b, config):
    """One multigrid gamma-cycle on ``level``; updates and returns ``x``."""
    xi = hier.to_internal(x, level)
    _cycle(hier, level, xi, hier.to_internal(b, level), config)
    x[:] = hier.to_natural(xi, level)
    return x


@dataclass
class LinearSolve:
    x: np.ndarray
    cycles: int
    residual: float
    history: list = field(default_factory=list)


def solve_linear(hier, b, config, x0=None):
    """Iterate multigrid cycles until ``||b - A x|| <= tolerance * ||b||``.

    Raises :class:`SolverError` (carrying the residual history) when
    ``config.max_cycles`` cycles do not reach the tolerance.
    """
    A = hier.matrices[-1]
    b = hier.to_internal(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return LinearSolve(x=np.zeros_like(b), cycles=0, residual=0.0)
    x = np.zeros_like(b) if x0 is None else hier.to_internal(x0)
    res = np.linalg.norm(b - A @ x) / bnorm
    history = [res]
    cycles = 0
    while res > config.tolerance:
        if cycles >= config.max_cycles:
            raise SolverError(
                f"multigrid did not converge in {cycles} cycles "
                f"(relative residual {res:.3e} > {config.tolerance:.1e})", history)
        _cycle(hier, hier.levels, x, b, config)
        cycles += 1
        res = np.linalg.norm(b - A @ x) / bnorm
        history.append(res)
        if not np.isfinite(res):
            raise SolverError("multigrid diverged (non-finite residual)", history)
    return LinearSolve(x=hier.to_natural(x), cycles=cycles, residual=res, history=history)


def average_contraction(hier, b, config, cycles=10):
    """Mean residual reduction per cycle over ``cycles`` cycles from ``x = 0``.

    Returns ``(factor, history)``; ``factor`` is the geometric mean of the
    per-cycle ratios of relative residuals.
    """
    A = hier.matrices[-1]
    b = hier.to_internal(b)
    x = np.zeros_like(b)
    bnorm = np.linalg.norm(b)
    history = [1.0]
    for _ in range(cycles):
        _cycle(hier, hier.levels, x, b, config)
        history.append(np.linalg.norm(b - A @ x) / bnorm)
    return (history[-1] / history[0]) ** (1.0 / cycles), history


class MeshHierarchy:
    """Per-level assembled matrices of a red-refinement mesh sequence.

    ``meshes[0]`` is the coarsest. Every level is assembled from its own
    mesh (geometric coarsening) and constrained on the vertices of the
    boundary edges tagged ``constrained``; the finest-level
    :class:`SystemMatrices` is exposed as ``systems[-1]``.
    """

    CACHE_SIZE = 6

    def __init__(self, meshes, params, constrained=(BoundaryTag.BOT,), systems=None):
        self.meshes = list(meshes)
        self.params = params
        self.boxes = [build_dual_boxes(m) for m in self.meshes]
        if systems is None:
            systems = [assemble(m, b, params) for m, b in zip(self.meshes, self.boxes)]
        self.systems = []
        for mesh, sys in zip(self.meshes, systems):
            fixed = np.unique(np.concatenate(
                [mesh.boundary_vertices(tag) for tag in constrained] + [np.zeros(0, int)]))
            if sys.dirichlet.size == 0 and fixed.size:
                from ..assembly import with_dirichlet
                sys = with_dirichlet(sys, fixed, 0.0)
            self.systems.append(sys)
        self.prolongations = [None]
        for l in range(1, len(self.meshes)):
            P = prolongation(self.meshes[l], self.meshes[l - 1].n_vertices)
            keep_f = sp.diags(self.systems[l].free.astype(float))
            keep_c = sp.diags(self.systems[l - 1].free.astype(float))
            self.prolongations.append((keep_f @ P @ keep_c).tocsr())
        # column-by-column relaxation copes better with the thin, wide layer
        # rows than the refinement numbering does
        self.orders = [np.lexsort((m.vertices[:, 1], m.vertices[:, 0])) for m in self.meshes]
        self._cache = OrderedDict()

    @property
    def finest_mesh(self):
        return self.meshes[-1]

    @property
    def system(self):
        return self.systems[-1]

    def replace_finest(self, sys):
        """Use ``sys`` (e.g. with extra Dirichlet values) on the finest level."""
        if sys.n != self.systems[-1].n or not np.array_equal(sys.dirichlet,
                                                             self.systems[-1].dirichlet):
            raise SolverError("replacement system must keep the constrained vertex set")
        self.systems[-1] = sys

    def operator(self, tau=None, config=None):
        """Multigrid hierarchy of ``M + tau A`` (or of ``A`` when ``tau`` is None)."""
        config = config or SolverConfig()
        key = (tau, config.smoother, config.coarsening)
        if key in self._cache:
            self._cache.move_to_end(key)
            return self._cache[key]

        def level_matrix(sys):
            raw = sys.stiffness if tau is None else sys.mass + tau * sys.stiffness
            return eliminate(raw.tocsr(), sys)

        if config.coarsening == "geometric":
            mats = [level_matrix(s) for s in self.systems]
        else:
            mats = [None] * len(self.systems)
            mats[-1] = level_matrix(self.systems[-1])
            for l in range(len(self.systems) - 1, 0, -1):
                P = self.prolongations[l]
                rap = (P.T @ mats[l] @ P).tocsr()
                fixed = ~self.systems[l - 1].free
                mats[l - 1] = (rap + sp.diags(fixed.astype(float))).tocsr()
                mats[l - 1].sort_indices()
        hier = MultigridHierarchy(mats, self.prolongations, config.smoother, self.orders)
        self._cache[key] = hier
        while len(self._cache) > self.CACHE_SIZE:
            self._cache.popitem(last=False)
        return hier
