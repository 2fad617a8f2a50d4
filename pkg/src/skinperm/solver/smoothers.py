"""Gauss-Seidel and ILU(0) kernels on CSR matrices, compiled with numba."""
import numba as nb
import numpy as np
import scipy.sparse as sp

from ..errors import SolverError

_jit = dict(nogil=True, cache=True)


@nb.njit(**_jit)
def _gs_forward(indptr, indices, data, diag, x, b):
    for i in range(len(indptr) - 1):
        s = b[i]
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if j != i:
                s -= data[k] * x[j]
        x[i] = s / diag[i]


@nb.njit(**_jit)
def _gs_backward(indptr, indices, data, diag, x, b):
    for i in range(len(indptr) - 2, -1, -1):
        s = b[i]
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if j != i:
                s -= data[k] * x[j]
        x[i] = s / diag[i]


@nb.njit(**_jit)
def _ilu0_inplace(indptr, indices, lu, diag_pos):
    """IKJ incomplete LU on the sparsity pattern; returns the failing row or -1."""
    n = len(indptr) - 1
    pos = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        for k in range(indptr[i], indptr[i + 1]):
            pos[indices[k]] = k
        for kk in range(indptr[i], diag_pos[i]):
            k = indices[kk]
            pivot = lu[diag_pos[k]]
            if pivot == 0.0:
                return k
            lu[kk] /= pivot
            lik = lu[kk]
            for jj in range(diag_pos[k] + 1, indptr[k + 1]):
                p = pos[indices[jj]]
                if p >= 0:
                    lu[p] -= lik * lu[jj]
        for k in range(indptr[i], indptr[i + 1]):
            pos[indices[k]] = -1
        if lu[diag_pos[i]] == 0.0:
            return i
    return -1


@nb.njit(**_jit)
def _ilu0_apply(indptr, indices, lu, diag_pos, r, z):
    n = len(indptr) - 1
    for i in range(n):
        s = r[i]
        for k in range(indptr[i], diag_pos[i]):
            s -= lu[k] * z[indices[k]]
        z[i] = s
    for i in range(n - 1, -1, -1):
        s = z[i]
        for k in range(diag_pos[i] + 1, indptr[i + 1]):
            s -= lu[k] * z[indices[k]]
        z[i] = s / lu[diag_pos[i]]


def _prepared(A):
    A = sp.csr_matrix(A, dtype=float)
    A.sum_duplicates()
    A.sort_indices()
    return A


def _diagonal(A):
    d = A.diagonal()
    bad = np.flatnonzero(d == 0)
    if bad.size:
        raise SolverError(f"zero diagonal entry in row {bad[0]}")
    return d


def gauss_seidel_sweep(A, x, b):
    """One forward Gauss-Seidel sweep in ascending row order; returns a new vector."""
    A = _prepared(A)
    out = np.array(x, dtype=float, copy=True)
    _gs_forward(A.indptr, A.indices, A.data, _diagonal(A), out, np.asarray(b, dtype=float))
    return out


def _diag_positions(A):
    n = A.shape[0]
    rows = np.repeat(np.arange(n), np.diff(A.indptr))
    pos = np.flatnonzero(A.indices == rows)
    if len(pos) != n:
        missing = np.setdiff1d(np.arange(n), rows[pos])
        raise SolverError(f"row {missing[0]} has no diagonal entry")
    return pos.astype(np.int64)


def ilu0_factor(A):
    """Incomplete LU without fill-in or pivoting.

    Returns ``(L, U)`` as CSR matrices on the pattern of ``A``; ``L`` has a
    unit diagonal.
    """
    f = ILU0(A)
    return f.L, f.U


class ILU0:
    """ILU(0) factorisation kept in the CSR layout of ``A`` for fast solves."""

    def __init__(self, A):
        A = _prepared(A)
        self.A = A
        self.diag_pos = _diag_positions(A)
        self.lu = A.data.copy()
        bad = _ilu0_inplace(A.indptr, A.indices, self.lu, self.diag_pos)
        if bad >= 0:
            raise SolverError(f"zero pivot in ILU(0) at row {bad}")

    def solve(self, r):
        z = np.empty_like(r, dtype=float)
        _ilu0_apply(self.A.indptr, self.A.indices, self.lu, self.diag_pos,
                    np.asarray(r, dtype=float), z)
        return z

    @property
    def L(self):
        A = self.A
        M = sp.csr_matrix((self.lu, A.indices, A.indptr), shape=A.shape)
        return (sp.tril(M, k=-1) + sp.eye(A.shape[0])).tocsr()

    @property
    def U(self):
        A = self.A
        return sp.triu(sp.csr_matrix((self.lu, A.indices, A.indptr), shape=A.shape)).tocsr()


class _OrderedSmoother:
    """Relaxes the unknowns in the sequence ``order`` (default: row order).

    The ordering only changes which unknown is updated first; the matrix
    is permuted once at construction.
    """

    def __init__(self, A, order=None):
        A = _prepared(A)
        if order is None:
            self.order = None
            self.A = A
        else:
            self.order = np.asarray(order, dtype=np.int64)
            self.A = _prepared(A[self.order][:, self.order])

    def smooth(self, x, b, sweeps):
        if self.order is None:
            self._relax(x, np.asarray(b, dtype=float), sweeps)
            return x
        xp = x[self.order]
        self._relax(xp, np.asarray(b, dtype=float)[self.order], sweeps)
        x[self.order] = xp
        return x


class GaussSeidelSmoother(_OrderedSmoother):
    """Symmetric Gauss-Seidel: each sweep is a forward then a backward pass."""

    def __init__(self, A, order=None):
        super().__init__(A, order)
        self.diag = _diagonal(self.A)

    def _relax(self, x, b, sweeps):
        A = self.A
        for _ in range(sweeps):
            _gs_forward(A.indptr, A.indices, A.data, self.diag, x, b)
            _gs_backward(A.indptr, A.indices, A.data, self.diag, x, b)


class ILUSmoother(_OrderedSmoother):
    """Richardson iteration preconditioned with ILU(0)."""

    def __init__(self, A, order=None):
        super().__init__(A, order)
        self.factor = ILU0(self.A)

    def _relax(self, x, b, sweeps):
        for _ in range(sweeps):
            x += self.factor.solve(b - self.A @ x)


SMOOTHERS = {"gauss_seidel": GaussSeidelSmoother, "ilu0": ILUSmoother}
