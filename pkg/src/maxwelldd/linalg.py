"""Complex sparse/dense kernels shared by the solver stack.

Sparse matrices are SciPy CSR with complex values (row offsets, ascending
column indices per row, data); the helpers here keep summation orders fixed
so repeated runs give bit-identical results.  Dense factorizations wrap
LAPACK's partial-pivoting LU and carry a context label so a singular
subdomain or coarse block can be reported by name.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

__all__ = [
    "DenseLU",
    "SingularMatrixError",
    "SizeCapError",
    "lu_factor",
    "lu_solve",
    "spmv",
    "triple_product",
    "weighted_dot",
    "weighted_norm",
]

DEFAULT_LU_CAP = 4000


class SingularMatrixError(RuntimeError):
    """Dense factorization hit a zero pivot beyond tolerance."""


class SizeCapError(RuntimeError):
    """A dense factorization would exceed the configured size cap."""


def spmv(a, x: np.ndarray) -> np.ndarray:
    """Sparse matrix-vector product with a dimension check."""
    if a.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: matrix is {a.shape}, vector has {x.shape[0]}")
    return a @ x


def triple_product(r, a, rt=None):
    """Compute ``R A R^T`` (or ``R A Rt``) as a CSR matrix.

    For a 0/1 selection matrix ``R`` this is exactly the index minor of
    ``A``; for a general restriction it is the sparse triple product.
    """
    if rt is None:
        rt = r.T
    if r.shape[1] != a.shape[0] or a.shape[1] != rt.shape[0]:
        raise ValueError(
            f"dimension mismatch: R is {r.shape}, A is {a.shape}, Rt is {rt.shape}"
        )
    out = (r @ a @ rt).tocsr()
    out.sort_indices()
    return out


def selection_matrix(indices: np.ndarray, n: int) -> sp.csr_matrix:
    """0/1 restriction matrix picking ``indices`` out of an ``n``-vector."""
    indices = np.asarray(indices)
    m = len(indices)
    data = np.ones(m)
    return sp.csr_matrix((data, (np.arange(m), indices)), shape=(m, n))


class DenseLU:
    """LU factors (partial pivoting) of a dense complex matrix."""

    def __init__(self, a: np.ndarray, context: str = "matrix", cap: int = DEFAULT_LU_CAP):
        a = np.asarray(a)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"{context}: expected a square matrix, got shape {a.shape}")
        if cap is not None and a.shape[0] > cap:
            raise SizeCapError(
                f"{context}: dense factor of size {a.shape[0]} exceeds cap {cap}; "
                f"raise the cap or shrink the block"
            )
        self.context = context
        self.n = a.shape[0]
        a = np.ascontiguousarray(a, dtype=complex)
        try:
            with warnings.catch_warnings():
                # exact singularity is detected by the pivot check below
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                self.lu, self.piv = sla.lu_factor(a, check_finite=False)
        except sla.LinAlgError as exc:  # pragma: no cover - exact zero pivot
            raise SingularMatrixError(f"{context}: {exc}") from exc
        diag = np.abs(np.diag(self.lu))
        dmax = diag.max(initial=0.0)
        if dmax == 0.0 or diag.min() <= 1e-14 * dmax:
            raise SingularMatrixError(
                f"{context}: pivot ratio {diag.min() / max(dmax, 1e-300):.2e} "
                f"below tolerance, matrix is numerically singular"
            )

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=complex)
        if b.shape[0] != self.n:
            raise ValueError(f"{self.context}: rhs has length {b.shape[0]}, expected {self.n}")
        return sla.lu_solve((self.lu, self.piv), b, check_finite=False)


def lu_factor(a: np.ndarray, context: str = "matrix", cap: int = DEFAULT_LU_CAP) -> DenseLU:
    return DenseLU(a, context=context, cap=cap)


def lu_solve(factor: DenseLU, b: np.ndarray) -> np.ndarray:
    return factor.solve(b)


def weighted_dot(d, x: np.ndarray, y: np.ndarray) -> complex:
    """Inner product ``<x, y>_D = y^* D x`` for Hermitian positive definite D."""
    if d is None:
        return np.vdot(y, x)
    return np.vdot(y, d @ x)


def weighted_norm(d, x: np.ndarray) -> float:
    """Norm induced by :func:`weighted_dot`; rejects indefinite weights lazily."""
    n2 = weighted_dot(d, x, x)
    if n2.real < -1e-12 * max(1.0, abs(n2)):
        raise ValueError(f"weight matrix is not positive definite: |x|^2 = {n2.real:.3e}")
    return float(np.sqrt(max(n2.real, 0.0)))
