"""GMRES without restarts, in a configurable inner product.

The Arnoldi process uses modified Gram-Schmidt with one reorthogonalization
pass; inner products are taken against an optional Hermitian positive
definite weight, and the least-squares problem is updated with plane
rotations, so the recorded history is the exact sequence of relative
residual norms in the minimized norm.  With the identity weight the code
path is the standard method.

Right preconditioning minimizes (and reports) the true residual of the
operator; left preconditioning minimizes the preconditioned residual.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = ["KrylovConfig", "KrylovReport", "gmres"]


@dataclass(frozen=True)
class KrylovConfig:
    tol: float = 1e-6
    maxit: int = 200
    weight: object = None  # Hermitian positive definite matrix, or None
    side: str = "right"  # "left" | "right"
    initial_guess: str = "zero"  # "zero" | "random"
    seed: int = 0
    keep_basis: bool = False

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.maxit < 1:
            raise ValueError("maxit must be >= 1")
        if self.side not in ("left", "right"):
            raise ValueError(f"side must be 'left' or 'right', got {self.side!r}")
        if self.initial_guess not in ("zero", "random"):
            raise ValueError(f"unknown initial guess {self.initial_guess!r}")


@dataclass
class KrylovReport:
    x: np.ndarray
    residual_history: np.ndarray  # ||r_m|| / ||r_0|| in the minimized norm
    iterations: int
    converged: bool
    gmres_time_s: float
    seed: int
    ortho_warning: bool = False
    basis: np.ndarray | None = None


def _as_callable(op):
    if callable(op):
        return op
    return lambda v: op @ v


def gmres(operator, rhs, precond=None, config: KrylovConfig | None = None) -> KrylovReport:
    """Solve ``operator x = rhs`` by (weighted) GMRES.

    ``operator`` and ``precond`` may be matrices or callables.  The solution
    is returned in the original variables for either preconditioning side.
    Happy breakdown counts as exact convergence; a loss of orthogonality in
    the basis beyond 1e-8 after reorthogonalization only flags a warning in
    the report.
    """
    cfg = config if config is not None else KrylovConfig()
    b = np.asarray(rhs, dtype=complex)
    n = b.shape[0]
    a_mv = _as_callable(operator)
    m_mv = _as_callable(precond) if precond is not None else None
    d = cfg.weight

    def d_mv(v):
        return v.copy() if d is None else d @ v

    def ip(dv, u):
        # <u, v>_D given D v precomputed
        return np.vdot(u, dv)

    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    if cfg.initial_guess == "random":
        x0 = rng.random(n) + 1j * rng.random(n)
    else:
        x0 = np.zeros(n, dtype=complex)

    if cfg.side == "right":
        r0 = b - a_mv(x0)
        if m_mv is not None:
            c_mv = lambda v: a_mv(m_mv(v))
        else:
            c_mv = a_mv
    else:
        r0 = b - a_mv(x0)
        if m_mv is not None:
            r0 = m_mv(r0)
            c_mv = lambda v: m_mv(a_mv(v))
        else:
            c_mv = a_mv

    dr0 = d_mv(r0)
    beta = np.sqrt(ip(dr0, r0).real)
    if beta == 0.0:
        return KrylovReport(
            x=x0,
            residual_history=np.array([0.0]),
            iterations=0,
            converged=True,
            gmres_time_s=time.perf_counter() - t0,
            seed=cfg.seed,
        )

    maxit = cfg.maxit
    V = [r0 / beta]
    DV = [dr0 / beta]
    H = np.zeros((maxit + 1, maxit), dtype=complex)
    cs = np.zeros(maxit, dtype=complex)
    sn = np.zeros(maxit, dtype=complex)
    g = np.zeros(maxit + 1, dtype=complex)
    g[0] = beta

    history = [1.0]
    ortho_warning = False
    converged = False
    m = 0

    for m in range(1, maxit + 1):
        w = c_mv(V[m - 1])
        dw = d_mv(w)
        col = np.zeros(m + 1, dtype=complex)
        for _pass in range(2):  # MGS + one reorthogonalization pass
            for j in range(m):
                hj = ip(dw, V[j])
                col[j] += hj
                w = w - hj * V[j]
                dw = dw - hj * DV[j]
        hnorm2 = ip(dw, w).real
        hlast = np.sqrt(max(hnorm2, 0.0))
        col[m] = hlast

        breakdown = hlast <= 1e-13 * abs(col[: m + 1]).max()
        if not breakdown:
            V.append(w / hlast)
            DV.append(dw / hlast)
            # orthogonality drift of the accepted basis vector
            drift = max(abs(ip(DV[m], V[j])) for j in range(m))
            if drift > 1e-8:
                ortho_warning = True
                warnings.warn(
                    f"Arnoldi orthogonality drift {drift:.2e} at step {m}",
                    RuntimeWarning,
                    stacklevel=2,
                )

        # apply stored rotations, then a new one to annihilate col[m]
        for j in range(m - 1):
            t = cs[j] * col[j] + sn[j] * col[j + 1]
            col[j + 1] = -np.conj(sn[j]) * col[j] + cs[j] * col[j + 1]
            col[j] = t
        denom = np.hypot(abs(col[m - 1]), abs(col[m]))
        if denom == 0.0:
            cs[m - 1], sn[m - 1] = 1.0, 0.0
        else:
            cs[m - 1] = abs(col[m - 1]) / denom
            phase = col[m - 1] / abs(col[m - 1]) if abs(col[m - 1]) > 0 else 1.0
            sn[m - 1] = phase * np.conj(col[m]) / denom
        H[: m + 1, m - 1] = col
        t = cs[m - 1] * col[m - 1] + sn[m - 1] * col[m]
        H[m - 1, m - 1] = t
        H[m, m - 1] = 0.0
        g[m] = -np.conj(sn[m - 1]) * g[m - 1]
        g[m - 1] = cs[m - 1] * g[m - 1]

        rel = min(abs(g[m]) / beta, history[-1])  # clamp one-ulp growth
        history.append(rel)
        if breakdown or rel <= cfg.tol:
            # a vanishing new direction means the space already contains the
            # exact solution (happy breakdown)
            converged = True
            break

    # solve the triangular system and assemble the solution
    y = np.zeros(m, dtype=complex)
    for i in range(m - 1, -1, -1):
        y[i] = (g[i] - H[i, i + 1 : m] @ y[i + 1 : m]) / H[i, i]
    update = np.zeros(n, dtype=complex)
    for i in range(m):
        update += y[i] * V[i]
    if cfg.side == "right" and m_mv is not None:
        update = m_mv(update)
    x = x0 + update

    return KrylovReport(
        x=x,
        residual_history=np.array(history),
        iterations=m,
        converged=converged,
        gmres_time_s=time.perf_counter() - t0,
        seed=cfg.seed,
        ortho_warning=ortho_warning,
        basis=np.array(V).T if cfg.keep_basis else None,
    )
