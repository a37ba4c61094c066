"""Convergence-theory diagnostics.

The shifted wavenumber ``z = sqrt(k^2 + i*xi)`` (branch cut on the positive
real axis) and the unimodular rotation ``theta = -conj(z)/|z|`` make the
sesquilinear form coercive; `coercivity_check` verifies the underlying
algebraic identity on the assembled matrices.  `fov` traces the boundary of
the numerical range of an operator in a weighted inner product by sweeping
rotated Hermitian eigenproblems, and `elman` turns the measured distance to
the origin and operator norm into the GMRES residual bound

    |r_m| / |r_0|  <=  (2 + 2/sqrt(3)) (2 + g) g^m,
    g = 2 sin(beta / (4 - 2 beta/pi)),   cos(beta) = dist / norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import fem
from .fem import Coefficients, assemble, build_edge_space, gaussian_source
from .linalg import DenseLU
from .mesh import build_cube_mesh

__all__ = [
    "ElmanBound",
    "FovResult",
    "ZTheta",
    "coercivity_check",
    "elman",
    "fov",
    "gamma_from_beta",
    "hull_distance",
    "projection_consistency",
    "relative_error_sweep",
    "z_theta",
]


# ---------------------------------------------------------------------------
# shifted wavenumber


@dataclass(frozen=True)
class ZTheta:
    z: complex
    theta: complex


def z_theta(k: float, xi: float) -> ZTheta:
    """Square root of ``k^2 + i*xi`` with the branch cut on the positive real
    axis, and the rotation that makes the quadratic form coercive.

    The branch satisfies Im(z) > 0 and sign(xi)*Re(z) > 0 for nonzero xi,
    and z(k, -xi) = -conj(z(k, xi)); on the cut (xi = 0) the limit from
    above gives z = k.
    """
    if k <= 0:
        raise ValueError(f"wavenumber must be positive, got {k}")
    if xi == 0:
        z = complex(k, 0.0)
    else:
        w = complex(k * k, xi)
        ang = math.atan2(xi, k * k)
        if ang <= 0.0:
            ang += 2.0 * math.pi
        z = math.sqrt(abs(w)) * complex(math.cos(ang / 2.0), math.sin(ang / 2.0))
    theta = -np.conj(z) / abs(z)
    return ZTheta(z=z, theta=theta)


def coercivity_check(s_mat, m_mat, k: float, xi: float, n_probes: int = 200, seed: int = 0) -> float:
    """Max relative violation of the rotated-form identity over random probes.

    For the uniform-coefficient conducting-boundary system A = S - z^2 M the
    identity  Im(theta * v'Av) = (Im z/|z|)(v'Sv + |z|^2 v'Mv)  holds in
    exact arithmetic; the return value measures floating-point deviation.
    """
    zt = z_theta(k, xi)
    z, theta = zt.z, zt.theta
    scale = z.imag / abs(z)
    rng = np.random.default_rng(seed)
    n = s_mat.shape[0]
    worst = 0.0
    for _ in range(n_probes):
        v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        sv = np.vdot(v, s_mat @ v).real
        mv = np.vdot(v, m_mat @ v).real
        lhs = (theta * (sv - z * z * mv)).imag
        rhs = scale * (sv + abs(z) ** 2 * mv)
        denom = max(abs(rhs), 1e-300)
        worst = max(worst, abs(lhs - rhs) / denom)
    return worst


# ---------------------------------------------------------------------------
# numerical range


def _hull(points: np.ndarray) -> np.ndarray:
    """Convex hull (monotone chain) of 2-D points, counterclockwise."""
    pts = np.unique(points, axis=0)
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(tuple(p))
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(tuple(p))
    return np.array(lower[:-1] + upper[:-1])


def _point_segment_distance(p, a, b) -> float:
    ab = b - a
    denom = ab @ ab
    if denom == 0.0:
        return float(np.hypot(*(p - a)))
    t = np.clip((p - a) @ ab / denom, 0.0, 1.0)
    return float(np.hypot(*(p - a - t * ab)))


def hull_distance(points: np.ndarray) -> float:
    """Distance from the origin to the convex hull of complex points."""
    xy = np.column_stack([points.real, points.imag])
    hull = _hull(xy)
    origin = np.zeros(2)
    if len(hull) == 1:
        return float(np.hypot(*hull[0]))
    if len(hull) == 2:
        return _point_segment_distance(origin, hull[0], hull[1])
    # inside test: origin on the inner side of every ccw edge
    inside = True
    for i in range(len(hull)):
        a, b = hull[i], hull[(i + 1) % len(hull)]
        if (b[0] - a[0]) * (0.0 - a[1]) - (b[1] - a[1]) * (0.0 - a[0]) < 0:
            inside = False
            break
    if inside:
        return 0.0
    return min(
        _point_segment_distance(origin, hull[i], hull[(i + 1) % len(hull)])
        for i in range(len(hull))
    )


@dataclass
class FovResult:
    boundary_points: np.ndarray
    dist_to_origin: float
    norm_D: float
    n_angles: int


DEFAULT_FOV_CAP = 2000


def fov(c_mat, d_mat=None, n_angles: int = 64, cap: int = DEFAULT_FOV_CAP) -> FovResult:
    """Boundary of the numerical range of ``C`` in the ``D`` inner product.

    For each angle the extreme point in that direction is the top
    eigenvector of the rotated Hermitian pencil
    ``(e^{i t} D C + e^{-i t} C* D)/2 x = lam D x``; its Rayleigh quotient is
    a boundary point.  ``dist_to_origin`` is the distance from 0 to the
    convex hull of the computed points (an inscribed approximation of the
    range), and ``norm_D`` comes from random probes refined by power
    iteration on the normal operator.
    """
    c = np.asarray(c_mat.toarray() if sp.issparse(c_mat) else c_mat, dtype=complex)
    n = c.shape[0]
    if n > cap:
        raise ValueError(f"operator size {n} exceeds the dense cap {cap}")
    if n_angles < 8:
        raise ValueError("n_angles must be at least 8")
    if d_mat is None:
        d = np.eye(n)
    else:
        d = np.asarray(d_mat.toarray() if sp.issparse(d_mat) else d_mat, dtype=float)

    dc = d @ c
    points = np.empty(n_angles, dtype=complex)
    for j, ang in enumerate(np.linspace(0.0, 2.0 * np.pi, n_angles, endpoint=False)):
        rot = np.exp(1j * ang) * dc
        h = (rot + rot.conj().T) / 2.0
        _, vec = sla.eigh(h, d, subset_by_index=[n - 1, n - 1])
        x = vec[:, 0]
        points[j] = np.vdot(x, dc @ x) / np.vdot(x, d @ x)

    # norm: probe Rayleigh quotients of the normal operator, then power-iterate
    rng = np.random.default_rng(0)
    d_lu = sla.cho_factor(d)
    best = None
    best_val = -np.inf
    for _ in range(4):
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        y = sla.cho_solve(d_lu, c.conj().T @ (d @ (c @ x)))
        val = (np.vdot(x, d @ y) / np.vdot(x, d @ x)).real
        if val > best_val:
            best_val, best = val, x
    x = best
    lam_old = 0.0
    for _ in range(500):
        y = sla.cho_solve(d_lu, c.conj().T @ (d @ (c @ x)))
        lam = (np.vdot(x, d @ y) / np.vdot(x, d @ x)).real
        x = y / np.sqrt(abs(np.vdot(y, d @ y)))
        if abs(lam - lam_old) <= 1e-12 * max(1.0, abs(lam)):
            lam_old = lam
            break
        lam_old = lam
    norm_d = float(np.sqrt(max(lam_old, 0.0)))

    return FovResult(
        boundary_points=points,
        dist_to_origin=hull_distance(points),
        norm_D=norm_d,
        n_angles=n_angles,
    )


# ---------------------------------------------------------------------------
# residual bound


def gamma_from_beta(beta: float) -> float:
    return 2.0 * math.sin(beta / (4.0 - 2.0 * beta / math.pi))


_ELMAN_PREFACTOR = 2.0 + 2.0 / math.sqrt(3.0)


@dataclass
class ElmanBound:
    gamma_beta: float
    beta: float

    def bound(self, m) -> np.ndarray:
        m = np.asarray(m, dtype=float)
        return _ELMAN_PREFACTOR * (2.0 + self.gamma_beta) * self.gamma_beta**m

    def m_for_target(self, a: float) -> float:
        """Smallest iteration count with bound <= a (inf if non-decaying)."""
        if not 0.0 < a < 1.0:
            raise ValueError("target must lie in (0, 1)")
        g = self.gamma_beta
        if g == 0.0:
            return 1
        if g >= 1.0:
            return math.inf
        pref = _ELMAN_PREFACTOR * (2.0 + g)
        m = max(1, math.ceil(math.log(a / pref) / math.log(g)))
        while pref * g**m > a:  # guard rounding at the boundary
            m += 1
        return m


def elman(norm_d: float, dist: float) -> ElmanBound:
    """Residual bound parameters from the measured range geometry."""
    if dist <= 0.0:
        raise ValueError("numerical range touches the origin; the bound does not apply")
    if dist > norm_d * (1.0 + 1e-12):
        raise ValueError(f"distance {dist} exceeds operator norm {norm_d}")
    beta = math.acos(min(dist / norm_d, 1.0))
    return ElmanBound(gamma_beta=gamma_from_beta(beta), beta=beta)


# ---------------------------------------------------------------------------
# preconditioner consistency


def projection_consistency(problem, decomp, state, n_probes: int = 10, seed: int = 0) -> float:
    """Compare the preconditioner pipeline with independently assembled
    projection operators.

    For the two-level unweighted method at matching absorption, the weighted
    quadratic form of ``B^{-1} A`` must equal the same form computed from the
    dense sum of subdomain/coarse projections built with plain dense inverses.
    Returns the max relative deviation over random probes.
    """
    a = problem.A.toarray()
    n = a.shape[0]
    t_dense = np.zeros((n, n), dtype=complex)
    for dofs in decomp.dofs:
        a_ell = a[np.ix_(dofs, dofs)]
        block = np.linalg.solve(a_ell, a[dofs, :])
        t_dense[dofs, :] += block
    r0 = decomp.coarse.R0.toarray()
    a0 = r0 @ a @ r0.T
    t_dense += r0.T @ np.linalg.solve(a0, r0 @ a)

    dk = problem.Dk
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_probes):
        v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        lhs = np.vdot(v, dk @ state.apply(problem.A @ v))
        rhs = np.vdot(v, dk @ (t_dense @ v))
        worst = max(worst, abs(lhs - rhs) / max(abs(rhs), 1e-300))
    return worst


# ---------------------------------------------------------------------------
# absorption error sweep


def relative_error_sweep(k: float, xi_list, n: int, lu_cap: int = 4000):
    """Relative distance between the solutions with and without absorption.

    Solves the impedance-boundary problem at xi = 0 and at each xi by a
    direct factorization and reports, per xi, the ratio of the weighted norm
    of the solution difference to that of the unshifted solution.
    """
    mesh = build_cube_mesh(n)
    space = build_edge_space(mesh, "impedance")
    base = assemble(space, Coefficients(k=k, xi=0.0), source=gaussian_source)
    x0 = DenseLU(base.A.toarray(), context="absorption sweep xi=0", cap=lu_cap).solve(base.rhs)
    dk = base.Dk
    ref = np.sqrt(np.vdot(x0, dk @ x0).real)

    out = []
    for xi in xi_list:
        if xi == 0.0:
            out.append((0.0, 0.0))
            continue
        shifted = assemble(space, Coefficients(k=k, xi=float(xi)), source=gaussian_source)
        x_xi = DenseLU(
            shifted.A.toarray(), context=f"absorption sweep xi={xi}", cap=lu_cap
        ).solve(shifted.rhs)
        diff = x0 - x_xi
        ratio = np.sqrt(np.vdot(diff, dk @ diff).real) / ref
        out.append((float(xi), float(ratio)))
    return out
