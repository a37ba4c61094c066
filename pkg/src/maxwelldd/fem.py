"""Lowest-order edge-element discretization of the curl-curl operator.

One degree of freedom per mesh edge (the line integral of the tangential
component, oriented low-to-high vertex index).  The element stiffness and
mass matrices use the closed-form integrals of products of barycentric
coordinates, so assembly is quadrature-free and exact for constant
coefficients per element.

The assembled system is

    A = S_mu - M_w [- i*sign(xi)*k*Mb under an impedance boundary],

with S_mu the (1/mu)-weighted stiffness and M_w the mass weighted per element
by ``k^2*eps + i*(xi*eps + k*sigma)``.  For unit coefficients this reduces to
``A = S - (k^2 + i*xi)*M`` built entrywise from the unweighted matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .mesh import LOCAL_EDGES, Mesh

__all__ = [
    "Coefficients",
    "EdgeSpace",
    "FemError",
    "SystemBundle",
    "assemble",
    "assemble_boundary_mass",
    "assemble_rhs",
    "build_edge_space",
    "element_matrices",
    "gaussian_source",
    "gradient_dof_vector",
    "interpolate_field",
]


class FemError(ValueError):
    pass


# ---------------------------------------------------------------------------
# spaces and coefficients


@dataclass(frozen=True)
class EdgeSpace:
    """Edge-element space on a mesh with the boundary condition applied.

    ``kept_edges`` lists the global edge indices retained as unknowns;
    ``edge_to_dof`` maps every edge to its unknown index or -1.  A perfectly
    conducting boundary eliminates all boundary edges; an impedance boundary
    keeps every edge.
    """

    mesh: Mesh
    bc_kind: str  # "pec" | "impedance"
    kept_edges: np.ndarray
    edge_to_dof: np.ndarray

    @property
    def ndof(self) -> int:
        return len(self.kept_edges)


def build_edge_space(mesh: Mesh, bc: str = "pec") -> EdgeSpace:
    if bc not in ("pec", "impedance"):
        raise FemError(f"unknown boundary condition {bc!r}")
    if bc == "pec":
        kept = np.flatnonzero(~mesh.boundary_edge_flags)
    else:
        kept = np.arange(mesh.n_edges)
    edge_to_dof = np.full(mesh.n_edges, -1, dtype=np.int64)
    edge_to_dof[kept] = np.arange(len(kept))
    return EdgeSpace(mesh=mesh, bc_kind=bc, kept_edges=kept, edge_to_dof=edge_to_dof)


@dataclass(frozen=True)
class Coefficients:
    """Per-element material data plus the global wavenumber and absorption.

    ``eps`` and ``mu`` are relative permittivity/permeability (> 0), ``sigma``
    a dimensionless absorption density (>= 0) entering the mass weight as
    ``i*k*sigma``.  Scalars broadcast over all elements.
    """

    k: float
    xi: float
    eps: np.ndarray | float = 1.0
    mu: np.ndarray | float = 1.0
    sigma: np.ndarray | float = 0.0

    def per_tet(self, n_tets: int):
        try:
            eps = np.broadcast_to(np.asarray(self.eps, dtype=float), (n_tets,))
            mu = np.broadcast_to(np.asarray(self.mu, dtype=float), (n_tets,))
            sigma = np.broadcast_to(np.asarray(self.sigma, dtype=float), (n_tets,))
        except ValueError as exc:
            raise FemError(f"coefficient arrays do not match {n_tets} elements") from exc
        if eps.min() <= 0 or mu.min() <= 0:
            raise FemError("eps and mu must be strictly positive")
        if sigma.min() < 0:
            raise FemError("sigma must be nonnegative")
        return eps, mu, sigma

    @property
    def homogeneous(self) -> bool:
        return (
            np.ndim(self.eps) == 0
            and np.ndim(self.mu) == 0
            and np.ndim(self.sigma) == 0
            and float(self.eps) == 1.0
            and float(self.mu) == 1.0
            and float(self.sigma) == 0.0
        )

    def with_xi(self, xi: float) -> "Coefficients":
        return replace(self, xi=xi)


@dataclass(frozen=True)
class SystemBundle:
    """Assembled matrices over the kept unknowns.

    ``S`` and ``M`` are the unweighted real stiffness and mass (these define
    the weighted inner-product matrix ``Dk = S + k^2*M``); ``A`` carries the
    material weights and, under an impedance boundary, the boundary term
    ``Mb``.
    """

    space: EdgeSpace
    coefficients: Coefficients
    A: sp.csr_matrix
    S: sp.csr_matrix
    M: sp.csr_matrix
    Dk: sp.csr_matrix
    rhs: np.ndarray
    Mb: sp.csr_matrix | None = None

    @property
    def ndof(self) -> int:
        return self.space.ndof


# ---------------------------------------------------------------------------
# element geometry


def _tet_geometry(coords: np.ndarray):
    """Barycentric gradients and volumes for a batch of tets.

    coords: (nt, 4, 3).  Returns grads (nt, 4, 3) and volumes (nt,).
    """
    b = np.transpose(coords[:, 1:] - coords[:, :1], (0, 2, 1))  # columns v_i - v_0
    det = np.linalg.det(b)
    if np.any(det <= 0):
        raise FemError("tetrahedron with nonpositive volume")
    binv = np.linalg.inv(b)
    grads = np.empty((coords.shape[0], 4, 3))
    grads[:, 1:] = binv  # row i of B^{-1} is grad(lambda_i)
    grads[:, 0] = -binv.sum(axis=1)
    return grads, det / 6.0


# integral of lambda_i * lambda_j over a tet, divided by |T|
_LAM2 = (np.ones((4, 4)) + np.eye(4)) / 20.0

_EA = LOCAL_EDGES[:, 0]
_EB = LOCAL_EDGES[:, 1]


def _element_matrices_batch(coords: np.ndarray, signs: np.ndarray):
    """Stiffness/mass element matrices (nt, 6, 6) for oriented edge functions."""
    grads, vol = _tet_geometry(coords)
    ga = grads[:, _EA]  # (nt, 6, 3)
    gb = grads[:, _EB]
    curls = 2.0 * np.cross(ga, gb)
    s_el = np.einsum("tec,tfc->tef", curls, curls) * vol[:, None, None]

    dots = np.einsum("tic,tjc->tij", grads, grads)  # (nt, 4, 4)
    ia, ib = _EA, _EB
    m_el = (
        dots[:, ib[:, None], ib[None, :]] * _LAM2[ia[:, None], ia[None, :]]
        - dots[:, ib[:, None], ia[None, :]] * _LAM2[ia[:, None], ib[None, :]]
        - dots[:, ia[:, None], ib[None, :]] * _LAM2[ib[:, None], ia[None, :]]
        + dots[:, ia[:, None], ia[None, :]] * _LAM2[ib[:, None], ib[None, :]]
    ) * vol[:, None, None]

    orient = signs[:, :, None] * signs[:, None, :]
    return s_el * orient, m_el * orient, vol


def element_matrices(coords: np.ndarray):
    """Stiffness and mass element matrices for one tetrahedron.

    ``coords`` holds the four vertices as rows; edge functions follow the
    local vertex order (pairs in ``LOCAL_EDGES``), so no orientation signs are
    applied.  Raises :class:`FemError` for a degenerate element.
    """
    coords = np.asarray(coords, dtype=float)[None]
    s_el, m_el, _ = _element_matrices_batch(coords, np.ones((1, 6)))
    return s_el[0], m_el[0]


# ---------------------------------------------------------------------------
# global assembly


def _scatter(space: EdgeSpace, el: np.ndarray, tet_ids=None):
    """COO triplets over kept unknowns for per-tet 6x6 element blocks."""
    mesh = space.mesh
    te = mesh.tet_edges if tet_ids is None else mesh.tet_edges[tet_ids]
    dof = space.edge_to_dof[te]  # (nt, 6), -1 where eliminated
    rows = np.repeat(dof[:, :, None], 6, axis=2)
    cols = np.repeat(dof[:, None, :], 6, axis=1)
    keep = (rows >= 0) & (cols >= 0)
    return rows[keep], cols[keep], el[keep]


def _assemble_csr(space: EdgeSpace, el: np.ndarray, dtype, tet_ids=None) -> sp.csr_matrix:
    rows, cols, vals = _scatter(space, el, tet_ids)
    n = space.ndof
    mat = sp.coo_matrix((vals.astype(dtype), (rows, cols)), shape=(n, n)).tocsr()
    mat.sort_indices()
    return mat


def assemble(space: EdgeSpace, coeffs: Coefficients, source=None) -> SystemBundle:
    """Assemble the system bundle for the given space and coefficients.

    ``source`` is an optional vector field ``f(points) -> (npts, 3)`` used for
    the right-hand side; omitted, the rhs is zero.
    """
    mesh = space.mesh
    ntets = mesh.n_tets
    eps, mu, sigma = coeffs.per_tet(ntets)
    k, xi = coeffs.k, coeffs.xi

    s_el, m_el, _ = _element_matrices_batch(mesh.tet_coords(), mesh.tet_edge_signs)
    s_mat = _assemble_csr(space, s_el, float)
    m_mat = _assemble_csr(space, m_el, float)

    if coeffs.homogeneous:
        # identical sparsity patterns: combine stored values directly so the
        # identity A = S - (k^2 + i xi) M holds entrywise
        a_mat = s_mat.astype(complex)
        a_mat.data = s_mat.data - (k**2 + 1j * xi) * m_mat.data
    else:
        w = k**2 * eps + 1j * (xi * eps + k * sigma)
        a_el = s_el / mu[:, None, None] - w[:, None, None] * m_el
        a_mat = _assemble_csr(space, a_el, complex)

    mb = None
    if space.bc_kind == "impedance":
        mb = assemble_boundary_mass(space)
        s_imp = 1.0 if xi >= 0 else -1.0
        a_mat = (a_mat - 1j * s_imp * k * mb).tocsr()
        a_mat.sort_indices()

    dk = (s_mat + k**2 * m_mat).tocsr()
    dk.sort_indices()

    rhs = assemble_rhs(space, source) if source is not None else np.zeros(space.ndof, dtype=complex)

    return SystemBundle(
        space=space,
        coefficients=coeffs,
        A=a_mat,
        S=s_mat,
        M=m_mat,
        Dk=dk,
        rhs=rhs,
        Mb=mb,
    )


# ---------------------------------------------------------------------------
# boundary mass (impedance term)


def _triangle_tangential_mass(pts: np.ndarray):
    """3x3 mass of tangential edge functions on triangles.

    ``pts``: (nf, 3, 3) triangle vertices with ascending global index, so the
    local edges (0,1), (0,2), (1,2) already carry the global orientation.
    Evaluated with the three-midpoint rule, exact for the quadratic integrand.
    """
    e1 = pts[:, 1] - pts[:, 0]
    e2 = pts[:, 2] - pts[:, 0]
    nvec = np.cross(e1, e2)
    area2 = np.linalg.norm(nvec, axis=1)  # 2 * area
    nhat = nvec / area2[:, None]

    # in-plane barycentric gradients
    g = np.empty_like(pts)
    g[:, 0] = np.cross(nhat, pts[:, 2] - pts[:, 1]) / area2[:, None]
    g[:, 1] = np.cross(nhat, pts[:, 0] - pts[:, 2]) / area2[:, None]
    g[:, 2] = np.cross(nhat, pts[:, 1] - pts[:, 0]) / area2[:, None]

    tri_edges = np.array([(0, 1), (0, 2), (1, 2)])
    # midpoint rule: barycentric coordinates at the three edge midpoints
    qlam = np.array([[0.5, 0.5, 0.0], [0.5, 0.0, 0.5], [0.0, 0.5, 0.5]])

    m = np.zeros((pts.shape[0], 3, 3))
    for lam in qlam:
        wq = np.zeros((pts.shape[0], 3, 3))  # (nf, edge, xyz)
        for e, (a, b) in enumerate(tri_edges):
            wq[:, e] = lam[a] * g[:, b] - lam[b] * g[:, a]
        m += np.einsum("fec,fgc->feg", wq, wq)
    m *= (area2 / 2.0)[:, None, None] / 3.0
    return m


def assemble_boundary_mass(space: EdgeSpace) -> sp.csr_matrix:
    """Tangential-trace mass over the domain boundary.

    Rows and columns for edges away from the boundary are zero.  Only
    meaningful for impedance spaces; rejected under a conducting boundary
    where all boundary unknowns are eliminated.
    """
    if space.bc_kind != "impedance":
        raise FemError("boundary mass requires an impedance space")
    mesh = space.mesh
    return _boundary_mass_on_faces(space, mesh.boundary_faces, space.ndof, space.edge_to_dof)


def _boundary_mass_on_faces(space: EdgeSpace, faces: np.ndarray, n: int, edge_to_dof):
    """Assemble the tangential mass of ``faces`` into an n x n CSR matrix."""
    mesh = space.mesh
    if len(faces) == 0:
        return sp.csr_matrix((n, n), dtype=float)
    pts = mesh.vertices[faces]
    m_el = _triangle_tangential_mass(pts)

    nv = mesh.n_vertices
    tri_pairs = faces[:, [[0, 1], [0, 2], [1, 2]]]  # (nf, 3, 2), already sorted
    keys = tri_pairs[:, :, 0].astype(np.int64) * nv + tri_pairs[:, :, 1].astype(np.int64)
    edge_keys = mesh.edges[:, 0].astype(np.int64) * nv + mesh.edges[:, 1].astype(np.int64)
    order = np.argsort(edge_keys)
    eid = order[np.searchsorted(edge_keys, keys.ravel(), sorter=order)].reshape(keys.shape)
    dof = edge_to_dof[eid]  # (nf, 3)

    rows = np.repeat(dof[:, :, None], 3, axis=2)
    cols = np.repeat(dof[:, None, :], 3, axis=1)
    keep = (rows >= 0) & (cols >= 0)
    mat = sp.coo_matrix((m_el[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    mat.sort_indices()
    return mat


# ---------------------------------------------------------------------------
# right-hand side


def gaussian_source(points: np.ndarray) -> np.ndarray:
    """Narrow Gaussian source at the cube center, equal in all components."""
    r2 = ((points - 0.5) ** 2).sum(axis=-1)
    f = -np.exp(-400.0 * r2)
    return np.repeat(f[..., None], 3, axis=-1)


# degree-2 tetrahedron rule: 4 points, equal weights |T|/4
_QA = (5.0 + 3.0 * np.sqrt(5.0)) / 20.0
_QB = (5.0 - np.sqrt(5.0)) / 20.0
_QLAM = np.full((4, 4), _QB) + (_QA - _QB) * np.eye(4)


def assemble_rhs(space: EdgeSpace, source) -> np.ndarray:
    """Load vector ``\\int F . w_i`` with a fixed 4-point degree-2 rule."""
    mesh = space.mesh
    coords = mesh.tet_coords()
    grads, vol = _tet_geometry(coords)
    signs = mesh.tet_edge_signs

    rhs = np.zeros(space.ndof, dtype=complex)
    dof = space.edge_to_dof[mesh.tet_edges]  # (nt, 6)
    for lam in _QLAM:
        pts = np.einsum("i,tic->tc", lam, coords)
        fvals = np.asarray(source(pts), dtype=complex)
        # w_e = lam_a grad_b - lam_b grad_a at this quadrature point
        wq = lam[_EA][None, :, None] * grads[:, _EB] - lam[_EB][None, :, None] * grads[:, _EA]
        contrib = np.einsum("tec,tc->te", wq, fvals) * signs * (vol / 4.0)[:, None]
        keep = dof >= 0
        np.add.at(rhs, dof[keep], contrib[keep])
    return rhs


# ---------------------------------------------------------------------------
# interpolation helpers


def gradient_dof_vector(space: EdgeSpace, vertex_values: np.ndarray) -> np.ndarray:
    """Edge coefficients of the gradient of a vertex function.

    The tangential line integral of ``grad(phi)`` along an edge is the
    difference of endpoint values, so the coefficient on edge (a, b) with
    a < b is ``phi[b] - phi[a]``.
    """
    edges = space.mesh.edges
    full = vertex_values[edges[:, 1]] - vertex_values[edges[:, 0]]
    return full[space.kept_edges]


def interpolate_field(space: EdgeSpace, field) -> np.ndarray:
    """Edge-element interpolation: line integrals of the tangential component.

    ``field(points) -> (npts, 3)``; integrals use two-point Gauss on each
    edge, exact for fields with affine components.
    """
    mesh = space.mesh
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    tang = b - a
    # two-point Gauss on [0, 1]
    s = 0.5 + np.array([-1.0, 1.0]) / (2.0 * np.sqrt(3.0))
    parts = [
        0.5 * np.einsum("ec,ec->e", np.asarray(field(a + si * tang)), tang) for si in s
    ]
    vals = parts[0] + parts[1]
    return vals[space.kept_edges]
