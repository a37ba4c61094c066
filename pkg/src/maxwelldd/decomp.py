"""Overlapping subdomain decompositions, restriction maps, and the coarse link.

Subdomains start from an axis-aligned box partition of the cells, grow by
layers of vertex-touching tetrahedra, and expose per-subdomain unknown index
sets: an unknown belongs to a subdomain when its edge lies in a subdomain
element and not on the subdomain's internal boundary.  The diagonal partition
of unity uses inverse multiplicities, so the weighted restrictions sum to the
identity exactly.

The coarse link carries a second, nested edge space and the restriction R0
(one row per coarse unknown) whose transpose interpolates coarse coefficient
vectors into the fine space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fem import EdgeSpace
from .linalg import selection_matrix
from .mesh import LOCAL_EDGES, LOCAL_FACES, Mesh, nesting_map

__all__ = [
    "CoarseLink",
    "Decomposition",
    "DecompositionError",
    "box_partition",
    "build_decomposition",
    "build_pou",
    "coarse_restriction",
    "extend_overlap",
    "impedance_dof_sets",
    "subdomain_boundary_faces",
    "subdomain_dof_sets",
]


class DecompositionError(ValueError):
    pass


@dataclass(frozen=True)
class CoarseLink:
    space: EdgeSpace
    R0: sp.csr_matrix  # one row per coarse unknown, one column per fine unknown
    tet_map: np.ndarray  # fine tet -> coarse tet


@dataclass(frozen=True)
class Decomposition:
    """Overlapping decomposition of an edge space."""

    space: EdgeSpace
    elements: list  # per-subdomain tet index arrays (overlapping)
    dofs: list  # per-subdomain unknown index arrays
    pou: list  # per-subdomain inverse-multiplicity weights, aligned with dofs
    overlap_layers: int
    p_axis: int
    H_sub: float  # max subdomain diameter before overlap
    coarse: CoarseLink | None = None

    @property
    def n_subdomains(self) -> int:
        return len(self.elements)

    def restriction(self, ell: int) -> sp.csr_matrix:
        return selection_matrix(self.dofs[ell], self.space.ndof)


# ---------------------------------------------------------------------------
# element partitions


def box_partition(mesh: Mesh, p_axis: int) -> list:
    """Partition tets into ``p_axis**3`` axis-aligned boxes by barycenter."""
    if p_axis < 1 or mesh.cells_per_axis % p_axis != 0:
        raise DecompositionError(
            f"p_axis={p_axis} must divide cells_per_axis={mesh.cells_per_axis}"
        )
    bary = mesh.barycenters()
    box = np.clip((bary * p_axis).astype(np.int64), 0, p_axis - 1)
    box_id = (box[:, 0] * p_axis + box[:, 1]) * p_axis + box[:, 2]
    return [np.flatnonzero(box_id == b) for b in range(p_axis**3)]


def _vertex_tet_matrix(mesh: Mesh) -> sp.csr_matrix:
    nt = mesh.n_tets
    rows = mesh.tets.ravel()
    cols = np.repeat(np.arange(nt), 4)
    data = np.ones(rows.shape[0], dtype=np.int8)
    return sp.csr_matrix((data, (rows, cols)), shape=(mesh.n_vertices, nt))


def extend_overlap(mesh: Mesh, partition: list, layers: int) -> list:
    """Grow every element set by ``layers`` rings of vertex-touching tets."""
    if layers < 1:
        raise DecompositionError("layers must be >= 1")
    vt = _vertex_tet_matrix(mesh)
    out = []
    for elems in partition:
        mask = np.zeros(mesh.n_tets, dtype=bool)
        mask[elems] = True
        for _ in range(layers):
            verts = (vt @ mask) > 0
            mask = (vt.T @ verts) > 0
        out.append(np.flatnonzero(mask))
    return out


# ---------------------------------------------------------------------------
# unknown index sets


def _face_keys(tris: np.ndarray, nv: int) -> np.ndarray:
    tris = np.sort(tris, axis=-1)
    nv = np.int64(nv)
    return (tris[..., 0] * nv + tris[..., 1]) * nv + tris[..., 2]


def _edge_keys(pairs: np.ndarray, nv: int) -> np.ndarray:
    lo = pairs.min(axis=-1).astype(np.int64)
    hi = pairs.max(axis=-1).astype(np.int64)
    return lo * nv + hi


def subdomain_boundary_faces(mesh: Mesh, elems: np.ndarray) -> np.ndarray:
    """Faces incident to exactly one subdomain tet, as sorted vertex triples."""
    tris = mesh.tets[elems][:, LOCAL_FACES].reshape(-1, 3)
    keys = _face_keys(tris, mesh.n_vertices)
    uniq, counts = np.unique(keys, return_counts=True)
    bkeys = uniq[counts == 1]
    nv = np.int64(mesh.n_vertices)
    b2 = bkeys // nv
    return np.stack([b2 // nv, b2 % nv, bkeys % nv], axis=1)


def subdomain_dof_sets(space: EdgeSpace, elements: list) -> list:
    """Per-subdomain unknown sets with zero tangential trace on internal
    boundaries.

    An unknown enters subdomain ``ell`` when its edge belongs to a subdomain
    tet and lies in no internal-boundary face (a subdomain boundary face away
    from the domain boundary).  Edges on the domain boundary itself follow the
    global space: eliminated under a conducting boundary, retained under an
    impedance one.
    """
    mesh = space.mesh
    nv = mesh.n_vertices
    domain_face_keys = np.sort(_face_keys(mesh.boundary_faces, nv))
    edge_keys = _edge_keys(mesh.edges, nv)
    order = np.argsort(edge_keys)
    sorted_keys = edge_keys[order]

    def edge_ids(pairs):
        keys = _edge_keys(pairs, nv)
        return order[np.searchsorted(sorted_keys, keys)]

    out = []
    for elems in elements:
        bfaces = subdomain_boundary_faces(mesh, elems)
        bkeys = _face_keys(bfaces, nv)
        internal = bfaces[~np.isin(bkeys, domain_face_keys)]
        # edges of internal boundary faces are excluded
        if len(internal):
            tri_pairs = internal[:, [[0, 1], [0, 2], [1, 2]]].reshape(-1, 2)
            excluded = np.unique(edge_ids(tri_pairs))
        else:
            excluded = np.empty(0, dtype=np.int64)
        member = np.unique(mesh.tet_edges[elems].ravel())
        member = np.setdiff1d(member, excluded, assume_unique=False)
        dofs = space.edge_to_dof[member]
        out.append(np.sort(dofs[dofs >= 0]))
    return out


def impedance_dof_sets(space: EdgeSpace, elements: list) -> list:
    """Subdomain unknowns when internal boundaries keep their edges.

    Used by preconditioners whose local solves impose an impedance condition
    on internal boundaries: every edge of a subdomain tet is retained except
    those eliminated by the global space.
    """
    out = []
    for elems in elements:
        member = np.unique(space.mesh.tet_edges[elems].ravel())
        dofs = space.edge_to_dof[member]
        out.append(np.sort(dofs[dofs >= 0]))
    return out


def build_pou(dof_sets: list, ndof: int) -> list:
    """Inverse-multiplicity weights making the weighted restrictions sum to I."""
    mult = np.zeros(ndof, dtype=np.int64)
    for dofs in dof_sets:
        mult[dofs] += 1
    uncovered = np.flatnonzero(mult == 0)
    if len(uncovered):
        raise DecompositionError(
            f"{len(uncovered)} unknowns not covered by any subdomain "
            f"(first: {uncovered[0]}); increase the overlap"
        )
    return [1.0 / mult[dofs] for dofs in dof_sets]


# ---------------------------------------------------------------------------
# coarse restriction


def coarse_restriction(
    fine_space: EdgeSpace,
    coarse_space: EdgeSpace,
    tet_map: np.ndarray | None = None,
    continuity_tol: float = 1e-10,
) -> sp.csr_matrix:
    """Restriction R0 with entries: fine edge functionals of coarse basis
    functions.

    Entry (p, j) is the line integral of the tangential component of coarse
    basis function ``p`` along fine edge ``j``, computed with two-point Gauss
    (exact: the integrand is affine along the segment).  Fine edges shared by
    several coarse tets must see tangentially continuous values; disagreement
    beyond ``continuity_tol`` raises.
    """
    fine = fine_space.mesh
    coarse = coarse_space.mesh
    if tet_map is None:
        tet_map = nesting_map(coarse, fine)

    # coarse element geometry
    ccoords = coarse.tet_coords()
    v0 = ccoords[:, 0]
    b = np.transpose(ccoords[:, 1:] - ccoords[:, :1], (0, 2, 1))
    binv = np.linalg.inv(b)
    grads = np.empty((coarse.n_tets, 4, 3))
    grads[:, 1:] = binv
    grads[:, 0] = -binv.sum(axis=1)

    # fine edge -> incident fine tets
    ne = fine.n_edges
    rows = fine.tet_edges.ravel()
    cols = np.repeat(np.arange(fine.n_tets), 6)
    incidence = sp.csr_matrix(
        (np.ones_like(rows, dtype=np.int8), (rows, cols)), shape=(ne, fine.n_tets)
    )

    a_pts = fine.vertices[fine.edges[:, 0]]
    tang = fine.edge_vectors()
    gauss = 0.5 + np.array([-1.0, 1.0]) / (2.0 * np.sqrt(3.0))

    rows_out, cols_out, vals_out = [], [], []
    for j in fine_space.kept_edges:
        jdof = fine_space.edge_to_dof[j]
        tets_j = incidence.indices[incidence.indptr[j]: incidence.indptr[j + 1]]
        coarse_tets = np.unique(tet_map[tets_j])
        merged: dict[int, float] = {}
        for ct in coarse_tets:
            g = grads[ct]
            for le in range(6):
                p_edge = coarse.tet_edges[ct, le]
                pdof = coarse_space.edge_to_dof[p_edge]
                if pdof < 0:
                    continue
                a, bb = LOCAL_EDGES[le]
                sign = coarse.tet_edge_signs[ct, le]
                val = 0.0
                for s in gauss:
                    x = a_pts[j] + s * tang[j]
                    lam = binv[ct] @ (x - v0[ct])
                    lam_full = np.empty(4)
                    lam_full[1:] = lam
                    lam_full[0] = 1.0 - lam.sum()
                    w = lam_full[a] * g[bb] - lam_full[bb] * g[a]
                    val += 0.5 * float(w @ tang[j])
                val *= sign
                if pdof in merged:
                    ref = max(1.0, abs(merged[pdof]))
                    if abs(merged[pdof] - val) > continuity_tol * ref:
                        raise DecompositionError(
                            f"tangential trace discontinuity on fine edge {j}: "
                            f"{merged[pdof]} vs {val}"
                        )
                else:
                    merged[pdof] = val
        for pdof, val in merged.items():
            if val != 0.0:
                rows_out.append(pdof)
                cols_out.append(jdof)
                vals_out.append(val)

    r0 = sp.csr_matrix(
        (vals_out, (rows_out, cols_out)), shape=(coarse_space.ndof, fine_space.ndof)
    )
    r0.sort_indices()
    return r0


# ---------------------------------------------------------------------------
# convenience builder


def build_decomposition(
    space: EdgeSpace,
    p_axis: int,
    layers: int,
    coarse_space: EdgeSpace | None = None,
) -> Decomposition:
    """Box partition + overlap + unknown sets + partition of unity (+ coarse)."""
    mesh = space.mesh
    base = box_partition(mesh, p_axis)
    elements = extend_overlap(mesh, base, layers)
    dofs = subdomain_dof_sets(space, elements)
    pou = build_pou(dofs, space.ndof)

    coarse = None
    if coarse_space is not None:
        tmap = nesting_map(coarse_space.mesh, mesh)
        r0 = coarse_restriction(space, coarse_space, tmap)
        coarse = CoarseLink(space=coarse_space, R0=r0, tet_map=tmap)

    return Decomposition(
        space=space,
        elements=elements,
        dofs=dofs,
        pou=pou,
        overlap_layers=layers,
        p_axis=p_axis,
        H_sub=np.sqrt(3.0) / p_axis,
        coarse=coarse,
    )
