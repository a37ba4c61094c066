"""Structured tetrahedral meshes of the unit cube.

Each of the ``n**3`` grid cells is split into the six tetrahedra that share
the cell's main diagonal (the Kuhn split), with the same diagonal direction in
every cell.  Because the split is identical everywhere, refining the grid by
any integer factor produces a mesh whose tetrahedra nest exactly inside the
coarse ones; :func:`nesting_map` verifies this geometrically instead of
assuming it.

Edges are stored with the lower vertex index first, and every tetrahedron
records the sign relating its local edge direction to that global convention.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

__all__ = [
    "LOCAL_EDGES",
    "LOCAL_FACES",
    "Mesh",
    "MeshError",
    "build_cube_mesh",
    "nesting_map",
    "write_mesh_dump",
]


class MeshError(ValueError):
    """Raised for invalid mesh parameters or broken nesting."""


# Local edges / faces of a tetrahedron, by local vertex number.
LOCAL_EDGES = np.array([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)], dtype=np.int64)
LOCAL_FACES = np.array([(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)], dtype=np.int64)

# The six vertex orders walking from a cell's low corner to its high corner,
# one unit step per axis.  All six tetrahedra contain the cell diagonal.
_PERMS = list(itertools.permutations((0, 1, 2)))


@dataclass(frozen=True)
class Mesh:
    """Tetrahedral mesh of the unit cube.

    Attributes
    ----------
    cells_per_axis : int
        Grid resolution ``n``; the axis spacing is ``1/n`` and the mesh
        diameter is ``sqrt(3)/n``.
    vertices : (nv, 3) float array
        Vertex coordinates in ``[0, 1]^3``.
    tets : (nt, 4) int array
        Vertex indices per tetrahedron; the stored order gives positive volume.
    edges : (ne, 2) int array
        Unique vertex pairs, lower index first.
    tet_edges : (nt, 6) int array
        Global edge index of each local edge (local pairs in ``LOCAL_EDGES``).
    tet_edge_signs : (nt, 6) int array
        +1 where the local edge already runs low-to-high vertex index, else -1.
    boundary_edge_flags : (ne,) bool array
        True for edges lying in a boundary face.
    boundary_faces : (nb, 3) int array
        Vertex triples (sorted) of triangles on the cube surface.
    boundary_face_normals : (nb,) int array
        Outward normal identifier: 0/1 for -x/+x, 2/3 for -y/+y, 4/5 for -z/+z.
    """

    cells_per_axis: int
    vertices: np.ndarray
    tets: np.ndarray
    edges: np.ndarray
    tet_edges: np.ndarray
    tet_edge_signs: np.ndarray
    boundary_edge_flags: np.ndarray
    boundary_faces: np.ndarray
    boundary_face_normals: np.ndarray

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_tets(self) -> int:
        return self.tets.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def h(self) -> float:
        """Mesh diameter: length of a cell diagonal."""
        return np.sqrt(3.0) / self.cells_per_axis

    def tet_coords(self) -> np.ndarray:
        """Vertex coordinates per tetrahedron, shape ``(nt, 4, 3)``."""
        return self.vertices[self.tets]

    def tet_volumes(self) -> np.ndarray:
        v = self.tet_coords()
        b = v[:, 1:] - v[:, :1]
        return np.linalg.det(b) / 6.0

    def barycenters(self) -> np.ndarray:
        return self.tet_coords().mean(axis=1)

    def edge_vectors(self) -> np.ndarray:
        """Vector from low to high vertex for every edge."""
        return self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]


def _encode_pairs(lo: np.ndarray, hi: np.ndarray, nv: int) -> np.ndarray:
    return lo.astype(np.int64) * nv + hi.astype(np.int64)


def _encode_triples(tri: np.ndarray, nv: int) -> np.ndarray:
    # tri sorted ascending along the last axis
    nv = np.int64(nv)
    return (tri[..., 0] * nv + tri[..., 1]) * nv + tri[..., 2]


def build_cube_mesh(n: int) -> Mesh:
    """Build the Kuhn-split mesh of the unit cube with ``n`` cells per axis.

    Tetrahedra are stored cell-major: tets ``6*c .. 6*c+5`` belong to cell
    ``c``, where ``c = (cx*n + cy)*n + cz``.
    """
    if n < 1:
        raise MeshError(f"cells_per_axis must be >= 1, got {n}")
    nv1 = n + 1
    nv = nv1**3

    ii, jj, kk = np.meshgrid(np.arange(nv1), np.arange(nv1), np.arange(nv1), indexing="ij")
    lattice = np.stack([ii, jj, kk], axis=-1).reshape(-1, 3)
    vertices = lattice.astype(float) / n

    def vid(lat: np.ndarray) -> np.ndarray:
        return (lat[..., 0] * nv1 + lat[..., 1]) * nv1 + lat[..., 2]

    cx, cy, cz = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    corners = np.stack([cx, cy, cz], axis=-1).reshape(-1, 3)  # (n^3, 3)
    n_cells = corners.shape[0]

    eye = np.eye(3, dtype=np.int64)
    tets = np.empty((n_cells, 6, 4), dtype=np.int64)
    for p, perm in enumerate(_PERMS):
        offs = np.zeros((4, 3), dtype=np.int64)
        for step, axis in enumerate(perm):
            offs[step + 1] = offs[step] + eye[axis]
        tets[:, p, :] = vid(corners[:, None, :] + offs[None, :, :])
    tets = tets.reshape(-1, 4)

    # Enforce positive volume under the stored vertex order.
    coords = vertices[tets]
    vol6 = np.linalg.det(coords[:, 1:] - coords[:, :1])
    flip = vol6 < 0
    tets[flip] = tets[flip][:, [0, 1, 3, 2]]
    coords = vertices[tets]
    vol6 = np.linalg.det(coords[:, 1:] - coords[:, :1])
    if not np.all(vol6 > 0):
        raise MeshError("degenerate tetrahedron produced by cube split")

    # Global edge list from the 6 local edges of each tet.
    pairs = tets[:, LOCAL_EDGES]  # (nt, 6, 2)
    lo = pairs.min(axis=2)
    hi = pairs.max(axis=2)
    keys = _encode_pairs(lo, hi, nv)
    uniq_keys, inverse = np.unique(keys.ravel(), return_inverse=True)
    tet_edges = inverse.reshape(-1, 6)
    edges = np.stack([uniq_keys // nv, uniq_keys % nv], axis=1)
    signs = np.where(pairs[:, :, 0] < pairs[:, :, 1], 1, -1).astype(np.int64)

    # Boundary faces: triangles incident to exactly one tet.
    tris = np.sort(tets[:, LOCAL_FACES], axis=2).reshape(-1, 3)
    tri_keys = _encode_triples(tris, nv)
    uniq_tris, counts = np.unique(tri_keys, return_counts=True)
    if counts.max() > 2:
        raise MeshError("face shared by more than two tetrahedra")
    bkeys = uniq_tris[counts == 1]
    b2 = bkeys // nv
    boundary_faces = np.stack([b2 // nv, b2 % nv, bkeys % nv], axis=1)

    # Identify which cube face each boundary triangle lies on.
    blat = lattice[boundary_faces]  # (nb, 3, 3) integer coordinates
    normals = np.full(boundary_faces.shape[0], -1, dtype=np.int64)
    for axis in range(3):
        at0 = np.all(blat[:, :, axis] == 0, axis=1)
        at1 = np.all(blat[:, :, axis] == n, axis=1)
        normals[at0] = 2 * axis
        normals[at1] = 2 * axis + 1
    if np.any(normals < 0):
        raise MeshError("boundary face not on a cube face")

    # Boundary edges: the three edges of every boundary face.
    fe = boundary_faces[:, [[0, 1], [0, 2], [1, 2]]].reshape(-1, 2)
    fe_keys = _encode_pairs(fe[:, 0], fe[:, 1], nv)
    boundary_edge_flags = np.isin(uniq_keys, fe_keys)

    return Mesh(
        cells_per_axis=n,
        vertices=vertices,
        tets=tets,
        edges=edges,
        tet_edges=tet_edges,
        tet_edge_signs=signs,
        boundary_edge_flags=boundary_edge_flags,
        boundary_faces=boundary_faces,
        boundary_face_normals=normals,
    )


def _barycentric_setup(mesh: Mesh):
    """Per-tet affine maps x -> (lambda_1, lambda_2, lambda_3)."""
    coords = mesh.tet_coords()
    v0 = coords[:, 0]
    b = np.transpose(coords[:, 1:] - coords[:, :1], (0, 2, 1))  # columns v_i - v_0
    return np.linalg.inv(b), v0


def _barycentric(binv: np.ndarray, v0: np.ndarray, points: np.ndarray) -> np.ndarray:
    """All four barycentric coordinates; broadcasts over leading axes."""
    lam = np.einsum("...ij,...j->...i", binv, points - v0)
    lam0 = 1.0 - lam.sum(axis=-1, keepdims=True)
    return np.concatenate([lam0, lam], axis=-1)


def nesting_map(coarse: Mesh, fine: Mesh, tol: float = 1e-12) -> np.ndarray:
    """Map each fine tetrahedron to the coarse tetrahedron containing it.

    Requires ``fine.cells_per_axis`` to be a multiple of
    ``coarse.cells_per_axis``.  Containment of all four fine vertices in the
    mapped coarse tet is verified to ``tol``; failure means the two meshes do
    not nest and raises :class:`MeshError`.
    """
    nc = coarse.cells_per_axis
    nf = fine.cells_per_axis
    if nf % nc != 0:
        raise MeshError(f"fine resolution {nf} is not a multiple of coarse resolution {nc}")

    binv, v0 = _barycentric_setup(coarse)
    bary = fine.barycenters()

    cell = np.clip((bary * nc).astype(np.int64), 0, nc - 1)
    cell_id = (cell[:, 0] * nc + cell[:, 1]) * nc + cell[:, 2]
    cand = cell_id[:, None] * 6 + np.arange(6)[None, :]  # (nt_f, 6)

    lam = _barycentric(binv[cand], v0[cand], bary[:, None, :])  # (nt_f, 6, 4)
    best = lam.min(axis=2).argmax(axis=1)
    mapping = cand[np.arange(len(best)), best]

    # Verify geometric containment of every fine vertex.
    fverts = fine.tet_coords()  # (nt_f, 4, 3)
    lam_v = _barycentric(binv[mapping][:, None], v0[mapping][:, None], fverts)
    worst = lam_v.min()
    if worst < -tol:
        raise MeshError(
            f"nesting violated: fine vertex outside mapped coarse tet by {-worst:.3e}"
        )
    return mapping


def write_mesh_dump(mesh: Mesh, file) -> None:
    """Plain-text debugging dump with VERTICES/TETS/EDGES sections."""
    own = isinstance(file, str)
    f = open(file, "w", encoding="utf-8") if own else file
    try:
        f.write(f"VERTICES {mesh.n_vertices}\n")
        for v in mesh.vertices:
            f.write(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        f.write(f"TETS {mesh.n_tets}\n")
        for t in mesh.tets:
            f.write(f"{t[0]} {t[1]} {t[2]} {t[3]}\n")
        f.write(f"EDGES {mesh.n_edges}\n")
        for (a, b), bd in zip(mesh.edges, mesh.boundary_edge_flags):
            f.write(f"{a} {b} {int(bd)}\n")
    finally:
        if own:
            f.close()
