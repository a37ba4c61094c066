import numpy as np
import pytest

from oracles import enumerate_faces

from maxwelldd.mesh import MeshError, build_cube_mesh, nesting_map, write_mesh_dump


def test_rejects_zero_cells():
    with pytest.raises(MeshError):
        build_cube_mesh(0)


def test_unit_cube_counts():
    mesh = build_cube_mesh(1)
    assert mesh.n_vertices == 8
    assert mesh.n_tets == 6
    # 12 cube edges + 6 face diagonals + 1 body diagonal
    assert mesh.n_edges == 19


def test_unit_cube_edge_enumeration_oracle():
    # brute-force the edge set from the tets themselves
    mesh = build_cube_mesh(1)
    seen = set()
    for t in mesh.tets:
        for i in range(4):
            for j in range(i + 1, 4):
                seen.add((min(t[i], t[j]), max(t[i], t[j])))
    assert len(seen) == mesh.n_edges
    assert seen == {tuple(e) for e in mesh.edges}


@pytest.mark.parametrize("n", [1, 2, 3])
def test_euler_characteristic(n):
    mesh = build_cube_mesh(n)
    counts = enumerate_faces(mesh.tets)
    n_faces = len(counts)
    chi = mesh.n_vertices - mesh.n_edges + n_faces - mesh.n_tets
    assert chi == 1
    if n == 1:
        assert n_faces == 18
    # interior faces shared by exactly 2 tets, boundary by 1
    assert set(counts.values()) <= {1, 2}
    n_boundary = sum(1 for c in counts.values() if c == 1)
    assert n_boundary == mesh.boundary_faces.shape[0]


@pytest.mark.parametrize("n", [1, 2, 4])
def test_counts_and_volumes(n):
    mesh = build_cube_mesh(n)
    assert mesh.n_vertices == (n + 1) ** 3
    assert mesh.n_tets == 6 * n**3
    vols = mesh.tet_volumes()
    assert np.all(vols > 0)
    assert vols.sum() == pytest.approx(1.0, rel=1e-13)
    assert mesh.h == pytest.approx(np.sqrt(3.0) / n)


def test_edge_list_consistency():
    mesh = build_cube_mesh(2)
    # edges sorted low-first, duplicate-free
    assert np.all(mesh.edges[:, 0] < mesh.edges[:, 1])
    keys = mesh.edges[:, 0] * mesh.n_vertices + mesh.edges[:, 1]
    assert len(np.unique(keys)) == mesh.n_edges
    # each tet_edges entry matches the local vertex pair up to the stored sign
    from maxwelldd.mesh import LOCAL_EDGES

    for t in range(mesh.n_tets):
        verts = mesh.tets[t]
        for le, (a, b) in enumerate(LOCAL_EDGES):
            ge = mesh.edges[mesh.tet_edges[t, le]]
            pair = (verts[a], verts[b])
            if mesh.tet_edge_signs[t, le] == 1:
                assert tuple(ge) == pair
            else:
                assert tuple(ge) == (pair[1], pair[0])


def test_boundary_edge_flags():
    mesh = build_cube_mesh(2)
    on_boundary = np.zeros(mesh.n_vertices, dtype=bool)
    v = mesh.vertices
    on_boundary |= (v == 0.0).any(axis=1) | (v == 1.0).any(axis=1)
    for (a, b), flag in zip(mesh.edges, mesh.boundary_edge_flags):
        if flag:
            assert on_boundary[a] and on_boundary[b]
    # flags agree with face-based enumeration
    face_edges = set()
    for f in mesh.boundary_faces:
        f = sorted(f)
        face_edges |= {(f[0], f[1]), (f[0], f[2]), (f[1], f[2])}
    flagged = {tuple(e) for e, fl in zip(mesh.edges, mesh.boundary_edge_flags) if fl}
    assert flagged == face_edges


def test_boundary_face_normals():
    mesh = build_cube_mesh(2)
    # every boundary triangle lies flat on the identified cube face
    for tri, nid in zip(mesh.boundary_faces, mesh.boundary_face_normals):
        axis, side = nid // 2, nid % 2
        assert np.allclose(mesh.vertices[tri][:, axis], float(side))
    # each cube face carries 2*n^2 triangles
    assert np.all(np.bincount(mesh.boundary_face_normals) == 2 * 2**2)


def test_nesting_identity():
    mesh = build_cube_mesh(2)
    assert np.array_equal(nesting_map(mesh, mesh), np.arange(mesh.n_tets))


def test_nesting_point_location_oracle():
    coarse = build_cube_mesh(1)
    fine = build_cube_mesh(2)
    mapping = nesting_map(coarse, fine)
    assert mapping.shape == (48,)
    assert np.all(np.bincount(mapping, minlength=6) == 8)
    # independent point location: barycenter of each fine tet lies in the
    # mapped coarse tet and in no other
    from oracles import barycentric_values

    for t, c in enumerate(mapping):
        p = fine.tet_coords()[t].mean(axis=0)[None]
        inside = [
            np.all(barycentric_values(coarse.tet_coords()[cc], p) >= -1e-12)
            for cc in range(coarse.n_tets)
        ]
        assert inside[c]
        assert sum(inside) == 1


def test_nesting_rejects_non_divisible():
    with pytest.raises(MeshError):
        nesting_map(build_cube_mesh(2), build_cube_mesh(3))


@pytest.mark.parametrize("nc,nf", [(1, 2), (1, 3), (2, 4), (2, 6)])
def test_nesting_volume_conservation(nc, nf):
    coarse = build_cube_mesh(nc)
    fine = build_cube_mesh(nf)
    mapping = nesting_map(coarse, fine)
    fine_vols = fine.tet_volumes()
    agg = np.bincount(mapping, weights=fine_vols, minlength=coarse.n_tets)
    assert np.allclose(agg, coarse.tet_volumes(), rtol=1e-12)


def test_mesh_dump(tmp_path):
    mesh = build_cube_mesh(1)
    path = tmp_path / "mesh.txt"
    write_mesh_dump(mesh, str(path))
    text = path.read_text()
    assert text.startswith("VERTICES 8")
    assert "TETS 6" in text
    assert "EDGES 19" in text
