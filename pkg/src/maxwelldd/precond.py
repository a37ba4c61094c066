"""Overlapping Schwarz preconditioners for the absorptive curl-curl system.

Local solves come in three families:

* ``"as"``      unweighted combination of subdomain solves with conducting
                (tangential-trace-zero) internal boundaries;
* ``"ras"``     the same solves combined through the partition of unity;
* ``"impras"``  partition-of-unity combination of local solves whose internal
                boundaries carry an impedance condition (interface edges stay
                unknowns, so these matrices are assembled on the subdomain
                submesh rather than extracted as minors).

Two-level variants add a coarse solve ``G = R0^T A0^{-1} R0`` either
additively, through the balancing hybrid formula
``(I - G A) B1 (I - A G) + G``, or through the adapted-deflation formula
``B1 (I - A G) + G``.  The absorption used to build all local and coarse
matrices (``xi_prec``) is independent of the system being solved; setup
assembles a second system at ``xi_prec`` and never reuses the problem's
matrix values.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import fem
from .decomp import Decomposition, build_pou, impedance_dof_sets, subdomain_boundary_faces
from .fem import Coefficients, EdgeSpace, SystemBundle
from .linalg import DEFAULT_LU_CAP, DenseLU, selection_matrix, triple_product

__all__ = [
    "PreconditionerSpec",
    "PreconditionerState",
    "assemble_local",
    "setup",
]

FAMILIES = ("as", "ras", "impras")
CORRECTIONS = ("additive", "hybrid", "adef1")


@dataclass(frozen=True)
class PreconditionerSpec:
    """Configuration of a Schwarz preconditioner.

    ``coarse_correction`` is meaningful only for two levels; ``hybrid_matrix``
    selects whether the system matrix inside the hybrid/deflation correction
    is the problem matrix (default) or the shifted one used for the factors.
    """

    family: str = "as"
    levels: str = "one"  # "one" | "two"
    coarse_correction: str = "additive"
    xi_prec: float = 0.0
    side: str = "right"  # "left" | "right"
    hybrid_matrix: str = "prob"  # "prob" | "prec"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.levels not in ("one", "two"):
            raise ValueError(f"levels must be 'one' or 'two', got {self.levels!r}")
        if self.coarse_correction not in CORRECTIONS:
            raise ValueError(f"unknown coarse correction {self.coarse_correction!r}")
        if self.side not in ("left", "right"):
            raise ValueError(f"side must be 'left' or 'right', got {self.side!r}")
        if self.hybrid_matrix not in ("prob", "prec"):
            raise ValueError(f"hybrid_matrix must be 'prob' or 'prec'")

    def label(self) -> str:
        base = {"as": "AS", "ras": "RAS", "impras": "ImpRAS"}[self.family]
        if self.levels == "one":
            return f"{base}-1"
        suffix = {"additive": "2", "hybrid": "-H", "adef1": "-ADEF1"}[self.coarse_correction]
        return f"{base}{suffix}"


def assemble_local(
    space: EdgeSpace,
    coeffs: Coefficients,
    elems: np.ndarray,
    local_bc: str = "pec",
):
    """Assemble the system matrix on a subdomain submesh.

    Returns ``(matrix, global_dofs)`` where ``matrix`` is CSR over the local
    unknowns and ``global_dofs`` maps local indices to global unknown indices.

    ``local_bc="pec"`` zeroes tangential traces on the whole subdomain
    boundary (the classical local problem, equal to the global matrix minor);
    ``local_bc="impedance"`` keeps internal-boundary edges as unknowns and
    adds the impedance tangential mass over the subdomain boundary faces.
    Conditions inherited from the global space are applied in both cases
    because globally eliminated edges never become local unknowns.
    """
    mesh = space.mesh
    eps, mu, sigma = coeffs.per_tet(mesh.n_tets)
    k, xi = coeffs.k, coeffs.xi

    if local_bc == "pec":
        from .decomp import subdomain_dof_sets

        gdofs = subdomain_dof_sets(space, [elems])[0]
    elif local_bc == "impedance":
        gdofs = impedance_dof_sets(space, [elems])[0]
    else:
        raise ValueError(f"unknown local boundary condition {local_bc!r}")

    nloc = len(gdofs)
    # local dof map over edges: -1 everywhere except the retained edges
    edge_to_local = np.full(mesh.n_edges, -1, dtype=np.int64)
    edge_to_local[space.kept_edges[gdofs]] = np.arange(nloc)

    s_el, m_el, _ = fem._element_matrices_batch(
        mesh.tet_coords()[elems], mesh.tet_edge_signs[elems]
    )
    w = k**2 * eps[elems] + 1j * (xi * eps[elems] + k * sigma[elems])
    a_el = s_el / mu[elems, None, None] - w[:, None, None] * m_el

    dof = edge_to_local[mesh.tet_edges[elems]]
    rows = np.repeat(dof[:, :, None], 6, axis=2)
    cols = np.repeat(dof[:, None, :], 6, axis=1)
    keep = (rows >= 0) & (cols >= 0)
    a_loc = sp.coo_matrix(
        (a_el[keep], (rows[keep], cols[keep])), shape=(nloc, nloc)
    ).tocsr()

    if local_bc == "impedance":
        s_imp = 1.0 if xi >= 0 else -1.0
        bfaces = subdomain_boundary_faces(mesh, elems)
        mb_loc = fem._boundary_mass_on_faces(space, bfaces, nloc, edge_to_local)
        a_loc = (a_loc - 1j * s_imp * k * mb_loc).tocsr()

    a_loc.sort_indices()
    return a_loc, gdofs


def _local_kind(spec: PreconditionerSpec) -> str:
    # as/ras share conducting-interface minors; impras factors its own blocks
    return "pec" if spec.family in ("as", "ras") else "impedance"


class PreconditionerState:
    """Factorized Schwarz preconditioner; ``apply`` is a fixed linear map."""

    def __init__(self, problem, decomp, spec, lu_cap=DEFAULT_LU_CAP):
        self.spec = spec
        self.decomp = decomp
        self.ndof = problem.space.ndof

        prec_coeffs = problem.coefficients.with_xi(spec.xi_prec)
        prec = fem.assemble(problem.space, prec_coeffs)
        self.A_prec = prec.A
        self._A_prob = problem.A
        self.A_corr = problem.A if spec.hybrid_matrix == "prob" else prec.A

        t0 = time.perf_counter()
        if _local_kind(spec) == "pec":
            self.dof_sets = decomp.dofs
            self.pou_weights = decomp.pou
            self.factors = []
            for ell, dofs in enumerate(self.dof_sets):
                r = selection_matrix(dofs, self.ndof)
                a_ell = triple_product(r, prec.A)
                self.factors.append(
                    DenseLU(a_ell.toarray(), context=f"subdomain {ell}", cap=lu_cap)
                )
        else:  # impedance interfaces
            self.dof_sets = impedance_dof_sets(problem.space, decomp.elements)
            self.pou_weights = build_pou(self.dof_sets, self.ndof)
            self.factors = []
            for ell, elems in enumerate(decomp.elements):
                a_loc, gdofs = assemble_local(
                    problem.space, prec_coeffs, elems, local_bc="impedance"
                )
                assert np.array_equal(gdofs, self.dof_sets[ell])
                self.factors.append(
                    DenseLU(a_loc.toarray(), context=f"subdomain {ell}", cap=lu_cap)
                )

        self.coarse_lu = None
        self.R0 = None
        if spec.levels == "two":
            if decomp.coarse is None:
                raise ValueError("two-level preconditioner needs a coarse link")
            self.R0 = decomp.coarse.R0
            a0 = triple_product(self.R0, prec.A)
            self.coarse_lu = DenseLU(a0.toarray(), context="coarse space", cap=lu_cap)
        self.setup_time_s = time.perf_counter() - t0

    def variant(self, spec: PreconditionerSpec) -> "PreconditionerState":
        """A view of this state under another spec, sharing all factors.

        Valid when the local solves coincide: same family kind (conducting
        minors serve both "as" and "ras") and same ``xi_prec``; a two-level
        variant needs the coarse factor to exist already.
        """
        if _local_kind(spec) != _local_kind(self.spec):
            raise ValueError("variant would need different local factorizations")
        if spec.xi_prec != self.spec.xi_prec:
            raise ValueError("variant would need factors at a different absorption")
        if spec.levels == "two" and self.coarse_lu is None:
            raise ValueError("variant needs a coarse factor the state does not hold")
        twin = object.__new__(PreconditionerState)
        twin.__dict__.update(self.__dict__)
        twin.spec = spec
        if spec.hybrid_matrix != self.spec.hybrid_matrix:
            twin.A_corr = self._A_prob if spec.hybrid_matrix == "prob" else self.A_prec
        return twin

    # -- linear-map pieces ------------------------------------------------

    def _one_level(self, v: np.ndarray) -> np.ndarray:
        weighted = self.spec.family in ("ras", "impras")
        out = np.zeros(self.ndof, dtype=complex)
        for dofs, w, lu in zip(self.dof_sets, self.pou_weights, self.factors):
            u = lu.solve(v[dofs])
            if weighted:
                u = w * u
            out[dofs] += u
        return out

    def coarse_solve(self, v: np.ndarray) -> np.ndarray:
        return self.R0.T @ self.coarse_lu.solve(self.R0 @ v)

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        if v.shape[0] != self.ndof:
            raise ValueError(f"vector has length {v.shape[0]}, expected {self.ndof}")
        v = v.astype(complex, copy=False)
        if self.spec.levels == "one":
            return self._one_level(v)
        corr = self.spec.coarse_correction
        gv = self.coarse_solve(v)
        if corr == "additive":
            return self._one_level(v) + gv
        if corr == "adef1":
            return self._one_level(v - self.A_corr @ gv) + gv
        # hybrid: (I - G A) B1 (I - A G) v + G v
        y = self._one_level(v - self.A_corr @ gv)
        return y - self.coarse_solve(self.A_corr @ y) + gv

    __call__ = apply


def setup(
    problem: SystemBundle,
    decomp: Decomposition,
    spec: PreconditionerSpec,
    lu_cap: int = DEFAULT_LU_CAP,
) -> PreconditionerState:
    """Factorize all subdomain (and coarse) blocks at ``spec.xi_prec``."""
    return PreconditionerState(problem, decomp, spec, lu_cap=lu_cap)
