"""Linear (P1) triangular elements for plane-strain elasticity.

Nodal dofs are interleaved: node i owns dofs 2*i (x) and 2*i + 1 (y).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .model import (
    DIRICHLET_FULL,
    DIRICHLET_NORMAL,
    NEUMANN,
    BodyMesh,
    IsotropicMaterial,
    LoadSpec,
    ModelError,
    edge_outward_normal,
    plane_strain_matrix,
)


class AssemblyError(ModelError):
    pass


@dataclass(frozen=True, eq=False)
class DofMap:
    """Dof numbering of one body and its homogeneous Dirichlet constraints."""

    n_nodes: int
    fixed: np.ndarray  # bool mask over 2*n_nodes dofs
    offset: int = 0

    @property
    def n_dofs(self) -> int:
        return 2 * self.n_nodes

    @property
    def free(self) -> np.ndarray:
        return np.flatnonzero(~self.fixed)

    @property
    def constrained(self) -> np.ndarray:
        return np.flatnonzero(self.fixed)

    def node_dofs(self, node: int) -> tuple:
        return (self.offset + 2 * node, self.offset + 2 * node + 1)

    def with_offset(self, offset: int) -> "DofMap":
        return DofMap(self.n_nodes, self.fixed, offset)


def build_dofmap(mesh: BodyMesh) -> DofMap:
    fixed = np.zeros(2 * mesh.n_nodes, dtype=bool)
    for (a, b), tag in zip(mesh.edges, mesh.edge_tags):
        if tag == DIRICHLET_FULL:
            fixed[[2 * a, 2 * a + 1, 2 * b, 2 * b + 1]] = True
        elif tag == DIRICHLET_NORMAL:
            comp = _axis_of_normal(edge_outward_normal(mesh, (a, b)))
            if comp is None:
                raise ModelError(f"roller edge ({a}, {b}) is not axis-aligned")
            fixed[[2 * a + comp, 2 * b + comp]] = True
    return DofMap(mesh.n_nodes, fixed)


def _axis_of_normal(n, tol=1e-12):
    if abs(n[1]) <= tol:
        return 0
    if abs(n[0]) <= tol:
        return 1
    return None


@dataclass
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray


# --------------------------------------------------------------------------
# Element kernels
# --------------------------------------------------------------------------


def element_gradients(mesh: BodyMesh):
    """Areas and P1 shape-function gradients, shape (m,) and (m, 3, 2)."""
    p = mesh.nodes[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    area = 0.5 * ((x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0])
                  - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0]))
    bad = np.flatnonzero(area <= 0)
    if bad.size:
        raise AssemblyError(f"degenerate triangle {int(bad[0])} (area {area[bad[0]]:.3g})")
    dNdx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    dNdy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    grads = np.stack([dNdx, dNdy], axis=2) / (2.0 * area)[:, None, None]
    return area, grads


def strain_displacement(grads: np.ndarray) -> np.ndarray:
    """Constant B matrices, shape (m, 3, 6), acting on (u1x, u1y, u2x, ...)."""
    m = grads.shape[0]
    B = np.zeros((m, 3, 6))
    B[:, 0, 0::2] = grads[:, :, 0]
    B[:, 1, 1::2] = grads[:, :, 1]
    B[:, 2, 0::2] = grads[:, :, 1]
    B[:, 2, 1::2] = grads[:, :, 0]
    return B


def element_stiffness(mesh: BodyMesh, mat: IsotropicMaterial) -> np.ndarray:
    area, grads = element_gradients(mesh)
    B = strain_displacement(grads)
    D = plane_strain_matrix(mat)
    return area[:, None, None] * np.einsum("eki,kl,elj->eij", B, D, B)


def _element_dofs(mesh: BodyMesh) -> np.ndarray:
    t = mesh.triangles
    return np.stack([2 * t, 2 * t + 1], axis=2).reshape(len(t), 6)


def assemble_stiffness(mesh: BodyMesh, mat: IsotropicMaterial, dofs: DofMap | None = None
                       ) -> sp.csr_matrix:
    """Global stiffness of one body over all 2*n_nodes dofs (unconstrained)."""
    ke = element_stiffness(mesh, mat)
    edofs = _element_dofs(mesh)
    rows = np.repeat(edofs, 6, axis=1).ravel()
    cols = np.tile(edofs, (1, 6)).ravel()
    n = 2 * mesh.n_nodes
    K = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    # exact symmetry, independent of summation order
    return ((K + K.T) * 0.5).tocsr()


def assemble_load(mesh: BodyMesh, loads: LoadSpec, dofs: DofMap | None = None) -> np.ndarray:
    """Work-conjugate nodal forces: one-point rule for body force,
    trapezoid rule for edge tractions."""
    f = np.zeros(2 * mesh.n_nodes)
    area, _ = element_gradients(mesh)
    centroids = mesh.nodes[mesh.triangles].mean(axis=1)
    if callable(loads.body_force):
        bf = np.asarray(loads.body_force(centroids), dtype=float).reshape(-1, 2)
    else:
        bf = np.broadcast_to(np.asarray(loads.body_force, dtype=float), centroids.shape)
    if np.any(bf != 0):
        share = (area[:, None] * bf) / 3.0
        for k in range(3):
            np.add.at(f, 2 * mesh.triangles[:, k], share[:, 0])
            np.add.at(f, 2 * mesh.triangles[:, k] + 1, share[:, 1])

    for idx, p in loads.tractions.items():
        if not (0 <= idx < len(mesh.edges)):
            raise AssemblyError(f"traction given for nonexistent edge {idx}")
        if mesh.edge_tags[idx] != NEUMANN:
            raise AssemblyError(
                f"traction given on edge {idx} tagged {mesh.edge_tags[idx]!r}, not neumann"
            )
        a, b = mesh.edges[idx]
        h = np.linalg.norm(mesh.nodes[b] - mesh.nodes[a])
        p = np.asarray(p, dtype=float)
        for node in (a, b):
            f[2 * node: 2 * node + 2] += 0.5 * h * p
    return f


def apply_dirichlet(system: SparseSystem, dofs: DofMap) -> SparseSystem:
    """Eliminate constrained dofs symmetrically (prescribed values are zero)."""
    if not dofs.fixed.any():
        raise AssemblyError("body has no constrained dofs; its stiffness is singular")
    free = dofs.free
    K = sp.csr_matrix(system.matrix)[free][:, free]
    return SparseSystem(K.tocsr(), np.asarray(system.rhs, dtype=float)[free])


def expand(free_values: np.ndarray, dofs: DofMap) -> np.ndarray:
    """Scatter free-dof values into a full (n_nodes, 2) displacement array."""
    full = np.zeros(dofs.n_dofs)
    full[dofs.free] = free_values
    return full.reshape(-1, 2)


# --------------------------------------------------------------------------
# Traces, stresses
# --------------------------------------------------------------------------


def contact_segment(mesh: BodyMesh, tag: str):
    """Nodes of a straight, axis-aligned contact segment sorted along it,
    with the segment's outward normal."""
    edges = mesh.edges_with_tag(tag)
    if len(edges) == 0:
        raise ModelError(f"no edges tagged {tag!r}")
    normals = np.array([edge_outward_normal(mesh, e) for e in edges])
    n = normals[0]
    if not np.allclose(normals, n, atol=1e-12):
        raise ModelError(f"contact segment {tag!r} is not straight")
    if _axis_of_normal(n) is None:
        raise ModelError(f"contact segment {tag!r} is not axis-aligned")
    n = np.round(n)
    nodes = np.unique(edges.ravel())
    along = 1 - _axis_of_normal(n)
    nodes = nodes[np.argsort(mesh.nodes[nodes, along], kind="stable")]
    return nodes, n


def normal_trace(mesh: BodyMesh, u: np.ndarray, segment: str) -> np.ndarray:
    nodes, n = contact_segment(mesh, segment)
    u = np.asarray(u, dtype=float).reshape(-1, 2)
    return u[nodes] @ n


def recover_stresses(mesh: BodyMesh, mat: IsotropicMaterial, u: np.ndarray) -> np.ndarray:
    """Per-element (s11, s22, s12)."""
    _, grads = element_gradients(mesh)
    B = strain_displacement(grads)
    ue = np.asarray(u, dtype=float).reshape(-1)[_element_dofs(mesh)]
    strain = np.einsum("eij,ej->ei", B, ue)
    return strain @ plane_strain_matrix(mat).T


def total_energy(problem, fields) -> float:
    """F1(u) = A(u,u)/2 - L(u) + J(u) for per-body (n_nodes, 2) fields.

    ``problem`` may be a Problem or an already assembled Discretization.
    """
    from .system import total_energy as _total_energy

    return _total_energy(problem, fields)
