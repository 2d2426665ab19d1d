import numpy as np
import pytest
import scipy.sparse as sp

from winklercontact import model
from winklercontact.fem2d import (
    AssemblyError,
    SparseSystem,
    apply_dirichlet,
    assemble_load,
    assemble_stiffness,
    build_dofmap,
    element_stiffness,
    normal_trace,
    recover_stresses,
)
from winklercontact.linsolve import LinearSolveError, factorize
from winklercontact.scenario import ScenarioConfig, generate_scenario, rectangle_mesh
from winklercontact.system import discretize, total_energy
from winklercontact.verify import patch_test_error

from conftest import INTERFACE, STEEL, clamped_pair

ALL_NEUMANN_BUT_BOTTOM = dict(bottom=model.DIRICHLET_FULL, right=model.NEUMANN,
                              top=model.NEUMANN, left=model.NEUMANN)


def unit_triangle(tags=None):
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    tags = tags or [model.DIRICHLET_FULL, model.NEUMANN, model.NEUMANN]
    return model.BodyMesh(nodes, np.array([[0, 1, 2]]), np.array([[0, 1], [1, 2], [2, 0]]), tags)


def rigid_modes(mesh):
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    return [np.column_stack([np.ones_like(x), 0 * x]).ravel(),
            np.column_stack([0 * x, np.ones_like(x)]).ravel(),
            np.column_stack([-y, x]).ravel()]


class TestStiffness:
    def test_unit_triangle_entry(self):
        ke = element_stiffness(unit_triangle(), model.IsotropicMaterial(1.0, 0.0))[0]
        assert ke[0, 0] == pytest.approx(0.75, rel=1e-14)
        assert ke.shape == (6, 6)

    def test_symmetric(self):
        K = assemble_stiffness(rectangle_mesh(0, 0, 3, 1, 6, 3, ALL_NEUMANN_BUT_BOTTOM), STEEL)
        assert abs(K - K.T).max() == 0.0

    @pytest.mark.parametrize("nx, ny", [(1, 1), (4, 2), (7, 5)])
    def test_rigid_motions_in_nullspace(self, nx, ny):
        mesh = rectangle_mesh(0.3, -1.0, 2.0, 1.5, nx, ny, ALL_NEUMANN_BUT_BOTTOM)
        K = assemble_stiffness(mesh, STEEL)
        scale = abs(K).max()
        for v in rigid_modes(mesh):
            assert np.max(np.abs(K @ v)) <= 1e-12 * scale * np.max(np.abs(v))
            assert abs(v @ (K @ v)) <= 1e-12 * scale * (v @ v)

    def test_positive_semidefinite(self, rng):
        K = assemble_stiffness(rectangle_mesh(0, 0, 2, 1, 4, 2, ALL_NEUMANN_BUT_BOTTOM), STEEL)
        w = np.linalg.eigvalsh(K.toarray())
        assert w.min() >= -1e-10 * w.max()
        assert np.sum(w < 1e-10 * w.max()) == 3

    def test_energy_matches_independent_quadrature(self, rng):
        mesh = rectangle_mesh(0, 0, 2, 1, 5, 3, ALL_NEUMANN_BUT_BOTTOM)
        mat = model.IsotropicMaterial(2.1e5, 0.3)
        K = assemble_stiffness(mesh, mat)
        u = rng.standard_normal(2 * mesh.n_nodes) * 1e-3
        E, nu = mat.young_modulus, mat.poisson_ratio
        lam = E * nu / ((1 + nu) * (1 - 2 * nu))
        mu = E / (2 * (1 + nu))
        energy = 0.0
        U = u.reshape(-1, 2)
        for tri in mesh.triangles:
            P = mesh.nodes[tri]
            # u(x) = c + G x on the element
            M = np.column_stack([np.ones(3), P])
            coef = np.linalg.solve(M, U[tri])
            G = coef[1:].T
            eps = 0.5 * (G + G.T)
            sigma = lam * np.trace(eps) * np.eye(2) + 2 * mu * eps
            e1, e2 = P[1] - P[0], P[2] - P[0]
            area = 0.5 * abs(e1[0] * e2[1] - e1[1] * e2[0])
            energy += area * np.sum(sigma * eps)
        assert u @ (K @ u) == pytest.approx(energy, rel=1e-12)


class TestLoad:
    def test_zero(self):
        mesh = rectangle_mesh(0, 0, 1, 1, 2, 2, ALL_NEUMANN_BUT_BOTTOM)
        assert np.array_equal(assemble_load(mesh, model.LoadSpec()), np.zeros(2 * mesh.n_nodes))

    def test_single_edge_trapezoid(self):
        mesh = rectangle_mesh(0, 0, 1, 1, 2, 1, ALL_NEUMANN_BUT_BOTTOM)
        top = 2 + 1  # first top edge index: nx + ny
        a, b = mesh.edges[top]
        f = assemble_load(mesh, model.LoadSpec(tractions={top: (0.0, -10.0)}))
        h = np.linalg.norm(mesh.nodes[a] - mesh.nodes[b])
        assert f[2 * a + 1] == pytest.approx(-10 * h / 2)
        assert f[2 * b + 1] == pytest.approx(-10 * h / 2)
        assert np.count_nonzero(f) == 2

    def test_scenario_total_force(self):
        cfg = ScenarioConfig(nx=16, ny=4)
        problem = generate_scenario(cfg)
        upper = problem.bodies[1]
        f = assemble_load(upper.mesh, upper.loads).reshape(-1, 2)
        assert f[:, 1].sum() == pytest.approx(-40.0, rel=1e-14)
        assert f[:, 0].sum() == 0.0

    def test_body_force_total(self):
        mesh = rectangle_mesh(0, 0, 2, 1, 3, 2, ALL_NEUMANN_BUT_BOTTOM)
        f = assemble_load(mesh, model.LoadSpec(body_force=(1.0, -3.0))).reshape(-1, 2)
        np.testing.assert_allclose(f.sum(axis=0), [2.0, -6.0], rtol=1e-14)

    def test_traction_on_dirichlet_edge_rejected(self):
        mesh = rectangle_mesh(0, 0, 1, 1, 2, 1, ALL_NEUMANN_BUT_BOTTOM)
        with pytest.raises(AssemblyError):
            assemble_load(mesh, model.LoadSpec(tractions={0: (0.0, 1.0)}))


class TestDirichlet:
    def test_all_constrained_gives_empty_system(self):
        mesh = unit_triangle([model.DIRICHLET_FULL] * 3)
        dofs = build_dofmap(mesh)
        K = assemble_stiffness(mesh, STEEL)
        red = apply_dirichlet(SparseSystem(K, np.ones(6)), dofs)
        assert red.matrix.shape == (0, 0) and red.rhs.shape == (0,)
        assert factorize(red.matrix).solve(red.rhs).shape == (0,)

    def test_single_free_dof(self):
        from winklercontact.fem2d import DofMap

        fixed = np.array([True, False, True, True, True, True])
        K = sp.diags([1.0, 4.0, 1.0, 1.0, 1.0, 1.0]).tocsr()
        red = apply_dirichlet(SparseSystem(K, np.array([0, 2.0, 0, 0, 0, 0])), DofMap(3, fixed))
        assert factorize(red.matrix).solve(red.rhs)[0] == pytest.approx(0.5)

    def test_unconstrained_singular_constrained_spd(self):
        mesh = rectangle_mesh(0, 0, 2, 1, 4, 2, ALL_NEUMANN_BUT_BOTTOM)
        K = assemble_stiffness(mesh, STEEL)
        with pytest.raises(LinearSolveError):
            factorize(K.tocsc())
        red = apply_dirichlet(SparseSystem(K, np.zeros(K.shape[0])), build_dofmap(mesh))
        factorize(red.matrix.tocsc())

    def test_roller_constrains_normal_component_only(self):
        mesh = rectangle_mesh(0, 0, 1, 1, 1, 1, dict(bottom=model.DIRICHLET_NORMAL, right=model.NEUMANN,
                                                     top=model.NEUMANN, left=model.DIRICHLET_NORMAL))
        fixed = build_dofmap(mesh).fixed.reshape(-1, 2)
        assert fixed[0].tolist() == [True, True]   # corner on both rollers
        assert fixed[1].tolist() == [False, True]  # bottom right
        assert fixed[2].tolist() == [True, False]  # top left


def test_patch_test():
    assert patch_test_error(nx=4, ny=3) <= 1e-12
    assert patch_test_error(nx=7, ny=2) <= 1e-12


class TestTraces:
    def _meshes(self):
        p = clamped_pair(nx=2, ny=1)
        return p.bodies[0].mesh, p.bodies[1].mesh

    def test_zero_field(self):
        lower, _ = self._meshes()
        assert np.all(normal_trace(lower, np.zeros((lower.n_nodes, 2)), INTERFACE) == 0)

    def test_sign_conventions(self):
        lower, upper = self._meshes()
        ul = np.tile([0.3, 0.7], (lower.n_nodes, 1))
        uu = np.tile([0.3, 0.7], (upper.n_nodes, 1))
        np.testing.assert_allclose(normal_trace(lower, ul, INTERFACE), 0.7)
        np.testing.assert_allclose(normal_trace(upper, uu, INTERFACE), -0.7)


class TestStresses:
    def test_zero(self):
        mesh = rectangle_mesh(0, 0, 2, 1, 3, 2, ALL_NEUMANN_BUT_BOTTOM)
        assert np.all(recover_stresses(mesh, STEEL, np.zeros((mesh.n_nodes, 2))) == 0)

    def test_uniaxial_stretch(self):
        mesh = rectangle_mesh(0, 0, 2, 1, 3, 2, ALL_NEUMANN_BUT_BOTTOM)
        mat = model.IsotropicMaterial(7.0, 0.0)
        u = np.column_stack([0 * mesh.nodes[:, 0], 1e-3 * mesh.nodes[:, 1]])
        s = recover_stresses(mesh, mat, u)
        np.testing.assert_allclose(s[:, 1], 7e-3, rtol=1e-12)
        np.testing.assert_allclose(s[:, [0, 2]], 0.0, atol=1e-15)

    def test_small_rotation(self):
        mesh = rectangle_mesh(0, 0, 2, 1, 3, 2, ALL_NEUMANN_BUT_BOTTOM)
        th = 1e-6
        R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        u = mesh.nodes @ R.T - mesh.nodes
        assert np.max(np.abs(recover_stresses(mesh, model.IsotropicMaterial(1.0, 0.3), u))) <= 1e-10


class TestEnergy:
    def test_zero_state(self):
        problem = clamped_pair(gap=model.constant_gap(1e-4))
        disc = discretize(problem)
        assert total_energy(problem, disc.zero_fields()) == 0.0

    def test_contact_energy_nonnegative(self, rng):
        disc = discretize(clamped_pair(pull=10.0))
        for _ in range(20):
            u = [1e-3 * rng.standard_normal((d.n_nodes, 2)) for d in disc.dofmaps]
            assert disc.contact_energy(u) >= 0.0
