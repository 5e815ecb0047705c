import os
import sys
import unittest

import numpy as np

# Add parent directory to system path to allow imports from src folder
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.utils.errors import BadParams, BadStep, LiftMiss, OutsideReach, ValidationError
from src.utils.fem import SignalP0, SignalP1
from src.utils.mesh import total_area
from src.utils.sampling import (RefinementFamily, admissibility_report, discretize_signal,
                                jacobian_diagnostic, lattice_barycentric, lift_signal,
                                sample_triangulation)
from src.utils.surface import MongePatch, SphereCap


def linear_signal(u, v, points):
    return points[..., 0] + 2.0 * points[..., 1]


class TestTriangulation(unittest.TestCase):
    """
    Structured triangulations of analytic surfaces.
    """

    def test_step_is_validated(self):
        cap = SphereCap(radius=1.0)
        with self.assertRaises(BadStep):
            sample_triangulation(cap, 0.0)
        with self.assertRaises(BadStep):
            sample_triangulation(cap, 0.5)
        with self.assertRaises(BadStep):
            sample_triangulation(cap, 0.1, boundary_offset=-0.01)

    def test_vertices_lie_on_the_sphere(self):
        cap = SphereCap(radius=1.5, theta_max=1.0)
        mesh = sample_triangulation(cap, 0.2)
        np.testing.assert_allclose(np.linalg.norm(mesh.vertices, axis=1), 1.5, rtol=1e-14)

    def test_inscribed_cap_area_from_below(self):
        cap = SphereCap(radius=1.0, theta_max=np.pi / 3)
        areas = [total_area(sample_triangulation(cap, h, boundary_offset=0.0)) for h in (0.2, 0.1, 0.05)]
        self.assertTrue(all(a < cap.area() for a in areas))
        self.assertTrue(areas[0] < areas[1] < areas[2])

    def test_flat_grid_covers_the_domain(self):
        mesh = sample_triangulation(MongePatch(width=2.0, depth=1.0), 0.25, boundary_offset=0.0)
        self.assertEqual(mesh.n_triangles, 2 * 8 * 4)
        self.assertAlmostEqual(total_area(mesh), 2.0, places=13)

    def test_refinement_steps_must_decrease(self):
        cap = SphereCap()
        family = RefinementFamily.build(cap, [0.2, 0.1])
        self.assertEqual(family.steps, [0.2, 0.1])
        with self.assertRaises(BadStep):
            RefinementFamily.build(cap, [0.1, 0.2])

    def test_lattice_barycentric(self):
        self.assertEqual(lattice_barycentric(2).shape, (6, 3))
        np.testing.assert_allclose(lattice_barycentric(3, interior_only=True), [[1 / 3, 1 / 3, 1 / 3]])
        np.testing.assert_allclose(lattice_barycentric(4).sum(axis=1), 1.0)


class TestAdmissibility(unittest.TestCase):
    """
    Diagnostics relating a mesh to its surface.
    """

    def test_inscribed_cap(self):
        """An inscribed cap lies within h of the sphere and never overhangs the patch."""
        cap = SphereCap(radius=1.0, theta_max=np.pi / 3)
        h = 0.1
        report = admissibility_report(sample_triangulation(cap, h, boundary_offset=0.0), cap, h)
        self.assertTrue(report.checks["within_reach"])
        self.assertTrue(report.checks["distance"])
        self.assertTrue(report.checks["injectivity"])
        self.assertLess(report.max_dist, h * h)
        self.assertAlmostEqual(report.out_area, 0.0, places=12)

    def test_boundary_offset_overhangs(self):
        cap = SphereCap(radius=1.0, theta_max=np.pi / 3)
        h = 0.1
        report = admissibility_report(sample_triangulation(cap, h), cap, h)
        self.assertGreater(report.out_area, 0.0)
        self.assertTrue(report.checks["out_area"])

    def test_flat_patch(self):
        patch = MongePatch()
        report = admissibility_report(sample_triangulation(patch, 0.25, boundary_offset=0.0), patch, 0.25)
        self.assertAlmostEqual(report.max_dist, 0.0, places=14)
        self.assertAlmostEqual(report.alpha_max, 0.0, places=14)
        self.assertEqual(report.orientation_flips, 0)

    def test_step_must_be_positive(self):
        patch = MongePatch()
        mesh = sample_triangulation(patch, 0.25, boundary_offset=0.0)
        for h in (0.0, -0.1, float("nan")):
            with self.subTest(h=h):
                with self.assertRaises(BadStep):
                    admissibility_report(mesh, patch, h)


class TestJacobian(unittest.TestCase):
    """
    Determinant of the projection restricted to the mesh.
    """

    def test_flat_mesh_has_unit_jacobian(self):
        patch = MongePatch()
        mesh = sample_triangulation(patch, 0.25, boundary_offset=0.0)
        rng = np.random.default_rng(0)
        bary = rng.dirichlet(np.ones(3), size=10)
        ids = rng.integers(0, mesh.n_triangles, size=10)
        np.testing.assert_allclose(jacobian_diagnostic(patch, mesh, ids, bary), 1.0, rtol=1e-14)

    def test_fine_sphere_mesh_is_close_to_one(self):
        cap = SphereCap(radius=1.0, theta_max=np.pi / 3)
        mesh = sample_triangulation(cap, 0.05, boundary_offset=0.0)
        ids = np.arange(mesh.n_triangles)
        bary = np.tile([1 / 3, 1 / 3, 1 / 3], (mesh.n_triangles, 1))
        det = jacobian_diagnostic(cap, mesh, ids, bary)
        self.assertTrue(np.all(det > 0))
        self.assertLess(np.max(np.abs(det - 1.0)), 0.05)

    def test_outside_reach(self):
        cap = SphereCap(radius=1.0)
        mesh = sample_triangulation(cap, 0.2).transformed(translation=(0.0, 0.0, 5.0))
        with self.assertRaises(OutsideReach):
            jacobian_diagnostic(cap, mesh, [0], [[1 / 3, 1 / 3, 1 / 3]])


class TestSignalTransfer(unittest.TestCase):
    """
    Discretizing surface signals onto meshes and lifting them back.
    """

    def setUp(self):
        self.patch = MongePatch()
        self.mesh = sample_triangulation(self.patch, 0.25, boundary_offset=0.0)

    def test_discretize_p1_and_p0(self):
        x, y = self.mesh.vertices[:, 0], self.mesh.vertices[:, 1]
        p1 = discretize_signal(self.patch, linear_signal, self.mesh, "p1")
        self.assertIsInstance(p1, SignalP1)
        np.testing.assert_allclose(p1.values, x + 2.0 * y, atol=1e-14)
        p0 = discretize_signal(self.patch, linear_signal, self.mesh, "p0")
        self.assertIsInstance(p0, SignalP0)
        np.testing.assert_allclose(p0.values, (x + 2.0 * y)[self.mesh.triangles].mean(axis=1), atol=1e-14)

    def test_discretize_clamps_to_the_domain(self):
        """Vertices beyond the patch boundary take the value at the nearest domain point."""
        mesh = sample_triangulation(self.patch, 0.25, boundary_offset=0.1)
        p1 = discretize_signal(self.patch, linear_signal, mesh, "p1")
        x = np.clip(mesh.vertices[:, 0], 0.0, 1.0)
        y = np.clip(mesh.vertices[:, 1], 0.0, 1.0)
        np.testing.assert_allclose(p1.values, x + 2.0 * y, atol=1e-14)

    def test_discretize_outside_reach(self):
        far = self.mesh.transformed(translation=(0.0, 0.0, 3.0))
        with self.assertRaises(OutsideReach):
            discretize_signal(self.patch, linear_signal, far, "p1")

    def test_discretize_unknown_element(self):
        with self.assertRaises(BadParams) as ctx:
            discretize_signal(self.patch, linear_signal, self.mesh, "p2")
        self.assertIsInstance(ctx.exception, ValidationError)

    def test_lift_reproduces_linear_signal(self):
        signal = discretize_signal(self.patch, linear_signal, self.mesh, "p1")
        rng = np.random.default_rng(4)
        u, v = rng.uniform(0.05, 0.95, 30), rng.uniform(0.05, 0.95, 30)
        lifted = lift_signal(signal, self.mesh, self.patch, u, v)
        self.assertTrue(lifted.hit.all())
        np.testing.assert_allclose(lifted.values, u + 2.0 * v, atol=1e-12)

    def test_lift_p0_takes_triangle_value(self):
        values = np.arange(self.mesh.n_triangles, dtype=float)
        lifted = lift_signal(SignalP0(self.mesh, values), self.mesh, self.patch,
                             self.mesh.barycenters[:, 0], self.mesh.barycenters[:, 1])
        np.testing.assert_array_equal(lifted.values, values)

    def test_lift_misses_outside_the_mesh(self):
        signal = SignalP1(self.mesh, np.ones(self.mesh.n_vertices))
        u, v = np.array([0.5, 1.5]), np.array([0.5, 0.5])
        lifted = lift_signal(signal, self.mesh, self.patch, u, v, weights=[0.25, 0.75])
        self.assertEqual(lifted.hit.tolist(), [True, False])
        self.assertEqual(lifted.values[1], 0.0)
        self.assertEqual(lifted.n_missed, 1)
        self.assertAlmostEqual(lifted.missed_measure, 0.75)
        with self.assertRaises(LiftMiss):
            lift_signal(signal, self.mesh, self.patch, u, v, strict=True)


if __name__ == '__main__':
    unittest.main()
