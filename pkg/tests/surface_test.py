import os
import sys
import unittest

import numpy as np

# Add parent directory to system path to allow imports from src folder
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.utils.errors import BadParams, OutsideReach
from src.utils.surface import AnalyticSurface, CylinderPatch, MongePatch, SphereCap, builtin_surface


class TestCurvatures(unittest.TestCase):
    """
    Principal curvatures from the fundamental forms against closed forms.
    """

    def setUp(self):
        self.u = np.array([0.2, 0.5, 0.9])
        self.v = np.array([0.1, 2.0, 4.0])

    def test_sphere_curvatures(self):
        """Outward normal on a sphere of radius 2: both curvatures 1/2."""
        cap = SphereCap(radius=2.0, theta_max=1.2)
        k1, k2 = AnalyticSurface.principal_curvatures(cap, self.u, self.v)
        np.testing.assert_allclose(k1, 0.5, rtol=1e-12)
        np.testing.assert_allclose(k2, 0.5, rtol=1e-12)

    def test_cylinder_curvatures(self):
        cyl = CylinderPatch(radius=0.5, angle=1.0, height=2.0)
        k1, k2 = AnalyticSurface.principal_curvatures(cyl, self.u - 0.5, self.v / 4)
        np.testing.assert_allclose(k1, 2.0, rtol=1e-12)
        np.testing.assert_allclose(k2, 0.0, atol=1e-12)

    def test_monge_curvatures_at_origin(self):
        """z = a u^2 + b v^2 with upward normal: curvatures -2a and -2b at the origin."""
        patch = MongePatch(a=0.3, b=-0.2)
        k1, k2 = patch.principal_curvatures(0.0, 0.0)
        self.assertAlmostEqual(float(k1), 0.4, places=12)
        self.assertAlmostEqual(float(k2), -0.6, places=12)

    def test_normals_are_unit_and_orthogonal(self):
        for surface in (SphereCap(), CylinderPatch(), MongePatch(a=0.2, b=0.1, c=0.3)):
            u = np.array([0.3, 0.4])
            v = np.array([0.2, 0.7])
            n = surface.normal(u, v)
            pu, pv = surface.derivatives(u, v)
            np.testing.assert_allclose(np.linalg.norm(n, axis=1), 1.0, rtol=1e-14)
            np.testing.assert_allclose(np.sum(n * pu, axis=1), 0.0, atol=1e-14)
            np.testing.assert_allclose(np.sum(n * pv, axis=1), 0.0, atol=1e-14)


class TestProjection(unittest.TestCase):
    """
    Closest-point projection and the reach.
    """

    def test_sphere_projection(self):
        cap = SphereCap(radius=1.0, theta_max=np.pi / 3)
        direction = np.array([np.sin(0.4) * np.cos(1.0), np.sin(0.4) * np.sin(1.0), np.cos(0.4)])
        foot, t = cap.project(1.2 * direction)
        np.testing.assert_allclose(foot, direction, atol=1e-14)
        self.assertAlmostEqual(t, 0.2, places=14)

    def test_inside_sphere_is_negative(self):
        cap = SphereCap(radius=1.0)
        _, t = cap.project((0.0, 0.0, 0.7))
        self.assertAlmostEqual(t, -0.3, places=14)

    def test_outside_reach_raises(self):
        cap = SphereCap(radius=1.0)
        with self.assertRaises(OutsideReach):
            cap.project((0.0, 0.0, 2.5))
        with self.assertRaises(OutsideReach):
            cap.project((0.0, 0.0, 0.0))

    def test_offset_is_respected(self):
        cap = SphereCap(radius=1.0, offset=(0.1, 0.0, 0.0))
        foot, t = cap.project((0.1, 0.0, 1.5))
        np.testing.assert_allclose(foot, [0.1, 0.0, 1.0], atol=1e-14)
        self.assertAlmostEqual(t, 0.5, places=14)

    def test_foot_outside_the_patch_is_flagged(self):
        cap = SphereCap(radius=1.0, theta_max=0.5)
        proj = cap.project_points([(0.0, 0.0, 1.1), (1.1, 0.0, 0.0)])
        self.assertEqual(proj.in_domain.tolist(), [True, False])

    def test_cylinder_projection(self):
        cyl = CylinderPatch(radius=1.0, angle=1.0, height=1.0)
        foot, t = cyl.project((0.8 * np.cos(0.3), 0.8 * np.sin(0.3), 0.4))
        np.testing.assert_allclose(foot, [np.cos(0.3), np.sin(0.3), 0.4], atol=1e-14)
        self.assertAlmostEqual(t, -0.2, places=14)

    def test_monge_projection_recovers_offset_point(self):
        """A point pushed 0.1 along the normal projects back to where it started."""
        patch = MongePatch(a=0.3, b=-0.2)
        rng = np.random.default_rng(2)
        u, v = rng.uniform(0.1, 0.9, 20), rng.uniform(0.1, 0.9, 20)
        points = patch.point(u, v) + 0.1 * patch.normal(u, v)
        proj = patch.project_points(points)
        np.testing.assert_allclose(proj.u, u, atol=1e-8)
        np.testing.assert_allclose(proj.v, v, atol=1e-8)
        np.testing.assert_allclose(proj.t, 0.1, atol=1e-8)
        self.assertTrue(proj.in_domain.all())

    def test_monge_reach(self):
        self.assertAlmostEqual(MongePatch(a=0.3, b=-0.2).reach, 1.0 / 1.2, places=14)
        self.assertAlmostEqual(MongePatch().reach, np.sqrt(2.0), places=14)


class TestAreaAndConstruction(unittest.TestCase):
    """
    Surface quadrature and the name-based builder.
    """

    def test_quadrature_area_matches_closed_form(self):
        for surface in (SphereCap(radius=1.5, theta_max=1.0), CylinderPatch(radius=2.0, angle=1.5, height=0.5)):
            self.assertAlmostEqual(AnalyticSurface.area(surface) / surface.area(), 1.0, places=10)

    def test_monge_area(self):
        self.assertAlmostEqual(MongePatch(width=2.0, depth=0.5).area(), 1.0, places=14)
        curved = MongePatch(a=0.3, b=-0.2)
        self.assertGreater(curved.area(), 1.0)

    def test_builtin_surface(self):
        cap = builtin_surface("sphere_cap", {"radius": 2.0})
        self.assertIsInstance(cap, SphereCap)
        self.assertEqual(cap.radius, 2.0)

    def test_builtin_surface_errors(self):
        with self.assertRaises(BadParams):
            builtin_surface("torus")
        with self.assertRaises(BadParams):
            builtin_surface("sphere_cap", {"colour": 1})
        with self.assertRaises(BadParams):
            builtin_surface("sphere_cap", {"radius": -1.0})
        with self.assertRaises(BadParams):
            builtin_surface("cylinder_patch", {"angle": 7.0})


if __name__ == '__main__':
    unittest.main()
