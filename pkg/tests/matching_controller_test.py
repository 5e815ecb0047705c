import os
import sys
import unittest

import numpy as np

# Add parent directory to system path to allow imports from src folder
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.controllers.matching_controller import TRACE_HEADER, MatchingController, MatchProblem
from src.utils.energy_model import DescentConfig, EnergyModel
from src.utils.errors import MeshMismatch, NonsmoothEnergy, WrongModel
from src.utils.fem import SignalP0, SignalP1
from src.utils.mesh import TriangleMesh, grid_mesh, total_area, unit_square_grid
from src.utils.varifold import KernelParams, from_fshape


def wavy_mesh(rng, n=3):
    base = grid_mesh(n, n)
    v = base.vertices.copy()
    v[:, 2] = rng.uniform(-0.2, 0.2, size=len(v))
    return TriangleMesh(v, base.triangles)


def shifted_target(mesh, rng, shift=(0.1, 0.05, 0.1)):
    moved = mesh.transformed(translation=shift)
    return from_fshape(moved, SignalP0(moved, rng.normal(size=moved.n_triangles)))


class TestEnergies(unittest.TestCase):
    """
    Energy breakdowns and gradients of the three models.
    """

    def setUp(self):
        self.rng = np.random.default_rng(21)
        self.kernel = KernelParams(0.4, 1.0, 0.8)
        self.controller = MatchingController()
        self.mesh = wavy_mesh(self.rng)
        self.target = shifted_target(self.mesh, self.rng)
        self.models = [
            EnergyModel("l2", self.kernel, gamma_f=0.7, gamma_w=1.5),
            EnergyModel("h1", self.kernel, alpha=0.3, beta=0.2, gamma_w=1.5),
            EnergyModel("bv", self.kernel, alpha=0.3, beta=0.2, gamma_w=1.5, epsilon=1e-2),
        ]

    def random_signal(self, problem):
        return problem.signal(self.rng.normal(size=problem.n_dofs))

    def test_breakdown_sums_to_total(self):
        for model in self.models:
            problem = MatchProblem(self.mesh, model, self.target)
            breakdown = self.controller.energy(problem, self.random_signal(problem))
            self.assertEqual(set(breakdown.terms), set(model.term_names))
            self.assertAlmostEqual(breakdown.total, sum(breakdown.terms.values()), places=12)
            self.assertAlmostEqual(breakdown.penalty + breakdown.varifold, breakdown.total, places=12)

    def test_zero_signal_without_attachment(self):
        area = total_area(self.mesh)
        expected = {"l2": 0.0, "h1": 0.0, "bv": (0.3 + 0.2) * 1e-2 * area}
        for model in self.models:
            problem = MatchProblem(self.mesh, model.with_weights(gamma_w=0.0), self.target)
            self.assertIsNone(problem.varifold)
            energy = self.controller.energy(problem, problem.initial)
            self.assertAlmostEqual(energy.total, expected[model.variant], places=13)
            self.assertEqual(energy.varifold, 0.0)

    def test_gradients_match_finite_differences(self):
        """Central differences with step 1e-5 on 50 random 12 to 50 triangle instances per model."""
        step = 1e-5
        models = [
            EnergyModel("l2", self.kernel, gamma_f=0.7, gamma_w=1.5),
            EnergyModel("h1", self.kernel, alpha=0.3, beta=0.2, gamma_w=1.5),
            EnergyModel("bv", self.kernel, alpha=0.3, beta=0.2, gamma_w=1.5, epsilon=1e-3),
        ]
        for model in models:
            for instance in range(50):
                with self.subTest(model=model.variant, instance=instance):
                    rng = np.random.default_rng(1000 + instance)
                    base = grid_mesh(int(rng.integers(3, 6)), int(rng.integers(2, 6)))
                    v = base.vertices.copy()
                    v[:, 2] = rng.uniform(-0.2, 0.2, size=len(v))
                    mesh = TriangleMesh(v, base.triangles)
                    problem = MatchProblem(mesh, model, shifted_target(mesh, rng))
                    # values kept away from zero so the smoothed kinks stay out of the stencil
                    x0 = rng.uniform(0.2, 2.0, size=problem.n_dofs) * rng.choice([-1.0, 1.0], size=problem.n_dofs)
                    grad = self.controller.energy_gradient(problem, problem.signal(x0))
                    numeric = np.zeros_like(x0)
                    for i in range(len(x0)):
                        e = np.zeros_like(x0)
                        e[i] = step
                        plus = self.controller.energy(problem, problem.signal(x0 + e)).total
                        minus = self.controller.energy(problem, problem.signal(x0 - e)).total
                        numeric[i] = (plus - minus) / (2.0 * step)
                    scale = max(np.max(np.abs(numeric)), 1e-12)
                    self.assertLessEqual(np.max(np.abs(grad - numeric)) / scale, 1e-6)

    def test_l2_gradient_without_attachment(self):
        model = EnergyModel("l2", self.kernel, gamma_f=2.5, gamma_w=0.0)
        problem = MatchProblem(self.mesh, model, self.target)
        values = self.rng.normal(size=self.mesh.n_triangles)
        grad = self.controller.energy_gradient(problem, problem.signal(values))
        np.testing.assert_allclose(grad, 2.5 * self.mesh.areas * values, rtol=1e-15)

    def test_unsmoothed_bv(self):
        problem = MatchProblem(self.mesh, self.models[2], self.target)
        signal = self.random_signal(problem)
        smooth = self.controller.energy(problem, signal)
        exact = self.controller.energy(problem, signal, smoothed=False)
        self.assertLess(exact.penalty, smooth.penalty)
        self.assertAlmostEqual(exact.varifold, smooth.varifold, places=14)
        with self.assertRaises(NonsmoothEnergy):
            self.controller.energy_gradient(problem, signal, smoothed=False)

    def test_signal_checks(self):
        problem = MatchProblem(self.mesh, self.models[1], self.target)
        with self.assertRaises(WrongModel):
            self.controller.energy(problem, SignalP0(self.mesh, np.zeros(self.mesh.n_triangles)))
        other = wavy_mesh(self.rng)
        with self.assertRaises(MeshMismatch):
            self.controller.energy(problem, SignalP1(other, np.zeros(other.n_vertices)))

    def test_relabelling_does_not_change_the_energy(self):
        model = self.models[0]
        values = self.rng.normal(size=self.mesh.n_triangles)
        energy = self.controller.energy(MatchProblem(self.mesh, model, self.target),
                                        SignalP0(self.mesh, values)).total
        vperm = self.rng.permutation(self.mesh.n_vertices)
        tperm = self.rng.permutation(self.mesh.n_triangles)
        relabelled = self.mesh.permuted(vperm, tperm)
        moved = self.controller.energy(MatchProblem(relabelled, model, self.target),
                                       SignalP0(relabelled, values[tperm])).total
        self.assertAlmostEqual(moved, energy, delta=1e-12 * max(1.0, abs(energy)))


class TestDescent(unittest.TestCase):
    """
    Backtracking gradient descent.
    """

    def setUp(self):
        self.rng = np.random.default_rng(8)
        self.kernel = KernelParams(0.5, 1.0, 1.0)
        self.controller = MatchingController(DescentConfig(max_iters=300, grad_tol=1e-9))
        self.mesh = unit_square_grid(3)
        self.target = shifted_target(self.mesh, self.rng)

    def test_accepted_energies_never_increase(self):
        for model in (EnergyModel("l2", self.kernel, gamma_f=0.5),
                      EnergyModel("h1", self.kernel, alpha=0.1, beta=0.05),
                      EnergyModel("bv", self.kernel, alpha=0.1, beta=0.05, epsilon=1e-2)):
            with self.subTest(model=model.variant):
                trace = self.controller.minimize(MatchProblem(self.mesh, model, self.target))
                energies = [r.energy.total for r in trace.accepted]
                self.assertTrue(all(b <= a for a, b in zip(energies, energies[1:])))
                self.assertLess(trace.final_energy, energies[0])
                self.assertIn(trace.reason, ("converged", "max_iters", "step_underflow"))

    def test_rejected_trials_are_recorded(self):
        model = EnergyModel("l2", self.kernel, gamma_f=1.0, gamma_w=0.0)
        problem = MatchProblem(self.mesh, model, self.target)
        trace = self.controller.minimize(problem, DescentConfig(initial_step=500.0, max_iters=5, grad_tol=0.0),
                                         initial=problem.signal(np.ones(self.mesh.n_triangles)))
        self.assertTrue(any(not r.accepted for r in trace.records))
        self.assertEqual(len(trace.rows()), len(trace.records))
        self.assertEqual(len(trace.rows()[0]), len(TRACE_HEADER))

    def test_penalty_only_converges_to_zero(self):
        """Without attachment every model is minimized by f = 0."""
        cases = [
            (EnergyModel("l2", self.kernel, gamma_f=1.0, gamma_w=0.0),
             DescentConfig(max_iters=1000, grad_tol=1e-12)),
            (EnergyModel("h1", self.kernel, alpha=1.0, beta=0.05, gamma_w=0.0),
             DescentConfig(max_iters=20000, grad_tol=1e-10)),
            (EnergyModel("bv", self.kernel, alpha=1.0, beta=0.1, gamma_w=0.0, epsilon=1e-3),
             DescentConfig(max_iters=50000, grad_tol=1e-7)),
        ]
        for model, config in cases:
            with self.subTest(model=model.variant):
                problem = MatchProblem(self.mesh, model, self.target)
                start = problem.signal(self.rng.normal(size=problem.n_dofs))
                trace = self.controller.minimize(problem, config, initial=start)
                self.assertNotEqual(trace.reason, "max_iters")
                self.assertLessEqual(np.max(np.abs(trace.signal.values)), 1e-6)

    def test_identical_shapes_stop_immediately(self):
        """Starting at the target signal with no penalty, the gradient is exactly zero."""
        values = self.rng.normal(size=self.mesh.n_triangles)
        model = EnergyModel("l2", self.kernel, gamma_f=0.0, gamma_w=1.0)
        target_signal = SignalP0(self.mesh, values)
        problem = MatchProblem.from_fshapes(self.mesh, model, self.mesh, target_signal, initial=target_signal)
        trace = self.controller.minimize(problem)
        self.assertEqual(trace.reason, "converged")
        self.assertEqual(trace.iterations, 0)
        self.assertAlmostEqual(trace.final_energy, 0.0, places=12)

    def test_iteration_limit_and_step_underflow(self):
        model = EnergyModel("l2", self.kernel)
        problem = MatchProblem(self.mesh, model, self.target)
        limited = self.controller.minimize(problem, DescentConfig(max_iters=2, grad_tol=0.0))
        self.assertEqual(limited.reason, "max_iters")
        self.assertEqual(limited.iterations, 2)
        stuck = self.controller.minimize(problem, DescentConfig(initial_step=1e-15, min_step=1e-14))
        self.assertEqual(stuck.reason, "step_underflow")
        self.assertEqual(stuck.iterations, 0)

    def test_smoothed_direction_still_descends(self):
        model = EnergyModel("h1", self.kernel, alpha=0.1, beta=0.05)
        problem = MatchProblem(self.mesh, model, self.target)
        trace = self.controller.minimize(problem, DescentConfig(max_iters=30, smoothing=0.3))
        energies = [r.energy.total for r in trace.accepted]
        self.assertGreater(len(energies), 1)
        self.assertTrue(all(b <= a for a, b in zip(energies, energies[1:])))

    def test_smoothing_constant_gradient(self):
        """A constant gradient keeps its sign and never grows."""
        problem = MatchProblem(self.mesh, EnergyModel("l2", self.kernel), self.target)
        smoothed = self.controller.smooth_direction(problem, np.ones(problem.n_dofs), 0.2)
        self.assertTrue(np.all(smoothed > 0))
        self.assertAlmostEqual(float(smoothed.max()), 1.0, places=14)


class TestAgainstBruteForce(unittest.TestCase):
    """
    L2 descent checked against grid searches. The full lattice is only
    enumerable for two triangles; on eight triangles the descent optimum is
    checked against every axis scan through it and a random lattice sample.
    The penalty curvature dominates the attachment there, so the energy is
    strictly convex and the optimum is global.
    """

    def test_descent_matches_grid_minimum(self):
        mesh = unit_square_grid(1)
        model = EnergyModel("l2", KernelParams(1.0, 1.0, 2.0), gamma_f=2.0, gamma_w=1.0)
        problem = MatchProblem.from_fshapes(mesh, model, mesh, SignalP0(mesh, [1.0, -1.0]))
        controller = MatchingController(DescentConfig(max_iters=2000, grad_tol=1e-10))
        descent = controller.minimize(problem).final_energy

        axis = np.linspace(-2.0, 2.0, 201)
        grid_min = min(controller.energy(problem, problem.signal([a, b])).total for a in axis for b in axis)
        self.assertLessEqual(descent, grid_min + 1e-9)
        self.assertLessEqual(grid_min - descent, 1e-3)

    def test_eight_triangles_against_lattice(self):
        mesh = unit_square_grid(2)
        model = EnergyModel("l2", KernelParams(1.0, 1.0, 2.0), gamma_f=4.0, gamma_w=1.0)
        target = SignalP0(mesh, np.tile([1.0, -1.0], mesh.n_triangles // 2))
        problem = MatchProblem.from_fshapes(mesh, model, mesh, target)
        controller = MatchingController(DescentConfig(max_iters=5000, grad_tol=1e-10))
        trace = controller.minimize(problem)
        best, x_star = trace.final_energy, trace.signal.values.copy()
        self.assertTrue(np.all(np.abs(x_star) <= 2.0))

        def energy(x):
            return controller.energy(problem, problem.signal(x)).total

        axis = np.linspace(-2.0, 2.0, 201)
        for i in range(len(x_star)):
            scan = x_star.copy()
            for a in axis:
                scan[i] = a
                self.assertGreaterEqual(energy(scan), best - 1e-9)

        rng = np.random.default_rng(3)
        for _ in range(2000):
            self.assertGreaterEqual(energy(rng.choice(axis, size=len(x_star))), best - 1e-9)

        nearest = axis[np.abs(axis[None, :] - x_star[:, None]).argmin(axis=1)]
        self.assertLessEqual(energy(nearest) - best, 1e-3)


class TestMinimumBound(unittest.TestCase):
    """
    sup|f*| gamma_f / (gamma_w (area_X + area_Y)) stays bounded.
    """

    def setUp(self):
        self.kernel = KernelParams(0.5, 1.0, 1.0)
        self.mesh = unit_square_grid(2)
        target_mesh = self.mesh.transformed(translation=(0.2, 0.0, 0.1))
        self.target = from_fshape(target_mesh, SignalP0(target_mesh, np.ones(target_mesh.n_triangles)))
        self.controller = MatchingController(DescentConfig(max_iters=500, grad_tol=1e-10))

    def test_ratio_is_bounded(self):
        for gamma_f in (0.5, 2.0, 8.0):
            problem = MatchProblem(self.mesh, EnergyModel("l2", self.kernel, gamma_f=gamma_f), self.target)
            report = self.controller.minimum_bound_check(self.controller.minimize(problem), problem)
            self.assertGreater(report.ratio, 0.0)
            self.assertLessEqual(report.ratio, 1.0)
            self.assertAlmostEqual(report.area_source, 1.0, places=14)
            self.assertAlmostEqual(report.area_target, 1.0, places=14)

    def test_sweep_does_not_explode(self):
        problem = MatchProblem(self.mesh, EnergyModel("l2", self.kernel), self.target)
        sweep = self.controller.minimum_bound_sweep(problem, [1.0, 2.0, 4.0])
        self.assertEqual(len(sweep.ratios), 3)
        self.assertFalse(sweep.exploding)

    def test_zero_attachment_gives_zero_ratio(self):
        problem = MatchProblem(self.mesh, EnergyModel("l2", self.kernel, gamma_w=0.0), self.target)
        report = self.controller.minimum_bound_check(self.controller.minimize(problem), problem)
        self.assertEqual(report.ratio, 0.0)

    def test_only_for_l2(self):
        problem = MatchProblem(self.mesh, EnergyModel("h1", self.kernel), self.target)
        trace = self.controller.minimize(problem, DescentConfig(max_iters=1))
        with self.assertRaises(WrongModel):
            self.controller.minimum_bound_check(trace, problem)


if __name__ == '__main__':
    unittest.main()
