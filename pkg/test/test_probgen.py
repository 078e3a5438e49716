import unittest

import numpy as np

from utils.errors import ContractViolation
from utils.probgen import (
    EigenProfile,
    GenSpec,
    certified_kappa,
    demo_instance,
    derive_seed,
    instance_from_json,
    instance_to_json,
    make_instance,
    random_orthogonal,
    random_spd,
    sym_eig,
)


class RandomSpdTests(unittest.TestCase):
    def test_two_dimensional_spectrum(self):
        for kappa in (1.5, 2.0, 10.0, 50.0):
            eigenvalues = np.linalg.eigvalsh(random_spd(GenSpec(d=2, kappa=kappa, seed=1)))
            np.testing.assert_allclose(eigenvalues, [1.0, kappa], rtol=1e-10)

    def test_certified_kappa(self):
        for d in (2, 4, 8):
            for kappa in (1.5, 5.0, 50.0):
                Q = random_spd(GenSpec(d=d, kappa=kappa, seed=d))
                self.assertLessEqual(abs(certified_kappa(Q) - kappa), 1e-6 * kappa, f"d={d} kappa={kappa}")

    def test_exact_symmetry(self):
        Q = random_spd(GenSpec(d=8, kappa=20.0, seed=3))
        np.testing.assert_array_equal(Q, Q.T)

    def test_same_seed_same_matrix(self):
        spec = GenSpec(d=4, kappa=3.0, seed=42)
        np.testing.assert_array_equal(random_spd(spec), random_spd(spec))
        self.assertFalse(np.array_equal(random_spd(spec), random_spd(GenSpec(d=4, kappa=3.0, seed=43))))

    def test_two_point_profile(self):
        Q = random_spd(GenSpec(d=6, kappa=10.0, seed=5, eigen_profile="two-point"))
        eigenvalues = np.linalg.eigvalsh(Q)
        for value in eigenvalues:
            self.assertTrue(min(abs(value - 1.0), abs(value - 10.0)) < 1e-9)

    def test_random_orthogonal(self):
        u = random_orthogonal(5, np.random.default_rng(0))
        np.testing.assert_allclose(u.T @ u, np.eye(5), atol=1e-12)


class MakeInstanceTests(unittest.TestCase):
    def test_instance_properties(self):
        for d in (2, 4, 8):
            for kappa in (1.5, 3.0, 20.0):
                inst = make_instance(GenSpec(d=d, kappa=kappa, seed=7))
                self.assertAlmostEqual(inst.R, 1.0, places=12)
                self.assertLessEqual(np.max(np.abs(inst.Q @ inst.x_star + inst.p)), 1e-12)
                self.assertTrue(np.all(np.abs(inst.x_star) <= 1.0))
                start = inst.tolerance(inst.x0)
                self.assertGreaterEqual(start, 0.5 - 1e-12)
                self.assertLessEqual(start, kappa / 2 + 1e-12)
                inst.validate()

    def test_rayleigh_quotients_within_bounds(self):
        rng = np.random.default_rng(474)
        for profile in ("two-point", "uniform-spread"):
            for d in (2, 4, 8):
                inst = make_instance(GenSpec(d=d, kappa=20.0, seed=d, eigen_profile=profile))
                for _ in range(100):
                    x = rng.standard_normal(d)
                    quotient = x @ inst.Q @ x / (x @ x)
                    self.assertGreaterEqual(quotient, inst.lambda_min - 1e-12)
                    self.assertLessEqual(quotient, inst.lambda_max + 1e-12)

    def test_start_has_equal_energy_per_eigenvector(self):
        for profile in ("two-point", "uniform-spread"):
            inst = make_instance(GenSpec(d=8, kappa=5.0, seed=12, eigen_profile=profile))
            eigenvalues, vectors = np.linalg.eigh(inst.Q)
            energy = (vectors.T @ (inst.x0 - inst.x_star)) ** 2
            for value in np.unique(np.round(eigenvalues, 8)):
                eigenspace = np.isclose(eigenvalues, value, atol=1e-7)
                self.assertAlmostEqual(energy[eigenspace].sum(), eigenspace.sum() / 8, places=9)

    def test_objective_gap_matches_tolerance(self):
        inst = make_instance(GenSpec(d=4, kappa=5.0, seed=8))
        x = inst.x0 + 0.1
        self.assertAlmostEqual(inst.objective(x) - inst.objective(inst.x_star), inst.tolerance(x), places=10)

    def test_instance_id(self):
        self.assertEqual(make_instance(GenSpec(d=2, kappa=1.5, seed=3)).instance_id, "d2-k1.5-s3")
        self.assertEqual(make_instance(GenSpec(d=2, kappa=1.5, seed=3), "custom").instance_id, "custom")

    def test_demo_instance(self):
        inst = demo_instance(11)
        np.testing.assert_array_equal(inst.x_star, [1.0, 1.0])
        np.testing.assert_array_equal(inst.x0, [3.0, 3.0])
        self.assertEqual(inst.kappa, 2.0)
        inst.validate()

    def test_validate_reports_every_failure(self):
        inst = make_instance(GenSpec(d=2, kappa=2.0, seed=1))
        broken = type(inst)(Q=inst.Q, p=inst.p + 1.0, lambda_min=3.0, lambda_max=2.0,
                            x_star=inst.x_star, x0=inst.x0)
        with self.assertRaises(ContractViolation) as ctx:
            broken.validate()
        self.assertIn("lambda_min <= lambda_max", str(ctx.exception))
        self.assertIn("Q x* + p", str(ctx.exception))


class GenSpecTests(unittest.TestCase):
    def test_rejects_bad_arguments(self):
        for kwargs in ({"d": 1, "kappa": 2.0, "seed": 0},
                       {"d": 2, "kappa": 0.5, "seed": 0},
                       {"d": 2, "kappa": 2.0, "seed": -1}):
            with self.assertRaises(ContractViolation):
                GenSpec(**kwargs)

    def test_profile_coercion(self):
        self.assertIs(GenSpec(d=2, kappa=2.0, seed=0, eigen_profile="two-point").eigen_profile,
                      EigenProfile.TWO_POINT)

    def test_derive_seed(self):
        self.assertEqual(derive_seed(0, 4, 10.0, 3), derive_seed(0, 4, 10.0, 3))
        seeds = {derive_seed(0, d, k, r) for d in (2, 4) for k in (1.5, 2.0) for r in range(10)}
        self.assertEqual(len(seeds), 40)
        self.assertTrue(all(0 <= s < 2 ** 64 for s in seeds))


class JacobiTests(unittest.TestCase):
    def test_two_by_two(self):
        eigenvalues, vectors = sym_eig(np.array([[2.0, 1.0], [1.0, 2.0]]))
        np.testing.assert_allclose(eigenvalues, [1.0, 3.0], atol=1e-12)
        np.testing.assert_allclose(np.abs(vectors), np.full((2, 2), np.sqrt(0.5)), atol=1e-12)

    def test_diagonal_input(self):
        eigenvalues, vectors = sym_eig(np.diag([3.0, 1.0, 2.0]))
        np.testing.assert_array_equal(eigenvalues, [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(np.abs(vectors), np.eye(3)[:, [1, 2, 0]])

    def test_decomposition(self):
        rng = np.random.default_rng(9)
        for d in (3, 5, 8):
            M = rng.standard_normal((d, d))
            M = M + M.T
            eigenvalues, vectors = sym_eig(M)
            np.testing.assert_allclose(vectors.T @ vectors, np.eye(d), atol=1e-10)
            np.testing.assert_allclose(vectors @ np.diag(eigenvalues) @ vectors.T, M, atol=1e-10)
            np.testing.assert_allclose(eigenvalues, np.linalg.eigvalsh(M), atol=1e-10)

    def test_rejects_asymmetric(self):
        with self.assertRaises(ContractViolation):
            sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_rejects_indefinite_for_kappa(self):
        with self.assertRaises(ContractViolation):
            certified_kappa(np.diag([1.0, -2.0]))


class InstanceJsonTests(unittest.TestCase):
    def test_round_trip(self):
        inst = make_instance(GenSpec(d=4, kappa=5.0, seed=2))
        back = instance_from_json(instance_to_json(inst))
        np.testing.assert_array_equal(back.Q, inst.Q)
        np.testing.assert_array_equal(back.x0, inst.x0)
        self.assertEqual(back.instance_id, inst.instance_id)
        self.assertEqual(back.kappa, inst.kappa)

    def test_missing_fields(self):
        with self.assertRaises(ContractViolation) as ctx:
            instance_from_json({"d": 2, "Q": [1, 0, 0, 1]})
        self.assertIn("Expected format", str(ctx.exception))

    def test_size_mismatch(self):
        data = instance_to_json(make_instance(GenSpec(d=2, kappa=2.0, seed=0)))
        data["p"] = [1.0, 2.0, 3.0]
        with self.assertRaises(ContractViolation):
            instance_from_json(data)


if __name__ == '__main__':
    unittest.main()
