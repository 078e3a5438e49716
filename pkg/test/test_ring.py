import unittest

import numpy as np

from utils.errors import AlignmentError, ContractViolation, DepthExhausted, DomainMismatch
from utils.ring import (
    Direction,
    Domain,
    PrimeModulus,
    RnsBasis,
    RnsPoly,
    SampleKind,
    apply_automorphism,
    drop_last_prime_and_round,
    find_ntt_primes,
    mulmod,
    ntt,
    poly_mul,
    sample,
    to_coefficient,
    to_evaluation,
)


def schoolbook(a, b, q):
    """Negacyclic product mod (X^n + 1, q) by the O(n^2) definition"""
    n = len(a)
    out = [0] * n
    for i in range(n):
        for j in range(n):
            k = i + j
            if k < n:
                out[k] += int(a[i]) * int(b[j])
            else:
                out[k - n] -= int(a[i]) * int(b[j])
    return [v % q for v in out]


def single_prime(values, q, n):
    return RnsPoly.from_integers(np.asarray(values, dtype=np.int64), (PrimeModulus.create(q, n),))


class MulmodTests(unittest.TestCase):
    def test_matches_python_integers(self):
        rng = np.random.default_rng(3)
        for bits in (30, 40, 50, 60):
            q = find_ntt_primes(16, bits, 1)[0]
            a = rng.integers(0, q, size=500, dtype=np.uint64)
            b = rng.integers(0, q, size=500, dtype=np.uint64)
            got = mulmod(a, b, np.uint64(q), bits)
            expected = [int(x) * int(y) % q for x, y in zip(a, b)]
            self.assertEqual(got.tolist(), expected, f"{bits}-bit prime")


class PrimeModulusTests(unittest.TestCase):
    def test_rejects_non_prime(self):
        with self.assertRaises(ContractViolation):
            PrimeModulus.create(91, 16)

    def test_rejects_prime_not_one_mod_2n(self):
        with self.assertRaises(ContractViolation):
            PrimeModulus.create(101, 16)

    def test_rejects_non_power_of_two_degree(self):
        with self.assertRaises(ContractViolation):
            PrimeModulus.create(97, 12)

    def test_root_is_primitive_2n_th_root(self):
        m = PrimeModulus.create(97, 16)
        self.assertEqual(pow(m.root, 16, 97), 96)
        self.assertEqual(pow(m.root, 32, 97), 1)

    def test_find_ntt_primes(self):
        primes = find_ntt_primes(1024, 40, 5)
        self.assertEqual(len(set(primes)), 5)
        self.assertEqual(primes, sorted(primes, reverse=True))
        for p in primes:
            self.assertEqual(p % 2048, 1)
            self.assertEqual(p.bit_length(), 40)

    def test_generated_basis_layout(self):
        basis = RnsBasis.generate(1024, 3, 40)
        self.assertEqual(basis.depth, 3)
        self.assertEqual(basis.primes[0].bits, 50)
        self.assertGreater(basis.special.value, basis.primes[0].value)
        self.assertEqual(basis.total_bits, 50 + 3 * 40 + 50)
        self.assertEqual(len(basis.extended(1)), 3)


class NttTests(unittest.TestCase):
    def test_round_trip_single_prime(self):
        rng = np.random.default_rng(0)
        moduli = (PrimeModulus.create(97, 16),)
        for _ in range(1000):
            x = RnsPoly(moduli, rng.integers(0, 97, size=(1, 16), dtype=np.uint64))
            back = ntt(ntt(x, Direction.FORWARD), Direction.INVERSE)
            self.assertEqual(back, x)

    def test_round_trip_multi_prime(self):
        rng = np.random.default_rng(1)
        basis = RnsBasis.generate(256, 2, 40)
        moduli = basis.extended(2)
        for _ in range(50):
            x = sample(SampleKind.UNIFORM, rng, moduli)
            self.assertEqual(to_coefficient(to_evaluation(x)), x)

    def test_zero_maps_to_zero(self):
        zero = RnsPoly.zero((PrimeModulus.create(97, 16),))
        self.assertFalse(np.any(ntt(zero, Direction.FORWARD).residues))

    def test_domain_mismatch(self):
        x = single_prime([1, 2, 3, 4], 97, 4)
        with self.assertRaises(DomainMismatch):
            ntt(x, Direction.INVERSE)
        with self.assertRaises(DomainMismatch):
            ntt(ntt(x, Direction.FORWARD), Direction.FORWARD)

    def test_square_of_one_plus_x(self):
        x = to_evaluation(single_prime([1, 1, 0, 0], 97, 4))
        product = to_coefficient(x * x)
        self.assertEqual(product.residues[0].tolist(), [1, 2, 1, 0])


class PolyMulTests(unittest.TestCase):
    def test_x_cubed_times_x_is_minus_one(self):
        a = single_prime([0, 0, 0, 1], 97, 4)
        b = single_prime([0, 1, 0, 0], 97, 4)
        self.assertEqual(poly_mul(a, b).residues[0].tolist(), [96, 0, 0, 0])

    def test_identity(self):
        a = single_prime([5, 7, 11, 13, 2, 3, 1, 0], 97, 8)
        one = single_prime([1, 0, 0, 0, 0, 0, 0, 0], 97, 8)
        self.assertEqual(poly_mul(a, one), a)

    def test_matches_schoolbook(self):
        rng = np.random.default_rng(2)
        for n in (4, 8, 16):
            moduli = (PrimeModulus.create(97, n),)
            for _ in range(100):
                a = rng.integers(0, 97, size=n)
                b = rng.integers(0, 97, size=n)
                got = poly_mul(RnsPoly.from_integers(a, moduli), RnsPoly.from_integers(b, moduli))
                self.assertEqual(got.residues[0].tolist(), schoolbook(a, b, 97))

    def test_evaluation_domain_product_stays_in_evaluation(self):
        a = to_evaluation(single_prime([1, 2, 3, 4], 97, 4))
        self.assertIs(poly_mul(a, a).domain, Domain.EVALUATION)

    def test_level_mismatch(self):
        basis = RnsBasis.from_primes([17, 5], 2, 20)
        a = RnsPoly.zero(basis.at_level(1))
        b = RnsPoly.zero(basis.at_level(0))
        with self.assertRaises(AlignmentError):
            poly_mul(a, b)
        with self.assertRaises(AlignmentError):
            a + b


class RoundingTests(unittest.TestCase):
    def setUp(self):
        self.moduli = RnsBasis.from_primes([17, 5], 2, 20).at_level(1)

    def test_toy_example(self):
        out = drop_last_prime_and_round(RnsPoly.from_integers([7, 0], self.moduli))
        self.assertEqual(out.level, 0)
        self.assertEqual(out.residues[0].tolist(), [1, 0])

    def test_exhaustive_against_rational_rounding(self):
        for x in range(-42, 43):
            out = drop_last_prime_and_round(RnsPoly.from_integers([x, -x], self.moduli))
            got = out.to_integers().tolist()
            for value, result in zip((x, -x), got):
                self.assertLessEqual(abs(result - value / 5), 0.5, f"x={value}")

    def test_exact_multiples(self):
        out = drop_last_prime_and_round(RnsPoly.from_integers([35, -20], self.moduli))
        self.assertEqual(out.to_integers().tolist(), [7, -4])

    def test_wide_basis_against_crt(self):
        rng = np.random.default_rng(4)
        basis = RnsBasis.generate(64, 2, 30)
        moduli = basis.at_level(2)
        x = sample(SampleKind.UNIFORM, rng, moduli)
        exact = x.to_integers()
        q_last = moduli[-1].value
        got = drop_last_prime_and_round(x).to_integers()
        for value, result in zip(exact, got):
            self.assertLessEqual(abs(2 * result * q_last - 2 * value), q_last)

    def test_level_zero(self):
        with self.assertRaises(DepthExhausted):
            drop_last_prime_and_round(RnsPoly.zero(self.moduli[:1]))

    def test_evaluation_input(self):
        with self.assertRaises(DomainMismatch):
            drop_last_prime_and_round(to_evaluation(RnsPoly.zero(self.moduli)))


class AutomorphismTests(unittest.TestCase):
    def test_monomials(self):
        moduli = (PrimeModulus.create(97, 8),)
        x = RnsPoly.from_integers([0, 1, 0, 0, 0, 0, 0, 0], moduli)
        self.assertEqual(apply_automorphism(x, 5).residues[0].tolist(), [0, 0, 0, 0, 0, 1, 0, 0])
        x2 = RnsPoly.from_integers([0, 0, 1, 0, 0, 0, 0, 0], moduli)
        self.assertEqual(apply_automorphism(x2, 5).residues[0].tolist(), [0, 0, 96, 0, 0, 0, 0, 0])

    def test_is_ring_homomorphism(self):
        rng = np.random.default_rng(5)
        moduli = (PrimeModulus.create(97, 16),)
        a = sample(SampleKind.UNIFORM, rng, moduli)
        b = sample(SampleKind.UNIFORM, rng, moduli)
        self.assertEqual(
            apply_automorphism(a * b, 25),
            apply_automorphism(a, 25) * apply_automorphism(b, 25),
        )

    def test_even_element(self):
        with self.assertRaises(ContractViolation):
            apply_automorphism(single_prime([1, 0, 0, 0], 97, 4), 2)


class SampleTests(unittest.TestCase):
    def setUp(self):
        self.moduli = RnsBasis.generate(4096, 1, 30).at_level(1)

    def test_ternary_coefficients(self):
        values = sample(SampleKind.TERNARY, np.random.default_rng(6), self.moduli).to_integers()
        self.assertTrue(set(values.tolist()) <= {-1, 0, 1})

    def test_same_seed_same_polynomial(self):
        a = sample(SampleKind.GAUSSIAN, np.random.default_rng(7), self.moduli)
        b = sample(SampleKind.GAUSSIAN, np.random.default_rng(7), self.moduli)
        self.assertEqual(a, b)

    def test_gaussian_statistics(self):
        values = sample(SampleKind.GAUSSIAN, np.random.default_rng(8), self.moduli).to_integers()
        values = values.astype(np.float64)
        self.assertLess(abs(values.mean()), 4 * 3.2 / np.sqrt(4096))
        self.assertAlmostEqual(values.std(), 3.2, delta=0.2)

    def test_uniform_residues_below_modulus(self):
        poly = sample(SampleKind.UNIFORM, np.random.default_rng(9), self.moduli)
        for row, m in zip(poly.residues, self.moduli):
            self.assertLess(int(row.max()), m.value)


if __name__ == '__main__':
    unittest.main()
