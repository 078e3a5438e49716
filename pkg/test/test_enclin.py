import unittest
import zlib

import numpy as np

from utils.ckks import CkksParams, SecurityPreset, decrypt, encrypt, get_encoder, keygen, track_operations
from utils.enclin import (
    MATMUL_COSTS,
    EncodedMatrix,
    MatmulMethod,
    PlainLinearMap,
    decode_matrix,
    decode_vector,
    encode_matrix,
    encode_vector_replicated,
    lin_trans,
    make_Vk,
    make_Wk,
    mmult,
    plain_mmult,
    vector_slots,
)
from utils.errors import ContractViolation, DepthExhausted


class IndicatorMapTests(unittest.TestCase):
    A = np.array([10.0, 11.0, 12.0, 13.0])  # (a00, a01, a10, a11)

    def test_vk_examples(self):
        np.testing.assert_array_equal(make_Vk(2, 0).apply(self.A), [10, 11, 13, 12])
        np.testing.assert_array_equal(make_Vk(2, 1).apply(self.A), [11, 10, 12, 13])

    def test_wk_examples(self):
        np.testing.assert_array_equal(make_Wk(2, 0).apply(self.A), [10, 13, 12, 11])
        np.testing.assert_array_equal(make_Wk(2, 1).apply(self.A), [12, 11, 10, 13])

    def test_vk_scales_linearly(self):
        x = np.arange(9.0)
        for k in range(3):
            np.testing.assert_allclose(make_Vk(3, k, -0.5).apply(x), -0.5 * make_Vk(3, k).apply(x))

    def test_permutation_matrices(self):
        for d in range(1, 9):
            for k in range(d):
                for linear_map in (make_Vk(d, k), make_Wk(d, k)):
                    dense = linear_map.to_dense()
                    self.assertTrue(np.all((dense == 0) | (dense == 1)))
                    np.testing.assert_array_equal(dense.sum(axis=0), np.ones(d * d))
                    np.testing.assert_array_equal(dense.sum(axis=1), np.ones(d * d))

    def test_diagonal_counts(self):
        for d in range(2, 9):
            for k in range(d):
                self.assertLessEqual(make_Vk(d, k).diagonal_count, 2 * d - 1)
                self.assertEqual(make_Wk(d, k).diagonal_count, d)
        self.assertEqual(make_Vk(4, 0).diagonal_count, 7)

    def test_index_out_of_range(self):
        with self.assertRaises(ContractViolation):
            make_Vk(3, 3)
        with self.assertRaises(ContractViolation):
            make_Wk(3, -1)

    def test_decomposition_is_matrix_product(self):
        rng = np.random.default_rng(11)
        for d in (2, 3, 4, 8):
            for a in (1.0, -0.5):
                A = rng.standard_normal((d, d))
                B = rng.standard_normal((d, d))
                np.testing.assert_allclose(plain_mmult(A, B, d, a), a * (A @ B), atol=1e-12)

    def test_replicated_vector_layout(self):
        rng = np.random.default_rng(12)
        Q = rng.standard_normal((4, 4))
        x = rng.standard_normal(4)
        out = plain_mmult(Q, vector_slots(x).reshape(4, 4), 4, 1.0)
        np.testing.assert_allclose(out, np.repeat(Q @ x, 4).reshape(4, 4), atol=1e-12)


class PlainLinearMapTests(unittest.TestCase):
    def test_dense_round_trip(self):
        U = np.random.default_rng(13).standard_normal((5, 5))
        np.testing.assert_allclose(PlainLinearMap.from_dense(U).to_dense(), U)

    def test_apply_matches_dense_product(self):
        rng = np.random.default_rng(14)
        U = rng.standard_normal((6, 6))
        x = rng.standard_normal(6)
        np.testing.assert_allclose(PlainLinearMap.from_dense(U).apply(x), U @ x, atol=1e-12)

    def test_zero_diagonals_are_dropped(self):
        linear_map = PlainLinearMap.from_dense(np.diag([2.0, 3.0, 4.0, 5.0]))
        self.assertEqual(linear_map.diagonal_count, 1)
        self.assertEqual(list(linear_map.diagonals), [0])
        self.assertEqual(linear_map.dump(), "0: 2 3 4 5")

    def test_rejects_bad_diagonal(self):
        with self.assertRaises(ContractViolation):
            PlainLinearMap(4, {4: np.ones(4)})
        with self.assertRaises(ContractViolation):
            PlainLinearMap(4, {1: np.ones(3)})


class EncryptedLinearAlgebraTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.params = CkksParams.create(1024, 4, 40, SecurityPreset.INSECURE_TEST, allow_insecure=True)
        cls.keys = keygen(cls.params, np.random.default_rng(7))

    def setUp(self):
        self.rng = np.random.default_rng(zlib.crc32(self.id().encode()))

    def encrypt_slots(self, values):
        pt = get_encoder(self.params).encode(values)
        return encrypt(pt, self.keys.public, self.rng)

    def decrypt_slots(self, ct, count):
        return get_encoder(self.params).decode(decrypt(ct, self.keys.secret)).real[:count]

    def test_matrix_round_trip(self):
        A = self.rng.uniform(-1, 1, (4, 4))
        np.testing.assert_allclose(decode_matrix(encode_matrix(A, self.keys, self.rng), self.keys.secret),
                                   A, atol=1e-6)

    def test_vector_round_trip(self):
        x = self.rng.uniform(-1, 1, 4)
        enc = encode_vector_replicated(x, self.keys, self.rng)
        np.testing.assert_allclose(decode_vector(enc, self.keys.secret), x, atol=1e-6)
        np.testing.assert_allclose(decode_vector(enc, self.keys.secret, average=False), x, atol=1e-6)

    def test_lin_trans_identity(self):
        v = self.rng.uniform(-1, 1, 4)
        ct = self.encrypt_slots(v)
        out = lin_trans(ct, PlainLinearMap.from_dense(np.eye(4)), self.keys.galois)
        self.assertEqual(out.level, ct.level - 1)
        np.testing.assert_allclose(self.decrypt_slots(out, 4), v, atol=1e-5)

    def test_lin_trans_diagonal(self):
        ct = self.encrypt_slots(np.ones(4))
        out = lin_trans(ct, PlainLinearMap.from_dense(np.diag([2.0, 3.0, 4.0, 5.0])), self.keys.galois)
        np.testing.assert_allclose(self.decrypt_slots(out, 4), [2, 3, 4, 5], atol=1e-5)

    def test_lin_trans_dense(self):
        for _ in range(5):
            U = self.rng.uniform(-1, 1, (4, 4))
            v = self.rng.uniform(-1, 1, 4)
            out = lin_trans(self.encrypt_slots(v), PlainLinearMap.from_dense(U), self.keys.galois)
            np.testing.assert_allclose(self.decrypt_slots(out, 4), U @ v, atol=1e-4)

    def test_lin_trans_indicator_maps(self):
        x = self.rng.uniform(-1, 1, 9)
        ct = self.encrypt_slots(x)
        cache = {}
        for k in range(3):
            for linear_map in (make_Vk(3, k, -0.5), make_Wk(3, k)):
                out = lin_trans(ct, linear_map, self.keys.galois, cache)
                np.testing.assert_allclose(self.decrypt_slots(out, 9), linear_map.apply(x), atol=1e-5)

    def test_lin_trans_needs_a_level(self):
        ct = get_encoder(self.params).encode(np.ones(4), level=0)
        with self.assertRaises(DepthExhausted):
            lin_trans(encrypt(ct, self.keys.public, self.rng), make_Wk(2, 0), self.keys.galois)

    def test_mmult_identity(self):
        B = self.rng.uniform(-1, 1, (3, 3))
        encB = encode_matrix(B, self.keys, self.rng)
        out = mmult(encode_matrix(np.eye(3), self.keys, self.rng), encB, 3, 1.0, self.keys)
        self.assertEqual(out.level, encB.level - 2)
        np.testing.assert_allclose(decode_matrix(out, self.keys.secret), B, atol=1e-4)

    def test_mmult_random_matrices(self):
        for d in (2, 3, 4):
            A = self.rng.uniform(-1, 1, (d, d))
            B = self.rng.uniform(-1, 1, (d, d))
            out = mmult(encode_matrix(A, self.keys, self.rng), encode_matrix(B, self.keys, self.rng), d, 1.0,
                        self.keys)
            self.assertIsInstance(out, EncodedMatrix)
            got = decode_matrix(out, self.keys.secret)
            self.assertLess(np.linalg.norm(got - A @ B) / np.linalg.norm(A @ B), 1e-4)

    def test_mmult_matrix_vector(self):
        Q = np.array([[2.0, 0.5], [0.5, 1.0]])
        x = np.array([0.3, -0.7])
        out = mmult(encode_matrix(Q, self.keys, self.rng), encode_vector_replicated(x, self.keys, self.rng),
                    2, -0.5, self.keys)
        np.testing.assert_allclose(decode_vector(out, self.keys.secret), -0.5 * Q @ x, atol=1e-4)

    def test_mmult_aligns_levels(self):
        A = self.rng.uniform(-1, 1, (2, 2))
        x = self.rng.uniform(-1, 1, 2)
        encA = encode_matrix(A, self.keys, self.rng)
        encX = encode_vector_replicated(x, self.keys, self.rng, level=3)
        out = mmult(encA, encX, 2, 1.0, self.keys)
        self.assertEqual(out.level, 1)
        np.testing.assert_allclose(decode_vector(out, self.keys.secret), A @ x, atol=1e-4)

    def test_mmult_ledger(self):
        for d in (2, 3):
            encA = encode_matrix(self.rng.uniform(-1, 1, (d, d)), self.keys, self.rng)
            encB = encode_matrix(self.rng.uniform(-1, 1, (d, d)), self.keys, self.rng)
            with track_operations() as ops:
                mmult(encA, encB, d, 1.0, self.keys)
            self.assertEqual(ops["mul_cipher"], d)
            self.assertEqual(ops["relinearize"], MATMUL_COSTS[MatmulMethod.TWO_LEVEL].relinearizations)
            self.assertEqual(ops["rescale"], 2 * d + 1)

    def test_mmult_errors(self):
        encA = encode_matrix(np.eye(2), self.keys, self.rng)
        encB = encode_matrix(np.eye(3), self.keys, self.rng)
        with self.assertRaises(ContractViolation):
            mmult(encA, encB, 2, 1.0, self.keys)
        low = encode_matrix(np.eye(2), self.keys, self.rng, level=1)
        with self.assertRaises(DepthExhausted):
            mmult(encA, low, 2, 1.0, self.keys)

    def test_layout_must_fit_slots(self):
        with self.assertRaises(ContractViolation):
            encode_matrix(np.eye(23), self.keys, self.rng)


class MatmulCostTests(unittest.TestCase):
    def test_cost_table(self):
        self.assertEqual(MATMUL_COSTS[MatmulMethod.TWO_LEVEL].depth, 2)
        self.assertEqual(MATMUL_COSTS[MatmulMethod.JKLS].depth, 3)
        self.assertEqual(MATMUL_COSTS[MatmulMethod.HALEVI_SHOUP].depth, 1)
        self.assertEqual(MATMUL_COSTS[MatmulMethod.TWO_LEVEL].relinearizations, 2)
        self.assertEqual(MATMUL_COSTS[MatmulMethod.HALEVI_SHOUP].ciphertexts, "d")


class MmultAtProductionDegreeTests(unittest.TestCase):
    """Matrix products at N=8192 with exactly two levels; takes minutes"""

    PAIRS_PER_DIMENSION = 50

    def test_relative_error_and_depth(self):
        params = CkksParams.create(8192, 2, 40)
        rng = np.random.default_rng(8192)
        for d in (2, 4, 8):
            keys = keygen(params, rng, rotation_limit=d * d)
            for trial in range(self.PAIRS_PER_DIMENSION):
                A = rng.uniform(-1, 1, (d, d))
                encA = encode_matrix(A, keys, rng)
                if trial % 2:
                    x = rng.uniform(-1, 1, d)
                    out = mmult(encA, encode_vector_replicated(x, keys, rng), d, 1.0, keys)
                    got, expected = decode_vector(out, keys.secret), A @ x
                else:
                    B = rng.uniform(-1, 1, (d, d))
                    out = mmult(encA, encode_matrix(B, keys, rng), d, 1.0, keys)
                    got, expected = decode_matrix(out, keys.secret), A @ B
                self.assertEqual(out.level, 0)
                self.assertLess(np.linalg.norm(got - expected) / np.linalg.norm(expected), 1e-4,
                                f"d={d} trial={trial}")


if __name__ == '__main__':
    unittest.main()
