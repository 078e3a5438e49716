"""
Encrypted linear algebra on CKKS slot vectors

Matrices are stored row-major (slot d*i + j holds A[i][j]); vectors are stored
column-replicated (slot d*i + j holds v[i] for every j), so a matrix-vector
product is the matrix-matrix product with the same layout on both sides.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, replace
from typing import Iterator, Union

import numpy as np

from utils.ckks import (
    Ciphertext,
    EvaluationKeys,
    GaloisKeys,
    KeySet,
    SecretKey,
    add,
    decrypt,
    encrypt,
    get_encoder,
    mod_switch_to,
    mul_cipher,
    mul_plain,
    relinearize,
    rescale,
    rescale_prime,
    rotate,
)
from utils.errors import ContractViolation, DepthExhausted

log = logging.getLogger('hegd.enclin')

Keys = Union[KeySet, EvaluationKeys]


class MatmulMethod(str, enum.Enum):
    HALEVI_SHOUP = "halevi-shoup"
    JKLS = "jkls"
    TWO_LEVEL = "two-level"


@dataclass(frozen=True)
class MatmulCost:
    """Resource profile of one encrypted d x d matrix product"""
    ciphertexts: str
    complexity: str
    cipher_mults: int
    plain_mults: int
    relinearizations: int

    @property
    def depth(self) -> int:
        return self.cipher_mults + self.plain_mults


MATMUL_COSTS = {
    MatmulMethod.HALEVI_SHOUP: MatmulCost("d", "O(d^2)", 1, 0, 1),
    MatmulMethod.JKLS: MatmulCost("1", "O(d)", 1, 2, 3),
    MatmulMethod.TWO_LEVEL: MatmulCost("1", "O(d)", 1, 1, 2),
}

# Independent partial sums in mmult, one relinearization each
MMULT_LANES = MATMUL_COSTS[MatmulMethod.TWO_LEVEL].relinearizations


@dataclass(frozen=True, eq=False)
class PlainLinearMap:
    """Linear map on length-``dim`` vectors stored by generalized diagonals

    ``diagonals[l][i]`` is U[i, (i + l) mod dim]; all-zero diagonals are not stored.
    """
    dim: int
    diagonals: dict[int, np.ndarray]

    def __post_init__(self):
        cleaned = {}
        for offset, values in self.diagonals.items():
            values = np.asarray(values, dtype=np.float64)
            if not 0 <= offset < self.dim:
                raise ContractViolation(f"Diagonal offset {offset} outside [0, {self.dim})")
            if values.shape != (self.dim,):
                raise ContractViolation(f"Diagonal {offset} has shape {values.shape}, expected ({self.dim},)")
            if np.any(values):
                cleaned[int(offset)] = values
        object.__setattr__(self, 'diagonals', dict(sorted(cleaned.items())))

    @classmethod
    def from_entries(cls, dim: int, rows, cols, values) -> PlainLinearMap:
        diagonals: dict[int, np.ndarray] = {}
        for r, c, v in zip(rows, cols, values):
            offset = (c - r) % dim
            diagonals.setdefault(offset, np.zeros(dim))[r] += v
        return cls(dim, diagonals)

    @classmethod
    def from_dense(cls, matrix: np.ndarray) -> PlainLinearMap:
        matrix = np.asarray(matrix, dtype=np.float64)
        dim = matrix.shape[0]
        if matrix.shape != (dim, dim):
            raise ContractViolation(f"Expected a square matrix, got shape {matrix.shape}")
        rows = np.arange(dim)
        return cls(dim, {l: matrix[rows, (rows + l) % dim] for l in range(dim)})

    @property
    def diagonal_count(self) -> int:
        return len(self.diagonals)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Sum over l of u_l * rot(x, l), evaluated in the clear"""
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros(self.dim)
        for offset, values in self.diagonals.items():
            out += values * np.roll(x, -offset)
        return out

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.dim, self.dim))
        rows = np.arange(self.dim)
        for offset, values in self.diagonals.items():
            dense[rows, (rows + offset) % self.dim] = values
        return dense

    def dump(self) -> str:
        return "\n".join(
            f"{offset}: " + " ".join(f"{v:g}" for v in values)
            for offset, values in self.diagonals.items()
        )


def _check_index(d: int, k: int) -> None:
    if d < 1:
        raise ContractViolation(f"Dimension must be positive, got {d}")
    if not 0 <= k < d:
        raise ContractViolation(f"k must lie in [0, {d}), got {k}")


def make_Vk(d: int, k: int, a: float = 1.0) -> PlainLinearMap:
    """Row permutation for the A side: entry (d*i + j, d*i + [i+j+k]_d) = a"""
    _check_index(d, k)
    i, j = np.divmod(np.arange(d * d), d)
    cols = d * i + (i + j + k) % d
    return PlainLinearMap.from_entries(d * d, d * i + j, cols, np.full(d * d, float(a)))


def make_Wk(d: int, k: int) -> PlainLinearMap:
    """Column permutation for the B side: entry (d*i + j, d*[i+j+k]_d + j) = 1"""
    _check_index(d, k)
    i, j = np.divmod(np.arange(d * d), d)
    cols = d * ((i + j + k) % d) + j
    return PlainLinearMap.from_entries(d * d, d * i + j, cols, np.ones(d * d))


def matrix_slots(matrix: np.ndarray) -> np.ndarray:
    return np.asarray(matrix, dtype=np.float64).ravel()


def vector_slots(vector: np.ndarray) -> np.ndarray:
    vector = np.asarray(vector, dtype=np.float64)
    return np.repeat(vector, vector.size)


def plain_mmult(A: np.ndarray, B: np.ndarray, d: int, a: float = 1.0) -> np.ndarray:
    """Sum over k of V_k(a)A * W_k B on flattened operands, reshaped to d x d"""
    a_vec = matrix_slots(A)
    b_vec = matrix_slots(B)
    out = np.zeros(d * d)
    for k in range(d):
        out += make_Vk(d, k, a).apply(a_vec) * make_Wk(d, k).apply(b_vec)
    return out.reshape(d, d)


@dataclass(frozen=True)
class EncodedMatrix:
    ct: Ciphertext
    d: int

    @property
    def level(self) -> int:
        return self.ct.level


@dataclass(frozen=True)
class EncodedVector:
    ct: Ciphertext
    d: int

    @property
    def level(self) -> int:
        return self.ct.level


def _check_fits(d: int, slots: int) -> None:
    if d < 1 or d * d > slots:
        raise ContractViolation(f"A {d}x{d} layout needs {d * d} slots; only {slots} available")


def encode_matrix(matrix: np.ndarray, keys: Keys, rng: np.random.Generator,
                  level: int | None = None) -> EncodedMatrix:
    matrix = np.asarray(matrix, dtype=np.float64)
    d = matrix.shape[0]
    if matrix.shape != (d, d):
        raise ContractViolation(f"Expected a square matrix, got shape {matrix.shape}")
    _check_fits(d, keys.params.slots)
    pt = get_encoder(keys.params).encode(matrix_slots(matrix), level=level)
    return EncodedMatrix(encrypt(pt, keys.public, rng), d)


def encode_vector_replicated(vector: np.ndarray, keys: Keys, rng: np.random.Generator,
                             level: int | None = None) -> EncodedVector:
    vector = np.asarray(vector, dtype=np.float64).ravel()
    d = vector.size
    _check_fits(d, keys.params.slots)
    pt = get_encoder(keys.params).encode(vector_slots(vector), level=level)
    return EncodedVector(encrypt(pt, keys.public, rng), d)


def _decrypt_grid(ct: Ciphertext, d: int, sk: SecretKey) -> np.ndarray:
    values = get_encoder(sk.params).decode(decrypt(ct, sk))
    return values[:d * d].real.reshape(d, d)


def decode_matrix(enc: EncodedMatrix, sk: SecretKey) -> np.ndarray:
    return _decrypt_grid(enc.ct, enc.d, sk)


def decode_vector(enc: EncodedVector, sk: SecretKey, average: bool = True) -> np.ndarray:
    """Read the vector back; by default average the d column copies"""
    grid = _decrypt_grid(enc.ct, enc.d, sk)
    return grid.mean(axis=1) if average else grid[:, 0]


def _split_diagonal(offset: int, values: np.ndarray) -> Iterator[tuple[int, np.ndarray]]:
    """Pieces of a diagonal served by rot(x, offset) and rot(x, offset - dim)

    Inside a larger slot vector a rotation by l is not cyclic over the first
    dim slots, so entries with i + l >= dim read from rot(x, l - dim).
    """
    dim = values.size
    head = values.copy()
    if offset:
        head[dim - offset:] = 0.0
    tail = values - head
    if np.any(head):
        yield offset, head
    if np.any(tail):
        yield offset - dim, tail


def lin_trans(ct: Ciphertext, U: PlainLinearMap, gk: GaloisKeys,
              rotation_cache: dict[int, Ciphertext] | None = None) -> Ciphertext:
    """Encrypted U*x by the diagonal method, ending in one shared rescale

    Args:
        ct: ciphertext whose first U.dim slots hold x
        U: plaintext map
        gk: rotation keys
        rotation_cache: rotations of ``ct`` already computed, keyed by step;
            filled in place so repeated calls on the same ciphertext share them

    Raises:
        DepthExhausted: ciphertext at level 0
    """
    params = gk.params
    if U.dim > params.slots:
        raise ContractViolation(f"Map of dimension {U.dim} exceeds {params.slots} slots")
    if ct.level < 1:
        raise DepthExhausted("lin_trans needs one level; ciphertext is at level 0")

    encoder = get_encoder(params)
    # Multipliers encoded at the prime the rescale removes keep the scale fixed
    multiplier_scale = float(rescale_prime(ct))
    cache = {} if rotation_cache is None else rotation_cache

    acc = None
    for offset, values in U.diagonals.items():
        for shift, part in _split_diagonal(offset, values):
            if shift not in cache:
                cache[shift] = ct if shift == 0 else rotate(ct, shift, gk)
            pt = encoder.encode(part, scale=multiplier_scale, level=ct.level)
            term = mul_plain(cache[shift], pt)
            acc = term if acc is None else add(term, acc)
    if acc is None:
        raise ContractViolation("Linear map has no nonzero diagonal")
    return rescale(acc)


def mmult(A: EncodedMatrix, B: EncodedMatrix | EncodedVector, d: int, a: float, keys: Keys):
    """Encrypted a*(A*B) in B's layout using two levels

    Both operands are aligned to the lower of their levels first. The d
    products V_k(a)A * W_k B are reduced in two lanes (even and odd k) as
    3-part ciphertexts; each lane is relinearized, and the lane sum is
    rescaled once.

    Raises:
        ContractViolation: dimension mismatch
        DepthExhausted: fewer than two levels left
    """
    if A.d != d or B.d != d:
        raise ContractViolation(f"Dimension mismatch: mmult(d={d}) got operands of d={A.d} and d={B.d}")
    level = min(A.level, B.level)
    if level < 2:
        raise DepthExhausted(f"mmult needs 2 levels; operands are at level {level}")
    a_ct = mod_switch_to(A.ct, level)
    b_ct = mod_switch_to(B.ct, level)

    a_rotations: dict[int, Ciphertext] = {}
    b_rotations: dict[int, Ciphertext] = {}
    lanes: list[Ciphertext | None] = [None] * MMULT_LANES
    for k in range(d):
        a_k = lin_trans(a_ct, make_Vk(d, k, a), keys.galois, a_rotations)
        b_k = lin_trans(b_ct, make_Wk(d, k), keys.galois, b_rotations)
        product = mul_cipher(a_k, b_k)
        lane = k % MMULT_LANES
        lanes[lane] = product if lanes[lane] is None else add(product, lanes[lane])

    relinearized = [relinearize(ct, keys.relin) for ct in lanes if ct is not None]
    acc = relinearized[0]
    for ct in relinearized[1:]:
        acc = add(acc, ct)
    result = rescale(acc)
    log.debug(f"mmult d={d}: level {level} -> {result.level}")
    return replace(B, ct=result)
