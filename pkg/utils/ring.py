"""
Polynomial ring Z_q[X]/(X^N + 1) in residue-number-system form

Every polynomial is held as a (primes, N) array of uint64 residues, one row per
active prime. Products of two residues can need up to 100 bits, so modular
multiplication splits the second operand into limbs small enough that every
intermediate fits in 64 bits (see ``mulmod``).
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from sympy import isprime
from sympy.ntheory import primitive_root

from utils.errors import AlignmentError, ContractViolation, DepthExhausted, DomainMismatch

log = logging.getLogger('hegd.ring')

# Standard deviation of the rounded Gaussian used for RLWE errors
GAUSSIAN_STDDEV = 3.2

MAX_PRIME_BITS = 60


class Domain(str, enum.Enum):
    COEFFICIENT = "coefficient"
    EVALUATION = "evaluation"


class Direction(str, enum.Enum):
    FORWARD = "forward"
    INVERSE = "inverse"


class SampleKind(str, enum.Enum):
    TERNARY = "ternary"
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"


def mulmod(a: np.ndarray, b: np.ndarray, q: np.ndarray, max_bits: int) -> np.ndarray:
    """Exact elementwise (a * b) mod q on uint64 arrays

    Args:
        a: residues, each below its modulus
        b: residues, each below its modulus (split into limbs)
        q: moduli, broadcastable against a and b
        max_bits: bit length of the largest modulus involved

    Returns:
        uint64 array of products reduced mod q
    """
    shift = 63 - max_bits
    limbs = -(-max_bits // shift)
    if limbs == 1:
        return (a * b) % q
    mask = np.uint64((1 << shift) - 1)
    acc = (a * (b >> np.uint64((limbs - 1) * shift))) % q
    for k in range(limbs - 2, -1, -1):
        limb = (b >> np.uint64(k * shift)) & mask
        acc = ((acc << np.uint64(shift)) % q + (a * limb) % q) % q
    return acc


def _bit_reverse_indices(n: int) -> np.ndarray:
    log_n = n.bit_length() - 1
    idx = np.arange(n, dtype=np.int64)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(log_n):
        rev |= ((idx >> b) & 1) << (log_n - 1 - b)
    return rev


def _power_table(base: int, n: int, modulus: int) -> np.ndarray:
    powers = [1] * n
    for i in range(1, n):
        powers[i] = powers[i - 1] * base % modulus
    return np.array(powers, dtype=np.uint64)


@dataclass(frozen=True)
class PrimeModulus:
    """NTT-friendly prime with its bit-reversed twiddle tables

    Equality and hashing only look at (value, n); the tables are derived.
    """
    value: int
    n: int
    root: int = field(compare=False)
    psi_rev: np.ndarray = field(compare=False, repr=False)
    psi_inv_rev: np.ndarray = field(compare=False, repr=False)
    n_inv: int = field(compare=False, repr=False)

    @classmethod
    def create(cls, value: int, n: int) -> PrimeModulus:
        return _build_prime_modulus(int(value), int(n))

    @property
    def bits(self) -> int:
        return self.value.bit_length()


@lru_cache(maxsize=None)
def _build_prime_modulus(value: int, n: int) -> PrimeModulus:
    if n < 2 or n & (n - 1):
        raise ContractViolation(f"Ring degree must be a power of two >= 2, got {n}")
    if value.bit_length() > MAX_PRIME_BITS:
        raise ContractViolation(f"Prime {value} exceeds {MAX_PRIME_BITS} bits")
    if not isprime(value):
        raise ContractViolation(f"Modulus {value} is not prime")
    if value % (2 * n) != 1:
        raise ContractViolation(f"Prime {value} is not congruent to 1 mod 2N = {2 * n}")

    generator = int(primitive_root(value))
    psi = pow(generator, (value - 1) // (2 * n), value)
    if pow(psi, n, value) != value - 1:
        raise ContractViolation(f"No primitive 2N-th root of unity found mod {value}")
    psi_inv = pow(psi, -1, value)

    rev = _bit_reverse_indices(n)
    psi_rev = _power_table(psi, n, value)[rev]
    psi_inv_rev = _power_table(psi_inv, n, value)[rev]
    psi_rev.flags.writeable = False
    psi_inv_rev.flags.writeable = False

    return PrimeModulus(
        value=value,
        n=n,
        root=psi,
        psi_rev=psi_rev,
        psi_inv_rev=psi_inv_rev,
        n_inv=pow(n, -1, value),
    )


def find_ntt_primes(n: int, bits: int, count: int, exclude: Sequence[int] = ()) -> list[int]:
    """Sieve downward from 2**bits for primes congruent to 1 mod 2N

    Args:
        n: ring degree
        bits: every returned prime is below 2**bits
        count: how many primes to return
        exclude: primes already taken elsewhere in the basis

    Returns:
        primes in descending order
    """
    step = 2 * n
    if bits <= step.bit_length():
        raise ContractViolation(f"{bits}-bit primes cannot be congruent to 1 mod {step}")
    taken = set(exclude)
    found: list[int] = []
    candidate = (1 << bits) - step + 1
    floor = 1 << (bits - 1)
    while len(found) < count:
        if candidate < floor:
            raise ContractViolation(
                f"Ran out of {bits}-bit NTT primes for N={n} after finding {len(found)} of {count}"
            )
        if candidate not in taken and isprime(candidate):
            found.append(candidate)
        candidate -= step
    return found


@dataclass(frozen=True)
class RnsBasis:
    """Modulus chain q_0 .. q_L plus the key-switching prime

    ``primes[0]`` is the first prime and stays until level 0; ``primes[level]``
    is the one a rescale at that level drops.
    """
    primes: tuple[PrimeModulus, ...]
    special: PrimeModulus | None
    scale_bits: int

    @classmethod
    def generate(
        cls,
        n: int,
        depth: int,
        scale_bits: int,
        first_bits: int | None = None,
        special_bits: int | None = None,
    ) -> RnsBasis:
        """Build a deterministic basis for (n, depth, scale_bits)

        The first and special primes default to scale_bits + 10 bits so that
        decryption at level 0 keeps ten bits of headroom above the scale.
        """
        first_bits = first_bits or min(scale_bits + 10, MAX_PRIME_BITS)
        special_bits = special_bits or first_bits
        scaling = find_ntt_primes(n, scale_bits, depth)
        if special_bits == first_bits:
            head = find_ntt_primes(n, first_bits, 2, exclude=scaling)
            first, special = head[1], head[0]
        else:
            first = find_ntt_primes(n, first_bits, 1, exclude=scaling)[0]
            special = find_ntt_primes(n, special_bits, 1, exclude=scaling + [first])[0]
        values = [first] + scaling
        basis = cls(
            primes=tuple(PrimeModulus.create(v, n) for v in values),
            special=PrimeModulus.create(special, n),
            scale_bits=scale_bits,
        )
        log.debug(f"Generated RNS basis N={n} depth={depth} total_bits={basis.total_bits}")
        return basis

    @classmethod
    def from_primes(cls, values: Sequence[int], n: int, scale_bits: int, special: int | None = None) -> RnsBasis:
        """Basis from explicit primes, used for toy instances"""
        if len(set(values)) != len(values):
            raise ContractViolation(f"RNS primes must be distinct, got {list(values)}")
        return cls(
            primes=tuple(PrimeModulus.create(v, n) for v in values),
            special=PrimeModulus.create(special, n) if special is not None else None,
            scale_bits=scale_bits,
        )

    @property
    def n(self) -> int:
        return self.primes[0].n

    @property
    def depth(self) -> int:
        return len(self.primes) - 1

    @property
    def total_bits(self) -> int:
        bits = sum(p.bits for p in self.primes)
        if self.special is not None:
            bits += self.special.bits
        return bits

    def at_level(self, level: int) -> tuple[PrimeModulus, ...]:
        if not 0 <= level <= self.depth:
            raise ContractViolation(f"Level {level} outside basis range [0, {self.depth}]")
        return self.primes[:level + 1]

    def extended(self, level: int) -> tuple[PrimeModulus, ...]:
        """Primes of ``level`` followed by the special prime"""
        if self.special is None:
            raise ContractViolation("Basis has no key-switching prime")
        return self.at_level(level) + (self.special,)


@dataclass(frozen=True)
class ResidueTables:
    """Per-basis tables stacked for vectorized transforms"""
    q: np.ndarray
    psi_rev: np.ndarray
    psi_inv_rev: np.ndarray
    n_inv: np.ndarray
    max_bits: int


@lru_cache(maxsize=256)
def residue_tables(moduli: tuple[PrimeModulus, ...]) -> ResidueTables:
    return ResidueTables(
        q=np.array([m.value for m in moduli], dtype=np.uint64)[:, None],
        psi_rev=np.stack([m.psi_rev for m in moduli]),
        psi_inv_rev=np.stack([m.psi_inv_rev for m in moduli]),
        n_inv=np.array([m.n_inv for m in moduli], dtype=np.uint64)[:, None],
        max_bits=max(m.bits for m in moduli),
    )


def forward_transform(residues: np.ndarray, moduli: tuple[PrimeModulus, ...]) -> np.ndarray:
    """Negacyclic NTT over the last axis of a (..., primes, N) array

    Cooley-Tukey butterflies, natural order in, bit-reversed order out.
    """
    tables = residue_tables(moduli)
    n = residues.shape[-1]
    lead = residues.shape[:-1]
    q = tables.q[:, :, None]
    a = residues
    t, m = n, 1
    while m < n:
        t //= 2
        v = a.reshape(*lead, m, 2, t)
        twiddle = tables.psi_rev[:, m:2 * m, None]
        u = v[..., 0, :]
        w = mulmod(v[..., 1, :], twiddle, q, tables.max_bits)
        out = np.empty_like(v)
        out[..., 0, :] = (u + w) % q
        out[..., 1, :] = (u + q - w) % q
        a = out.reshape(*lead, n)
        m *= 2
    return a


def inverse_transform(residues: np.ndarray, moduli: tuple[PrimeModulus, ...]) -> np.ndarray:
    """Inverse of ``forward_transform`` (Gentleman-Sande, scaled by 1/N)"""
    tables = residue_tables(moduli)
    n = residues.shape[-1]
    lead = residues.shape[:-1]
    q = tables.q[:, :, None]
    a = residues
    t, m = 1, n
    while m > 1:
        h = m // 2
        v = a.reshape(*lead, h, 2, t)
        twiddle = tables.psi_inv_rev[:, h:2 * h, None]
        u = v[..., 0, :]
        w = v[..., 1, :]
        out = np.empty_like(v)
        out[..., 0, :] = (u + w) % q
        out[..., 1, :] = mulmod((u + q - w) % q, twiddle, q, tables.max_bits)
        a = out.reshape(*lead, n)
        t *= 2
        m = h
    return mulmod(a, tables.n_inv, tables.q, tables.max_bits)


def multiply_residues(a: np.ndarray, b: np.ndarray, moduli: tuple[PrimeModulus, ...]) -> np.ndarray:
    tables = residue_tables(moduli)
    return mulmod(a, b, tables.q, tables.max_bits)


@dataclass(frozen=True, eq=False)
class RnsPoly:
    """Element of R_q at a given level, in coefficient or evaluation form"""
    moduli: tuple[PrimeModulus, ...]
    residues: np.ndarray
    domain: Domain = Domain.COEFFICIENT

    def __post_init__(self):
        expected = (len(self.moduli), self.moduli[0].n)
        if self.residues.shape != expected:
            raise ContractViolation(f"Residue array shape {self.residues.shape} does not match {expected}")
        if self.residues.dtype != np.uint64:
            raise ContractViolation(f"Residues must be uint64, got {self.residues.dtype}")

    @property
    def level(self) -> int:
        return len(self.moduli) - 1

    @property
    def n(self) -> int:
        return self.moduli[0].n

    @classmethod
    def zero(cls, moduli: tuple[PrimeModulus, ...], domain: Domain = Domain.COEFFICIENT) -> RnsPoly:
        return cls(moduli, np.zeros((len(moduli), moduli[0].n), dtype=np.uint64), domain)

    @classmethod
    def from_integers(cls, values: np.ndarray, moduli: tuple[PrimeModulus, ...]) -> RnsPoly:
        """Reduce signed int64 coefficients into every prime"""
        values = np.asarray(values, dtype=np.int64)
        q = np.array([m.value for m in moduli], dtype=np.int64)[:, None]
        return cls(moduli, np.mod(values[None, :], q).astype(np.uint64), Domain.COEFFICIENT)

    def to_integers(self) -> np.ndarray:
        """Centered CRT lift of the coefficients as Python integers (object array)"""
        if self.domain is not Domain.COEFFICIENT:
            raise DomainMismatch("CRT reconstruction needs coefficient-domain input")
        modulus = 1
        for m in self.moduli:
            modulus *= m.value
        acc = np.zeros(self.n, dtype=object)
        for row, m in zip(self.residues, self.moduli):
            partial = modulus // m.value
            inv = pow(partial, -1, m.value)
            acc = acc + (row.astype(object) * inv % m.value) * partial
        acc = acc % modulus
        return np.where(acc > modulus // 2, acc - modulus, acc)

    def keep(self, level: int) -> RnsPoly:
        """Restrict to the first level+1 primes (valid in either domain)"""
        if level > self.level:
            raise ContractViolation(f"Cannot raise level {self.level} to {level}")
        return RnsPoly(self.moduli[:level + 1], self.residues[:level + 1].copy(), self.domain)

    def _check_compatible(self, other: RnsPoly) -> None:
        if self.moduli != other.moduli:
            raise AlignmentError(f"Polynomials at different levels ({self.level} vs {other.level})")
        if self.domain is not other.domain:
            raise DomainMismatch(f"Cannot combine {self.domain.value} and {other.domain.value} polynomials")

    def __add__(self, other: RnsPoly) -> RnsPoly:
        self._check_compatible(other)
        q = residue_tables(self.moduli).q
        return RnsPoly(self.moduli, (self.residues + other.residues) % q, self.domain)

    def __sub__(self, other: RnsPoly) -> RnsPoly:
        self._check_compatible(other)
        q = residue_tables(self.moduli).q
        return RnsPoly(self.moduli, (self.residues + q - other.residues) % q, self.domain)

    def __neg__(self) -> RnsPoly:
        q = residue_tables(self.moduli).q
        return RnsPoly(self.moduli, (q - self.residues) % q, self.domain)

    def __mul__(self, other: RnsPoly) -> RnsPoly:
        return poly_mul(self, other)

    def scalar_mul(self, scalar: int) -> RnsPoly:
        factors = np.array([int(scalar) % m.value for m in self.moduli], dtype=np.uint64)[:, None]
        return RnsPoly(self.moduli, multiply_residues(self.residues, factors, self.moduli), self.domain)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RnsPoly):
            return NotImplemented
        return (
            self.moduli == other.moduli
            and self.domain is other.domain
            and np.array_equal(self.residues, other.residues)
        )

    __hash__ = None


def ntt(poly: RnsPoly, direction: Direction) -> RnsPoly:
    """Switch a polynomial between coefficient and evaluation form

    Raises:
        DomainMismatch: if the polynomial is not in the direction's source domain
    """
    direction = Direction(direction)
    if direction is Direction.FORWARD:
        if poly.domain is not Domain.COEFFICIENT:
            raise DomainMismatch("Forward NTT expects a coefficient-domain polynomial")
        return RnsPoly(poly.moduli, forward_transform(poly.residues, poly.moduli), Domain.EVALUATION)
    if poly.domain is not Domain.EVALUATION:
        raise DomainMismatch("Inverse NTT expects an evaluation-domain polynomial")
    return RnsPoly(poly.moduli, inverse_transform(poly.residues, poly.moduli), Domain.COEFFICIENT)


def to_evaluation(poly: RnsPoly) -> RnsPoly:
    return poly if poly.domain is Domain.EVALUATION else ntt(poly, Direction.FORWARD)


def to_coefficient(poly: RnsPoly) -> RnsPoly:
    return poly if poly.domain is Domain.COEFFICIENT else ntt(poly, Direction.INVERSE)


def poly_mul(a: RnsPoly, b: RnsPoly) -> RnsPoly:
    """Negacyclic product; the result keeps the operands' domain"""
    a._check_compatible(b)
    if a.domain is Domain.EVALUATION:
        return RnsPoly(a.moduli, multiply_residues(a.residues, b.residues, a.moduli), Domain.EVALUATION)
    product = multiply_residues(
        forward_transform(a.residues, a.moduli),
        forward_transform(b.residues, b.moduli),
        a.moduli,
    )
    return RnsPoly(a.moduli, inverse_transform(product, a.moduli), Domain.COEFFICIENT)


def drop_last_prime_and_round(poly: RnsPoly) -> RnsPoly:
    """Return round(x / q_last) in the basis without its last prime

    Raises:
        DomainMismatch: evaluation-domain input
        DepthExhausted: input already at level 0
    """
    if poly.domain is not Domain.COEFFICIENT:
        raise DomainMismatch("Rounding division needs coefficient-domain input")
    if poly.level < 1:
        raise DepthExhausted("Cannot drop a prime at level 0")

    q_last = poly.moduli[-1].value
    half = (q_last - 1) // 2
    rest = poly.moduli[:-1]
    tables = residue_tables(rest)
    q = tables.q

    # (x + half) mod q_last, then x + half - that is an exact multiple of q_last
    shifted = (poly.residues[-1] + np.uint64(half)) % np.uint64(q_last)
    shifted_rows = shifted[None, :] % q
    half_rows = np.array([half % m.value for m in rest], dtype=np.uint64)[:, None]
    numerator = (poly.residues[:-1] + half_rows + (q - shifted_rows)) % q
    inverses = np.array([pow(q_last, -1, m.value) for m in rest], dtype=np.uint64)[:, None]
    return RnsPoly(rest, mulmod(numerator, inverses, q, tables.max_bits), Domain.COEFFICIENT)


def apply_automorphism(poly: RnsPoly, galois_element: int) -> RnsPoly:
    """Map X -> X^g on a coefficient-domain polynomial (g odd)"""
    if poly.domain is not Domain.COEFFICIENT:
        raise DomainMismatch("Automorphisms are applied in the coefficient domain")
    if galois_element % 2 == 0:
        raise ContractViolation(f"Galois element must be odd, got {galois_element}")
    n = poly.n
    index = (np.arange(n, dtype=np.int64) * galois_element) % (2 * n)
    dest = index % n
    negate = index >= n
    q = residue_tables(poly.moduli).q
    values = np.where(negate[None, :], (q - poly.residues) % q, poly.residues)
    out = np.empty_like(poly.residues)
    out[:, dest] = values
    return RnsPoly(poly.moduli, out, Domain.COEFFICIENT)


def sample(
    kind: SampleKind,
    rng: np.random.Generator,
    moduli: tuple[PrimeModulus, ...],
    stddev: float = GAUSSIAN_STDDEV,
) -> RnsPoly:
    """Draw a coefficient-domain polynomial from the given distribution

    Args:
        kind: ternary {-1, 0, 1}, rounded Gaussian, or uniform mod each prime
        rng: explicit generator; nothing here touches global random state
        moduli: primes the result is reduced into
        stddev: Gaussian standard deviation
    """
    kind = SampleKind(kind)
    n = moduli[0].n
    if kind is SampleKind.TERNARY:
        return RnsPoly.from_integers(rng.integers(-1, 2, size=n, dtype=np.int64), moduli)
    if kind is SampleKind.GAUSSIAN:
        return RnsPoly.from_integers(np.rint(rng.normal(0.0, stddev, size=n)).astype(np.int64), moduli)
    rows = [rng.integers(0, m.value, size=n, dtype=np.uint64) for m in moduli]
    return RnsPoly(moduli, np.stack(rows), Domain.COEFFICIENT)
