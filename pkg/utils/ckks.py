"""
Leveled CKKS over the RNS ring: encoder, keys, encryption and evaluator
"""
from __future__ import annotations

import enum
import logging
from collections import Counter
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from utils.errors import (
    AlignmentError,
    ContractViolation,
    DepthExhausted,
    MissingKeyError,
    PresetError,
    ScaleError,
)
from utils.ring import (
    Domain,
    PrimeModulus,
    RnsBasis,
    RnsPoly,
    SampleKind,
    apply_automorphism,
    drop_last_prime_and_round,
    forward_transform,
    inverse_transform,
    multiply_residues,
    residue_tables,
    sample,
    to_coefficient,
    to_evaluation,
)

log = logging.getLogger('hegd.ckks')

# Relative scale mismatch tolerated by add/sub
SCALE_TOLERANCE = 2.0 ** -10

# Largest total modulus in bits (key-switching prime included) that keeps
# 128-bit security for a ternary secret, per ring degree
MAX_MODULUS_BITS_128 = {
    1024: 27,
    2048: 54,
    4096: 109,
    8192: 218,
    16384: 438,
    32768: 881,
}

# Encoded coefficients must stay clear of the int64 range
_MAX_ENCODED_MAGNITUDE = 2.0 ** 62


class SecurityPreset(str, enum.Enum):
    SECURE128 = "secure128"
    INSECURE_TEST = "insecure-test"


def minimum_ring_degree(total_bits: int) -> int | None:
    """Smallest N whose 128-bit bound admits ``total_bits``, or None"""
    for n in sorted(MAX_MODULUS_BITS_128):
        if total_bits <= MAX_MODULUS_BITS_128[n]:
            return n
    return None


@dataclass(frozen=True)
class CkksParams:
    n: int
    depth: int
    scale_bits: int
    security_preset: SecurityPreset
    basis: RnsBasis

    @classmethod
    def create(
        cls,
        n: int,
        depth: int,
        scale_bits: int = 40,
        security_preset: SecurityPreset | str = SecurityPreset.SECURE128,
        allow_insecure: bool = False,
    ) -> CkksParams:
        """Build parameters and their modulus chain

        Args:
            n: ring degree (power of two)
            depth: number of rescales the chain supports
            scale_bits: p with scale 2**p
            security_preset: secure128 enforces the modulus-size bound for n
            allow_insecure: required opt-in for insecure-test

        Raises:
            PresetError: bound violated or missing opt-in
        """
        security_preset = SecurityPreset(security_preset)
        if depth < 0:
            raise PresetError(f"Depth must be non-negative, got {depth}")
        if not 20 <= scale_bits <= 58:
            raise PresetError(f"scale_bits must lie in [20, 58], got {scale_bits}")
        if security_preset is SecurityPreset.INSECURE_TEST and not allow_insecure:
            raise PresetError(
                "The insecure-test preset offers no security; pass allow_insecure=True to use it"
            )

        basis = RnsBasis.generate(n, depth, scale_bits)
        if security_preset is SecurityPreset.SECURE128:
            bound = MAX_MODULUS_BITS_128.get(n)
            if bound is None or basis.total_bits > bound:
                needed = minimum_ring_degree(basis.total_bits)
                raise PresetError(
                    f"secure128 with depth {depth} needs {basis.total_bits} modulus bits; "
                    f"N={n} allows {bound}. Expected N >= {needed}"
                )
        else:
            log.warning(f"Using insecure-test parameters N={n}, depth={depth}; not for real data")

        return cls(n=n, depth=depth, scale_bits=scale_bits, security_preset=security_preset, basis=basis)

    @property
    def slots(self) -> int:
        return self.n // 2

    @property
    def scale(self) -> float:
        return float(2 ** self.scale_bits)


@dataclass(frozen=True)
class Plaintext:
    poly: RnsPoly
    scale: float

    @property
    def level(self) -> int:
        return self.poly.level


@dataclass(frozen=True)
class Ciphertext:
    parts: tuple[RnsPoly, ...]
    scale: float

    def __post_init__(self):
        if len(self.parts) not in (2, 3):
            raise ContractViolation(f"Ciphertext must have 2 or 3 parts, got {len(self.parts)}")
        moduli = self.parts[0].moduli
        if any(p.moduli != moduli for p in self.parts):
            raise AlignmentError("Ciphertext parts sit at different levels")

    @property
    def level(self) -> int:
        return self.parts[0].level

    @property
    def moduli(self) -> tuple[PrimeModulus, ...]:
        return self.parts[0].moduli


@dataclass(frozen=True)
class SecretKey:
    params: CkksParams
    poly: RnsPoly  # evaluation domain over q_0..q_L and the special prime

    def at_level(self, level: int) -> RnsPoly:
        moduli = self.params.basis.at_level(level)
        return RnsPoly(moduli, self.poly.residues[:level + 1], Domain.EVALUATION)


@dataclass(frozen=True)
class PublicKey:
    params: CkksParams
    b: RnsPoly
    a: RnsPoly


@dataclass(frozen=True, eq=False)
class KeySwitchKey:
    """One (b_i, a_i) pair per ciphertext prime, over q_0..q_L and P

    ``data`` has shape (digits, 2, L + 2, N) and is in evaluation form.
    """
    params: CkksParams
    data: np.ndarray

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KeySwitchKey):
            return NotImplemented
        return (
            type(self) is type(other)
            and self.params == other.params
            and np.array_equal(self.data, other.data)
        )

    __hash__ = None


class RelinKey(KeySwitchKey):
    """Switches the s^2 component of a 3-part ciphertext back to s"""


@dataclass(frozen=True)
class GaloisKeys:
    params: CkksParams
    keys: dict[int, KeySwitchKey]

    @property
    def steps(self) -> list[int]:
        return sorted(self.keys)


class EvaluationKeys(NamedTuple):
    """Keys an evaluating party holds; no secret"""
    public: PublicKey
    relin: RelinKey
    galois: GaloisKeys

    @property
    def params(self) -> CkksParams:
        return self.public.params


class KeySet(NamedTuple):
    secret: SecretKey
    public: PublicKey
    relin: RelinKey
    galois: GaloisKeys

    @property
    def params(self) -> CkksParams:
        return self.public.params

    def evaluation_keys(self) -> EvaluationKeys:
        return EvaluationKeys(self.public, self.relin, self.galois)


# ---------------------------------------------------------------------------
# Operation ledger
# ---------------------------------------------------------------------------

_ledger: ContextVar[Counter | None] = ContextVar('hegd_operation_ledger', default=None)


@contextmanager
def track_operations() -> Iterator[Counter]:
    """Count evaluator operations performed inside the block

    Counter keys: add, mul_plain, mul_cipher, relinearize, rescale, rotate,
    key_switch, mod_switch.
    """
    counter: Counter = Counter()
    token = _ledger.set(counter)
    try:
        yield counter
    finally:
        _ledger.reset(token)


def _record(operation: str) -> None:
    counter = _ledger.get()
    if counter is not None:
        counter[operation] += 1


# ---------------------------------------------------------------------------
# Encoder
# ---------------------------------------------------------------------------

class CkksEncoder:
    """Canonical-embedding encoder

    Slot j is the evaluation at zeta^(5^j), zeta = exp(i*pi/N); the remaining
    N/2 evaluations are the complex conjugates, which keeps coefficients real.
    """

    def __init__(self, params: CkksParams):
        self.params = params
        n = params.n
        two_n = 2 * n
        exponents = np.empty(params.slots, dtype=np.int64)
        e = 1
        for j in range(params.slots):
            exponents[j] = e
            e = e * 5 % two_n
        self._slot_index = (exponents - 1) // 2
        self._conj_index = (two_n - exponents - 1) // 2
        self._twist = np.exp(1j * np.pi * np.arange(n) / n)

    def encode(self, values: Sequence[complex] | np.ndarray, scale: float | None = None,
               level: int | None = None) -> Plaintext:
        """Encode up to N/2 values at ``scale`` on the primes of ``level``

        Args:
            values: real or complex slot values; missing slots are zero
            scale: defaults to 2**scale_bits
            level: defaults to the top of the chain

        Raises:
            ContractViolation: too many values, nonpositive scale, or overflow
        """
        scale = self.params.scale if scale is None else float(scale)
        level = self.params.depth if level is None else level
        return self.encode_at(values, scale, self.params.basis.at_level(level))

    def encode_at(self, values, scale: float, moduli: tuple[PrimeModulus, ...]) -> Plaintext:
        values = np.asarray(values, dtype=np.complex128).ravel()
        n = self.params.n
        if values.size > self.params.slots:
            raise ContractViolation(f"{values.size} values do not fit in {self.params.slots} slots")
        if not scale > 0:
            raise ContractViolation(f"Scale must be positive, got {scale}")

        evaluations = np.zeros(n, dtype=np.complex128)
        evaluations[self._slot_index[:values.size]] = values
        evaluations[self._conj_index[:values.size]] = np.conj(values)
        coeffs = (np.fft.fft(evaluations) / n * np.conj(self._twist)).real
        scaled = np.rint(coeffs * scale)
        if np.max(np.abs(scaled), initial=0.0) >= _MAX_ENCODED_MAGNITUDE:
            raise ContractViolation(f"Values too large to encode at scale {scale:.3e}")

        poly = RnsPoly.from_integers(scaled.astype(np.int64), moduli)
        return Plaintext(to_evaluation(poly), scale)

    def embedding(self, pt: Plaintext) -> np.ndarray:
        """All N evaluations of the unscaled plaintext polynomial"""
        coeffs = to_coefficient(pt.poly).to_integers().astype(np.float64) / pt.scale
        return np.fft.ifft(coeffs * self._twist) * self.params.n

    def decode(self, pt: Plaintext) -> np.ndarray:
        return self.embedding(pt)[self._slot_index]

    @property
    def conjugate_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Embedding indices of each slot and of its conjugate"""
        return self._slot_index, self._conj_index


@lru_cache(maxsize=16)
def get_encoder(params: CkksParams) -> CkksEncoder:
    return CkksEncoder(params)


def encode(values, scale: float, level: int, params: CkksParams) -> Plaintext:
    return get_encoder(params).encode(values, scale, level)


def decode(pt: Plaintext, params: CkksParams) -> np.ndarray:
    return get_encoder(params).decode(pt)


# ---------------------------------------------------------------------------
# Keys
# ---------------------------------------------------------------------------

def galois_element(step: int, n: int) -> int:
    """Galois element realizing a left rotation by ``step`` slots"""
    return pow(5, step % (n // 2), 2 * n)


def rotation_steps(slots: int, rotation_limit: int | None = None) -> list[int]:
    """Power-of-two rotation steps +-2^i up to slots/2, optionally below a limit"""
    bound = slots // 2 if rotation_limit is None else min(slots // 2, max(rotation_limit - 1, 0))
    steps = []
    power = 1
    while power <= bound:
        steps.extend((power, -power))
        power <<= 1
    return steps


def _uniform_eval(rng: np.random.Generator, moduli: tuple[PrimeModulus, ...]) -> RnsPoly:
    residues = sample(SampleKind.UNIFORM, rng, moduli).residues
    return RnsPoly(moduli, residues, Domain.EVALUATION)


def _make_key_switch_data(params: CkksParams, target: RnsPoly, secret: RnsPoly,
                          rng: np.random.Generator) -> np.ndarray:
    """Key-switch material from ``target`` (a secret-like poly) to ``secret``

    Digit i encrypts P * target on its own prime only, so that summing
    digit_i * key_i over the ciphertext primes reproduces P * c * target.
    """
    basis = params.basis
    ext = basis.extended(params.depth)
    tables = residue_tables(ext)
    p_value = basis.special.value
    digits = params.depth + 1
    data = np.empty((digits, 2, len(ext), params.n), dtype=np.uint64)
    for i in range(digits):
        a = _uniform_eval(rng, ext)
        e = to_evaluation(sample(SampleKind.GAUSSIAN, rng, ext))
        b = (e - a * secret).residues.copy()
        q_i = ext[i].value
        gadget = np.uint64(p_value % q_i)
        lifted = multiply_residues(target.residues[i:i + 1], np.array([[gadget]], dtype=np.uint64), ext[i:i + 1])
        b[i] = (b[i] + lifted[0]) % tables.q[i]
        data[i, 0] = b
        data[i, 1] = a.residues
    return data


def keygen(params: CkksParams, rng: np.random.Generator, rotation_limit: int | None = None) -> KeySet:
    """Generate secret, public, relinearization and Galois keys

    Args:
        params: scheme parameters
        rng: seeded generator; all key randomness comes from it
        rotation_limit: generate only rotation keys for steps below this bound
            (the default covers every power of two up to slots/2)
    """
    basis = params.basis
    ext = basis.extended(params.depth)
    top = basis.at_level(params.depth)

    secret_coeff = sample(SampleKind.TERNARY, rng, ext)
    secret_eval = to_evaluation(secret_coeff)
    secret = SecretKey(params, secret_eval)

    a = _uniform_eval(rng, top)
    e = to_evaluation(sample(SampleKind.GAUSSIAN, rng, top))
    s_top = secret.at_level(params.depth)
    public = PublicKey(params, e - a * s_top, a)

    relin = RelinKey(params, _make_key_switch_data(params, secret_eval * secret_eval, secret_eval, rng))

    galois: dict[int, KeySwitchKey] = {}
    for step in rotation_steps(params.slots, rotation_limit):
        rotated = to_evaluation(apply_automorphism(secret_coeff, galois_element(step, params.n)))
        galois[step] = KeySwitchKey(params, _make_key_switch_data(params, rotated, secret_eval, rng))

    log.info(
        f"Generated keys N={params.n} depth={params.depth} with {len(galois)} rotation key(s)"
    )
    return KeySet(secret, public, relin, GaloisKeys(params, galois))


# ---------------------------------------------------------------------------
# Encryption
# ---------------------------------------------------------------------------

def encrypt(pt: Plaintext, pk: PublicKey, rng: np.random.Generator) -> Ciphertext:
    """Public-key encryption at the plaintext's level"""
    moduli = pt.poly.moduli
    level = pt.level
    v = to_evaluation(sample(SampleKind.TERNARY, rng, moduli))
    e0 = to_evaluation(sample(SampleKind.GAUSSIAN, rng, moduli))
    e1 = to_evaluation(sample(SampleKind.GAUSSIAN, rng, moduli))
    c0 = pk.b.keep(level) * v + e0 + to_evaluation(pt.poly)
    c1 = pk.a.keep(level) * v + e1
    return Ciphertext((c0, c1), pt.scale)


def encrypt_symmetric(pt: Plaintext, sk: SecretKey, rng: np.random.Generator) -> Ciphertext:
    moduli = pt.poly.moduli
    a = _uniform_eval(rng, moduli)
    e = to_evaluation(sample(SampleKind.GAUSSIAN, rng, moduli))
    c0 = e - a * sk.at_level(pt.level) + to_evaluation(pt.poly)
    return Ciphertext((c0, a), pt.scale)


def decrypt(ct: Ciphertext, sk: SecretKey) -> Plaintext:
    s = sk.at_level(ct.level)
    message = ct.parts[0] + ct.parts[1] * s
    if len(ct.parts) == 3:
        message = message + ct.parts[2] * (s * s)
    return Plaintext(message, ct.scale)


# ---------------------------------------------------------------------------
# Evaluator
# ---------------------------------------------------------------------------

def _check_operands(level_a: int, level_b: int, scale_a: float, scale_b: float) -> None:
    if level_a != level_b:
        raise AlignmentError(f"Operands at levels {level_a} and {level_b}; mod-switch the higher one first")
    if abs(scale_a - scale_b) > SCALE_TOLERANCE * max(scale_a, scale_b):
        raise ScaleError(f"Scales {scale_a:.6e} and {scale_b:.6e} differ by more than 2^-10")


def _as_parts(x: Ciphertext | Plaintext) -> tuple[RnsPoly, ...]:
    if isinstance(x, Plaintext):
        return (to_evaluation(x.poly),)
    return x.parts


def add(a: Ciphertext | Plaintext, b: Ciphertext) -> Ciphertext:
    """Homomorphic addition; the result keeps b's level and scale"""
    _check_operands(a.level, b.level, a.scale, b.scale)
    _record("add")
    pa, pb = _as_parts(a), _as_parts(b)
    longer, shorter = (pa, pb) if len(pa) >= len(pb) else (pb, pa)
    parts = tuple(x + y for x, y in zip(longer, shorter)) + longer[len(shorter):]
    return Ciphertext(parts, b.scale)


def negate(ct: Ciphertext) -> Ciphertext:
    return Ciphertext(tuple(-p for p in ct.parts), ct.scale)


def sub(a: Ciphertext | Plaintext, b: Ciphertext | Plaintext) -> Ciphertext:
    """a - b where at least one operand is a ciphertext"""
    if isinstance(b, Plaintext):
        if isinstance(a, Plaintext):
            raise ContractViolation("sub needs at least one ciphertext operand")
        return add(Plaintext(-to_evaluation(b.poly), b.scale), a)
    return add(a, negate(b))


def mul_plain(ct: Ciphertext, pt: Plaintext) -> Ciphertext:
    """Slotwise product with a plaintext; the caller rescales"""
    if ct.level != pt.level:
        raise AlignmentError(f"Ciphertext at level {ct.level}, plaintext at level {pt.level}")
    _record("mul_plain")
    m = to_evaluation(pt.poly)
    return Ciphertext(tuple(p * m for p in ct.parts), ct.scale * pt.scale)


def mul_cipher(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    """Slotwise product of two 2-part ciphertexts, giving 3 parts"""
    if len(a.parts) != 2 or len(b.parts) != 2:
        raise ContractViolation("Ciphertext multiplication needs 2-part operands; relinearize first")
    if a.level != b.level:
        raise AlignmentError(f"Operands at levels {a.level} and {b.level}; mod-switch the higher one first")
    _record("mul_cipher")
    a0, a1 = a.parts
    b0, b1 = b.parts
    return Ciphertext((a0 * b0, a0 * b1 + a1 * b0, a1 * b1), a.scale * b.scale)


def _switch_key(poly: RnsPoly, key: KeySwitchKey) -> tuple[RnsPoly, RnsPoly]:
    """Return (k0, k1) with k0 + k1*s ~ poly * target, both in evaluation form"""
    _record("key_switch")
    basis = key.params.basis
    level = poly.level
    coeff = to_coefficient(poly)
    ext = basis.extended(level)
    q_ext = residue_tables(ext).q

    digits = coeff.residues[:, None, :] % q_ext[None, :, :]
    digits = forward_transform(digits, ext)
    rows = list(range(level + 1)) + [key.params.depth + 1]
    material = key.data[:level + 1][:, :, rows, :]

    out = []
    for component in (0, 1):
        acc = np.zeros_like(digits[0])
        for digit, key_part in zip(digits, material[:, component]):
            acc = (acc + multiply_residues(digit, key_part, ext)) % q_ext
        raised = RnsPoly(ext, inverse_transform(acc, ext), Domain.COEFFICIENT)
        out.append(to_evaluation(drop_last_prime_and_round(raised)))
    return out[0], out[1]


def relinearize(ct: Ciphertext, rk: RelinKey) -> Ciphertext:
    """Fold the third part back into two parts; a 2-part input is returned unchanged"""
    if len(ct.parts) == 2:
        log.warning("relinearize called on a 2-part ciphertext; nothing to do")
        return ct
    _record("relinearize")
    k0, k1 = _switch_key(ct.parts[2], rk)
    return Ciphertext((ct.parts[0] + k0, ct.parts[1] + k1), ct.scale)


def rescale(ct: Ciphertext) -> Ciphertext:
    """Divide by the last active prime and drop it

    Raises:
        DepthExhausted: ciphertext already at level 0
    """
    if ct.level == 0:
        raise DepthExhausted("Cannot rescale a level-0 ciphertext; the modulus chain is used up")
    _record("rescale")
    q_last = ct.moduli[-1].value
    parts = tuple(to_evaluation(drop_last_prime_and_round(to_coefficient(p))) for p in ct.parts)
    return Ciphertext(parts, ct.scale / q_last)


def rescale_prime(ct: Ciphertext) -> int:
    """The prime the next rescale of ``ct`` divides by"""
    return ct.moduli[-1].value


def mod_switch_to(ct: Ciphertext, level: int) -> Ciphertext:
    """Drop primes down to ``level`` without touching the scale"""
    if level > ct.level:
        raise ContractViolation(f"Cannot mod-switch up from level {ct.level} to {level}")
    if level < 0:
        raise ContractViolation(f"Target level must be non-negative, got {level}")
    if level == ct.level:
        return ct
    _record("mod_switch")
    return Ciphertext(tuple(p.keep(level) for p in ct.parts), ct.scale)


def _popcount_plan(amount: int, sign: int) -> list[int]:
    return [sign * (1 << b) for b in range(amount.bit_length()) if amount >> b & 1]


def rotation_plan(steps: int, slots: int, available: Sequence[int]) -> list[int]:
    """Power-of-two steps composing a rotation by ``steps`` using available keys

    Raises:
        MissingKeyError: neither direction can be composed from the keys
    """
    residue = steps % slots
    if residue == 0:
        return []
    have = set(available)
    plans = [_popcount_plan(residue, 1), _popcount_plan(slots - residue, -1)]
    usable = [p for p in plans if all(s in have for s in p)]
    if not usable:
        missing = sorted({s for p in plans for s in p} - have, key=abs)
        raise MissingKeyError(f"Rotation by {steps} needs Galois key(s) for steps {missing}")
    return min(usable, key=len)


def _rotate_once(ct: Ciphertext, step: int, gk: GaloisKeys) -> Ciphertext:
    g = galois_element(step, gk.params.n)
    c0 = apply_automorphism(to_coefficient(ct.parts[0]), g)
    c1 = apply_automorphism(to_coefficient(ct.parts[1]), g)
    k0, k1 = _switch_key(c1, gk.keys[step])
    return Ciphertext((to_evaluation(c0) + k0, k1), ct.scale)


def rotate(ct: Ciphertext, steps: int, gk: GaloisKeys) -> Ciphertext:
    """Cyclic left rotation of the slot vector: result[i] = input[i + steps]"""
    slots = gk.params.slots
    if abs(steps) >= slots:
        raise ContractViolation(f"|steps| must be below {slots}, got {steps}")
    if len(ct.parts) != 2:
        raise ContractViolation("Rotation needs a 2-part ciphertext; relinearize first")
    plan = rotation_plan(steps, slots, gk.keys)
    if not plan:
        return ct
    _record("rotate")
    log.debug(f"Rotating by {steps} via {plan}")
    for step in plan:
        ct = _rotate_once(ct, step, gk)
    return ct
