"""
Versioned binary format for parameters, keys, plaintexts and ciphertexts

Layout: b"CDHE", u16 format version, u8 object kind, then the object body.
All integers are little-endian; every array is preceded by its dimensions.
"""
from __future__ import annotations

import io
import logging
import struct
from pathlib import Path
from typing import Any, BinaryIO

import numpy as np

from utils.ckks import (
    Ciphertext,
    CkksParams,
    GaloisKeys,
    KeySwitchKey,
    Plaintext,
    PublicKey,
    RelinKey,
    SecretKey,
    SecurityPreset,
)
from utils.errors import SerializationError
from utils.ring import Domain, PrimeModulus, RnsBasis, RnsPoly

log = logging.getLogger('hegd.codec')

MAGIC = b"CDHE"
FORMAT_VERSION = 1

_KINDS = {
    CkksParams: 1,
    Plaintext: 2,
    Ciphertext: 3,
    SecretKey: 4,
    PublicKey: 5,
    RelinKey: 6,
    KeySwitchKey: 7,
    GaloisKeys: 8,
}
_PRESET_CODES = {SecurityPreset.SECURE128: 0, SecurityPreset.INSECURE_TEST: 1}
_DOMAIN_CODES = {Domain.COEFFICIENT: 0, Domain.EVALUATION: 1}


def _pack(out: BinaryIO, fmt: str, *values) -> None:
    out.write(struct.pack('<' + fmt, *values))


def _unpack(src: BinaryIO, fmt: str) -> tuple:
    size = struct.calcsize('<' + fmt)
    chunk = src.read(size)
    if len(chunk) != size:
        raise SerializationError(f"Truncated blob: expected {size} more bytes, got {len(chunk)}")
    return struct.unpack('<' + fmt, chunk)


def _write_array(out: BinaryIO, array: np.ndarray) -> None:
    _pack(out, 'B', array.ndim)
    _pack(out, f'{array.ndim}I', *array.shape)
    out.write(np.ascontiguousarray(array, dtype='<u8').tobytes())


def _read_array(src: BinaryIO) -> np.ndarray:
    (ndim,) = _unpack(src, 'B')
    shape = _unpack(src, f'{ndim}I')
    count = int(np.prod(shape)) if ndim else 1
    raw = src.read(8 * count)
    if len(raw) != 8 * count:
        raise SerializationError(f"Truncated array: expected {8 * count} bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype='<u8').astype(np.uint64).reshape(shape)


def _write_params(out: BinaryIO, params: CkksParams) -> None:
    basis = params.basis
    _pack(out, 'IHHB', params.n, params.depth, params.scale_bits, _PRESET_CODES[params.security_preset])
    _pack(out, 'H', len(basis.primes))
    _pack(out, f'{len(basis.primes)}Q', *(p.value for p in basis.primes))
    _pack(out, 'Q', basis.special.value if basis.special is not None else 0)


def _read_params(src: BinaryIO) -> CkksParams:
    n, depth, scale_bits, preset_code = _unpack(src, 'IHHB')
    (count,) = _unpack(src, 'H')
    primes = _unpack(src, f'{count}Q')
    (special,) = _unpack(src, 'Q')
    presets = {code: preset for preset, code in _PRESET_CODES.items()}
    if preset_code not in presets:
        raise SerializationError(f"Unknown security preset code {preset_code}")
    basis = RnsBasis.from_primes(primes, n, scale_bits, special=special or None)
    return CkksParams(n=n, depth=depth, scale_bits=scale_bits,
                      security_preset=presets[preset_code], basis=basis)


def _write_poly(out: BinaryIO, poly: RnsPoly) -> None:
    _pack(out, 'BIH', _DOMAIN_CODES[poly.domain], poly.n, len(poly.moduli))
    _pack(out, f'{len(poly.moduli)}Q', *(m.value for m in poly.moduli))
    _write_array(out, poly.residues)


def _read_poly(src: BinaryIO) -> RnsPoly:
    domain_code, n, count = _unpack(src, 'BIH')
    values = _unpack(src, f'{count}Q')
    domains = {code: domain for domain, code in _DOMAIN_CODES.items()}
    if domain_code not in domains:
        raise SerializationError(f"Unknown domain code {domain_code}")
    moduli = tuple(PrimeModulus.create(v, n) for v in values)
    return RnsPoly(moduli, _read_array(src), domains[domain_code])


def _write_body(out: BinaryIO, obj: Any) -> None:
    if isinstance(obj, CkksParams):
        _write_params(out, obj)
    elif isinstance(obj, Plaintext):
        _pack(out, 'd', obj.scale)
        _write_poly(out, obj.poly)
    elif isinstance(obj, Ciphertext):
        _pack(out, 'dB', obj.scale, len(obj.parts))
        for part in obj.parts:
            _write_poly(out, part)
    elif isinstance(obj, SecretKey):
        _write_params(out, obj.params)
        _write_poly(out, obj.poly)
    elif isinstance(obj, PublicKey):
        _write_params(out, obj.params)
        _write_poly(out, obj.b)
        _write_poly(out, obj.a)
    elif isinstance(obj, KeySwitchKey):
        _write_params(out, obj.params)
        _write_array(out, obj.data)
    elif isinstance(obj, GaloisKeys):
        _write_params(out, obj.params)
        _pack(out, 'I', len(obj.keys))
        for step in obj.steps:
            _pack(out, 'i', step)
            _write_array(out, obj.keys[step].data)


def _read_body(src: BinaryIO, kind: int) -> Any:
    if kind == _KINDS[CkksParams]:
        return _read_params(src)
    if kind == _KINDS[Plaintext]:
        (scale,) = _unpack(src, 'd')
        return Plaintext(_read_poly(src), scale)
    if kind == _KINDS[Ciphertext]:
        scale, count = _unpack(src, 'dB')
        return Ciphertext(tuple(_read_poly(src) for _ in range(count)), scale)
    if kind == _KINDS[SecretKey]:
        params = _read_params(src)
        return SecretKey(params, _read_poly(src))
    if kind == _KINDS[PublicKey]:
        params = _read_params(src)
        return PublicKey(params, _read_poly(src), _read_poly(src))
    if kind in (_KINDS[RelinKey], _KINDS[KeySwitchKey]):
        params = _read_params(src)
        cls = RelinKey if kind == _KINDS[RelinKey] else KeySwitchKey
        return cls(params, _read_array(src))
    if kind == _KINDS[GaloisKeys]:
        params = _read_params(src)
        (count,) = _unpack(src, 'I')
        keys = {}
        for _ in range(count):
            (step,) = _unpack(src, 'i')
            keys[step] = KeySwitchKey(params, _read_array(src))
        return GaloisKeys(params, keys)
    raise SerializationError(f"Unknown object kind {kind}")


def serialize(obj: Any) -> bytes:
    """Encode a parameter set, key, plaintext or ciphertext

    Raises:
        SerializationError: unsupported object type
    """
    kind = _KINDS.get(type(obj))
    if kind is None:
        raise SerializationError(f"Cannot serialize objects of type {type(obj).__name__}")
    out = io.BytesIO()
    out.write(MAGIC)
    _pack(out, 'HB', FORMAT_VERSION, kind)
    _write_body(out, obj)
    return out.getvalue()


def deserialize(blob: bytes) -> Any:
    """Inverse of ``serialize``

    Raises:
        SerializationError: wrong magic, unsupported version, or truncated data
    """
    src = io.BytesIO(blob)
    if src.read(4) != MAGIC:
        raise SerializationError("Missing CDHE magic bytes")
    version, kind = _unpack(src, 'HB')
    if version != FORMAT_VERSION:
        raise SerializationError(f"Unsupported format version {version}; expected {FORMAT_VERSION}")
    obj = _read_body(src, kind)
    if src.read(1):
        raise SerializationError("Trailing bytes after object body")
    return obj


def save(obj: Any, path: str | Path) -> None:
    Path(path).write_bytes(serialize(obj))
    log.debug(f"Wrote {type(obj).__name__} to {path}")


def load(path: str | Path) -> Any:
    return deserialize(Path(path).read_bytes())
