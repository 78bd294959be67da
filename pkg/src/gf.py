"""Galois field arithmetic over F_q, q = p^n, in a polynomial basis

Elements are stored fully reduced as the integer sum(c_i * p^i) of their
coefficient vector (coefficient of x^0 first), so equality, hashing and
serialization never see a non-canonical form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence, Union

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator

from .errors import EncodingError, FieldMismatchError, FieldZeroDivisionError

# exponents of the nonzero terms of the shipped GF(2^n) moduli
GF2_PRESETS: dict[int, tuple[int, ...]] = {
    1: (1,),
    2: (2, 1, 0),
    3: (3, 1, 0),
    4: (4, 1, 0),
    5: (5, 2, 0),
    6: (6, 1, 0),
    7: (7, 1, 0),
    8: (8, 4, 3, 1, 0),
    9: (9, 4, 0),
    10: (10, 3, 0),
    11: (11, 2, 0),
    12: (12, 3, 0),
    13: (13, 4, 3, 1, 0),
    14: (14, 5, 0),
    15: (15, 1, 0),
    16: (16, 5, 3, 1, 0),
    32: (32, 7, 3, 2, 0),
    64: (64, 4, 3, 1, 0),
    128: (128, 7, 2, 1, 0),
}
# degrees whose modulus is found by generate_irreducible on first use
GF2_SEARCHED_PRESETS = (170, 340)

TABLE_LIMIT = 256


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    return all(n % d for d in range(3, math.isqrt(n) + 1, 2))


# ---------------------------------------------------------------------------
# F_2[x] on Python integers (bit i = coefficient of x^i)
# ---------------------------------------------------------------------------

def _clmul(a: int, b: int) -> int:
    result = 0
    while b:
        if b & 1:
            result ^= a
        a <<= 1
        b >>= 1
    return result


def _gf2_square(a: int) -> int:
    # squaring in characteristic 2 interleaves zeros between the bits
    return int("0".join(format(a, "b")), 2) if a else 0


def _gf2_mod(a: int, m: int) -> int:
    m_len = m.bit_length()
    while (a_len := a.bit_length()) >= m_len:
        a ^= m << (a_len - m_len)
    return a


def _gf2_gcd(a: int, b: int) -> int:
    while b:
        a, b = b, _gf2_mod(a, b)
    return a


def _bits_to_int(coeffs: Sequence[int]) -> int:
    return sum(1 << i for i, c in enumerate(coeffs) if c)


# ---------------------------------------------------------------------------
# F_p[x] on coefficient lists (x^0 first)
# ---------------------------------------------------------------------------

def _trim(c: list[int]) -> list[int]:
    while c and c[-1] == 0:
        c.pop()
    return c


def _poly_sub(a: Sequence[int], b: Sequence[int], p: int) -> list[int]:
    size = max(len(a), len(b))
    out = [
        ((a[i] if i < len(a) else 0) - (b[i] if i < len(b) else 0)) % p
        for i in range(size)
    ]
    return _trim(out)


def _poly_mul(a: Sequence[int], b: Sequence[int], p: int) -> list[int]:
    if not a or not b:
        return []
    out = [0] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        if ai:
            for j, bj in enumerate(b):
                out[i + j] = (out[i + j] + ai * bj) % p
    return _trim(out)


def _poly_mod(a: Sequence[int], m: Sequence[int], p: int) -> list[int]:
    rem = _trim(list(a))
    m = list(m)
    inv_lead = pow(m[-1], p - 2, p)
    shift = len(rem) - len(m)
    while shift >= 0 and rem:
        factor = rem[-1] * inv_lead % p
        for i, mi in enumerate(m):
            rem[shift + i] = (rem[shift + i] - factor * mi) % p
        _trim(rem)
        shift = len(rem) - len(m)
    return rem


def _poly_gcd(a: Sequence[int], b: Sequence[int], p: int) -> list[int]:
    a, b = _trim(list(a)), _trim(list(b))
    while b:
        a, b = b, _poly_mod(a, b, p)
    return a


def _poly_powmod(base: Sequence[int], exponent: int, m: Sequence[int], p: int) -> list[int]:
    result = [1]
    base = _poly_mod(base, m, p)
    while exponent:
        if exponent & 1:
            result = _poly_mod(_poly_mul(result, base, p), m, p)
        base = _poly_mod(_poly_mul(base, base, p), m, p)
        exponent >>= 1
    return result


@lru_cache(maxsize=256)
def _irreducible(p: int, coeffs: tuple[int, ...]) -> bool:
    n = len(coeffs) - 1
    if n == 1:
        return True
    if coeffs[0] == 0:
        return False
    # Ben-Or: f is irreducible iff gcd(f, x^(p^i) - x) = 1 for i <= n/2
    if p == 2:
        f = _bits_to_int(coeffs)
        u = 2
        for _ in range(n // 2):
            u = _gf2_mod(_gf2_square(u), f)
            if _gf2_gcd(f, u ^ 2) != 1:
                return False
        return True
    x = [0, 1]
    u = x
    for _ in range(n // 2):
        u = _poly_powmod(u, p, coeffs, p)
        if len(_poly_gcd(coeffs, _poly_sub(u, x, p), p)) > 1:
            return False
    return True


def is_irreducible(p: int, poly: Sequence[int]) -> bool:
    """
    Exact irreducibility test over F_p

    Args:
        p: prime characteristic
        poly: coefficients, x^0 first, monic

    Returns:
        True iff poly admits no nontrivial factorization over F_p
    """
    coeffs = tuple(int(c) for c in poly)
    if not is_prime(p):
        raise ValueError(f"characteristic {p} is not prime")
    if not coeffs or coeffs[-1] != 1:
        raise ValueError("polynomial must be monic")
    if any(not 0 <= c < p for c in coeffs):
        raise ValueError(f"coefficients must be residues mod {p}")
    if len(coeffs) < 2:
        return False
    return _irreducible(p, coeffs)


def _from_exponents(exponents: Sequence[int]) -> tuple[int, ...]:
    coeffs = [0] * (max(exponents) + 1)
    for e in exponents:
        coeffs[e] = 1
    return tuple(coeffs)


def generate_irreducible(p: int, n: int) -> tuple[int, ...]:
    """Deterministic search: lowest weight first, then lexicographically smallest middle terms"""
    if n == 1:
        return (0, 1)
    if p == 2:
        for a in range(1, n):
            candidate = _from_exponents((n, a, 0))
            if _irreducible(2, candidate):
                return candidate
        for a in range(3, n):
            for b in range(2, a):
                for c in range(1, b):
                    candidate = _from_exponents((n, a, b, c, 0))
                    if _irreducible(2, candidate):
                        return candidate
    else:
        for tail in range(1, p**n):
            digits = [(tail // p**i) % p for i in range(n)]
            candidate = tuple(digits) + (1,)
            if _irreducible(p, candidate):
                return candidate
    raise ValueError(f"no irreducible polynomial of degree {n} over F_{p}")


# ---------------------------------------------------------------------------
# Field description
# ---------------------------------------------------------------------------

class FieldSpec(BaseModel):
    """F_q as F_p[x] / (modulus)"""

    model_config = ConfigDict(frozen=True)

    characteristic: int = Field(..., ge=2)
    degree: int = Field(..., ge=1)
    modulus: tuple[int, ...]

    _order: int = PrivateAttr(default=0)
    _residue_bits: int = PrivateAttr(default=0)
    _modulus_int: int = PrivateAttr(default=0)

    @field_validator("characteristic")
    @classmethod
    def _prime_characteristic(cls, value: int) -> int:
        if not is_prime(value):
            raise ValueError(f"characteristic {value} is not prime")
        return value

    @model_validator(mode="after")
    def _irreducible_modulus(self) -> "FieldSpec":
        p, n, m = self.characteristic, self.degree, self.modulus
        if len(m) != n + 1 or m[-1] != 1:
            raise ValueError(f"modulus must be monic of degree {n}")
        if any(not 0 <= c < p for c in m):
            raise ValueError(f"modulus coefficients must be residues mod {p}")
        if not _irreducible(p, m):
            raise ValueError(f"modulus {m} is reducible over F_{p}")
        return self

    def model_post_init(self, __context) -> None:
        p = self.characteristic
        self._order = p**self.degree
        self._residue_bits = (p - 1).bit_length()
        self._modulus_int = _bits_to_int(self.modulus) if p == 2 else 0

    @classmethod
    def preset(cls, p: int, n: int = 1) -> "FieldSpec":
        return _preset(p, n)

    @classmethod
    def from_order(cls, q: int) -> "FieldSpec":
        if q < 2:
            raise ValueError(f"field order must be at least 2, got {q}")
        # the smallest divisor is prime; a prime order has none below its square root
        p = next((c for c in range(2, math.isqrt(q) + 1) if q % c == 0), q)
        n, rest = 0, q
        while rest % p == 0:
            rest //= p
            n += 1
        if rest != 1:
            raise ValueError(f"{q} is not a prime power")
        return _preset(p, n)

    @property
    def order(self) -> int:
        return self._order

    @property
    def residue_bits(self) -> int:
        return self._residue_bits

    @property
    def byte_length(self) -> int:
        return (self.degree * self._residue_bits + 7) // 8

    @property
    def label(self) -> str:
        if self.degree == 1:
            return f"GF({self.characteristic})"
        return f"GF({self.characteristic}^{self.degree})"

    def element(self, value: Union[int, Sequence[int]]) -> "FieldElement":
        """Element from its integer index or its coefficient vector"""
        if isinstance(value, (int, np.integer)):
            value = int(value)
            if not 0 <= value < self._order:
                raise EncodingError(f"{value} is not an element index of {self.label}")
            return FieldElement(self, value)
        coeffs = list(value)
        if len(coeffs) != self.degree or any(not 0 <= c < self.characteristic for c in coeffs):
            raise EncodingError(f"coefficient vector {coeffs} is not canonical for {self.label}")
        return FieldElement(self, _digits_to_int(coeffs, self.characteristic))

    def zero(self) -> "FieldElement":
        return FieldElement(self, 0)

    def one(self) -> "FieldElement":
        return FieldElement(self, 1)

    def elements(self) -> Iterator["FieldElement"]:
        for value in range(self._order):
            yield FieldElement(self, value)

    def embed_bit(self, bit: int) -> "FieldElement":
        if bit not in (0, 1):
            raise ValueError(f"bit must be 0 or 1, got {bit}")
        return FieldElement(self, bit)

    def __str__(self) -> str:
        return self.label


@lru_cache(maxsize=64)
def _preset(p: int, n: int) -> FieldSpec:
    if p == 2 and n in GF2_PRESETS:
        modulus = _from_exponents(GF2_PRESETS[n])
    elif n == 1:
        modulus = (0, 1)
    else:
        logger.debug(f"Searching irreducible modulus for GF({p}^{n})")
        modulus = generate_irreducible(p, n)
    spec = FieldSpec(characteristic=p, degree=n, modulus=modulus)
    logger.debug(f"Loaded preset {spec.label} modulus={modulus}")
    return spec


def _digits_to_int(digits: Sequence[int], p: int) -> int:
    value = 0
    for c in reversed(digits):
        value = value * p + c
    return value


def _int_to_digits(value: int, p: int, n: int) -> list[int]:
    if p == 2:
        return [(value >> i) & 1 for i in range(n)]
    digits = []
    for _ in range(n):
        value, c = divmod(value, p)
        digits.append(c)
    return digits


# ---------------------------------------------------------------------------
# Elements
# ---------------------------------------------------------------------------

class FieldElement:
    """Immutable element of a FieldSpec"""

    __slots__ = ("spec", "value")

    def __init__(self, spec: FieldSpec, value: int):
        object.__setattr__(self, "spec", spec)
        object.__setattr__(self, "value", value)

    def __setattr__(self, name, value):
        raise AttributeError("FieldElement is immutable")

    @property
    def coeffs(self) -> tuple[int, ...]:
        return tuple(_int_to_digits(self.value, self.spec.characteristic, self.spec.degree))

    def _same_field(self, other: "FieldElement") -> FieldSpec:
        if not isinstance(other, FieldElement):
            raise FieldMismatchError(f"expected an element of {self.spec.label}, got {other!r}")
        if other.spec is not self.spec and other.spec != self.spec:
            raise FieldMismatchError(
                f"operands live in different fields: {self.spec.label} and {other.spec.label}"
            )
        return self.spec

    def __add__(self, other: "FieldElement") -> "FieldElement":
        spec = self._same_field(other)
        p = spec.characteristic
        if p == 2:
            return FieldElement(spec, self.value ^ other.value)
        a = _int_to_digits(self.value, p, spec.degree)
        b = _int_to_digits(other.value, p, spec.degree)
        return FieldElement(spec, _digits_to_int([(x + y) % p for x, y in zip(a, b)], p))

    def __neg__(self) -> "FieldElement":
        p = self.spec.characteristic
        if p == 2:
            return self
        digits = _int_to_digits(self.value, p, self.spec.degree)
        return FieldElement(self.spec, _digits_to_int([(-c) % p for c in digits], p))

    def __sub__(self, other: "FieldElement") -> "FieldElement":
        self._same_field(other)
        return self + (-other)

    def __mul__(self, other: "FieldElement") -> "FieldElement":
        spec = self._same_field(other)
        p = spec.characteristic
        if p == 2:
            return FieldElement(spec, _gf2_mod(_clmul(self.value, other.value), spec._modulus_int))
        a = _int_to_digits(self.value, p, spec.degree)
        b = _int_to_digits(other.value, p, spec.degree)
        product = _poly_mod(_poly_mul(_trim(a), _trim(b), p), spec.modulus, p)
        return FieldElement(spec, _digits_to_int(product, p))

    def __pow__(self, exponent: int) -> "FieldElement":
        if exponent < 0:
            return self.inverse() ** (-exponent)
        result, base = self.spec.one(), self
        while exponent:
            if exponent & 1:
                result = result * base
            base = base * base
            exponent >>= 1
        return result

    def inverse(self) -> "FieldElement":
        if self.value == 0:
            raise FieldZeroDivisionError(f"zero has no inverse in {self.spec.label}")
        return self ** (self.spec.order - 2)

    def __truediv__(self, other: "FieldElement") -> "FieldElement":
        self._same_field(other)
        return self * other.inverse()

    def __eq__(self, other) -> bool:
        if not isinstance(other, FieldElement):
            return NotImplemented
        return self.value == other.value and (other.spec is self.spec or other.spec == self.spec)

    def __hash__(self) -> int:
        return hash((self.spec.order, self.value))

    def __int__(self) -> int:
        return self.value

    def __index__(self) -> int:
        return self.value

    def __bool__(self) -> bool:
        return self.value != 0

    def hex(self) -> str:
        return to_bytes(self).hex()

    def __repr__(self) -> str:
        return f"{self.spec.label}({self.value:#x})"


# ---------------------------------------------------------------------------
# Functional API
# ---------------------------------------------------------------------------

def add(u: FieldElement, v: FieldElement) -> FieldElement:
    return u + v


def sub(u: FieldElement, v: FieldElement) -> FieldElement:
    return u - v


def neg(u: FieldElement) -> FieldElement:
    return -u


def mul(u: FieldElement, v: FieldElement) -> FieldElement:
    return u * v


def inv(u: FieldElement) -> FieldElement:
    return u.inverse()


def to_bytes(u: FieldElement) -> bytes:
    """
    Canonical encoding

    Residues are concatenated x^0 first, each as a big-endian field of
    ceil(log2 p) bits; the bit stream is packed little-endian within bytes
    and the final byte is padded with zero high bits.
    """
    spec = u.spec
    if spec.characteristic == 2:
        return u.value.to_bytes(spec.byte_length, "little")
    width = spec.residue_bits
    stream = 0
    for i, c in enumerate(u.coeffs):
        for t in range(width):
            if (c >> (width - 1 - t)) & 1:
                stream |= 1 << (i * width + t)
    return stream.to_bytes(spec.byte_length, "little")


def from_bytes(spec: FieldSpec, data: bytes) -> FieldElement:
    if len(data) != spec.byte_length:
        raise EncodingError(
            f"{spec.label} elements encode to {spec.byte_length} bytes, got {len(data)}",
            expected=spec.byte_length,
            actual=len(data),
        )
    width = spec.residue_bits
    payload_bits = spec.degree * width
    stream = int.from_bytes(data, "little")
    if stream >> payload_bits:
        raise EncodingError("padding bits must be zero")
    if spec.characteristic == 2:
        return FieldElement(spec, stream)
    coeffs = []
    for i in range(spec.degree):
        c = 0
        for t in range(width):
            c = (c << 1) | ((stream >> (i * width + t)) & 1)
        if c >= spec.characteristic:
            raise EncodingError(f"residue {c} out of range for {spec.label}", position=i)
        coeffs.append(c)
    return FieldElement(spec, _digits_to_int(coeffs, spec.characteristic))


def make_rng(seed: int) -> np.random.Generator:
    """Seedable counter-based generator shared by every simulation component"""
    return np.random.Generator(np.random.Philox(seed))


def random_element(spec: FieldSpec, rng: np.random.Generator) -> FieldElement:
    """Uniform element by rejection over ceil(log2 q)-bit draws"""
    bits = (spec.order - 1).bit_length()
    n_bytes = (bits + 7) // 8
    mask = (1 << bits) - 1
    while True:
        value = int.from_bytes(rng.bytes(n_bytes), "little") & mask
        if value < spec.order:
            return FieldElement(spec, value)


# ---------------------------------------------------------------------------
# Lookup tables for the small-field enumerators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FieldTables:
    """Operation tables indexed by element value; inverse[0] is -1"""

    add: np.ndarray
    sub: np.ndarray
    mul: np.ndarray
    neg: np.ndarray
    inverse: np.ndarray


@lru_cache(maxsize=32)
def tables(spec: FieldSpec) -> FieldTables:
    q = spec.order
    if q > TABLE_LIMIT:
        raise ValueError(f"operation tables are limited to q <= {TABLE_LIMIT}, got {q}")
    elems = list(spec.elements())
    add_t = np.array([[int(a + b) for b in elems] for a in elems], dtype=np.int64)
    mul_t = np.array([[int(a * b) for b in elems] for a in elems], dtype=np.int64)
    neg_t = np.array([int(-a) for a in elems], dtype=np.int64)
    sub_t = add_t[:, neg_t]
    inv_t = np.array([-1] + [int(a.inverse()) for a in elems[1:]], dtype=np.int64)
    for arr in (add_t, sub_t, mul_t, neg_t, inv_t):
        arr.setflags(write=False)
    return FieldTables(add=add_t, sub=sub_t, mul=mul_t, neg=neg_t, inverse=inv_t)
