"""Arithmetic in the prime field Z_q.

Elements carry their modulus so that mixed-modulus operations fail loudly
instead of silently wrapping. All operations reduce to the canonical
representative in [0, q).
"""

from __future__ import annotations

from dataclasses import dataclass


class ParameterError(ValueError):
    """Raised for out-of-contract parameters (bad modulus, shapes, ranges)."""


class ModulusMismatchError(ParameterError):
    """Raised when two operands belong to different Z_q rings."""


# Deterministic Miller-Rabin witnesses, sufficient for all n < 3.3 * 10^24.
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    for p in _MR_BASES:
        if n % p == 0:
            return n == p
    d = n - 1
    s = 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


@dataclass(frozen=True)
class Modulus:
    """A verified prime modulus q with 2 <= q < 2^61."""

    q: int

    def __post_init__(self) -> None:
        if not isinstance(self.q, int) or not (2 <= self.q < 2**61):
            raise ParameterError(f"modulus must be an integer in [2, 2^61), got {self.q!r}")
        if not is_prime(self.q):
            raise ParameterError(f"modulus {self.q} is not prime")

    @property
    def bits(self) -> int:
        """ceil(log2 q): the draw width used by rejection sampling."""
        return (self.q - 1).bit_length()

    def reduce(self, value: int) -> int:
        return value % self.q


@dataclass(frozen=True)
class ZqElement:
    value: int
    modulus: Modulus

    def __post_init__(self) -> None:
        object.__setattr__(self, "value", self.value % self.modulus.q)

    def __add__(self, other: "ZqElement") -> "ZqElement":
        return zq_add(self, other)

    def __sub__(self, other: "ZqElement") -> "ZqElement":
        return zq_sub(self, other)

    def __mul__(self, other: "ZqElement") -> "ZqElement":
        return zq_mul(self, other)

    def __neg__(self) -> "ZqElement":
        return zq_neg(self)


def _check_same_ring(a: ZqElement, b: ZqElement) -> Modulus:
    if a.modulus.q != b.modulus.q:
        raise ModulusMismatchError(
            f"operands live in Z_{a.modulus.q} and Z_{b.modulus.q}"
        )
    return a.modulus

def zq_add(a: ZqElement, b: ZqElement) -> ZqElement:
    m = _check_same_ring(a, b)
    return ZqElement((a.value + b.value) % m.q, m)


def zq_sub(a: ZqElement, b: ZqElement) -> ZqElement:
    m = _check_same_ring(a, b)
    return ZqElement((a.value - b.value) % m.q, m)


def zq_mul(a: ZqElement, b: ZqElement) -> ZqElement:
    # Python ints keep the full double-width product; no wraparound to guard.
    m = _check_same_ring(a, b)
    return ZqElement(a.value * b.value % m.q, m)


def zq_neg(a: ZqElement) -> ZqElement:
    return ZqElement(-a.value % a.modulus.q, a.modulus)


def zq_pow3(a: ZqElement) -> ZqElement:
    """Cube via two multiplications, the same dataflow the cube unit uses."""
    q = a.modulus.q
    sq = a.value * a.value % q
    return ZqElement(sq * a.value % q, a.modulus)
