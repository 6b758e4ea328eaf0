"""Randomness expansion and sampling.

An AES-128-CTR extendable-output stream expands (nonce, domain) seeds into a
bit stream. On top of it sit a rejection sampler for uniform field elements
and an inverse-CDF sampler for the centered discrete Gaussian used by the
noise layer. Samplers count every attempt and every consumed bit so that the
hardware model can replay an identical randomness schedule.
"""

from __future__ import annotations

import math
import struct
from bisect import bisect_right
from dataclasses import dataclass, field

import mpmath
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .zq import Modulus, ParameterError, ZqElement

# Domain separation tags (the final seed byte).
RC_DOMAIN = 0x01
NOISE_DOMAIN = 0x02
KEY_DOMAIN = 0x03

SEED_BYTES = 16
_CHUNK_BLOCKS = 64  # AES blocks generated per refill

MAX_REJECT_ATTEMPTS = 10**6


class StreamFault(RuntimeError):
    """Raised when the randomness stream cannot satisfy a request."""


@dataclass
class SamplerStats:
    """Counters shared by the software samplers and the hardware model."""

    draws_attempted: int = 0
    draws_accepted: int = 0
    bits_consumed: int = 0

    def merge(self, other: "SamplerStats") -> None:
        self.draws_attempted += other.draws_attempted
        self.draws_accepted += other.draws_accepted
        self.bits_consumed += other.bits_consumed


def make_seed(nonce: bytes, domain_tag: int) -> bytes:
    """Zero-pad the nonce to 16 bytes; the last byte is the domain tag."""
    if len(nonce) > SEED_BYTES - 1:
        raise ParameterError(f"nonce must be at most {SEED_BYTES - 1} bytes, got {len(nonce)}")
    if not 0 <= domain_tag <= 0xFF:
        raise ParameterError(f"domain tag must fit one byte, got {domain_tag}")
    padded = nonce.ljust(SEED_BYTES, b"\x00")
    return padded[: SEED_BYTES - 1] + bytes([domain_tag])


class XofStream:
    """Deterministic bit stream: block i is AES-128(seed, BE128(i)), bits MSB-first.

    Encrypting a zero plaintext in CTR mode with a zero IV yields exactly the
    encryptions of the big-endian counter blocks, so the stream is produced in
    chunks through the CTR fast path.
    """

    def __init__(self, nonce: bytes, domain_tag: int):
        self.seed = make_seed(nonce, domain_tag)
        self._enc = Cipher(
            algorithms.AES(self.seed), modes.CTR(b"\x00" * 16)
        ).encryptor()
        self._buf = b""
        self._bitpos = 0  # bit offset into _buf
        self.bits_consumed = 0
        self.blocks_generated = 0

    def _refill(self) -> None:
        self._buf = self._buf[self._bitpos // 8 :]
        self._bitpos %= 8
        self._buf += self._enc.update(b"\x00" * (16 * _CHUNK_BLOCKS))
        self.blocks_generated += _CHUNK_BLOCKS

    def squeeze_bits(self, nbits: int) -> int:
        """Return the next nbits as an unsigned integer (first bit is the MSB)."""
        if nbits < 0:
            raise ParameterError("cannot squeeze a negative number of bits")
        while len(self._buf) * 8 - self._bitpos < nbits:
            self._refill()
        end = self._bitpos + nbits
        first, last = self._bitpos // 8, (end + 7) // 8
        window = int.from_bytes(self._buf[first:last], "big")
        tail = last * 8 - end
        value = (window >> tail) & ((1 << nbits) - 1)
        self._bitpos = end
        self.bits_consumed += nbits
        return value


def xof_init(nonce: bytes, domain_tag: int) -> XofStream:
    return XofStream(nonce, domain_tag)


def rejection_sample_uniform(
    stream,
    modulus: Modulus,
    exclude_zero: bool = False,
    stats: SamplerStats | None = None,
) -> ZqElement:
    """Draw ceil(log2 q)-bit words until one lands in the accepted range.

    `stream` only needs a squeeze_bits(n) method, so tests can substitute a
    scripted bit source for the AES stream.
    """
    w = modulus.bits
    for _ in range(MAX_REJECT_ATTEMPTS):
        c = stream.squeeze_bits(w)
        if stats is not None:
            stats.draws_attempted += 1
            stats.bits_consumed += w
        if c >= modulus.q or (exclude_zero and c == 0):
            continue
        if stats is not None:
            stats.draws_accepted += 1
        return ZqElement(c, modulus)
    raise StreamFault(
        f"no accepted draw within {MAX_REJECT_ATTEMPTS} attempts (q={modulus.q})"
    )


# --- discrete Gaussian ------------------------------------------------------

_CDF_MAGIC = b"CDFT"
_CDF_VERSION = 1


@dataclass(frozen=True)
class CdfTable:
    """Cumulative table for |e| of a centered discrete Gaussian.

    entries[i] = round(2^precision_bits * P(|e| <= i)), clamped to the
    representable maximum and nudged to be strictly increasing so that the
    inverse lookup is well defined at every magnitude.
    """

    sigma: float
    precision_bits: int
    tail_cut: int
    entries: tuple[int, ...] = field(repr=False)

    def __post_init__(self) -> None:
        if len(self.entries) != self.tail_cut + 1:
            raise ParameterError("table must hold tail_cut + 1 entries")
        if self.tail_cut < math.ceil(8 * self.sigma):
            raise ParameterError("tail_cut must cover at least 8 sigma")
        top = (1 << self.precision_bits) - 1
        prev = -1
        for e in self.entries:
            if not prev < e <= top:
                raise ParameterError("table entries must be strictly increasing and fit precision_bits")
            prev = e
        if self.entries[-1] != top:
            raise ParameterError("final entry must saturate the precision range")


def build_cdf_table(
    sigma: float = 1.6, precision_bits: int = 64, tail_cut: int = 16
) -> CdfTable:
    if sigma <= 0 or tail_cut < 1 or precision_bits < 8:
        raise ParameterError("bad Gaussian table parameters")
    with mpmath.workdps(precision_bits + 40):
        s2 = mpmath.mpf(2) * mpmath.mpf(sigma) ** 2
        weights = [mpmath.exp(-mpmath.mpf(i * i) / s2) for i in range(tail_cut + 1)]
        total = weights[0] + 2 * mpmath.fsum(weights[1:])
        scale = mpmath.mpf(2) ** precision_bits
        entries: list[int] = []
        acc = weights[0]
        for i in range(tail_cut + 1):
            if i:
                acc += 2 * weights[i]
            entries.append(int(mpmath.floor(scale * acc / total + mpmath.mpf("0.5"))))
    # Quantization saturates the deep tail at the representable maximum; walk
    # backward forcing a strict increase so the inverse lookup stays injective.
    top = (1 << precision_bits) - 1
    fixed = [min(e, top) for e in entries]
    fixed[-1] = top
    for i in range(tail_cut - 1, -1, -1):
        fixed[i] = min(fixed[i], fixed[i + 1] - 1)
    return CdfTable(sigma, precision_bits, tail_cut, tuple(fixed))


def save_cdf_table(table: CdfTable, path: str) -> None:
    width = (table.precision_bits + 7) // 8
    with open(path, "wb") as fh:
        fh.write(_CDF_MAGIC)
        fh.write(struct.pack(">HHI", _CDF_VERSION, table.precision_bits, table.tail_cut))
        fh.write(struct.pack(">d", table.sigma))
        for e in table.entries:
            fh.write(e.to_bytes(width, "big"))


def load_cdf_table(path: str) -> CdfTable:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _CDF_MAGIC:
            raise ParameterError(f"not a CDF table file (magic {magic!r})")
        version, precision_bits, tail_cut = struct.unpack(">HHI", fh.read(8))
        if version != _CDF_VERSION:
            raise ParameterError(f"unsupported CDF table version {version}")
        (sigma,) = struct.unpack(">d", fh.read(8))
        width = (precision_bits + 7) // 8
        raw = fh.read(width * (tail_cut + 1))
        if len(raw) != width * (tail_cut + 1):
            raise ParameterError("truncated CDF table file")
        entries = tuple(
            int.from_bytes(raw[i * width : (i + 1) * width], "big")
            for i in range(tail_cut + 1)
        )
    return CdfTable(sigma, precision_bits, tail_cut, entries)


def sample_gaussian(
    stream, table: CdfTable, stats: SamplerStats | None = None
) -> int:
    """Inverse-CDF draw: precision_bits of u, then a sign bit for nonzero magnitudes."""
    u = stream.squeeze_bits(table.precision_bits)
    bits = table.precision_bits
    magnitude = bisect_right(table.entries, u)
    if magnitude > table.tail_cut:  # u above the saturated last entry
        magnitude = table.tail_cut
    value = magnitude
    if magnitude > 0:
        sign = stream.squeeze_bits(1)
        bits += 1
        if sign:
            value = -magnitude
    if stats is not None:
        stats.draws_attempted += 1
        stats.draws_accepted += 1
        stats.bits_consumed += bits
    return value
