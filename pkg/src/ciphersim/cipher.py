"""HERA and Rubato round functions and keystream generation.

States are v x v matrices over Z_q stored row-major. Each state carries an
order tag (row or col) describing the element order a streaming datapath
would emit it in; the fused mixing step flips the tag, everything else keeps
it. The tag has no effect on values.

Per keystream block, randomness comes from XOF streams seeded with
nonce || BE32(block_index): round constants are uniform nonzero field
elements in application order, the noise layer draws one centered Gaussian
per kept element.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .params import CipherParams, SCHEME_HERA, SCHEME_RUBATO
from .sampler import (
    CdfTable,
    KEY_DOMAIN,
    NOISE_DOMAIN,
    RC_DOMAIN,
    SamplerStats,
    build_cdf_table,
    rejection_sample_uniform,
    sample_gaussian,
    xof_init,
)
from .zq import Modulus, ParameterError, ZqElement

ORDER_ROW = "row"
ORDER_COL = "col"

MAX_NONCE_BYTES = 11  # leaves room for BE32(block_index) inside the seed


class EncodingError(ParameterError):
    """Raised when a scaled message value cannot be represented mod q."""


@dataclass(frozen=True)
class StateMatrix:
    """Row-major v x v state over Z_q, tagged with its streaming order."""

    values: tuple[int, ...]
    q: int
    order: str = ORDER_ROW

    def __post_init__(self) -> None:
        v = math.isqrt(len(self.values))
        if v * v != len(self.values) or v < 2:
            raise ParameterError("state length must be a square")
        if self.order not in (ORDER_ROW, ORDER_COL):
            raise ParameterError(f"unknown order tag {self.order!r}")
        if any(not 0 <= x < self.q for x in self.values):
            raise ParameterError("state entries must be canonical mod q")

    @property
    def v(self) -> int:
        return math.isqrt(len(self.values))

    def transpose(self) -> "StateMatrix":
        v = self.v
        vals = tuple(self.values[c * v + r] for r in range(v) for c in range(v))
        return StateMatrix(vals, self.q, self.order)


def _vec(x: Sequence[int], n: int, q: int, what: str) -> list[int]:
    if len(x) != n:
        raise ParameterError(f"{what} must have {n} entries, got {len(x)}")
    out = [int(e) for e in x]
    if any(not 0 <= e < q for e in out):
        raise ParameterError(f"{what} entries must be canonical mod q")
    return out


def ark(x: StateMatrix, key: Sequence[int], rc: Sequence[int]) -> StateMatrix:
    """x + key * rc elementwise: the round key is the key masked by a constant."""
    n, q = len(x.values), x.q
    k = _vec(key, n, q, "key")
    c = _vec(rc, n, q, "round constants")
    vals = tuple((x.values[i] + k[i] * c[i]) % q for i in range(n))
    return StateMatrix(vals, q, x.order)


def mix_columns(x: StateMatrix, mix: Sequence[Sequence[int]]) -> StateMatrix:
    """Left-multiply by the mixing matrix: out[i][c] = sum_k mix[i][k] x[k][c]."""
    v, q, s = x.v, x.q, x.values
    vals = tuple(
        sum(mix[i][k] * s[k * v + c] for k in range(v)) % q
        for i in range(v)
        for c in range(v)
    )
    return StateMatrix(vals, q, x.order)


def mix_rows(x: StateMatrix, mix: Sequence[Sequence[int]]) -> StateMatrix:
    """Right-multiply by the transpose: out[i][c] = sum_k x[i][k] mix[c][k]."""
    v, q, s = x.v, x.q, x.values
    vals = tuple(
        sum(s[i * v + k] * mix[c][k] for k in range(v)) % q
        for i in range(v)
        for c in range(v)
    )
    return StateMatrix(vals, q, x.order)


def mrmc(x: StateMatrix, mix: Sequence[Sequence[int]]) -> StateMatrix:
    """Fused mixing: mix_rows(mix_columns(x)) = M X M^T, flipping the order tag.

    Wherever X enters row by row, M X M^T leaves naturally column by column
    (and vice versa): M (M X)^T streams one output line per input line once
    all inputs arrived.
    """
    out = mix_rows(mix_columns(x, mix), mix)
    flipped = ORDER_COL if x.order == ORDER_ROW else ORDER_ROW
    return StateMatrix(out.values, out.q, flipped)


def cube(x: StateMatrix) -> StateMatrix:
    q = x.q
    vals = tuple(e * e % q * e % q for e in x.values)
    return StateMatrix(vals, q, x.order)


def feistel(x: StateMatrix) -> StateMatrix:
    """y_1 = x_1, y_i = x_i + x_{i-1}^2 on the row-major flattening."""
    q, s = x.q, x.values
    vals = (s[0],) + tuple(
        (s[i] + s[i - 1] * s[i - 1]) % q for i in range(1, len(s))
    )
    return StateMatrix(vals, q, x.order)


def truncate(x: StateMatrix, l: int) -> tuple[int, ...]:
    if not 0 < l <= len(x.values):
        raise ParameterError(f"cannot keep {l} of {len(x.values)} elements")
    return x.values[:l]


def add_noise(values: Sequence[int], noise: Sequence[int], q: int) -> tuple[int, ...]:
    if len(values) != len(noise):
        raise ParameterError("noise length must match value length")
    return tuple((v + e) % q for v, e in zip(values, noise))


# --- randomness schedule ----------------------------------------------------

def block_nonce(nonce: bytes, block_index: int) -> bytes:
    if len(nonce) > MAX_NONCE_BYTES:
        raise ParameterError(f"nonce must be at most {MAX_NONCE_BYTES} bytes")
    if not 0 <= block_index < 2**32:
        raise ParameterError("block index must fit 32 bits")
    return nonce + struct.pack(">I", block_index)


def derive_round_constants(
    params: CipherParams,
    nonce: bytes,
    block_index: int,
    stats: SamplerStats | None = None,
) -> list[int]:
    """All round constants for one block, in application order, nonzero uniform."""
    stream = xof_init(block_nonce(nonce, block_index), RC_DOMAIN)
    m = Modulus(params.q)
    return [
        rejection_sample_uniform(stream, m, exclude_zero=True, stats=stats).value
        for _ in range(params.constants_per_block)
    ]


def derive_noise(
    params: CipherParams,
    nonce: bytes,
    block_index: int,
    table: CdfTable | None = None,
    stats: SamplerStats | None = None,
) -> list[int]:
    """Signed Gaussian noise draws for one block (empty for schemes without noise)."""
    if params.noise_per_block == 0:
        return []
    if table is None:
        table = _default_table(params.sigma)
    stream = xof_init(block_nonce(nonce, block_index), NOISE_DOMAIN)
    return [sample_gaussian(stream, table, stats=stats) for _ in range(params.noise_per_block)]


_TABLE_CACHE: dict[float, CdfTable] = {}


def _default_table(sigma: float) -> CdfTable:
    if sigma not in _TABLE_CACHE:
        _TABLE_CACHE[sigma] = build_cdf_table(sigma=sigma)
    return _TABLE_CACHE[sigma]


def derive_key(params: CipherParams, key_material: bytes) -> tuple[int, ...]:
    """Expand key material into the n-element key vector (uniform, zero allowed)."""
    stream = xof_init(key_material, KEY_DOMAIN)
    m = Modulus(params.q)
    return tuple(
        rejection_sample_uniform(stream, m, stats=None).value for _ in range(params.n)
    )


# --- keystream --------------------------------------------------------------

def _check_key(params: CipherParams, key: Sequence[int]) -> list[int]:
    return _vec(key, params.n, params.q, "key")


def hera_keystream(
    params: CipherParams,
    key: Sequence[int],
    nonce: bytes,
    block_index: int,
    constants: Sequence[int] | None = None,
    stats: SamplerStats | None = None,
) -> tuple[ZqElement, ...]:
    """One keystream block: ARK, r-1 rounds of (MC, MR, Cube, ARK), then the
    final round (MC, MR, Cube, MC, MR, ARK). Returns all n elements."""
    if params.scheme != SCHEME_HERA:
        raise ParameterError("parameter set is not a hera instance")
    k = _check_key(params, key)
    if constants is None:
        constants = derive_round_constants(params, nonce, block_index, stats=stats)
    if len(constants) != params.constants_per_block:
        raise ParameterError("wrong number of round constants")
    n, mix = params.n, params.mix
    pos = 0

    def next_rc() -> Sequence[int]:
        nonlocal pos
        rc = constants[pos : pos + n]
        pos += n
        return rc

    x = StateMatrix(params.ic, params.q, ORDER_ROW)
    x = ark(x, k, next_rc())
    for _ in range(params.r - 1):
        x = ark(cube(mrmc(x, mix)), k, next_rc())
    x = ark(mrmc(cube(mrmc(x, mix)), mix), k, next_rc())
    m = Modulus(params.q)
    return tuple(ZqElement(e, m) for e in x.values)


def rubato_keystream(
    params: CipherParams,
    key: Sequence[int],
    nonce: bytes,
    block_index: int,
    constants: Sequence[int] | None = None,
    noise: Sequence[int] | None = None,
    table: CdfTable | None = None,
    stats: SamplerStats | None = None,
) -> tuple[ZqElement, ...]:
    """One keystream block: ARK, r-1 rounds of (MC, MR, Feistel, ARK), the final
    round (MC, MR, Feistel, MC, MR), a truncated ARK over the kept elements,
    then additive Gaussian noise. Returns l elements."""
    if params.scheme != SCHEME_RUBATO:
        raise ParameterError("parameter set is not a rubato instance")
    k = _check_key(params, key)
    if constants is None:
        constants = derive_round_constants(params, nonce, block_index, stats=stats)
    if len(constants) != params.constants_per_block:
        raise ParameterError("wrong number of round constants")
    if noise is None:
        noise = derive_noise(params, nonce, block_index, table=table, stats=stats)
    if len(noise) != params.noise_per_block:
        raise ParameterError("wrong number of noise draws")
    n, l, q, mix = params.n, params.l, params.q, params.mix
    pos = 0

    def next_rc(count: int) -> Sequence[int]:
        nonlocal pos
        rc = constants[pos : pos + count]
        pos += count
        return rc

    x = StateMatrix(params.ic, q, ORDER_ROW)
    x = ark(x, k, next_rc(n))
    for _ in range(params.r - 1):
        x = ark(feistel(mrmc(x, mix)), k, next_rc(n))
    x = mrmc(feistel(mrmc(x, mix)), mix)
    rc = next_rc(l)
    kept = truncate(x, l)
    keyed = tuple((kept[i] + k[i] * rc[i]) % q for i in range(l))
    noisy = add_noise(keyed, [e % q for e in noise], q)
    m = Modulus(q)
    return tuple(ZqElement(e, m) for e in noisy)


def keystream_block(
    params: CipherParams,
    key: Sequence[int],
    nonce: bytes,
    block_index: int,
    stats: SamplerStats | None = None,
) -> tuple[ZqElement, ...]:
    if params.scheme == SCHEME_HERA:
        return hera_keystream(params, key, nonce, block_index, stats=stats)
    return rubato_keystream(params, key, nonce, block_index, stats=stats)


# --- encryption -------------------------------------------------------------

def _encode(value: float, delta: float, q: int) -> int:
    scaled = round(value * delta)
    if 2 * abs(scaled) >= q:
        raise EncodingError(
            f"scaled message {scaled} does not fit the centered range of Z_{q}"
        )
    return scaled % q


def _decode(value: int, delta: float, q: int) -> float:
    centered = value if 2 * value < q else value - q
    return centered / delta


def encrypt(
    params: CipherParams,
    key: Sequence[int],
    nonce: bytes,
    message: Sequence[float],
    delta: float,
    start_block: int = 0,
) -> list[int]:
    """Scale, round, and mask a real-valued message with the keystream."""
    if delta <= 0:
        raise ParameterError("scaling factor must be positive")
    q, l = params.q, params.l
    out: list[int] = []
    for off in range(0, len(message), l):
        chunk = message[off : off + l]
        z = keystream_block(params, key, nonce, start_block + off // l)
        out.extend(
            (_encode(mv, delta, q) + zv.value) % q for mv, zv in zip(chunk, z)
        )
    return out


def decrypt(
    params: CipherParams,
    key: Sequence[int],
    nonce: bytes,
    ciphertext: Sequence[int],
    delta: float,
    start_block: int = 0,
) -> list[float]:
    if delta <= 0:
        raise ParameterError("scaling factor must be positive")
    q, l = params.q, params.l
    out: list[float] = []
    for off in range(0, len(ciphertext), l):
        chunk = ciphertext[off : off + l]
        z = keystream_block(params, key, nonce, start_block + off // l)
        out.extend(
            _decode((cv - zv.value) % q, delta, q) for cv, zv in zip(chunk, z)
        )
    return out


# --- batch helpers (vectorized checks over many random states) ---------------

def mrmc_batch(states: np.ndarray, mix: Sequence[Sequence[int]], q: int) -> np.ndarray:
    """M X M^T over a batch of states, shape (B, v, v) int64.

    Intermediate magnitudes stay below v * 15 * q < 2^63 for every supported
    modulus, so int64 matmuls need a reduction only after each product.
    """
    m = np.asarray(mix, dtype=np.int64)
    tmp = (m @ states) % q
    return (tmp @ m.T) % q


def random_states(count: int, v: int, q: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, q, size=(count, v, v), dtype=np.int64)
