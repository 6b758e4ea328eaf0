"""Cipher parameter sets and their on-disk text format.

A parameter file is a flat `key = value` list (one per line, `#` comments).
Vector values are comma separated. The mixing matrix is given row by row as
mix_row_0 .. mix_row_{v-1}; `ic` may be omitted, in which case the initial
state defaults to (1, 2, ..., n) mod q.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, replace

from .zq import Modulus, ParameterError

SCHEME_HERA = "hera"
SCHEME_RUBATO = "rubato"

# Default moduli: Mersenne-like primes with gcd(3, q-1) = 1 so cubing is a
# bijection on Z_q (q = 2 mod 3).
HERA_DEFAULT_Q = 268435367  # 2^28 - 89
RUBATO_DEFAULT_Q = 33554393  # 2^25 - 39

# 4x4 mixing matrix, circulant over (2, 3, 1, 1).
MIX_4 = (
    (2, 3, 1, 1),
    (1, 2, 3, 1),
    (1, 1, 2, 3),
    (3, 1, 1, 2),
)

# Larger states use circulants with the same max-entry budget (< 16).
MIX_6 = tuple(tuple((4, 2, 3, 1, 1, 1)[(j - i) % 6] for j in range(6)) for i in range(6))
MIX_8 = tuple(tuple((3, 1, 4, 1, 2, 1, 1, 1)[(j - i) % 8] for j in range(8)) for i in range(8))

_DEFAULT_MIX = {4: MIX_4, 6: MIX_6, 8: MIX_8}

MAX_MIX_ENTRY = 15


@dataclass(frozen=True)
class CipherParams:
    scheme: str
    q: int
    n: int
    r: int
    l: int
    lambda_bits: int
    sigma: float
    mix: tuple[tuple[int, ...], ...]
    ic: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.scheme not in (SCHEME_HERA, SCHEME_RUBATO):
            raise ParameterError(f"unknown scheme {self.scheme!r}")
        Modulus(self.q)  # primality and range
        v = math.isqrt(self.n)
        if v * v != self.n or v < 2:
            raise ParameterError(f"state size n={self.n} is not a square")
        if self.r < 1:
            raise ParameterError("need at least one full round")
        if self.scheme == SCHEME_HERA:
            if self.l != self.n:
                raise ParameterError("this scheme keeps the whole state: l must equal n")
        elif not 0 < self.l <= self.n:
            raise ParameterError(f"truncation length l={self.l} out of range (0, n]")
        if self.scheme == SCHEME_RUBATO and self.sigma <= 0:
            raise ParameterError("noise layer needs sigma > 0")
        if len(self.mix) != v or any(len(row) != v for row in self.mix):
            raise ParameterError(f"mixing matrix must be {v}x{v}")
        for row in self.mix:
            for e in row:
                if not 0 <= e <= MAX_MIX_ENTRY:
                    raise ParameterError(f"mixing entry {e} outside [0, {MAX_MIX_ENTRY}]")
        if len(self.ic) != self.n:
            raise ParameterError(f"initial state must have n={self.n} entries")
        if any(not 0 <= x < self.q for x in self.ic):
            raise ParameterError("initial state entries must be canonical mod q")

    @property
    def v(self) -> int:
        return math.isqrt(self.n)

    @property
    def bits(self) -> int:
        """Rejection-sampler draw width for this modulus."""
        return (self.q - 1).bit_length()

    @property
    def constants_per_block(self) -> int:
        """Uniform round constants one keystream block consumes."""
        if self.scheme == SCHEME_HERA:
            return (self.r + 1) * self.n
        return self.r * self.n + self.l

    @property
    def noise_per_block(self) -> int:
        """Gaussian draws one keystream block consumes."""
        return self.l if self.scheme == SCHEME_RUBATO else 0


def default_ic(n: int, q: int) -> tuple[int, ...]:
    return tuple((i + 1) % q for i in range(n))


def hera_params(q: int = HERA_DEFAULT_Q) -> CipherParams:
    """128-bit parameter set: 4x4 state, 5 rounds, no truncation or noise."""
    return CipherParams(
        scheme=SCHEME_HERA, q=q, n=16, r=5, l=16, lambda_bits=128, sigma=0.0,
        mix=MIX_4, ic=default_ic(16, q),
    )


def rubato_params(q: int = RUBATO_DEFAULT_Q) -> CipherParams:
    """128-bit large parameter set: 8x8 state, 2 rounds, keep 60, sigma 1.6."""
    return CipherParams(
        scheme=SCHEME_RUBATO, q=q, n=64, r=2, l=60, lambda_bits=128, sigma=1.6,
        mix=MIX_8, ic=default_ic(64, q),
    )


def toy_params(scheme: str, q: int = 17, r: int = 2) -> CipherParams:
    """Tiny instance over a small prime, for hand-checkable tests."""
    if scheme == SCHEME_HERA:
        return CipherParams(
            scheme=scheme, q=q, n=16, r=r, l=16, lambda_bits=0, sigma=0.0,
            mix=MIX_4, ic=default_ic(16, q),
        )
    return CipherParams(
        scheme=scheme, q=q, n=16, r=r, l=12, lambda_bits=0, sigma=1.6,
        mix=MIX_4, ic=default_ic(16, q),
    )


def named_params(name: str) -> CipherParams:
    table = {
        "hera-128a": hera_params,
        "rubato-128l": rubato_params,
    }
    if name not in table:
        raise ParameterError(f"unknown parameter set {name!r}; have {sorted(table)}")
    return table[name]()


def save_params(params: CipherParams, path: str) -> None:
    lines = [
        f"scheme = {params.scheme}",
        f"q = {params.q}",
        f"n = {params.n}",
        f"r = {params.r}",
        f"l = {params.l}",
        f"lambda = {params.lambda_bits}",
        f"sigma = {params.sigma}",
    ]
    for i, row in enumerate(params.mix):
        lines.append(f"mix_row_{i} = " + ", ".join(str(e) for e in row))
    lines.append("ic = " + ", ".join(str(x) for x in params.ic))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_params(path: str) -> CipherParams:
    fields: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key in fields:
                raise ParameterError(f"{path}:{lineno}: duplicate key {key!r}")
            fields[key] = value

    def need(key: str) -> str:
        if key not in fields:
            raise ParameterError(f"{path}: missing required key {key!r}")
        return fields.pop(key)

    def intlist(value: str) -> tuple[int, ...]:
        return tuple(int(tok) for tok in value.replace(",", " ").split())

    scheme = need("scheme").lower()
    q = int(need("q"))
    n = int(need("n"))
    r = int(need("r"))
    l = int(need("l"))
    lambda_bits = int(need("lambda"))
    sigma = float(need("sigma"))
    v = math.isqrt(n)
    mix = tuple(intlist(need(f"mix_row_{i}")) for i in range(v))
    ic = intlist(fields.pop("ic")) if "ic" in fields else default_ic(n, q)
    if fields:
        raise ParameterError(f"{path}: unknown keys {sorted(fields)}")
    return CipherParams(
        scheme=scheme, q=q, n=n, r=r, l=l, lambda_bits=lambda_bits,
        sigma=sigma, mix=mix, ic=ic,
    )


def params_search_dirs() -> list[str]:
    dirs = []
    env = os.environ.get("CIPHERSIM_PARAMS_DIR")
    if env:
        dirs.append(env)
    dirs.append(os.path.join(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))), "params"))
    dirs.append(os.path.join(os.getcwd(), "params"))
    return dirs


def resolve_params(name_or_path: str) -> CipherParams:
    """Accept a named set, a file path, or a bare name found in a params dir."""
    try:
        return named_params(name_or_path)
    except ParameterError:
        pass
    if os.path.exists(name_or_path):
        return load_params(name_or_path)
    for d in params_search_dirs():
        cand = os.path.join(d, name_or_path)
        for path in (cand, cand + ".params"):
            if os.path.exists(path):
                return load_params(path)
    raise ParameterError(f"cannot resolve parameter set {name_or_path!r}")


def with_modulus(params: CipherParams, q: int) -> CipherParams:
    return replace(params, q=q, ic=default_ic(params.n, q))
