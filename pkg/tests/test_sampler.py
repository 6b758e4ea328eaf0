"""Randomness layer: XOF vs an independent AES oracle, rejection sampling,
and the inverse-CDF Gaussian table."""

import decimal
import math

import pytest
from hypothesis import given, settings, strategies as st

import aes_ref
from bitstreams import ConstantStream, ScriptedStream
from ciphersim import sampler
from ciphersim.sampler import (
    KEY_DOMAIN,
    NOISE_DOMAIN,
    RC_DOMAIN,
    CdfTable,
    SamplerStats,
    StreamFault,
    build_cdf_table,
    load_cdf_table,
    make_seed,
    rejection_sample_uniform,
    sample_gaussian,
    save_cdf_table,
    xof_init,
)
from ciphersim.zq import Modulus, ParameterError


def oracle_bits(nonce: bytes, domain_tag: int, nbits: int) -> int:
    """First nbits of the stream, recomputed with the pure-Python AES oracle."""
    seed = make_seed(nonce, domain_tag)
    raw = aes_ref.ctr_keystream(seed, (nbits + 127) // 128)
    return int.from_bytes(raw, "big") >> (len(raw) * 8 - nbits) if nbits else 0


# --- seed layout --------------------------------------------------------------

def test_make_seed_frozen():
    assert make_seed(b"\x01\x02", 0x01) == b"\x01\x02" + b"\x00" * 13 + b"\x01"
    assert make_seed(b"", 0x02) == b"\x00" * 15 + b"\x02"


def test_domain_tags_distinct():
    assert {RC_DOMAIN, NOISE_DOMAIN, KEY_DOMAIN} == {0x01, 0x02, 0x03}


def test_make_seed_rejects_long_nonce():
    make_seed(b"\x00" * 15, 0x01)  # the longest allowed
    with pytest.raises(ParameterError):
        make_seed(b"\x00" * 16, 0x01)


# --- XOF vs oracle --------------------------------------------------------------

@pytest.mark.parametrize("nonce,tag", [
    (b"", RC_DOMAIN),
    (b"", NOISE_DOMAIN),
    (b"\x01\x02", RC_DOMAIN),
    (b"\xff" * 15, KEY_DOMAIN),
])
def test_xof_matches_aes_oracle(nonce, tag):
    total = 384
    stream = xof_init(nonce, tag)
    # odd chunk sizes exercise every buffer-boundary path
    chunks = [7, 13, 64, 128, 1, 3, 168]
    assert sum(chunks) == total
    acc = 0
    for c in chunks:
        acc = (acc << c) | stream.squeeze_bits(c)
    assert acc == oracle_bits(nonce, tag, total)
    assert stream.bits_consumed == total


def test_xof_blocks_counter_grows():
    stream = xof_init(b"", RC_DOMAIN)
    before = stream.blocks_generated
    stream.squeeze_bits(8192 + 1)
    assert stream.blocks_generated > before


def test_domain_separation():
    a = xof_init(b"\x05", RC_DOMAIN).squeeze_bits(128)
    b = xof_init(b"\x05", NOISE_DOMAIN).squeeze_bits(128)
    assert a != b


@settings(max_examples=60)
@given(
    first=st.integers(min_value=0, max_value=200),
    second=st.integers(min_value=0, max_value=200),
)
def test_xof_split_concat(first, second):
    # output is a pure function of total consumption, however it is chunked
    split = xof_init(b"\x09", RC_DOMAIN)
    combined = (split.squeeze_bits(first) << second) | split.squeeze_bits(second)
    whole = xof_init(b"\x09", RC_DOMAIN)
    assert combined == whole.squeeze_bits(first + second)


# --- rejection sampling ---------------------------------------------------------

def test_rejection_scripted():
    # 20 is rejected against q = 17, then 5 is accepted
    stream = ScriptedStream("10100 00101")
    stats = SamplerStats()
    e = rejection_sample_uniform(stream, Modulus(17), stats=stats)
    assert e.value == 5
    assert stats.draws_attempted == 2
    assert stats.draws_accepted == 1
    assert stats.bits_consumed == 10


def test_rejection_exclude_zero():
    stream = ScriptedStream("00000 00001")
    stats = SamplerStats()
    e = rejection_sample_uniform(stream, Modulus(17), exclude_zero=True, stats=stats)
    assert e.value == 1
    assert stats.draws_attempted == 2
    # zero is fine when the flag is off
    assert rejection_sample_uniform(ScriptedStream("00000"), Modulus(17)).value == 0


def test_rejection_cap_is_a_million():
    assert sampler.MAX_REJECT_ATTEMPTS == 10**6


def test_rejection_stream_fault(monkeypatch):
    monkeypatch.setattr(sampler, "MAX_REJECT_ATTEMPTS", 1000)
    with pytest.raises(StreamFault):
        rejection_sample_uniform(ConstantStream(31, 5), Modulus(17))


def test_rejection_acceptance_rate():
    # geometric attempts with success probability q / 2^w
    stream = xof_init(b"rate", RC_DOMAIN)
    stats = SamplerStats()
    n = 20_000
    for _ in range(n):
        rejection_sample_uniform(stream, Modulus(17), stats=stats)
    observed = stats.draws_attempted / stats.draws_accepted
    assert stats.draws_accepted == n
    assert abs(observed - 32 / 17) / (32 / 17) < 0.05
    assert stats.bits_consumed == 5 * stats.draws_attempted


def test_stats_merge():
    a = SamplerStats(draws_attempted=3, draws_accepted=2, bits_consumed=15)
    b = SamplerStats(draws_attempted=1, draws_accepted=1, bits_consumed=5)
    a.merge(b)
    assert (a.draws_attempted, a.draws_accepted, a.bits_consumed) == (4, 3, 20)


# --- Gaussian table ---------------------------------------------------------------

def decimal_cdf_entries(sigma: float, precision_bits: int, tail_cut: int) -> list[int]:
    """Independent route: the same cumulative table via the decimal module."""
    with decimal.localcontext() as ctx:
        ctx.prec = 80
        s = decimal.Decimal(sigma)  # the exact binary float, as the library sees it
        two_s2 = 2 * s * s
        weights = [(-decimal.Decimal(i * i) / two_s2).exp() for i in range(tail_cut + 1)]
        total = weights[0] + 2 * sum(weights[1:])
        scale = decimal.Decimal(2) ** precision_bits
        out = []
        acc = weights[0]
        for i in range(tail_cut + 1):
            if i:
                acc += 2 * weights[i]
            out.append(int((scale * acc / total).quantize(0, rounding=decimal.ROUND_HALF_UP)))
        return out


def test_cdf_table_matches_decimal_oracle():
    table = build_cdf_table(sigma=1.6, precision_bits=64, tail_cut=16)
    raw = decimal_cdf_entries(1.6, 64, 16)
    top = (1 << 64) - 1
    for i in range(15):
        assert abs(table.entries[i] - min(raw[i], top)) <= 2
    assert table.entries[-1] == top
    assert all(a < b for a, b in zip(table.entries, table.entries[1:]))


def test_cdf_table_first_entry_probability():
    # P(e = 0) = 1 / (1 + 2 sum exp(-i^2 / (2 sigma^2))) = 0.24934 at sigma 1.6
    table = build_cdf_table(sigma=1.6)
    p0 = table.entries[0] / 2**64
    assert abs(p0 - 0.24934) < 0.0001


def test_cdf_table_validation():
    with pytest.raises(ParameterError):
        CdfTable(1.6, 64, 16, tuple(range(16)))  # wrong length
    with pytest.raises(ParameterError):
        CdfTable(1.6, 64, 8, tuple(range(1, 9)) + ((1 << 64) - 1,))  # tail < 8 sigma
    good = build_cdf_table()
    bad = good.entries[:-1] + (good.entries[5],)
    with pytest.raises(ParameterError):
        CdfTable(1.6, 64, 16, bad)  # not increasing / not saturated


def test_build_rejects_bad_parameters():
    for kwargs in ({"sigma": 0.0}, {"tail_cut": 0}, {"precision_bits": 4}):
        with pytest.raises(ParameterError):
            build_cdf_table(**kwargs)


def test_gaussian_edges():
    table = build_cdf_table(sigma=1.6)
    # u = 0 falls in the zero bucket, no sign bit
    stream = ScriptedStream("0" * 64)
    stats = SamplerStats()
    assert sample_gaussian(stream, table, stats=stats) == 0
    assert stats.bits_consumed == 64
    # u equal to the first entry belongs to magnitude 1
    u1 = format(table.entries[0], "064b")
    assert sample_gaussian(ScriptedStream(u1 + "0"), table) == 1
    assert sample_gaussian(ScriptedStream(u1 + "1"), table) == -1
    # all-ones u saturates at the tail cut
    stream = ScriptedStream("1" * 64 + "1")
    assert sample_gaussian(stream, table) == -table.tail_cut
    assert stream.bits_consumed == 65


def test_gaussian_sign_accounting():
    table = build_cdf_table(sigma=1.6)
    stream = xof_init(b"acct", NOISE_DOMAIN)
    stats = SamplerStats()
    draws = [sample_gaussian(stream, table, stats=stats) for _ in range(2000)]
    nonzero = sum(1 for d in draws if d != 0)
    assert stats.bits_consumed == 2000 * 64 + nonzero
    assert stats.draws_attempted == stats.draws_accepted == 2000
    assert all(abs(d) <= table.tail_cut for d in draws)


def test_gaussian_symmetric_signs():
    table = build_cdf_table(sigma=1.6)
    stream = xof_init(b"sym", NOISE_DOMAIN)
    draws = [sample_gaussian(stream, table) for _ in range(20_000)]
    neg = sum(1 for d in draws if d < 0)
    pos = sum(1 for d in draws if d > 0)
    assert abs(neg - pos) < 4 * math.sqrt(neg + pos)


def test_table_roundtrip(tmp_path):
    table = build_cdf_table(sigma=2.25, precision_bits=48, tail_cut=20)
    path = str(tmp_path / "t.cdf")
    save_cdf_table(table, path)
    back = load_cdf_table(path)
    assert back == table


def test_table_load_rejects_garbage(tmp_path):
    path = tmp_path / "bad.cdf"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(ParameterError):
        load_cdf_table(str(path))
    good = tmp_path / "short.cdf"
    save_cdf_table(build_cdf_table(), str(good))
    good.write_bytes(good.read_bytes()[:-7])
    with pytest.raises(ParameterError):
        load_cdf_table(str(good))
