#!/usr/bin/env python3
"""Exercise the randomness path and print its measured statistics.

Uniform side: rejection acceptance rate, bit cost per constant, and a
chi-square uniformity test over a small prime. Gaussian side: the empirical
histogram against the analytic pmf, their L1 distance, and the sample mean.
"""

import argparse
import math
from collections import Counter

import mpmath

from ciphersim.sampler import (
    NOISE_DOMAIN,
    RC_DOMAIN,
    SamplerStats,
    build_cdf_table,
    rejection_sample_uniform,
    sample_gaussian,
    xof_init,
)
from ciphersim.zq import Modulus


def chi_square_p(stat, dof):
    # regularized upper incomplete gamma; exact enough for a report line
    return float(mpmath.gammainc(dof / 2, stat / 2, mpmath.inf, regularized=True))


def uniform_report(q, draws, nonce):
    stream = xof_init(nonce, RC_DOMAIN)
    stats = SamplerStats()
    m = Modulus(q)
    counts = Counter(
        rejection_sample_uniform(stream, m, stats=stats).value
        for _ in range(draws)
    )
    w = m.bits
    expected = draws / q
    stat = sum((counts.get(i, 0) - expected) ** 2 / expected for i in range(q))
    p = chi_square_p(stat, q - 1)
    print(f"uniform q={q}: {draws} draws, width {w} bits")
    print(f"  acceptance rate {stats.draws_accepted / stats.draws_attempted:.4f}"
          f" (ideal {q / (1 << w):.4f})")
    print(f"  bits per accepted draw {stats.bits_consumed / draws:.2f}"
          f" (ideal {w * (1 << w) / q:.2f})")
    print(f"  chi-square {stat:.2f} on {q - 1} dof -> p = {p:.4f}")


def gaussian_report(sigma, draws, nonce):
    tail = max(16, math.ceil(8 * sigma))
    table = build_cdf_table(sigma=sigma, precision_bits=64, tail_cut=tail)
    stream = xof_init(nonce, NOISE_DOMAIN)
    stats = SamplerStats()
    hist = Counter(
        sample_gaussian(stream, table, stats=stats) for _ in range(draws)
    )
    weights = [math.exp(-i * i / (2 * sigma * sigma)) for i in range(tail + 1)]
    total = weights[0] + 2 * sum(weights[1:])
    l1 = sum(
        abs(hist.get(i, 0) / draws - weights[abs(i)] / total)
        for i in range(-tail, tail + 1)
    )
    mean = sum(v * c for v, c in hist.items()) / draws
    var = sum(v * v * c for v, c in hist.items()) / draws - mean * mean
    print(f"gaussian sigma={sigma}: {draws} draws, tail cut {tail}")
    print(f"  bits per draw {stats.bits_consumed / draws:.2f}")
    print(f"  L1(empirical, analytic) = {l1:.3e}")
    print(f"  mean {mean:+.4e}, sample sigma {math.sqrt(var):.4f}")
    print("  value : empirical vs analytic")
    for i in range(-4, 5):
        emp = hist.get(i, 0) / draws
        ana = weights[abs(i)] / total
        print(f"  {i:+d}    : {emp:.5f} vs {ana:.5f}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--q", type=int, default=17)
    ap.add_argument("--uniform-draws", type=int, default=100_000)
    ap.add_argument("--sigma", type=float, default=1.6)
    ap.add_argument("--gauss-draws", type=int, default=1_000_000)
    ap.add_argument("--nonce", default="", help="hex, seeds both streams")
    args = ap.parse_args(argv)

    nonce = bytes.fromhex(args.nonce)
    uniform_report(args.q, args.uniform_draws, nonce)
    print()
    gaussian_report(args.sigma, args.gauss_draws, nonce)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
