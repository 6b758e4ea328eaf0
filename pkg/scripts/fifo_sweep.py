#!/usr/bin/env python3
"""Sweep the round-constant FIFO depth and report where a design point stops
working.

The baseline design needs a whole lane set of constants buffered before it
starts, so it has a hard sizing cliff (187 -> 188 for one Rubato lane,
1503 -> 1504 for eight). The decoupled designs keep running at small depths;
the sweep shows their stall counts instead.
"""

import argparse

from ciphersim.params import hera_params, rubato_params
from ciphersim.pipesim import SimulationFault, make_config, simulate


def default_depths(params, variant, lanes):
    if variant == "d1":
        cliff = (lanes or 8) * params.constants_per_block
        return [cliff - 2, cliff - 1, cliff, cliff + 16, 2 * cliff]
    return [1, 2, 4, 6, 8, 12, 16, 32, 64]


def parse_depths(text):
    out = []
    for tok in text.split(","):
        if "-" in tok:
            lo, hi = tok.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(tok))
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scheme", choices=["hera", "rubato"], default="rubato")
    ap.add_argument("--variant", choices=["d1", "d2", "d3"], default="d1")
    ap.add_argument("--lanes", type=int, help="override the lane count")
    ap.add_argument("--blocks", type=int, default=1)
    ap.add_argument("--depths",
                    help="comma list, ranges allowed (e.g. 180-190,1500-1505)")
    args = ap.parse_args(argv)

    params = hera_params() if args.scheme == "hera" else rubato_params()
    depths = (parse_depths(args.depths) if args.depths
              else default_depths(params, args.variant, args.lanes))

    print(f"{args.scheme} {args.variant}"
          + (f" lanes={args.lanes}" if args.lanes else ""))
    print("| depth | status | cycles | sampler stalls | max occupancy |")
    print("| --- | --- | --- | --- | --- |")
    for depth in depths:
        kwargs = {"fifo_depth": depth}
        if args.lanes:
            kwargs["lanes"] = args.lanes
        try:
            rep = simulate(make_config(params, args.variant, **kwargs),
                           blocks=args.blocks)
            print(f"| {depth} | ok | {rep.latency_cycles} "
                  f"| {rep.rng_stall_cycles} | {rep.fifo_max_occupancy} |")
        except SimulationFault as exc:
            print(f"| {depth} | fault: {exc} | - | - | - |")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
