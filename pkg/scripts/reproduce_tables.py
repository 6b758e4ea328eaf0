#!/usr/bin/env python3
"""Regenerate the design-point comparison tables.

Runs every design point of both schemes at steady state, prints latency and
throughput next to the published reference numbers, and walks the Rubato
vector-datapath ablation ladder (naive vector, +function overlap, +order
alternation) that explains where the cycles go.
"""

import argparse

from ciphersim import __version__
from ciphersim.params import hera_params, rubato_params
from ciphersim.pipesim import (
    REFERENCE_ABLATIONS,
    REFERENCE_DESIGN_POINTS,
    VARIANTS,
    make_config,
    simulate,
)


def design_point_rows(scheme, params, blocks_mult, freq_mhz):
    rows = []
    for variant in VARIANTS:
        cfg = make_config(params, variant)
        rep = simulate(cfg, blocks=blocks_mult * cfg.lanes)
        ref = REFERENCE_DESIGN_POINTS[(scheme, variant)]
        user_msps = rep.msps_at(freq_mhz) if freq_mhz else None
        rows.append({
            "variant": variant,
            "cycles": rep.latency_cycles,
            "ref_cycles": ref["cycles"],
            "dev": (rep.latency_cycles - ref["cycles"]) / ref["cycles"],
            "ii": rep.initiation_interval,
            "epc": rep.elements_per_cycle,
            "msps_ref_clock": rep.msps_at(ref["freq_mhz"]),
            "ref_msps": ref["msps"],
            "user_msps": user_msps,
        })
    return rows


def print_scheme_table(scheme, rows, freq_mhz):
    head = ("| variant | cycles | reference | deviation | II "
            "| elem/cycle | Msps @ ref clock | reference Msps |")
    rule = "| --- | --- | --- | --- | --- | --- | --- | --- |"
    if freq_mhz:
        head += f" Msps @ {freq_mhz:g} MHz |"
        rule += " --- |"
    print(f"\n## {scheme}\n")
    print(head)
    print(rule)
    for r in rows:
        line = (f"| {r['variant']} | {r['cycles']} | {r['ref_cycles']} "
                f"| {r['dev']:+.1%} | {r['ii']} | {r['epc']:.3f} "
                f"| {r['msps_ref_clock']:.1f} | {r['ref_msps']} |")
        if freq_mhz:
            line += f" {r['user_msps']:.1f} |"
        print(line)


def print_ablation_ladder(params):
    steps = [
        ("vector", {"function_overlap": False, "mrmc_opt": False}),
        ("vector+overlap", {"mrmc_opt": False}),
        ("vector+overlap+alternation", {}),
    ]
    print("\n## rubato vector-datapath ablations\n")
    print("| configuration | cycles | reference | bubbles |")
    print("| --- | --- | --- | --- |")
    for name, flags in steps:
        rep = simulate(make_config(params, "d3", **flags))
        ref = REFERENCE_ABLATIONS.get(("rubato", name))
        ref_txt = str(ref) if ref is not None else "-"
        print(f"| {name} | {rep.latency_cycles} | {ref_txt} "
              f"| {rep.bubble_cycles_total} |")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scheme", choices=["hera", "rubato"],
                    help="limit to one scheme")
    ap.add_argument("--blocks-mult", type=int, default=4,
                    help="blocks per lane for steady-state rates")
    ap.add_argument("--freq-mhz", type=float,
                    help="additionally report Msps at this clock")
    args = ap.parse_args(argv)

    print(f"artifact version {__version__}")
    table = {"hera": hera_params(), "rubato": rubato_params()}
    for scheme, params in table.items():
        if args.scheme and scheme != args.scheme:
            continue
        rows = design_point_rows(scheme, params, args.blocks_mult, args.freq_mhz)
        print_scheme_table(scheme, rows, args.freq_mhz)
    if args.scheme in (None, "rubato"):
        print_ablation_ladder(table["rubato"])
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
