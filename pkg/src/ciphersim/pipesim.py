"""Cycle model of the keystream datapath at three hardware design points.

Design points:

* d1 (baseline): `lanes` identical scalar datapaths (one state element per
  module per cycle). One shared sampler presamples every round constant (and
  every noise draw) for the whole lane set into a deep FIFO before the rounds
  start, so sampling and computing strictly alternate, and blocks are fully
  serial.
* d2 (+ rng decoupling): the same scalar datapaths, but each lane owns a
  free-running sampler that keeps a shallow FIFO topped up while previous
  blocks compute, hiding the sampling latency entirely.
* d3 (+ vectorization / function overlap / order alternation): one v-wide
  datapath per lane. Modules stream one state line (row or column) per cycle
  into each other (function overlap), and the fused mixing unit exploits
  M (M X)^T = transpose-invariant streaming to consume lines in whichever
  order the producer emits them, flipping row/column order each pass
  (mrmc_opt). Turning those two flags off reproduces the intermediate
  vectorized-only and overlap-only design points.

Timing conventions (calibrated once, used everywhere):

* a line emitted at cycle t is consumable at t+1; every port moves at most
  one line per cycle, in order;
* elementwise units (ARK, NONLIN, AGN) emit a line `latency` cycles after
  absorbing it;
* the fused mixing unit (MRMC) needs the full state, so it emits line p
  (p = 0..v-1) at absorb_end + latency + p, and holds a single result buffer:
  the next mixing pass cannot start absorbing until the previous one has
  fully drained;
* with function overlap off, mixing and nonlinear passes are
  store-and-forward: they absorb only once their whole input has arrived
  (adders keep streaming);
* in scalar datapaths every pass is store-and-forward and the cube unit holds
  its absorb port for two cycles per element (two dependent multiplies on one
  multiplier).

Values never come from the timing model: every pass applies the real round
function to real sampler output, so the simulated keystream is bit-exact
against the software cipher. Round constants are bound to state elements by
element index (the FIFO models availability, not routing).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

from . import __version__
from .cipher import derive_key, derive_noise, derive_round_constants
from .params import CipherParams, SCHEME_HERA, SCHEME_RUBATO
from .sampler import SamplerStats, rejection_sample_uniform, xof_init, RC_DOMAIN
from .zq import Modulus, ParameterError

VARIANT_BASELINE = "d1"
VARIANT_DECOUPLED = "d2"
VARIANT_FULL = "d3"
VARIANTS = (VARIANT_BASELINE, VARIANT_DECOUPLED, VARIANT_FULL)

REJECTION_EXPECTED = "expected_rate"
REJECTION_STREAM = "stream_exact"

UNIT_ARK = "ARK"
UNIT_MRMC = "MRMC"
UNIT_NONLIN = "NONLIN"
UNIT_AGN = "AGN"
UNIT_FIFO = "FIFO"

ORDER_ROW = "row"
ORDER_COL = "col"

# Unit latencies in cycles, fitted once against the published design points.
DEFAULT_LAT_ARK = 4
DEFAULT_LAT_NONLIN = 2
DEFAULT_LAT_AGN = 2
DEFAULT_LAT_MRMC = {SCHEME_HERA: 3, SCHEME_RUBATO: 2}

AES_BITS_PER_CYCLE = 128


class SimulationFault(RuntimeError):
    """Raised when the configured hardware cannot make progress (e.g. a FIFO
    too shallow to ever satisfy a consumer)."""


# Published design points (stream key generation): latency in cycles, plus
# the reported throughput at the reported clock for context.
REFERENCE_DESIGN_POINTS = {
    (SCHEME_HERA, VARIANT_BASELINE): {"cycles": 729, "msps": 9.24, "freq_mhz": 52.6},
    (SCHEME_HERA, VARIANT_DECOUPLED): {"cycles": 512, "msps": 55.6, "freq_mhz": 222.0},
    (SCHEME_HERA, VARIANT_FULL): {"cycles": 90, "msps": 65.8, "freq_mhz": 167.0},
    (SCHEME_RUBATO, VARIANT_BASELINE): {"cycles": 1478, "msps": 12.0, "freq_mhz": 37.0},
    (SCHEME_RUBATO, VARIANT_DECOUPLED): {"cycles": 800, "msps": 109.0, "freq_mhz": 182.0},
    (SCHEME_RUBATO, VARIANT_FULL): {"cycles": 66, "msps": 188.0, "freq_mhz": 175.0},
}

# Intermediate vectorized design points (function overlap and order
# alternation switched on one at a time), reported for the large scheme.
REFERENCE_ABLATIONS = {
    (SCHEME_RUBATO, "vector"): 100,
    (SCHEME_RUBATO, "vector+overlap"): 83,
}


@dataclass(frozen=True)
class HwConfig:
    params: CipherParams
    variant: str
    lanes: int
    vector_width: int
    fifo_depth: int
    noise_fifo_depth: int
    rng_bits_per_cycle: int = AES_BITS_PER_CYCLE
    rejection_model: str = REJECTION_EXPECTED
    function_overlap: bool = False
    mrmc_opt: bool = False
    lat_ark: int = DEFAULT_LAT_ARK
    lat_mrmc: int = 0  # 0 = per-scheme default
    lat_nonlin: int = DEFAULT_LAT_NONLIN
    lat_agn: int = DEFAULT_LAT_AGN

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ParameterError(f"unknown variant {self.variant!r}")
        if self.rejection_model not in (REJECTION_EXPECTED, REJECTION_STREAM):
            raise ParameterError(f"unknown rejection model {self.rejection_model!r}")
        v = self.params.v
        if self.variant == VARIANT_FULL:
            if self.vector_width != v:
                raise ParameterError(f"d3 datapath is {v} wide for this parameter set")
        else:
            if self.vector_width != 1:
                raise ParameterError("d1/d2 datapaths are scalar")
            if self.function_overlap or self.mrmc_opt:
                raise ParameterError("function overlap and order alternation need the vector datapath")
        if self.lanes < 1:
            raise ParameterError("need at least one lane")
        if self.fifo_depth < 1 or self.noise_fifo_depth < 0:
            raise ParameterError("FIFO depths must be positive")
        if self.rng_bits_per_cycle < 1:
            raise ParameterError("sampler needs a positive bit budget")
        if min(self.lat_ark, self.lat_nonlin, self.lat_agn) < 1 or self.lat_mrmc < 0:
            raise ParameterError("unit latencies must be positive")

    @property
    def mrmc_latency(self) -> int:
        return self.lat_mrmc or DEFAULT_LAT_MRMC[self.params.scheme]

    @property
    def scheme(self) -> str:
        return self.params.scheme


def default_lanes(params: CipherParams, variant: str) -> int:
    if variant == VARIANT_FULL:
        # lane counts match the state-element throughput of the 8-lane scalar
        # baseline: one 8-wide lane for the big state, two 4-wide lanes for
        # the small one
        return max(1, 8 // params.v)
    return 8


def make_config(
    params: CipherParams,
    variant: str,
    lanes: int | None = None,
    fifo_depth: int | None = None,
    noise_fifo_depth: int | None = None,
    function_overlap: bool | None = None,
    mrmc_opt: bool | None = None,
    rejection_model: str = REJECTION_EXPECTED,
    rng_bits_per_cycle: int = AES_BITS_PER_CYCLE,
    **latencies: int,
) -> HwConfig:
    """Build a configuration with the published defaults for a design point.

    The overlap/alternation flags default to on only for d3; passing them
    explicitly carves out the intermediate vectorized design points.
    """
    if lanes is None:
        lanes = default_lanes(params, variant)
    full = variant == VARIANT_FULL
    if fifo_depth is None:
        # baseline holds a whole lane set of constants; decoupled designs
        # only smooth bursts
        fifo_depth = lanes * params.constants_per_block if variant == VARIANT_BASELINE else 64
    if noise_fifo_depth is None:
        per_set = lanes * params.noise_per_block
        noise_fifo_depth = per_set if variant == VARIANT_BASELINE else params.noise_per_block
    return HwConfig(
        params=params,
        variant=variant,
        lanes=lanes,
        vector_width=params.v if full else 1,
        fifo_depth=fifo_depth,
        noise_fifo_depth=noise_fifo_depth,
        rng_bits_per_cycle=rng_bits_per_cycle,
        rejection_model=rejection_model,
        function_overlap=full if function_overlap is None else function_overlap,
        mrmc_opt=full if mrmc_opt is None else mrmc_opt,
        **latencies,
    )


class TraceEvent(NamedTuple):
    cycle: int
    unit: str
    lane: int
    kind: str  # 'absorb' | 'emit' | 'stall'
    indices: tuple[int, ...]  # 1-based element labels within the state
    order: str
    values: tuple[int, ...]
    pass_id: int
    block: int
    src_pass: int


class Trace(list):
    """List of TraceEvents with a CSV export."""

    CSV_HEADER = ("cycle", "unit", "lane", "indices", "order", "values_hex")

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.CSV_HEADER)
            for ev in sorted(self, key=lambda e: (e.cycle, e.lane, e.unit)):
                writer.writerow(
                    (
                        ev.cycle,
                        ev.unit,
                        ev.lane,
                        ";".join(str(i) for i in ev.indices),
                        ev.order,
                        ";".join(format(x, "x") for x in ev.values),
                    )
                )


@dataclass
class MrmcPassMetrics:
    lane: int
    block: int
    seq: int  # position of this mixing pass within its block, 0-based
    boundary: str  # 'first' | 'round' | 'final'
    absorb_start: int
    absorb_end: int
    emit_start: int
    emit_end: int
    bubble: int  # idle input-wait cycles while the unit had nothing else to do
    boundary_stall: int  # gap between draining the previous pass and refilling


@dataclass
class SimReport:
    scheme: str
    variant: str
    lanes: int
    vector_width: int
    function_overlap: bool
    mrmc_opt: bool
    blocks: int
    latency_cycles: int
    total_cycles: int
    initiation_interval: float
    elements_per_cycle: float
    presample_cycles: int
    rng_stall_cycles: int
    noise_stall_cycles: int
    stall_cycles_by_unit: dict[str, int]
    bubble_cycles_total: int
    mrmc_metrics: list[MrmcPassMetrics]
    fifo_max_occupancy: int
    noise_fifo_max_occupancy: int
    sampler_stats: SamplerStats
    keystreams: dict[int, tuple[int, ...]]
    config: HwConfig
    trace: Trace | None = None
    version: str = __version__

    def msps_at(self, freq_mhz: float) -> float:
        """Throughput in mega-samples (keystream elements) per second."""
        return self.elements_per_cycle * freq_mhz

    def latency_us_at(self, freq_mhz: float) -> float:
        return self.latency_cycles / freq_mhz


# --- bounded producers (sampler + FIFO) --------------------------------------


class _Producer:
    """Items flowing into a bounded FIFO at a bit-budget-limited rate.

    All rates are integers scaled by `scale` to keep the timing arithmetic
    exact. Production is frozen while the FIFO is full (backpressure stops
    the sampler); an item produced in cycle t is consumable from t+1 on.
    """

    def __init__(
        self,
        depth: int,
        rate_scaled: int,
        cost_scaled: int,
        start_cycle: int = 0,
        prewarm: bool = False,
        per_item_costs: Sequence[int] | None = None,
    ):
        self.depth = depth
        self.rate = rate_scaled
        self.cost = cost_scaled
        self.costs = per_item_costs
        self.produced = depth if prewarm else 0
        self.consumed = 0
        self.accum = 0
        self.t = start_cycle
        self.halted = False  # baseline: sampler idles while rounds compute
        self.max_occupancy = self.produced

    @property
    def stock(self) -> int:
        return self.produced - self.consumed

    def _item_cost(self, index: int) -> int:
        if self.costs is not None and index < len(self.costs):
            return self.costs[index]
        return self.cost

    def advance(self, t: int) -> None:
        """Progress production through the end of cycle t (no consumption)."""
        cycles = t - self.t
        if cycles <= 0:
            return
        if self.halted:
            self.t = t
            return
        while self.stock < self.depth:
            need = self._item_cost(self.produced) - self.accum
            if need > 0:
                take = -(-need // self.rate)  # ceil: cycles to finish this item
                if take > cycles:
                    self.accum += cycles * self.rate
                    break
                self.accum += take * self.rate
                cycles -= take
            self.accum -= self._item_cost(self.produced)
            self.produced += 1
            if self.stock > self.max_occupancy:
                self.max_occupancy = self.stock
        self.t = t

    def earliest(self, t: int, need: int) -> int:
        """First cycle >= t at which `need` items can be consumed at once."""
        if need == 0:
            return t
        if need > self.depth:
            raise SimulationFault(
                f"consumer needs {need} items at once but the FIFO holds only {self.depth}"
            )
        self.advance(t - 1)
        if self.stock >= need:
            return t
        missing = need - self.stock
        remaining = -self.accum
        for i in range(missing):
            remaining += self._item_cost(self.produced + i)
        done = self.t + -(-remaining // self.rate)
        return done + 1

    def consume(self, t: int, count: int) -> None:
        if count == 0:
            return
        self.advance(t - 1)
        if self.stock < count:
            raise SimulationFault(
                f"FIFO underflow at cycle {t}: need {count}, have {self.stock}"
            )
        self.consumed += count


def _const_cost_scaled(params: CipherParams) -> tuple[int, int]:
    """(cost, scale): expected bits per accepted constant as cost/scale."""
    w = params.bits
    return w * (1 << w), params.q


def _replay_const_costs(params: CipherParams, nonce: bytes, block: int) -> list[int]:
    """Exact per-constant bit cost of one block's rejection-sampled stream."""
    stream = xof_init(_block_nonce(nonce, block), RC_DOMAIN)
    m = Modulus(params.q)
    costs = []
    for _ in range(params.constants_per_block):
        st = SamplerStats()
        rejection_sample_uniform(stream, m, exclude_zero=True, stats=st)
        costs.append(st.bits_consumed)
    return costs


def _block_nonce(nonce: bytes, block: int) -> bytes:
    from .cipher import block_nonce

    return block_nonce(nonce, block)


# --- pass program ------------------------------------------------------------


@dataclass
class _Pass:
    pid: int
    lane: int
    block: int
    seq: int
    unit: str
    kind: str  # 'ark' | 'mrmc' | 'cube' | 'feistel' | 'agn'
    latency: int
    occupancy: int
    wait_all: bool
    src: "_Pass | None"
    in_lines: list[tuple[int, ...]]  # arrival-ordered element index groups
    out_lines: list[tuple[int, ...]]  # emission-ordered element index groups
    emit_dep: list[int]  # absorb-slot index each emission waits for (elementwise)
    consts_per_line: list[int]
    noise_per_line: list[int]
    out_tag: str
    is_output: bool = False
    mrmc_seq: int = -1
    rc_base: int = 0
    # runtime
    absorb_times: list[int] = field(default_factory=list)
    emit_times: list[int] = field(default_factory=list)
    values: list[int | None] = field(default_factory=list)


def _rows(v: int) -> list[tuple[int, ...]]:
    return [tuple(r * v + c for c in range(v)) for r in range(v)]


def _cols(v: int) -> list[tuple[int, ...]]:
    return [tuple(r * v + c for r in range(v)) for c in range(v)]


def _lines_for_tag(v: int, tag: str) -> list[tuple[int, ...]]:
    return _rows(v) if tag == ORDER_ROW else _cols(v)


def _build_block_passes(
    cfg: HwConfig, lane: int, block: int, pid_start: int
) -> list[_Pass]:
    """The pass program of one keystream block on one lane."""
    p = cfg.params
    v, n, scheme = p.v, p.n, p.scheme
    scalar = cfg.vector_width == 1
    mix_lat = cfg.mrmc_latency
    passes: list[_Pass] = []
    pid = pid_start
    seq = 0
    mrmc_seq = 0
    rc_pos = 0

    def add(kind, unit, latency, occupancy, wait_all, src, in_lines, out_lines,
            emit_dep, consts, noise, out_tag, is_output=False, rc_base=0):
        nonlocal pid, seq
        ps = _Pass(
            pid=pid, lane=lane, block=block, seq=seq, unit=unit, kind=kind,
            latency=latency, occupancy=occupancy, wait_all=wait_all, src=src,
            in_lines=in_lines, out_lines=out_lines, emit_dep=emit_dep,
            consts_per_line=consts, noise_per_line=noise, out_tag=out_tag,
            is_output=is_output, rc_base=rc_base,
        )
        passes.append(ps)
        pid += 1
        seq += 1
        return ps

    def elementwise(kind, unit, latency, src, occupancy=1, drop_from=None,
                    consts=False, noise=False, wait_all=False, is_output=False,
                    rotate_emit=False):
        nonlocal rc_pos
        in_lines = list(src.out_lines)
        out_lines = [
            tuple(i for i in line if drop_from is None or i < drop_from)
            for line in in_lines
        ]
        keep = [k for k, line in enumerate(out_lines) if line]
        in_kept = [in_lines[k] for k in keep]
        out_kept = [out_lines[k] for k in keep]
        if rotate_emit and len(out_kept) > 1:
            order = list(range(1, len(out_kept))) + [0]
            emit_dep = list(range(1, len(out_kept))) + [len(out_kept) - 1]
            out_kept = [out_kept[i] for i in order]
        else:
            emit_dep = list(range(len(out_kept)))
        cpl = [len(line) for line in out_kept] if consts else [0] * len(out_kept)
        npl = [len(line) for line in out_kept] if noise else [0] * len(out_kept)
        rc_base = rc_pos
        if consts:
            rc_pos += sum(cpl)
        return add(kind, unit, latency, occupancy, wait_all, src,
                   in_kept, out_kept, emit_dep, cpl, npl, src.out_tag,
                   is_output=is_output, rc_base=rc_base)

    def mixing(src):
        nonlocal mrmc_seq
        in_lines = list(src.out_lines)
        if cfg.mrmc_opt:
            out_tag = ORDER_COL if src.out_tag == ORDER_ROW else ORDER_ROW
        else:
            out_tag = ORDER_ROW
        if scalar:
            out_lines = [(i,) for i in range(n)]
        else:
            out_lines = _lines_for_tag(v, out_tag)
        wait_all = scalar or not cfg.mrmc_opt
        ps = add("mrmc", UNIT_MRMC, mix_lat, 1, wait_all, src,
                 in_lines, out_lines, list(range(len(out_lines))),
                 [0] * len(out_lines), [0] * len(out_lines), out_tag)
        ps.mrmc_seq = mrmc_seq
        mrmc_seq += 1
        return ps

    # the initial state is a constant bank: every line is ready at cycle 0
    if scalar:
        init_lines = [(i,) for i in range(n)]
    else:
        init_lines = _rows(v)
    init = _Pass(
        pid=-1, lane=lane, block=block, seq=-1, unit="INIT", kind="init",
        latency=0, occupancy=1, wait_all=False, src=None,
        in_lines=[], out_lines=init_lines, emit_dep=[],
        consts_per_line=[], noise_per_line=[], out_tag=ORDER_ROW,
    )
    init.emit_times = [0] * len(init_lines)
    init.values = list(p.ic)

    nl_wait = scalar or not cfg.function_overlap
    nonlin_occ = 2 if (scalar and scheme == SCHEME_HERA) else 1

    cur = elementwise("ark", UNIT_ARK, cfg.lat_ark, init, consts=True,
                      wait_all=scalar)
    if scheme == SCHEME_HERA:
        for _ in range(p.r - 1):
            cur = mixing(cur)
            cur = elementwise("cube", UNIT_NONLIN, cfg.lat_nonlin, cur,
                              occupancy=nonlin_occ, wait_all=nl_wait)
            cur = elementwise("ark", UNIT_ARK, cfg.lat_ark, cur, consts=True,
                              wait_all=scalar)
        cur = mixing(cur)
        cur = elementwise("cube", UNIT_NONLIN, cfg.lat_nonlin, cur,
                          occupancy=nonlin_occ, wait_all=nl_wait)
        cur = mixing(cur)
        cur = elementwise("ark", UNIT_ARK, cfg.lat_ark, cur, consts=True,
                          wait_all=scalar, is_output=True)
    else:
        for _ in range(p.r - 1):
            cur = mixing(cur)
            cur = elementwise("feistel", UNIT_NONLIN, cfg.lat_nonlin, cur,
                              wait_all=nl_wait,
                              rotate_emit=not scalar and cur.out_tag == ORDER_COL)
            cur = elementwise("ark", UNIT_ARK, cfg.lat_ark, cur, consts=True,
                              wait_all=scalar)
        cur = mixing(cur)
        cur = elementwise("feistel", UNIT_NONLIN, cfg.lat_nonlin, cur,
                          wait_all=nl_wait,
                          rotate_emit=not scalar and cur.out_tag == ORDER_COL)
        cur = mixing(cur)
        # truncation is free: the keyed output stage simply never reads the
        # dropped elements
        cur = elementwise("ark", UNIT_ARK, cfg.lat_ark, cur, consts=True,
                          wait_all=scalar, drop_from=p.l)
        cur = elementwise("agn", UNIT_AGN, cfg.lat_agn, cur, noise=True,
                          wait_all=scalar, is_output=True)
    return passes


def _pass_values(ps: _Pass, p: CipherParams, key: Sequence[int],
                 consts: Sequence[int], noise: Sequence[int]) -> None:
    """Apply the real round function for this pass (full state at once)."""
    q, v, n = p.q, p.v, p.n
    src_vals = ps.src.values
    if ps.kind == "ark":
        out: list[int | None] = [None] * n
        for line in ps.out_lines:
            for i in line:
                out[i] = (src_vals[i] + key[i] * consts[ps.rc_base + i]) % q
        ps.values = out
    elif ps.kind == "cube":
        ps.values = [None if x is None else x * x % q * x % q for x in src_vals]
    elif ps.kind == "feistel":
        ps.values = [src_vals[0]] + [
            (src_vals[i] + src_vals[i - 1] * src_vals[i - 1]) % q for i in range(1, n)
        ]
    elif ps.kind == "mrmc":
        mix = p.mix
        tmp = [
            sum(mix[i][k] * src_vals[k * v + c] for k in range(v)) % q
            for i in range(v) for c in range(v)
        ]
        ps.values = [
            sum(tmp[i * v + k] * mix[c][k] for k in range(v)) % q
            for i in range(v) for c in range(v)
        ]
    elif ps.kind == "agn":
        out = [None] * n
        for line in ps.out_lines:
            for i in line:
                out[i] = (src_vals[i] + noise[i]) % q
        ps.values = out
    else:
        raise ParameterError(f"unknown pass kind {ps.kind!r}")


# --- scheduler ----------------------------------------------------------------


class _LaneState:
    def __init__(self) -> None:
        self.absorb_free: dict[str, int] = {}
        self.emit_free: dict[str, int] = {}
        self.last_mrmc: _Pass | None = None


def simulate(
    cfg: HwConfig,
    blocks: int = 1,
    key: Sequence[int] | None = None,
    nonce: bytes = b"",
    collect_trace: bool = False,
) -> SimReport:
    """Run `blocks` keystream blocks through the configured datapath.

    Blocks are dealt round-robin to lanes (block b runs on lane b % lanes).
    Baseline and decoupled designs process lane sets strictly in order; the
    vectorized design pipelines blocks back to back.
    """
    p = cfg.params
    if key is None:
        key = derive_key(p, b"")
    key = [int(k) % p.q for k in key]
    if len(key) != p.n:
        raise ParameterError(f"key must have {p.n} elements")
    if blocks < 1:
        raise ParameterError("need at least one block")

    # scalar design points always run whole lane sets: a request for fewer
    # blocks still samples and computes the full set
    serial_sets = cfg.variant in (VARIANT_BASELINE, VARIANT_DECOUPLED)
    n_sets = -(-blocks // cfg.lanes)
    sim_blocks = n_sets * cfg.lanes if serial_sets else blocks

    stats = SamplerStats()
    consts_by_block: dict[int, list[int]] = {}
    noise_by_block: dict[int, list[int]] = {}
    cost_by_block: dict[int, list[int]] = {}
    for b in range(sim_blocks):
        consts_by_block[b] = derive_round_constants(p, nonce, b, stats=stats)
        noise_by_block[b] = derive_noise(p, nonce, b, stats=stats)
        if cfg.rejection_model == REJECTION_STREAM:
            cost_by_block[b] = _replay_const_costs(p, nonce, b)

    cost_scaled, scale = _const_cost_scaled(p)
    rate_scaled = cfg.rng_bits_per_cycle * scale
    exact = cfg.rejection_model == REJECTION_STREAM
    w = p.bits

    def block_costs(b: int) -> list[int]:
        return [c * scale for c in cost_by_block[b]] if exact else []

    shared_rng = cfg.variant == VARIANT_BASELINE
    lane_blocks: dict[int, list[int]] = {ln: [] for ln in range(cfg.lanes)}
    for b in range(sim_blocks):
        lane_blocks[b % cfg.lanes].append(b)

    # constants producers: one shared sampler for the baseline, one per lane
    # otherwise; noise producers follow the same split
    if shared_rng:
        costs: list[int] = []
        for b in range(sim_blocks):
            costs.extend(block_costs(b))
        rng = _Producer(cfg.fifo_depth, rate_scaled, cost_scaled,
                        per_item_costs=costs if exact else None)
        const_producers = {ln: rng for ln in range(cfg.lanes)}
        noise = _Producer(cfg.noise_fifo_depth or 1, 1, 1)
        noise_producers = {ln: noise for ln in range(cfg.lanes)}
    else:
        const_producers = {}
        noise_producers = {}
        for ln in range(cfg.lanes):
            costs = []
            for b in lane_blocks[ln]:
                costs.extend(block_costs(b))
            const_producers[ln] = _Producer(
                cfg.fifo_depth, rate_scaled, cost_scaled, prewarm=True,
                per_item_costs=costs if exact else None,
            )
            noise_producers[ln] = _Producer(cfg.noise_fifo_depth or 1, 1, 1)

    lane_states = {ln: _LaneState() for ln in range(cfg.lanes)}
    trace = Trace() if collect_trace else None
    mrmc_metrics: list[MrmcPassMetrics] = []
    rng_stall = 0
    noise_stall = 0
    stall_by_unit: dict[str, int] = {}
    completions: dict[int, int] = {}
    keystreams: dict[int, tuple[int, ...]] = {}
    presample_cycles = 0

    set_barrier = 0  # compute may absorb from set_barrier + 1 on

    pid = 0
    for s in range(n_sets):
        set_blocks = [b for b in range(s * cfg.lanes, min((s + 1) * cfg.lanes, sim_blocks))]
        if cfg.variant == VARIANT_BASELINE:
            # presample the whole lane set before any round starts
            total_consts = len(set_blocks) * p.constants_per_block
            total_noise = len(set_blocks) * p.noise_per_block
            if total_consts > cfg.fifo_depth:
                raise SimulationFault(
                    f"baseline presampling needs {total_consts} FIFO slots for "
                    f"{len(set_blocks)} blocks but depth is {cfg.fifo_depth}"
                )
            if total_noise > (cfg.noise_fifo_depth or 0) and total_noise > 0:
                raise SimulationFault(
                    f"baseline presampling needs {total_noise} noise slots "
                    f"but depth is {cfg.noise_fifo_depth}"
                )
            rng = const_producers[0]
            rng.halted = False
            rng.t = max(rng.t, set_barrier)
            consts_ready = rng.earliest(set_barrier + 1, total_consts) - 1 if total_consts else set_barrier
            rng.advance(consts_ready)
            rng.halted = True
            barrier = consts_ready
            if total_noise:
                npr = noise_producers[0]
                npr.halted = False
                npr.t = max(npr.t, consts_ready)  # the sampler turns to noise next
                barrier = npr.earliest(consts_ready + 1, total_noise) - 1
                npr.advance(barrier)
                npr.halted = True
            if s == 0:
                presample_cycles = barrier
            set_barrier = barrier

        set_completion = set_barrier
        for b in set_blocks:
            ln = b % cfg.lanes
            lane = lane_states[ln]
            rng = const_producers[ln]
            npr = noise_producers[ln]
            passes = _build_block_passes(cfg, ln, b, pid)
            pid += len(passes)
            consts = consts_by_block[b]
            noise_vals = [e % p.q for e in noise_by_block[b]]

            for ps in passes:
                _pass_values(ps, p, key, consts, noise_vals)
                src = ps.src
                nlines = len(ps.in_lines)
                afree = lane.absorb_free.get(ps.unit, 0)
                prev_occ = 1

                if ps.kind == "mrmc":
                    buffer_free = (
                        lane.last_mrmc.emit_times[-1] + 1 if lane.last_mrmc else 0
                    )
                else:
                    buffer_free = 0

                if ps.wait_all:
                    data0 = max(src.emit_times) + 1
                else:
                    data0 = src.emit_times[0] + 1
                first_avail = min(src.emit_times) + 1

                # absorb schedule
                absorb = []
                for j in range(nlines):
                    if ps.wait_all:
                        t_data = data0
                    else:
                        t_data = src.emit_times[j] + 1
                    t0 = max(t_data, set_barrier + 1, buffer_free)
                    if absorb:
                        t0 = max(t0, absorb[-1] + ps.occupancy)
                    else:
                        t0 = max(t0, afree)
                    need_c = ps.consts_per_line[j]
                    need_n = ps.noise_per_line[j]
                    t = t0
                    if need_c:
                        t = rng.earliest(t, need_c)
                        rng_stall += t - t0
                    if need_n:
                        t2 = npr.earliest(t, need_n)
                        noise_stall += t2 - t
                        t = t2
                    if t > t0:
                        stall_by_unit[ps.unit] = stall_by_unit.get(ps.unit, 0) + (t - t0)
                        if trace is not None:
                            trace.append(TraceEvent(t0, UNIT_FIFO, ln, "stall",
                                                    (t - t0,), "", (), ps.pid, b, -1))
                    if need_c:
                        rng.consume(t, need_c)
                    if need_n:
                        npr.consume(t, need_n)
                    absorb.append(t)
                ps.absorb_times = absorb
                lane.absorb_free[ps.unit] = absorb[-1] + ps.occupancy

                # emission schedule
                efree = lane.emit_free.get(ps.unit, 0)
                emits = []
                if ps.kind == "mrmc":
                    base = absorb[-1] + ps.latency
                    for pos in range(len(ps.out_lines)):
                        t = max(base + pos, efree)
                        emits.append(t)
                        efree = t + 1
                else:
                    for pos in range(len(ps.out_lines)):
                        ready = absorb[ps.emit_dep[pos]] + ps.latency
                        t = max(ready, efree)
                        emits.append(t)
                        efree = t + 1
                ps.emit_times = emits
                lane.emit_free[ps.unit] = efree

                if ps.kind == "mrmc":
                    prev = lane.last_mrmc
                    bubble = absorb[0] - max(
                        first_avail,
                        (prev.emit_times[-1] + 1) if prev else 0,
                        set_barrier + 1,
                    )
                    boundary_stall = (
                        absorb[0] - (prev.emit_times[-1] + 1)
                        if prev is not None and prev.block == b
                        else 0
                    )
                    # a mixing pass fed by the keyed state starts a round
                    # function; one fed by the nonlinear unit sits inside the
                    # final round
                    if ps.mrmc_seq == 0:
                        boundary = "first"
                    elif ps.src is not None and ps.src.kind == "ark":
                        boundary = "round"
                    else:
                        boundary = "final"
                    mrmc_metrics.append(MrmcPassMetrics(
                        lane=ln, block=b, seq=ps.mrmc_seq, boundary=boundary,
                        absorb_start=absorb[0], absorb_end=absorb[-1],
                        emit_start=emits[0], emit_end=emits[-1],
                        bubble=max(0, bubble), boundary_stall=boundary_stall,
                    ))
                    lane.last_mrmc = ps

                if trace is not None:
                    # trace indices are 1-based element labels
                    if ps.kind == "mrmc":
                        for j, t in enumerate(absorb):
                            trace.append(TraceEvent(
                                t, ps.unit, ln, "absorb",
                                tuple(i + 1 for i in ps.in_lines[j]),
                                src.out_tag, tuple(src.values[i] for i in ps.in_lines[j]),
                                ps.pid, b, src.pid,
                            ))
                    for pos, t in enumerate(emits):
                        line = ps.out_lines[pos]
                        trace.append(TraceEvent(
                            t, ps.unit, ln, "emit", tuple(i + 1 for i in line),
                            ps.out_tag, tuple(ps.values[i] for i in line),
                            ps.pid, b, src.pid,
                        ))

                if ps.is_output:
                    done = emits[-1]
                    completions[b] = done
                    set_completion = max(set_completion, done)
                    out_n = p.l
                    keystreams[b] = tuple(ps.values[i] for i in range(out_n))

        if serial_sets:
            set_barrier = set_completion

    latency = completions[0]
    total = max(completions.values())
    lane0 = lane_blocks[0]
    if len(lane0) >= 2:
        ii = float(completions[lane0[-1]] - completions[lane0[-2]])
    else:
        ii = float(latency)
    fifo_max = max(pr.max_occupancy for pr in const_producers.values())
    noise_max = max(pr.max_occupancy for pr in noise_producers.values())

    return SimReport(
        scheme=p.scheme,
        variant=cfg.variant,
        lanes=cfg.lanes,
        vector_width=cfg.vector_width,
        function_overlap=cfg.function_overlap,
        mrmc_opt=cfg.mrmc_opt,
        blocks=blocks,
        latency_cycles=latency,
        total_cycles=total,
        initiation_interval=ii,
        elements_per_cycle=p.l * cfg.lanes / ii,
        presample_cycles=presample_cycles,
        rng_stall_cycles=rng_stall,
        noise_stall_cycles=noise_stall,
        stall_cycles_by_unit=stall_by_unit,
        bubble_cycles_total=sum(m.bubble for m in mrmc_metrics),
        mrmc_metrics=mrmc_metrics,
        fifo_max_occupancy=fifo_max,
        noise_fifo_max_occupancy=noise_max,
        sampler_stats=stats,
        keystreams=keystreams,
        config=cfg,
        trace=trace,
    )


# --- trace analysis -----------------------------------------------------------


@dataclass
class BubbleReport:
    bubbles_by_pass: dict[int, int]  # pass id -> idle input-wait cycles
    total: int


def count_bubbles(trace: Trace) -> BubbleReport:
    """Recover mixing-unit bubbles from a trace alone.

    A bubble cycle is one where a mixing pass has at least one input line
    available but has not started absorbing, and its unit is otherwise idle.
    """
    busy: dict[tuple[str, int], set[int]] = {}
    by_pass: dict[int, list[TraceEvent]] = {}
    for ev in trace:
        if ev.kind in ("absorb", "emit"):
            busy.setdefault((ev.unit, ev.lane), set()).add(ev.cycle)
        by_pass.setdefault(ev.pass_id, []).append(ev)

    bubbles: dict[int, int] = {}
    for pid, events in by_pass.items():
        absorbs = [e for e in events if e.kind == "absorb" and e.unit == UNIT_MRMC]
        if not absorbs:
            continue
        lane = absorbs[0].lane
        src = absorbs[0].src_pass
        src_emits = [
            e.cycle for e in by_pass.get(src, []) if e.kind == "emit"
        ]
        if not src_emits:
            continue
        first_avail = min(src_emits) + 1
        start = min(e.cycle for e in absorbs)
        unit_busy = busy.get((UNIT_MRMC, lane), set())
        idle = sum(
            1 for c in range(first_avail, start) if c not in unit_busy
        )
        bubbles[pid] = idle
    return BubbleReport(bubbles_by_pass=bubbles, total=sum(bubbles.values()))


@dataclass
class VerifyResult:
    ok: bool
    problems: list[str]


def verify_trace(
    trace: Trace,
    expected_keystreams: dict[int, Sequence[int]],
    mrmc_passes_per_block: int | None = None,
    state_size: int | None = None,
) -> VerifyResult:
    """Check trace invariants and final outputs against expected keystreams.

    Invariants: at most one event per unit per lane per cycle; mixing-unit
    element conservation (every mixing pass moves the whole state in and out,
    so each block shows exactly 2 * passes * n element moves); output values
    reconstructed from the last emitting pass of each block must equal the
    expected keystream.
    """
    problems: list[str] = []
    seen: set[tuple[int, str, int]] = set()
    for ev in trace:
        if ev.kind == "stall":
            continue
        key = (ev.cycle, ev.unit, ev.lane)
        if key in seen:
            problems.append(f"unit {ev.unit} lane {ev.lane} has two events at cycle {ev.cycle}")
        seen.add(key)

    if mrmc_passes_per_block is not None and state_size is not None:
        moved: dict[int, int] = {}
        for ev in trace:
            if ev.unit == UNIT_MRMC and ev.kind in ("absorb", "emit"):
                moved[ev.block] = moved.get(ev.block, 0) + len(ev.indices)
        expected_moves = 2 * mrmc_passes_per_block * state_size
        for b, count in sorted(moved.items()):
            if count != expected_moves:
                problems.append(
                    f"block {b}: mixing unit moved {count} elements, expected {expected_moves}"
                )

    for b, expect in expected_keystreams.items():
        block_passes: dict[int, list[TraceEvent]] = {}
        for ev in trace:
            if ev.block == b and ev.kind == "emit":
                block_passes.setdefault(ev.pass_id, []).append(ev)
        if not block_passes:
            problems.append(f"block {b}: no emissions in trace")
            continue
        last_pid = max(block_passes, key=lambda pid: max(e.cycle for e in block_passes[pid]))
        got: dict[int, int] = {}
        for ev in block_passes[last_pid]:
            for idx, val in zip(ev.indices, ev.values):
                got[idx] = val
        out = [got.get(i + 1) for i in range(len(expect))]
        if list(expect) != out:
            problems.append(f"block {b}: trace output differs from expected keystream")
    return VerifyResult(ok=not problems, problems=problems)


# --- analytic FIFO model -------------------------------------------------------


@dataclass
class FifoModelResult:
    consumer_stall_cycles: int
    producer_blocked_cycles: int
    max_occupancy: int
    final_occupancy: int


def fifo_model(
    depth: int,
    producer_bits_per_cycle: int,
    bits_per_item: int,
    consumer_bits_per_cycle: float,
    cycles: int,
    start_occupancy: int = 0,
) -> FifoModelResult:
    """Steady-rate FIFO balance: a sampler filling `depth` slots against a
    consumer draining at an average bit demand per cycle.

    Both rates are exact rationals internally; the consumer stalls in any
    cycle where the items its cumulative demand calls for are not in the
    FIFO.
    """
    if depth < 1 or cycles < 1:
        raise ParameterError("fifo model needs a positive depth and horizon")
    scale = 1_000_000
    demand_scaled = int(round(consumer_bits_per_cycle * scale))
    item_scaled = bits_per_item * scale
    stock = start_occupancy
    produced_bits = 0
    demand_bits = 0
    consumed_items = 0
    stalls = 0
    blocked = 0
    max_occ = stock
    for _ in range(cycles):
        # production first: the sampler runs whenever there is room
        if stock < depth:
            produced_bits += producer_bits_per_cycle * scale
            while produced_bits >= item_scaled and stock < depth:
                produced_bits -= item_scaled
                stock += 1
        else:
            blocked += 1
        max_occ = max(max_occ, stock)
        demand_bits += demand_scaled
        want = demand_bits // item_scaled - consumed_items
        if want > 0:
            take = min(want, stock)
            stock -= take
            consumed_items += take
            if take < want:
                stalls += 1
    return FifoModelResult(
        consumer_stall_cycles=stalls,
        producer_blocked_cycles=blocked,
        max_occupancy=max_occ,
        final_occupancy=stock,
    )
