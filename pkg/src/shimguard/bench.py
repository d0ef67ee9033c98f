"""Slow-path vs fast-path forwarding measurements on the in-process pipeline.

Methodology: 60-octet UDP frames drive the throughput sweep; the slow-path
mode disables the caches and randomizes source MAC, addresses and ports per
packet, the fast-path mode re-sends one flow that matches a pre-installed
rule. Latency runs send a fixed count of frames per packet size and evaluate
only the samples after a warmup prefix.

Offered load is modeled with a virtual arrival clock against measured
per-packet service times through a bounded single-server queue: packet i
arrives at i/rate; it is lost if the queue is full at that instant, otherwise
it is processed and its real service time extends the server's busy period.
All timestamps come from one clock on the pipeline side. Absolute numbers are
machine-specific; only orderings (fast <= slow) are contractual.
"""

from __future__ import annotations

import gc
import math
import random
import statistics
import struct
import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from .extract import HARDENED
from .flowtable import Forwarded, SwitchState, load_rules
from .packet import EthernetHeader, Ipv4Header, RawFrame, encode_frame

DEFAULT_RATES = tuple(range(10_000, 100_001, 10_000))
DEFAULT_SIZES = (44, 512, 1500, 2048, 9000)
MIN_FRAME = 44  # eth 14 + ipv4 20 + udp 8 + 2 octets of payload


class PathMode(Enum):
    ALL_SLOW_PATH = "slow"
    ALL_FAST_PATH = "fast"

    def __str__(self) -> str:
        return self.value


def path_mode(name: str) -> PathMode:
    for mode in PathMode:
        if mode.value == name.lower():
            return mode
    raise ValueError(f"unknown bench mode {name!r}")


@dataclass(frozen=True)
class BenchConfig:
    path_mode: PathMode
    rates_pps: tuple[int, ...] = DEFAULT_RATES
    duration_s: float = 120.0
    packet_sizes: tuple[int, ...] = DEFAULT_SIZES
    latency_count: int = 10_500
    warmup_drop: int = 500
    interval_ms: float = 100.0
    queue_capacity: int = 4096
    seed: int = 0

    def __post_init__(self) -> None:
        if self.warmup_drop >= self.latency_count:
            raise ValueError("warmup_drop must be < latency_count")
        if list(self.rates_pps) != sorted(self.rates_pps):
            raise ValueError("rates must be ascending")
        for size in self.packet_sizes:
            if size < MIN_FRAME:
                raise ValueError(f"packet size {size} below minimum {MIN_FRAME}")


@dataclass(frozen=True)
class RateSample:
    rate_pps: int
    offered: int
    forwarded: int
    queue_lost: int
    table_dropped: int
    loss_fraction: float
    achieved: bool

    @property
    def forwarded_pps(self) -> float:
        return self.forwarded * self.rate_pps / self.offered if self.offered else 0.0


@dataclass(frozen=True)
class SizeSample:
    size_b: int
    median_us: float
    p95_us: float
    variance_us2: float
    samples: int


@dataclass
class BenchResult:
    mode: PathMode
    rates: list[RateSample] = field(default_factory=list)
    sizes: list[SizeSample] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


class RateUnachievable(Warning):
    """Generator could not have sustained the offered rate in real time."""


# Rule set the benchmark state runs: a few specific rules ahead of a
# wildcard, so the slow path pays a realistic scan cost.
BENCH_RULES = """
priority=100, eth_type=0x0800, ip_proto=17, l4_dst=9999, actions=drop
priority=90, eth_type=0x0800, ip_proto=6, actions=output:3
priority=50, eth_type=0x0800, ip_proto=17, actions=output:2
priority=1, actions=output:1
"""


def build_bench_state(mode: PathMode) -> SwitchState:
    return SwitchState(load_rules(BENCH_RULES), megaflow_enabled=(mode is PathMode.ALL_FAST_PATH))


def make_udp_frame(size: int, src_mac: bytes, src_ip: int, dst_ip: int, sport: int, dport: int) -> RawFrame:
    payload_len = size - MIN_FRAME + 2
    eth = EthernetHeader(bytes.fromhex("02000000ff01"), src_mac, 0x0800)
    ip = Ipv4Header(total_length=size - 14, protocol=17, src_ip=src_ip, dst_ip=dst_ip)
    udp = struct.pack(">HHHH", sport, dport, 8 + payload_len, 0)
    return encode_frame(eth, [ip], payload=udp + bytes(payload_len))


def _frame_pool(mode: PathMode, size: int, count: int, rng: random.Random) -> list[RawFrame]:
    """Fast path repeats one flow; slow path cycles distinct random flows."""
    if mode is PathMode.ALL_FAST_PATH:
        return [make_udp_frame(size, bytes.fromhex("020000000001"), 0x0A000001, 0x0A000002, 4000, 4001)]
    pool = []
    for _ in range(count):
        pool.append(
            make_udp_frame(
                size,
                b"\x02" + rng.randbytes(5),
                rng.randrange(1, 1 << 32),
                rng.randrange(1, 1 << 32),
                rng.randrange(1024, 9999),  # steer clear of the drop rule's port
                rng.randrange(1024, 9999),
            )
        )
    return pool


def run_throughput(config: BenchConfig, state: SwitchState) -> BenchResult:
    """Sweep the offered rates; report forwarded counts and loss per rate."""
    state.set_megaflow_enabled(config.path_mode is PathMode.ALL_FAST_PATH)
    rng = random.Random(config.seed)
    result = BenchResult(mode=config.path_mode)
    perf = time.perf_counter
    profile = HARDENED
    for rate in config.rates_pps:
        total = int(rate * config.duration_s)
        if total <= 0:
            continue
        pool = _frame_pool(config.path_mode, 60, min(total, 8192), rng)
        n_pool = len(pool)
        period = 1.0 / rate
        capacity = config.queue_capacity
        completions: deque[float] = deque()
        busy_until = 0.0
        forwarded = 0
        queue_lost = 0
        table_dropped = 0
        gc_was_enabled = gc.isenabled()
        gc.collect()
        gc.disable()
        wall_start = perf()
        try:
            for i in range(total):
                arrival = i * period
                while completions and completions[0] <= arrival:
                    completions.popleft()
                if len(completions) >= capacity:
                    queue_lost += 1
                    continue
                t0 = perf()
                disposition = state.process(pool[i % n_pool], 1, profile)
                service = perf() - t0
                start = arrival if arrival > busy_until else busy_until
                busy_until = start + service
                completions.append(busy_until)
                if isinstance(disposition, Forwarded):
                    forwarded += 1
                else:
                    table_dropped += 1
        finally:
            wall = perf() - wall_start
            if gc_was_enabled:
                gc.enable()
        achieved = wall <= config.duration_s
        if not achieved:
            result.warnings.append(
                f"rate {rate} pps unachievable: {total} packets took {wall:.2f}s wall "
                f"of a {config.duration_s:.2f}s window"
            )
        result.rates.append(
            RateSample(
                rate_pps=rate,
                offered=total,
                forwarded=forwarded,
                queue_lost=queue_lost,
                table_dropped=table_dropped,
                loss_fraction=queue_lost / total,
                achieved=achieved,
            )
        )
    return result


def _nearest_rank(sorted_values: list[float], quantile: float) -> float:
    rank = max(1, math.ceil(quantile * len(sorted_values)))
    return sorted_values[rank - 1]


def _summarize(size: int, samples_s: list[float]) -> SizeSample:
    kept = sorted(s * 1e6 for s in samples_s)
    # Variance over the samples at or below p99: a single scheduler
    # preemption (milliseconds among microsecond samples) would otherwise
    # dominate the statistic for an in-process pipeline.
    trimmed = kept[: max(1, math.ceil(0.99 * len(kept)))]
    return SizeSample(
        size_b=size,
        median_us=statistics.median(kept),
        p95_us=_nearest_rank(kept, 0.95),
        variance_us2=statistics.pvariance(trimmed) if len(trimmed) > 1 else 0.0,
        samples=len(kept),
    )


def _block_median_variance(samples_us: list[float], blocks: int = 10) -> float:
    """Spread estimate robust to regime shifts: median of per-block variances.

    Samples stay in time order; each block drops its single largest value as
    a spike guard. A clock-speed step inflates only the blocks it touches,
    and the median across blocks ignores that minority.
    """
    n = len(samples_us)
    size = max(3, n // blocks)
    variances = []
    for start in range(0, n - size + 1, size):
        block = sorted(samples_us[start : start + size])[:-1]
        variances.append(statistics.pvariance(block))
    return statistics.median(variances) if variances else 0.0


def compare_latency(
    sizes: tuple[int, ...] = DEFAULT_SIZES,
    count: int = 2000,
    warmup: int = 500,
    seed: int = 0,
) -> list[tuple[SizeSample, SizeSample]]:
    """Paired slow/fast latency measurement: (slow, fast) sample per size.

    The two modes are sampled in strict alternation inside one loop so both
    distributions see the same machine noise; that keeps the slow-vs-fast
    comparison meaningful even when the host's speed drifts between runs.
    The variance_us2 fields carry the block-median variance for the same
    reason; medians and p95 come from the full post-warmup sample sets.
    """
    if warmup >= count:
        raise ValueError("warmup must be < count")
    rng = random.Random(seed)
    slow_state = build_bench_state(PathMode.ALL_SLOW_PATH)
    fast_state = build_bench_state(PathMode.ALL_FAST_PATH)
    perf = time.perf_counter
    profile = HARDENED
    pairs = []
    for size in sizes:
        slow_pool = _frame_pool(PathMode.ALL_SLOW_PATH, size, min(count, 8192), rng)
        fast_pool = _frame_pool(PathMode.ALL_FAST_PATH, size, min(count, 8192), rng)
        n_slow = len(slow_pool)
        slow_samples: list[float] = []
        fast_samples: list[float] = []
        gc_was_enabled = gc.isenabled()
        gc.collect()
        gc.disable()
        try:
            for i in range(count):
                t0 = perf()
                slow_state.process(slow_pool[i % n_slow], 1, profile)
                t1 = perf()
                fast_state.process(fast_pool[0], 1, profile)
                t2 = perf()
                slow_samples.append(t1 - t0)
                fast_samples.append(t2 - t1)
        finally:
            if gc_was_enabled:
                gc.enable()
        pair = []
        for samples in (slow_samples, fast_samples):
            kept_us = [s * 1e6 for s in samples[warmup:]]
            summary = _summarize(size, samples[warmup:])
            pair.append(
                SizeSample(
                    size_b=summary.size_b,
                    median_us=summary.median_us,
                    p95_us=summary.p95_us,
                    variance_us2=_block_median_variance(kept_us),
                    samples=summary.samples,
                )
            )
        pairs.append((pair[0], pair[1]))
    return pairs


def run_latency(config: BenchConfig, state: SwitchState) -> BenchResult:
    """Per packet size: time each process() call, drop the warmup, summarize."""
    state.set_megaflow_enabled(config.path_mode is PathMode.ALL_FAST_PATH)
    rng = random.Random(config.seed)
    result = BenchResult(mode=config.path_mode)
    perf = time.perf_counter
    pause = config.interval_ms / 1000.0
    profile = HARDENED
    for size in config.packet_sizes:
        pool = _frame_pool(config.path_mode, size, min(config.latency_count, 8192), rng)
        n_pool = len(pool)
        samples: list[float] = []
        gc_was_enabled = gc.isenabled()
        gc.collect()
        gc.disable()
        try:
            for i in range(config.latency_count):
                frame = pool[i % n_pool]
                t0 = perf()
                state.process(frame, 1, profile)
                samples.append(perf() - t0)
                if pause > 0:
                    time.sleep(pause)
        finally:
            if gc_was_enabled:
                gc.enable()
        result.sizes.append(_summarize(size, samples[config.warmup_drop :]))
    return result


THROUGHPUT_CSV_HEADER = "mode,rate_pps,offered,forwarded,loss_fraction"
LATENCY_CSV_HEADER = "mode,size_b,median_us,p95_us,variance_us2"


def throughput_csv(result: BenchResult) -> str:
    lines = [THROUGHPUT_CSV_HEADER]
    for s in result.rates:
        lines.append(f"{result.mode},{s.rate_pps},{s.offered},{s.forwarded},{s.loss_fraction:.6f}")
    return "\n".join(lines) + "\n"


def latency_csv(result: BenchResult) -> str:
    lines = [LATENCY_CSV_HEADER]
    for s in result.sizes:
        lines.append(
            f"{result.mode},{s.size_b},{s.median_us:.3f},{s.p95_us:.3f},{s.variance_us2:.3f}"
        )
    return "\n".join(lines) + "\n"
