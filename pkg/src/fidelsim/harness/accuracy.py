"""Cycle-accuracy checks across construction-time configurations.

Every construction axis (signal representation, process style, port-read
caching, process fusion) must leave the pin waveforms untouched. A check runs
a fixed workload plan under each configuration, folds the traced pins into
per-chunk digests, and compares them against the first configuration. When
digests differ, both runs are repeated up to the differing chunk with full
recording and the first divergence is located exactly.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

from ..fidelity import FidelityConfig, ProcessStyle
from ..kernel import SignalMode
from ..platform import Platform
from . import workloads
from .trace import ChunkDigest, Divergence, PinTrace, TraceRecorder, trace_compare

CHUNK = 1 << 16

# (workload, scripted input or None, cycle limit)
DEFAULT_PLAN = (
    ("boot_lite", None, 400_000),
    ("uart_echo", workloads.ECHO_SCRIPT, 2_000_000),
)


def construction_grid(base: FidelityConfig | None = None) -> list[FidelityConfig]:
    """All 16 combinations of the four accuracy-preserving axes."""
    base = base or FidelityConfig()
    out = []
    for mode, style, cache, fuse in itertools.product(
            (SignalMode.RESOLVED4, SignalMode.NATIVE),
            (ProcessStyle.THREADS_ONLY, ProcessStyle.METHODS_WHERE_POSSIBLE),
            (False, True), (False, True)):
        out.append(base.replace(signal_mode=mode, process_style=style,
                                port_read_caching=cache, process_fusion=fuse))
    return out


def _platform(config, name, script):
    stream = workloads.echo_stream(script) if script is not None else None
    p = Platform(config, stream=stream)
    p.load(workloads.image(name))
    return p


@dataclass
class WorkloadRun:
    name: str
    cycles: int
    halted: bool
    digest: ChunkDigest
    uart_out: bytes


@dataclass
class ConfigRun:
    config: FidelityConfig
    runs: list = field(default_factory=list)
    wall: float = 0.0

    @property
    def cycles(self) -> int:
        return sum(r.cycles for r in self.runs)


def digest_run(config: FidelityConfig, plan=DEFAULT_PLAN,
               chunk: int = CHUNK) -> ConfigRun:
    out = ConfigRun(config)
    t0 = time.perf_counter()
    for name, script, limit in plan:
        p = _platform(config, name, script)
        rec = TraceRecorder(p.kernel, p.traced_signals())
        dig = ChunkDigest(rec.names, rec.widths, rec.initial)
        while not p.halted and p.kernel.cycle < limit:
            p.advance(min(limit, p.kernel.cycle + chunk))
            dig.add(p.kernel.cycle, rec.take_raw())
        out.runs.append(WorkloadRun(name, p.kernel.cycle, p.halted, dig,
                                    bytes(p.uart.accepted)))
    out.wall = time.perf_counter() - t0
    return out


def full_trace(config: FidelityConfig, name: str, script=None,
               max_cycles: int = 400_000) -> PinTrace:
    p = _platform(config, name, script)
    rec = TraceRecorder(p.kernel, p.traced_signals())
    p.run(max_cycles=max_cycles)
    return rec.trace()


@dataclass
class Mismatch:
    config: FidelityConfig
    workload: str
    divergence: Divergence | None
    note: str = ""


@dataclass
class AccuracyResult:
    reference: ConfigRun
    others: list
    mismatches: list

    @property
    def equal(self) -> bool:
        return not self.mismatches

    @property
    def min_cycles(self) -> int:
        return min(r.cycles for r in [self.reference] + self.others)

    @property
    def wall(self) -> float:
        return self.reference.wall + sum(r.wall for r in self.others)


def locate(ref: FidelityConfig, other: FidelityConfig, name: str, script,
           upto: int) -> Divergence | None:
    a = full_trace(ref, name, script, upto)
    b = full_trace(other, name, script, upto)
    return trace_compare(a, b)


def check_accuracy(configs=None, plan=DEFAULT_PLAN, chunk: int = CHUNK,
                   progress=None) -> AccuracyResult:
    configs = list(configs) if configs is not None else construction_grid()
    ref = digest_run(configs[0], plan, chunk)
    if progress:
        progress(ref)
    others, bad = [], []
    for cfg in configs[1:]:
        run = digest_run(cfg, plan, chunk)
        if progress:
            progress(run)
        others.append(run)
        for (name, script, _), ra, rb in zip(plan, ref.runs, run.runs):
            i = ra.digest.first_mismatch(rb.digest)
            if i is None and ra.cycles == rb.cycles:
                continue
            if i is None:
                bad.append(Mismatch(cfg, name, None,
                                    f"run lengths differ: {ra.cycles} vs {rb.cycles}"))
                continue
            upto = ra.digest.chunks[i][0] if 0 <= i < len(ra.digest.chunks) \
                else max(ra.cycles, rb.cycles)
            bad.append(Mismatch(cfg, name, locate(configs[0], cfg, name,
                                                  script, upto)))
    return AccuracyResult(ref, others, bad)
