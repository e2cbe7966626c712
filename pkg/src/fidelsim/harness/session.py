"""One simulation run of an image, with optional trace, VCD and toggles.

This is what ``fidelsim run`` does; it is also convenient from Python.
"""

from __future__ import annotations

from contextlib import ExitStack
from dataclasses import dataclass, field

from ..fidelity import FidelityConfig, check_runtime_delta, parse_assignments
from ..kernel import ConfigurationError
from ..platform import ArchState, Platform
from .trace import TraceRecorder, TraceWriter
from .vcd import VcdWriter

CHUNK = 1 << 16


def parse_toggle(text: str) -> tuple[int, dict]:
    """``CYCLE:KEY=VAL[,KEY=VAL...]`` → ``(cycle, {key: value})``."""
    cyc, sep, rest = text.partition(":")
    if not sep or not rest:
        raise ConfigurationError(f"expected CYCLE:KEY=VAL, got {text!r}")
    try:
        cycle = int(cyc.replace("_", ""), 0)
    except ValueError:
        raise ConfigurationError(f"bad toggle cycle {cyc!r}") from None
    if cycle < 0:
        raise ConfigurationError("toggle cycle must be >= 0")
    delta = parse_assignments(rest.split(","))
    check_runtime_delta(delta)
    return cycle, delta


@dataclass
class RunResult:
    state: ArchState
    platform: Platform
    applied: list = field(default_factory=list)   # (cycle, delta) as applied
    trace_records: int = 0


def run_image(image, config: FidelityConfig | None = None, stream=None,
              toggles=(), max_cycles: int | None = None,
              trace_path=None, vcd_path=None, all_signals: bool = False,
              chunk: int = CHUNK) -> RunResult:
    """Load ``image``, apply scheduled toggles and run to HALT or
    ``max_cycles``. Trace and VCD files are streamed chunk by chunk."""
    p = Platform(config or FidelityConfig(), stream=stream)
    p.load(image)
    for cycle, delta in toggles:
        p.schedule_toggle(cycle, **delta)
    limit = max_cycles if max_cycles is not None else 1 << 62
    nrec = 0
    with ExitStack() as stack:
        sinks = []
        rec = None
        if trace_path or vcd_path:
            sigs = p.kernel.signals if all_signals else p.traced_signals()
            rec = TraceRecorder(p.kernel, sigs)
            if trace_path:
                fh = stack.enter_context(open(trace_path, "w"))
                tw = TraceWriter(fh)
                tw.begin(rec.names, rec.widths, rec.initial)
                sinks.append(tw)
            if vcd_path:
                fh = stack.enter_context(open(vcd_path, "w"))
                vw = VcdWriter(fh)
                vw.begin(rec.names, rec.widths, rec.initial)
                sinks.append(vw)
        while True:
            stop = min(limit, p.kernel.cycle + chunk) if rec else limit
            halted = p.advance(stop)
            if rec:
                records = rec.flush()
                nrec += len(records)
                for s in sinks:
                    if isinstance(s, TraceWriter):
                        s.records(records)
                    else:
                        s.changes(records)
            if halted or p.kernel.cycle >= limit:
                break
        for s in sinks:
            s.end(p.kernel.cycle)
    return RunResult(p.state(), p, list(p.applied), nrec)
