"""Phase-averaged speed measurement.

A benchmark runs a workload ``reps`` times under one configuration. Each
execution is cut into ``phases`` equal windows of simulated cycles and the
wall time of every window is recorded, giving a reps x phases matrix of
cycles-per-second values. The windows are plain cycle ranges: the bundled
workloads have no meaningful boot checkpoints to split at.

Before the timed executions an untimed calibration run establishes the cycle
count (needed to place the windows) and catches faults.
"""

from __future__ import annotations

import json
import math
import statistics
import time
from dataclasses import dataclass, field

from .. import compiled_modules
from ..fidelity import FidelityConfig, ProcessStyle
from ..kernel import SignalMode
from ..platform import Platform
from . import workloads

# published figures of the original study, printed next to measurements for
# context; they come from a different machine, ISA and workload
REFERENCE_CONSTANTS = {
    "hdl_rtl_cps": 167.0,
    "resolved_signals_cps": 61_000.0,
    "native_signals_cps": 141_700.0,
    "native_speedup_pct": 132.0,
    "best_accurate_cps": 152_500.0,
    "process_style_gain_pct": 2.0,
    "port_read_caching_gain_pct": 2.5,
    "process_fusion_gain_pct": 3.0,
    "ifetch_cpi_gain_pct": 35.0,
    "ifetch_time_cut_pct": 64.0,
    "gating_gain_pct": 15.0,
    "intercepted_share_pct": 52.0,
    "toggling_max_cps": 280_000.0,
    "effective_max_cps": 578_000.0,
    "boot_minutes_accurate": 69.0,
    "boot_minutes_ifetch": 24.0,
    "boot_minutes_gating": 12.0,
    "boot_minutes_interception": 6.0,
    "measurement_points": 50,
}


class BenchError(Exception):
    pass


@dataclass
class Report:
    config: FidelityConfig
    workload: str
    phases: int
    reps: int
    per_phase_cps: list = field(default_factory=list)   # reps x phases
    phase_cycles: list = field(default_factory=list)    # window lengths
    wall_seconds: float = 0.0
    cycles: int = 0
    instructions: int = 0
    intercepted_calls: int = 0
    baseline_cycles: int | None = None
    failed: bool = False
    diagnostic: str | None = None
    label: str = ""
    compiled: bool = False
    reference_constants: dict = field(
        default_factory=lambda: dict(REFERENCE_CONSTANTS))

    @property
    def points(self) -> list:
        return [v for row in self.per_phase_cps for v in row]

    @property
    def mean_cps(self) -> float:
        pts = self.points
        return math.fsum(pts) / len(pts) if pts else 0.0

    @property
    def stddev_cps(self) -> float:
        pts = self.points
        return statistics.stdev(pts) if len(pts) > 1 else 0.0

    @property
    def cpi(self) -> float:
        return self.cycles / self.instructions if self.instructions else 0.0

    @property
    def effective_cps(self) -> float:
        """Mean CPS scaled by how many cycles the fully accurate model needs
        for the same work; equals :attr:`mean_cps` for accurate configs."""
        if not self.baseline_cycles or not self.cycles:
            return self.mean_cps
        return self.mean_cps * self.baseline_cycles / self.cycles

    @property
    def wall_per_run(self) -> float:
        return self.wall_seconds / self.reps if self.reps else 0.0

    def to_dict(self) -> dict:
        return {
            "label": self.label or self.config.label,
            "workload": self.workload,
            "config": self.config.to_dict(),
            "phases": self.phases,
            "reps": self.reps,
            "phase_windows": "equal cycle windows",
            "phase_cycles": list(self.phase_cycles),
            "per_phase_cps": [list(r) for r in self.per_phase_cps],
            "mean_cps": self.mean_cps,
            "stddev_cps": self.stddev_cps,
            "effective_cps": self.effective_cps,
            "cpi": self.cpi,
            "wall_seconds": self.wall_seconds,
            "cycles": self.cycles,
            "instructions": self.instructions,
            "intercepted_calls": self.intercepted_calls,
            "baseline_cycles": self.baseline_cycles,
            "failed": self.failed,
            "diagnostic": self.diagnostic,
            "compiled": self.compiled,
            "reference_constants": dict(self.reference_constants),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Report":
        return cls(config=FidelityConfig(**{k: v for k, v in d["config"].items()}),
                   workload=d["workload"], phases=d["phases"], reps=d["reps"],
                   per_phase_cps=[list(r) for r in d["per_phase_cps"]],
                   phase_cycles=list(d["phase_cycles"]),
                   wall_seconds=d["wall_seconds"], cycles=d["cycles"],
                   instructions=d["instructions"],
                   intercepted_calls=d.get("intercepted_calls", 0),
                   baseline_cycles=d.get("baseline_cycles"),
                   failed=d["failed"], diagnostic=d["diagnostic"],
                   label=d.get("label", ""), compiled=d.get("compiled", False),
                   reference_constants=d.get("reference_constants",
                                             dict(REFERENCE_CONSTANTS)))

    def to_text(self) -> str:
        """Line-delimited key/value form, one metric per line."""
        lines = [
            f"label={self.label or self.config.label}",
            f"workload={self.workload}",
            f"config={self.config.label}",
            f"phases={self.phases}",
            f"reps={self.reps}",
            f"points={len(self.points)}",
            f"mean_cps={self.mean_cps:.1f}",
            f"stddev_cps={self.stddev_cps:.1f}",
            f"effective_cps={self.effective_cps:.1f}",
            f"cpi={self.cpi:.4f}",
            f"cycles={self.cycles}",
            f"instructions={self.instructions}",
            f"intercepted_calls={self.intercepted_calls}",
            f"wall_seconds={self.wall_seconds:.3f}",
            f"failed={str(self.failed).lower()}",
        ]
        if self.diagnostic:
            lines.append(f"diagnostic={self.diagnostic}")
        for k, v in self.reference_constants.items():
            lines.append(f"reference.{k}={v:g}")
        return "\n".join(lines) + "\n"


def _resolve_image(workload):
    if isinstance(workload, str):
        return workload, workloads.image(workload)
    return getattr(workload, "name", "image"), workload


def _default_stream(name):
    return workloads.echo_stream() if name == "uart_echo" else None


def _build(config, image, stream_factory, name):
    stream = stream_factory() if stream_factory else _default_stream(name)
    p = Platform(config, stream=stream)
    p.load(image)
    return p


def run_benchmark(workload, config: FidelityConfig | None = None,
                  phases: int = 10, reps: int = 5,
                  max_cycles: int | None = None, stream_factory=None,
                  baseline_cycles: int | None = None,
                  label: str = "") -> Report:
    """Measure ``workload`` (a bundled name or an Image) under ``config``."""
    if phases < 1 or reps < 1:
        raise BenchError("phases and reps must be at least 1")
    config = config or FidelityConfig()
    name, image = _resolve_image(workload)
    rep = Report(config, name, phases, reps, label=label,
                 baseline_cycles=baseline_cycles,
                 compiled=all(compiled_modules().values()))

    cal = _build(config, image, stream_factory, name)
    cal.advance(max_cycles)
    if cal.cpu.fault is not None:
        rep.failed = True
        rep.diagnostic = str(cal.cpu.fault)
        return rep
    if not cal.halted and max_cycles is None:
        raise BenchError("workload did not halt; give a cycle budget")
    total = cal.kernel.cycle
    if total < phases:
        raise BenchError(f"{total} cycles cannot be split into {phases} phases")
    rep.cycles = total
    rep.instructions = cal.cpu.stats.instructions_retired
    rep.intercepted_calls = cal.cpu.stats.intercepted_calls
    bounds = [round(total * (k + 1) / phases) for k in range(phases)]
    rep.phase_cycles = [b - a for a, b in zip([0] + bounds, bounds)]
    del cal

    wall = 0.0
    clock = time.perf_counter
    for _ in range(reps):
        p = _build(config, image, stream_factory, name)
        row = []
        for b, n in zip(bounds, rep.phase_cycles):
            t0 = clock()
            p.advance(b)
            dt = clock() - t0
            wall += dt
            row.append(n / dt if dt > 0 else math.inf)
        if p.kernel.cycle != total:
            raise BenchError(f"non-deterministic run length: {p.kernel.cycle} "
                             f"vs {total}")
        rep.per_phase_cps.append(row)
    rep.wall_seconds = wall
    return rep


# ---------------------------------------------------------------------------
# the optimisation ladder

BEST_ACCURATE = FidelityConfig(signal_mode=SignalMode.NATIVE,
                               process_style=ProcessStyle.METHODS_WHERE_POSSIBLE,
                               port_read_caching=True, process_fusion=True)


def ladder_configs(base: FidelityConfig | None = None) -> list:
    """``(step name, config)`` from the resolved baseline to interception,
    each step adding one optimisation to the previous one."""
    r4 = FidelityConfig(signal_mode=SignalMode.RESOLVED4)
    native = base or FidelityConfig(signal_mode=SignalMode.NATIVE)
    ifetch = native.replace(ifetch_dispatch=True)
    data = ifetch.replace(data_dispatch=True)
    gating = data.replace(peripheral_gating=True)
    inter = gating.replace(interception=True)
    return [("resolved4", r4), ("native", native), ("ifetch", ifetch),
            ("data_dispatch", data), ("gating", gating),
            ("interception", inter)]


def speed_ladder(workload="boot_lite", phases: int = 10, reps: int = 5,
                 include_best_accurate: bool = True, progress=None) -> list:
    """Benchmark every ladder step; returns a list of Reports. Effective CPS
    of each step is relative to the cycles of the resolved baseline."""
    steps = ladder_configs()
    if include_best_accurate:
        steps.insert(2, ("best_accurate", BEST_ACCURATE))
    out = []
    base_cycles = None
    for name, cfg in steps:
        r = run_benchmark(workload, cfg, phases, reps,
                          baseline_cycles=base_cycles, label=name)
        if base_cycles is None:
            base_cycles = r.cycles
            r.baseline_cycles = base_cycles
        out.append(r)
        if progress:
            progress(r)
    return out


def ladder_table(reports) -> str:
    """Plain-text table of a ladder with the published figures alongside."""
    ref = REFERENCE_CONSTANTS
    published = {
        "resolved4": f"{ref['resolved_signals_cps'] / 1e3:g} kHz",
        "native": f"{ref['native_signals_cps'] / 1e3:g} kHz (+{ref['native_speedup_pct']:g}%)",
        "best_accurate": f"{ref['best_accurate_cps'] / 1e3:g} kHz",
        "ifetch": f"CPI -{ref['ifetch_cpi_gain_pct']:g}%, time "
                  f"{ref['boot_minutes_accurate']:g}->{ref['boot_minutes_ifetch']:g} min",
        "data_dispatch": "(not reported separately)",
        "gating": f"+{ref['gating_gain_pct']:g}%, {ref['boot_minutes_gating']:g} min",
        "interception": f"{ref['boot_minutes_interception']:g} min, "
                        f"{ref['effective_max_cps'] / 1e3:g} kHz effective",
    }
    head = (f"{'step':<15}{'mean CPS':>11}{'stddev':>10}{'eff. CPS':>11}"
            f"{'CPI':>8}{'cycles':>9}  published")
    lines = [head, "-" * len(head)]
    for r in reports:
        lines.append(f"{r.label:<15}{r.mean_cps:>11.0f}{r.stddev_cps:>10.0f}"
                     f"{r.effective_cps:>11.0f}{r.cpi:>8.3f}{r.cycles:>9}  "
                     f"{published.get(r.label, '')}")
    lines.append(f"reference: HDL RTL {ref['hdl_rtl_cps']:g} Hz; accurate "
                 f"models {ref['resolved_signals_cps'] / 1e3:g}-"
                 f"{ref['best_accurate_cps'] / 1e3:g} kHz; toggled up to "
                 f"{ref['toggling_max_cps'] / 1e3:g} kHz raw, "
                 f"{ref['effective_max_cps'] / 1e3:g} kHz effective; "
                 f"{ref['measurement_points']} points per config")
    return "\n".join(lines)


def reports_to_json(reports) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2)
