"""Speed/accuracy configuration of the platform.

Construction-time axes keep the model pin and cycle accurate and only change
how it is simulated (signal representation, process style, port-read caching,
process fusion, UART drain sleep). Runtime axes trade accuracy for speed and
may be flipped while a simulation runs: instruction fetch and data access
through the memory dispatcher, peripheral gating, and native interception of
``memset``/``memcpy``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

from .kernel import ConfigurationError, SignalMode


class ProcessStyle(Enum):
    THREADS_ONLY = "threads_only"
    METHODS_WHERE_POSSIBLE = "methods_where_possible"


DEFAULT_GATED = frozenset({"flash", "gpio", "emac"})

CONSTRUCTION_KEYS = ("signal_mode", "process_style", "port_read_caching",
                     "process_fusion", "uart_tx_sleep")
RUNTIME_KEYS = ("ifetch_dispatch", "data_dispatch", "peripheral_gating",
                "interception")


@dataclass(frozen=True)
class FidelityConfig:
    signal_mode: SignalMode = SignalMode.RESOLVED4
    process_style: ProcessStyle = ProcessStyle.THREADS_ONLY
    port_read_caching: bool = False
    process_fusion: bool = False
    uart_tx_sleep: int = 1
    ifetch_dispatch: bool = False
    data_dispatch: bool = False
    peripheral_gating: bool = False
    interception: bool = False
    gated_set: frozenset = field(default=DEFAULT_GATED)

    def __post_init__(self):
        # accept the enum values as strings for convenience
        if isinstance(self.signal_mode, str):
            object.__setattr__(self, "signal_mode",
                               SignalMode(self.signal_mode.lower()))
        if isinstance(self.process_style, str):
            object.__setattr__(self, "process_style",
                               ProcessStyle(self.process_style.lower()))
        object.__setattr__(self, "gated_set", frozenset(self.gated_set))
        if self.uart_tx_sleep < 1:
            raise ConfigurationError("uart_tx_sleep must be >= 1")
        if self.data_dispatch and not self.ifetch_dispatch:
            object.__setattr__(self, "ifetch_dispatch", True)

    def replace(self, **delta) -> "FidelityConfig":
        unknown = set(delta) - {f.name for f in dataclasses.fields(self)}
        if unknown:
            raise ConfigurationError(f"unknown fidelity keys: {sorted(unknown)}")
        # turning the instruction dispatcher off also turns data dispatch off
        if delta.get("ifetch_dispatch") is False and "data_dispatch" not in delta:
            delta["data_dispatch"] = False
        return dataclasses.replace(self, **delta)

    @property
    def cycle_accurate(self) -> bool:
        return not (self.ifetch_dispatch or self.data_dispatch
                    or self.peripheral_gating or self.interception)

    @property
    def label(self) -> str:
        parts = [self.signal_mode.value]
        if self.process_style is ProcessStyle.METHODS_WHERE_POSSIBLE:
            parts.append("methods")
        if self.port_read_caching:
            parts.append("cached")
        if self.process_fusion:
            parts.append("fused")
        if self.uart_tx_sleep != 1:
            parts.append(f"txsleep{self.uart_tx_sleep}")
        for k in ("data_dispatch", "ifetch_dispatch", "peripheral_gating",
                  "interception"):
            if getattr(self, k):
                if k == "ifetch_dispatch" and self.data_dispatch:
                    continue
                parts.append(k.split("_")[0] if k != "peripheral_gating"
                             else "gating")
        return "+".join(parts)

    def to_dict(self) -> dict:
        d = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Enum):
                v = v.value
            elif isinstance(v, frozenset):
                v = sorted(v)
            d[f.name] = v
        return d


def parse_value(key: str, text: str):
    """Convert ``KEY=VAL`` text from the command line to a field value."""
    names = {f.name: f for f in dataclasses.fields(FidelityConfig)}
    if key not in names:
        raise ConfigurationError(f"unknown fidelity key {key!r}")
    t = text.strip().lower()
    if key == "signal_mode":
        return SignalMode(t)
    if key == "process_style":
        return ProcessStyle(t)
    if key == "uart_tx_sleep":
        return int(t, 0)
    if key == "gated_set":
        return frozenset(x for x in t.split(",") if x)
    if t in ("1", "true", "on", "yes"):
        return True
    if t in ("0", "false", "off", "no"):
        return False
    raise ConfigurationError(f"bad value for {key}: {text!r}")


def parse_assignments(items) -> dict:
    out = {}
    for item in items:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigurationError(f"expected KEY=VAL, got {item!r}")
        out[key.strip()] = parse_value(key.strip(), val)
    return out


def check_runtime_delta(delta: Mapping) -> None:
    bad = [k for k in delta if k not in RUNTIME_KEYS]
    if bad:
        raise ConfigurationError(
            f"{', '.join(sorted(bad))} can only be set at construction")


# ---------------------------------------------------------------------------
# memory dispatcher


class MemoryFault(Exception):
    pass


class MemoryDispatcher:
    """Direct handles to the RAM and FLASH backing stores.

    ``attached`` tracks whether RAM is still reached through its bus slave; it
    goes false while data dispatch is on.
    """

    def __init__(self, ram, flash):
        self.ram = ram
        self.flash = flash
        self.attached = True
        self._rlo, self._rhi = ram.base, ram.base + ram.size
        self._flo, self._fhi = flash.base, flash.base + flash.size
        self.fetches = 0
        self.data_accesses = 0

    def is_memory(self, addr: int) -> bool:
        return self._rlo <= addr < self._rhi or self._flo <= addr < self._fhi

    def fetch(self, addr: int) -> int | None:
        """One-cycle instruction fetch; ``None`` for addresses it does not
        cover (the core then falls back to the bus)."""
        if self._rlo <= addr < self._rhi:
            o = addr - self._rlo
            mem = self.ram.mem
        elif self._flo <= addr < self._fhi:
            o = addr - self._flo
            mem = self.flash.mem
        else:
            return None
        self.fetches += 1
        return int.from_bytes(mem[o:o + 4], "big")

    def data(self, addr: int, rnw: int, be: int, wdata: int) -> int | None:
        """One-cycle RAM data access; ``None`` outside RAM."""
        if not self._rlo <= addr < self._rhi:
            return None
        self.data_accesses += 1
        return self.ram.access(addr - self._rlo, bool(rnw), be, wdata)[0]

    def read_block(self, addr: int, n: int) -> bytes:
        for lo, hi, store in ((self._rlo, self._rhi, self.ram),
                              (self._flo, self._fhi, self.flash)):
            if lo <= addr and addr + n <= hi:
                return bytes(store.mem[addr - lo:addr - lo + n])
        raise MemoryFault(f"read of {n} bytes at {addr:#x} outside memory")

    def write_block(self, addr: int, data: bytes) -> None:
        if self._rlo <= addr and addr + len(data) <= self._rhi:
            o = addr - self._rlo
            self.ram.mem[o:o + len(data)] = data
            return
        raise MemoryFault(f"write of {len(data)} bytes at {addr:#x} "
                          "outside RAM")

    def fill(self, addr: int, byte: int, n: int) -> None:
        if self._rlo <= addr and addr + n <= self._rhi:
            o = addr - self._rlo
            self.ram.mem[o:o + n] = bytes((byte & 0xFF,)) * n
            return
        raise MemoryFault(f"fill of {n} bytes at {addr:#x} outside RAM")


# ---------------------------------------------------------------------------
# interception


class Builtin(Enum):
    MEMSET = "memset"
    MEMCPY = "memcpy"


class InterceptFault(Exception):
    pass


class InterceptRegistry:
    """Entry addresses of the routines executed natively when interception
    is on.

    The native versions leave every register exactly as the bundled assembly
    routines do: ``r3`` = original ``r5``; ``r5`` advanced by ``n``; for
    memcpy ``r6`` advanced by ``n``, for memset ``r6`` reduced to its low
    byte; ``r7``, ``r8`` and ``r9`` zero; execution continues at ``r15``.
    """

    faults = (InterceptFault, MemoryFault)

    def __init__(self, memory: MemoryDispatcher | None = None):
        self.entries: dict[int, Builtin] = {}
        self.memory = memory

    def add(self, addr: int, builtin: Builtin | str) -> None:
        builtin = Builtin(builtin)
        if addr & 3:
            raise ConfigurationError(f"intercept address {addr:#x} not aligned")
        if addr in self.entries:
            raise ConfigurationError(f"intercept address {addr:#x} already used")
        self.entries[addr] = builtin

    def add_symbols(self, symbols: Mapping[str, int]) -> int:
        n = 0
        for b in Builtin:
            if b.value in symbols:
                self.add(symbols[b.value], b)
                n += 1
        return n

    def __len__(self) -> int:
        return len(self.entries)

    def call(self, cpu, pc: int) -> None:
        run_builtin(self.entries[pc], cpu, self.memory)


def run_builtin(kind: Builtin, cpu, mem: MemoryDispatcher) -> None:
    r = cpu.r
    dst, arg, n = r[5], r[6], r[7]
    if kind is Builtin.MEMSET:
        c = arg & 0xFF
        if n:
            mem.fill(dst, c, n)
        r[6] = c
    else:
        src = arg
        if n:
            if dst < src + n and src < dst + n:
                raise InterceptFault(
                    f"memcpy regions overlap: dst={dst:#x} src={src:#x} n={n}")
            mem.write_block(dst, mem.read_block(src, n))
        r[6] = (src + n) & 0xFFFFFFFF
    r[3] = dst
    r[5] = (dst + n) & 0xFFFFFFFF
    r[7] = 0
    r[8] = 0
    r[9] = 0
    cpu.pc = r[15]


def try_intercept(pc: int, cpu, mem: MemoryDispatcher,
                  registry: InterceptRegistry) -> bool:
    """Run the builtin registered at ``pc`` natively; false if none is."""
    kind = registry.entries.get(pc)
    if kind is None:
        return False
    run_builtin(kind, cpu, mem)
    cpu.stats.intercepted_calls += 1
    return True
