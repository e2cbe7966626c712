"""Deterministic evaluate/update simulation kernel.

One implicit clock drives the model. Each call to :meth:`Kernel.advance_cycle`
dispatches every clock-sensitive process in ascending id order (the evaluate
phase), then alternates update and evaluate phases (delta cycles) until no
signal has a pending write and no process asked for a next-delta retrigger.

Writes go to a signal's pending slot and become visible only in the update
phase, so no process ever observes a value written in the same phase.

Two process kinds exist:

``SINGLE_SHOT``
    A plain callable run to completion on every trigger.
``MULTICYCLE``
    A generator function. The generator yields how long to suspend:
    ``None`` or ``1`` waits for the next clock edge, ``n > 1`` sleeps ``n``
    cycles and ``0`` resumes in the next delta. Signal-sensitive multicycle
    processes resume on the next change of any signal they are sensitive to.
"""

from __future__ import annotations

import heapq
import inspect
from operator import attrgetter
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable

from .logic import LogicVec, UnknownValueError, resolve_vec

DELTA_LIMIT = 1000
CLOCK_PERIOD_NS = 10

CLOCK = "clock"


class ProcessKind(Enum):
    MULTICYCLE = "multicycle"
    SINGLE_SHOT = "single_shot"


class SignalMode(Enum):
    RESOLVED4 = "resolved4"
    NATIVE = "native"


class KernelError(Exception):
    """Base class for simulation faults raised by the kernel."""


class ConfigurationError(KernelError):
    pass


class DeltaOverflowError(KernelError):
    def __init__(self, cycle: int, limit: int):
        self.cycle = cycle
        super().__init__(
            f"delta overflow at cycle {cycle}: more than {limit} deltas "
            "(combinational loop?)")


class UnknownSignalError(KernelError):
    pass


@dataclass(frozen=True, order=True)
class SimTime:
    cycle: int = 0
    delta: int = 0


@dataclass
class KernelStats:
    processes_dispatched: int = 0
    delta_cycles_run: int = 0
    signal_updates: int = 0
    cycles_simulated: int = 0

    def snapshot(self) -> "KernelStats":
        return KernelStats(self.processes_dispatched, self.delta_cycles_run,
                           self.signal_updates, self.cycles_simulated)


class Signal:
    """Unresolved (native) signal: a plain machine word, last write wins."""

    __slots__ = ("id", "name", "width", "mask", "cur", "_next", "_pending",
                 "reads", "sensitive", "kernel", "traced")

    mode = SignalMode.NATIVE

    def __init__(self, kernel: "Kernel", sid: int, name: str, width: int,
                 init: int = 0):
        self.id = sid
        self.name = name
        self.width = width
        self.mask = (1 << width) - 1
        self.cur = init & self.mask
        self._next = self.cur
        self._pending = False
        self.reads = 0
        self.sensitive: list[Process] = []
        self.kernel = kernel
        self.traced = False

    def read(self) -> int:
        self.reads += 1
        return self.cur

    def write(self, value: int, writer: int = 0) -> None:
        value &= self.mask
        if self._pending:
            self._next = value
        elif value != self.cur:
            self._next = value
            self._pending = True
            self.kernel._updates.append(self)

    def release(self, writer: int = 0) -> None:
        # Native wires carry no driver bookkeeping: letting go is a no-op and
        # the next owner's write sets the value.
        pass

    def _commit(self) -> bool:
        self._pending = False
        if self._next != self.cur:
            self.cur = self._next
            return True
        return False

    @property
    def pending(self):
        return self._next if self._pending else None

    def peek(self):
        """Current value as traced: the word itself."""
        return self.cur

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name}={self.cur:#x}>"


class ResolvedSignal(Signal):
    """Four-valued signal resolving all drivers on every write.

    The value is kept as three bit planes (ones, X, Z); ``cur`` returns it as
    a :class:`LogicVec`. :meth:`read` converts to a word and faults if any
    bit is X or Z, so a multi-driver conflict cannot silently reach a
    datapath.
    """

    __slots__ = ("drivers", "_cv", "_cu", "_nv", "_nu")

    mode = SignalMode.RESOLVED4

    def __init__(self, kernel: "Kernel", sid: int, name: str, width: int,
                 init: int = 0):
        self.id = sid
        self.name = name
        self.width = width
        self.mask = (1 << width) - 1
        self._pending = False
        self.reads = 0
        self.sensitive = []
        self.kernel = kernel
        self.traced = False
        # current and next value as (ones, unknown) where unknown packs the
        # X plane in the high half and the Z plane in the low half
        self._cv = init & self.mask
        self._cu = 0
        self._nv = self._cv
        self._nu = 0
        self.drivers: dict[int, tuple[int, int, int]] = {}

    @property
    def cur(self) -> LogicVec:
        w = self.width
        return LogicVec(w, self._cv, self._cu >> w, self._cu & self.mask)

    @property
    def _next(self) -> LogicVec:
        w = self.width
        return LogicVec(w, self._nv, self._nu >> w, self._nu & self.mask)

    def read(self) -> int:
        self.reads += 1
        if self._cu:
            raise UnknownValueError(self.cur, self.name)
        return self._cv

    def read_vec(self) -> LogicVec:
        self.reads += 1
        return self.cur

    def write(self, value, writer: int = 0) -> None:
        if type(value) is not int:
            if isinstance(value, LogicVec):
                self._drive(writer, value.val, value.xm, value.zm)
                return
            value = int(value)
        value &= self.mask
        drivers = self.drivers
        drivers[writer] = (value, 0, 0)
        if len(drivers) > 1:
            self._resolve()
            return
        # sole driver: the resolution is the driven value itself
        if self._pending:
            self._nv = value
            self._nu = 0
        elif value != self._cv or self._cu:
            self._nv = value
            self._nu = 0
            self._pending = True
            self.kernel._updates.append(self)

    def release(self, writer: int = 0) -> None:
        # an all-Z driver is the identity of resolution, so it is dropped
        if self.drivers.pop(writer, None) is not None:
            self._resolve()

    def _drive(self, writer: int, val: int, xm: int, zm: int) -> None:
        mask = self.mask
        xm &= mask
        zm &= mask & ~xm
        if zm == mask:
            self.release(writer)
            return
        self.drivers[writer] = (val & mask & ~(xm | zm), xm, zm)
        self._resolve()

    def _resolve(self) -> None:
        drivers = self.drivers
        if not drivers:
            val, xm, zm = 0, 0, self.mask
        else:
            it = iter(drivers.values())
            val, xm, zm = next(it)
            for bv, bx, bz in it:
                # bitwise resolution, same algebra as logic.resolve_vec
                clash = ~zm & ~bz & (val ^ bv)
                xm = xm | bx | clash
                zm = zm & bz
                val = (val | bv) & ~xm
            xm &= self.mask
            zm &= ~xm
            val &= ~(xm | zm)
        nu = (xm << self.width) | zm
        if self._pending:
            self._nv = val
            self._nu = nu
        elif val != self._cv or nu != self._cu:
            self._nv = val
            self._nu = nu
            self._pending = True
            self.kernel._updates.append(self)

    def _commit(self) -> bool:
        self._pending = False
        if self._nv != self._cv or self._nu != self._cu:
            self._cv = self._nv
            self._cu = self._nu
            return True
        return False

    @property
    def pending(self):
        return self._next if self._pending else None

    def peek(self):
        if self._cu:
            return str(self.cur)
        return self._cv

    def __repr__(self) -> str:
        return f"<ResolvedSignal {self.name}={self.cur}>"


class Process:
    __slots__ = ("id", "name", "kind", "body", "clocked", "sensitivity",
                 "step", "gen", "_disp", "_epoch", "sleep_until", "enabled",
                 "fused_children", "kernel", "_waiting_signal")

    def __init__(self, kernel: "Kernel", pid: int, name: str,
                 kind: ProcessKind, body: Callable, clocked: bool,
                 sensitivity: tuple[Signal, ...]):
        self.id = pid
        self.name = name
        self.kind = kind
        self.body = body
        self.clocked = clocked
        self.sensitivity = sensitivity
        self.gen = None
        # dispatches from signal triggers, plus one per cycle spent in the
        # kernel's clocked list (counted in bulk from ``_epoch``)
        self._disp = 0
        self._epoch: int | None = None
        self.sleep_until: int | None = None
        self.enabled = True
        self.fused_children: list[Callable] = []
        self.kernel = kernel
        if kind is ProcessKind.SINGLE_SHOT:
            self.step = body
        else:
            if not inspect.isgeneratorfunction(body):
                raise ConfigurationError(
                    f"multicycle process {name} needs a generator function")
            # generator bodies do not run until first advanced
            self.gen = body()
            self.step = self.gen.__next__

    @property
    def dispatches(self) -> int:
        if self._epoch is None:
            return self._disp
        return self._disp + self.kernel.cycle - self._epoch

    def _resume(self) -> None:
        """Advance the generator once outside the kernel's dispatch loop."""
        try:
            w = self.step()
        except StopIteration:
            self.kernel._finish(self)
            return
        if w is not None and w != 1:
            self.kernel._yielded(self, w)

    def __repr__(self) -> str:
        return f"<Process {self.id} {self.name} {self.kind.value}>"


class Kernel:
    """Single-clock evaluate/update scheduler.

    ``signal_mode`` picks the class used by :meth:`signal` for inter-component
    wires. Hooks registered with :meth:`on_cycle_end` run after each cycle has
    settled; they are for recorders and must not write signals.
    """

    def __init__(self, signal_mode: SignalMode = SignalMode.NATIVE,
                 delta_limit: int = DELTA_LIMIT):
        self.signal_mode = signal_mode
        self.delta_limit = delta_limit
        self.cycle = 0
        self.delta = 0
        self.stats = KernelStats()
        self.last_cycle_deltas = 0
        self.signals: list[Signal] = []
        self._by_name: dict[str, Signal] = {}
        self.processes: list[Process] = []
        self._bodies: set[int] = set()
        self._clocked: list[Process] = []
        self._clocked_dirty = False
        self._wakes: list[tuple[int, int]] = []
        self._updates: list[Signal] = []
        self._retrigger: list[Process] = []
        self._sleep_requests: list[tuple[Process, int]] = []
        self._cycle_hooks: list[Callable[[int], None]] = []
        self._update_hooks: list[Callable[[Signal, int, int], None]] = []
        # when a list, committed changes of traced signals are appended to it
        # as (cycle, delta, signal_id, value)
        self.trace_log: list | None = None

    @property
    def now(self) -> SimTime:
        return SimTime(self.cycle, self.delta)

    # -- construction -----------------------------------------------------

    def signal(self, name: str, width: int = 1, init: int = 0,
               mode: SignalMode | None = None) -> Signal:
        if name in self._by_name:
            raise ConfigurationError(f"duplicate signal name {name!r}")
        mode = mode or self.signal_mode
        cls = ResolvedSignal if mode is SignalMode.RESOLVED4 else Signal
        sig = cls(self, len(self.signals), name, width, init)
        self.signals.append(sig)
        self._by_name[name] = sig
        return sig

    def find_signal(self, key) -> Signal:
        try:
            if isinstance(key, str):
                return self._by_name[key]
            return self.signals[key]
        except (KeyError, IndexError):
            raise UnknownSignalError(f"unknown signal {key!r}") from None

    def register_process(self, kind: ProcessKind, sensitivity, body: Callable,
                         name: str | None = None) -> int:
        """Register ``body`` and return its process id.

        ``sensitivity`` is :data:`CLOCK` or an iterable of signals (or
        :data:`CLOCK` inside that iterable to combine both).
        """
        key = id(getattr(body, "__func__", body)), id(getattr(body, "__self__", None))
        if key in self._bodies:
            raise ConfigurationError(
                f"body {getattr(body, '__name__', body)!r} already registered")
        if sensitivity == CLOCK:
            sens: list = [CLOCK]
        else:
            sens = list(sensitivity)
        clocked = CLOCK in sens
        sigs = tuple(s for s in sens if s is not CLOCK and s != CLOCK)
        pid = len(self.processes)
        p = Process(self, pid, name or getattr(body, "__name__", f"p{pid}"),
                    kind, body, clocked, sigs)
        self._bodies.add(key)
        self.processes.append(p)
        for s in sigs:
            s.sensitive.append(p)
            s.sensitive.sort(key=_pid)
        if clocked:
            p._epoch = self.cycle
            self._clocked.append(p)
            self._clocked.sort(key=_pid)
        return pid

    def on_cycle_end(self, hook: Callable[[int], None]) -> None:
        self._cycle_hooks.append(hook)

    def on_update(self, hook: Callable[[Signal, int, int], None]) -> None:
        """Call ``hook(signal, cycle, delta)`` for every committed change of a
        signal whose ``traced`` flag is set."""
        self._update_hooks.append(hook)

    # -- process control --------------------------------------------------

    def sleep_for(self, pid: int, n: int) -> None:
        p = self.processes[pid]
        if n <= 0:
            self._retrigger.append(p)
            return
        if n == 1:
            return
        self._sleep_requests.append((p, n))

    def suspend(self, pid: int) -> None:
        """Stop dispatching a process until :meth:`resume`."""
        p = self.processes[pid]
        if p.enabled:
            p.enabled = False
            self._clocked_dirty = True

    def resume(self, pid: int) -> None:
        p = self.processes[pid]
        if not p.enabled:
            p.enabled = True
            self._clocked_dirty = True

    def _yielded(self, p: Process, w) -> None:
        if w == 0:
            self._retrigger.append(p)
        elif isinstance(w, int) and w > 1:
            self._sleep_requests.append((p, w))
        else:
            raise ConfigurationError(f"process {p.name} yielded {w!r}")

    def _finish(self, p: Process) -> None:
        p.enabled = False
        self._clocked_dirty = True

    def _rebuild_clocked(self) -> None:
        c = self.cycle
        for p in self._clocked:
            p._disp += c - p._epoch
            p._epoch = None
        self._clocked = [p for p in self.processes
                         if p.clocked and p.enabled and p.sleep_until is None]
        for p in self._clocked:
            p._epoch = c
        self._clocked_dirty = False

    # -- simulation -------------------------------------------------------

    def signal_read(self, key) -> int:
        return self.find_signal(key).read()

    def signal_write(self, key, value, writer: int = 0) -> None:
        self.find_signal(key).write(value, writer)

    def advance_cycle(self) -> SimTime:
        """Simulate one clock cycle to quiescence; returns the new time."""
        self._step()
        return SimTime(self.cycle, 0)

    def _step(self) -> None:
        cycle = self.cycle
        stats = self.stats
        wakes = self._wakes
        if wakes and wakes[0][0] <= cycle:
            procs = self.processes
            while wakes and wakes[0][0] <= cycle:
                _, pid = heapq.heappop(wakes)
                procs[pid].sleep_until = None
            self._clocked_dirty = True
        if self._clocked_dirty:
            self._rebuild_clocked()

        ready = self._clocked
        for p in ready:
            if p.gen is None:
                p.step()
            else:
                try:
                    w = p.step()
                except StopIteration:
                    self._finish(p)
                    continue
                if w is not None and w != 1:
                    self._yielded(p, w)
        dispatched = len(ready)

        if self._sleep_requests:
            for p, n in self._sleep_requests:
                p.sleep_until = cycle + n
                heapq.heappush(wakes, (cycle + n, p.id))
            self._sleep_requests.clear()
            self._clocked_dirty = True

        delta = 0
        nupd = 0
        tlog = self.trace_log
        updates = self._updates
        limit = self.delta_limit
        while updates or self._retrigger:
            triggered = set(self._retrigger)
            self._retrigger.clear()
            if updates:
                self._updates = []
                if len(updates) > 1:
                    updates.sort(key=_sid)
                for s in updates:
                    if s._commit():
                        nupd += 1
                        if s.sensitive:
                            triggered.update(s.sensitive)
                        if s.traced:
                            if tlog is not None:
                                tlog.append((cycle, delta, s.id,
                                             s.cur if type(s) is Signal
                                             else s.peek()))
                            if self._update_hooks:
                                for h in self._update_hooks:
                                    h(s, cycle, delta)
                updates = self._updates
            if not triggered:
                break
            delta += 1
            if delta > limit:
                raise DeltaOverflowError(cycle, limit)
            self.delta = delta
            batch = [p for p in triggered
                     if p.enabled and p.sleep_until is None]
            if len(batch) > 1:
                batch.sort(key=_pid)
            for p in batch:
                p._disp += 1
                if p.gen is None:
                    p.step()
                else:
                    try:
                        w = p.step()
                    except StopIteration:
                        self._finish(p)
                        continue
                    if w is not None and w != 1:
                        self._yielded(p, w)
            dispatched += len(batch)
            updates = self._updates
            if self._sleep_requests:
                for p, n in self._sleep_requests:
                    p.sleep_until = cycle + n
                    heapq.heappush(wakes, (cycle + n, p.id))
                self._sleep_requests.clear()
                self._clocked_dirty = True

        stats.signal_updates += nupd
        stats.processes_dispatched += dispatched
        stats.delta_cycles_run += delta
        self.last_cycle_deltas = delta + 1
        for h in self._cycle_hooks:
            h(cycle)
        self.cycle = cycle + 1
        stats.cycles_simulated += 1
        self.delta = 0

    def run(self, until: int | None = None,
            halt: Callable[[], bool] | None = None,
            max_cycles: int | None = None) -> KernelStats:
        """Advance until ``until`` cycles have run in this call, ``halt()``
        returns true after a cycle, or ``max_cycles`` total is reached."""
        if until is None and halt is None and max_cycles is None:
            raise ConfigurationError("run() needs a bound or a halt predicate")
        stop = self.cycle + until if until is not None else None
        if max_cycles is not None:
            stop = max_cycles if stop is None else min(stop, max_cycles)
        adv = self._step
        if halt is None:
            while self.cycle < stop:
                adv()
        elif stop is None:
            while not halt():
                adv()
        else:
            while self.cycle < stop and not halt():
                adv()
        return self.stats.snapshot()


_pid = attrgetter("id")
_sid = _pid
