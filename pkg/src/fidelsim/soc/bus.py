"""Pin-level shared peripheral bus with two masters.

Protocol, counted from the cycle in which a master raises its request::

    cycle 1       request/grant   master drives req + address; arbiter grants
                                  in a delta of the same cycle and muxes the
                                  granted master onto the shared lines
    cycle 2       decode/access   every attached slave decodes the address;
                                  the owner takes over the return lines
    cycle 2+w     wait states     (w = slave wait states)
    cycle 3+w     ack + data      slave pulses xferack (or errack) with data

The master samples the ack at the next clock edge, so a transaction costs the
master exactly ``3 + w`` cycles.

The return lines (``opb_rdbus``, ``opb_xferack``, ``opb_errack``) are shared by
all slaves. Between transactions the arbiter drives them to zero; a slave takes
them over on its decode cycle and gives them back on the cycle after its ack.
In Resolved4 mode a missed hand-over shows up as X or Z on those lines.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Protocol

from ..kernel import CLOCK, Kernel, ProcessKind


class Master(IntEnum):
    DATA = 0
    INSTR = 1


class BusError(Exception):
    def __init__(self, addr: int, master: Master | int):
        self.addr = addr
        self.master = Master(master)
        super().__init__(
            f"bus error: {self.master.name} master at {addr:#010x}")


@dataclass(frozen=True)
class BusRequest:
    master: Master
    addr: int
    rnw: bool = True
    byte_enables: int = 0xF
    wdata: int = 0

    def __post_init__(self):
        if not 0 <= self.addr <= 0xFFFFFFFF:
            raise ValueError(f"address out of range: {self.addr:#x}")
        if self.byte_enables == 0xF and self.addr & 3:
            raise ValueError(f"unaligned word transfer at {self.addr:#x}")
        if not self.rnw and not self.byte_enables:
            raise ValueError("write with no byte enables")


def arbitrate(pending: Iterable[BusRequest | Master]) -> Master | None:
    """Fixed priority: the data side wins over the instruction side."""
    masters = {p.master if isinstance(p, BusRequest) else Master(p)
               for p in pending}
    if Master.DATA in masters:
        return Master.DATA
    if Master.INSTR in masters:
        return Master.INSTR
    return None


class Device(Protocol):
    wait_states: int

    def access(self, offset: int, rnw: bool, be: int,
               wdata: int) -> tuple[int, bool]:
        """Perform one register/memory access; returns ``(rdata, error)``."""


@dataclass
class MapEntry:
    base: int
    size: int
    pid: str
    device: object = None
    slave: "BusSlave | None" = None
    # Accessed straight from the arbiter instead of through a slave process
    # (gated peripheral or detached memory).
    direct: bool = False

    @property
    def end(self) -> int:
        return self.base + self.size

    def __contains__(self, addr: int) -> bool:
        return self.base <= addr < self.base + self.size


@dataclass
class PeripheralMap:
    entries: list[MapEntry] = field(default_factory=list)

    def add(self, base: int, size: int, pid: str, device=None) -> MapEntry:
        if size <= 0 or size & (size - 1):
            raise ValueError(f"{pid}: size {size:#x} is not a power of two")
        for e in self.entries:
            if base < e.end and e.base < base + size:
                raise ValueError(f"{pid} overlaps {e.pid}")
        entry = MapEntry(base, size, pid, device)
        self.entries.append(entry)
        self.entries.sort(key=lambda e: e.base)
        return entry

    def decode_entry(self, addr: int) -> MapEntry | None:
        for e in self.entries:
            if e.base <= addr < e.base + e.size:
                return e
        return None

    def decode_address(self, addr: int) -> str | None:
        e = self.decode_entry(addr)
        return e.pid if e is not None else None

    def __getitem__(self, pid: str) -> MapEntry:
        for e in self.entries:
            if e.pid == pid:
                return e
        raise KeyError(pid)

    @property
    def gated(self) -> dict[str, bool]:
        return {e.pid: e.direct for e in self.entries}


# writer ids on resolved wires
W_DATA_MASTER = 1
W_INSTR_MASTER = 2
W_ARBITER = 3
W_DEVICE_BASE = 16

IDLE, ACCESS, ACK = 0, 1, 2
# arbiter-side phases
ARB_IDLE, ARB_SLAVE, ARB_SELF, ARB_SELF_ACK = 0, 1, 2, 3


class Bus:
    """Signals and arbiter processes of the shared bus."""

    def __init__(self, kernel: Kernel, pmap: PeripheralMap):
        self.kernel = kernel
        self.map = pmap
        s = kernel.signal
        # data-side master pins
        self.d_req = s("d_req")
        self.d_addr = s("d_addr", 32)
        self.d_rnw = s("d_rnw")
        self.d_be = s("d_be", 4)
        self.d_wdata = s("d_wdata", 32)
        # instruction-side master pins (reads of whole words only)
        self.i_req = s("i_req")
        self.i_addr = s("i_addr", 32)
        # arbiter outputs
        self.d_gnt = s("d_gnt")
        self.i_gnt = s("i_gnt")
        self.lock = s("bus_lock", 2)
        self.select = s("opb_select")
        self.abus = s("opb_abus", 32)
        self.rnw = s("opb_rnw")
        self.be = s("opb_be", 4)
        self.dbus = s("opb_dbus", 32)
        # shared return lines
        self.rdbus = s("opb_rdbus", 32)
        self.xferack = s("opb_xferack")
        self.errack = s("opb_errack")

        self.phase = ARB_IDLE
        self._lock = 0
        self._count = 0
        self._rdata = 0
        self._err = False
        self.transactions = 0

    @property
    def master_pins(self):
        return (self.d_req, self.d_addr, self.d_rnw, self.d_be, self.d_wdata,
                self.i_req, self.i_addr)

    def register_seq(self) -> int:
        """Register the clocked half (lock and default return-line driver)."""
        return self.kernel.register_process(
            ProcessKind.SINGLE_SHOT, CLOCK, self.arb_seq, name="arb_seq")

    def register_comb(self) -> int:
        """Register the combinational grant/mux half."""
        return self.kernel.register_process(
            ProcessKind.SINGLE_SHOT, self.master_pins + (self.lock,),
            self.arb_comb, name="arb_comb")

    @property
    def idle(self) -> bool:
        """No transaction in flight or requested at this cycle boundary."""
        return (self.phase == ARB_IDLE and not _word(self.select)
                and not _word(self.d_req) and not _word(self.i_req))

    def arb_comb(self) -> None:
        lock = self.lock.read()
        if lock:
            g = lock
        elif self.d_req.read():
            g = 1
        elif self.i_req.read():
            g = 2
        else:
            g = 0
        self.d_gnt.write(g == 1)
        self.i_gnt.write(g == 2)
        self.select.write(g != 0)
        if g == 1:
            self.abus.write(self.d_addr.read())
            self.rnw.write(self.d_rnw.read())
            self.be.write(self.d_be.read())
            self.dbus.write(self.d_wdata.read())
        elif g == 2:
            self.abus.write(self.i_addr.read())
            self.rnw.write(1)
            self.be.write(0xF)
            self.dbus.write(0)
        else:
            self.abus.write(0)
            self.rnw.write(0)
            self.be.write(0)
            self.dbus.write(0)

    def arb_seq(self) -> None:
        owner = 1 if self.d_gnt.read() else (2 if self.i_gnt.read() else 0)
        done = self.xferack.read() or self.errack.read()
        ph = self.phase
        if owner and not done:
            if self._lock != owner:
                self._lock = owner
                self.lock.write(owner)
            if ph == ARB_IDLE:
                self._decode()
            elif ph == ARB_SELF:
                if self._count:
                    self._count -= 1
                else:
                    if self._err:
                        self.errack.write(1, W_ARBITER)
                    else:
                        self.rdbus.write(self._rdata, W_ARBITER)
                        self.xferack.write(1, W_ARBITER)
                    self.phase = ARB_SELF_ACK
        else:
            if self._lock:
                self._lock = 0
                self.lock.write(0)
            if ph != ARB_IDLE:
                self.rdbus.write(0, W_ARBITER)
                self.xferack.write(0, W_ARBITER)
                self.errack.write(0, W_ARBITER)
                self.phase = ARB_IDLE
                self.transactions += 1

    def _decode(self) -> None:
        addr = self.abus.read()
        entry = self.map.decode_entry(addr)
        if entry is not None and not entry.direct:
            # the slave takes the return lines over in this same cycle
            self.rdbus.release(W_ARBITER)
            self.xferack.release(W_ARBITER)
            self.errack.release(W_ARBITER)
            self.phase = ARB_SLAVE
            return
        self.phase = ARB_SELF
        if entry is None:
            self._err = True
            self._rdata = 0
            self._count = 0
            return
        rnw = self.rnw.read()
        wdata = 0 if rnw else self.dbus.read()
        self._rdata, self._err = entry.device.access(
            addr - entry.base, bool(rnw), self.be.read(), wdata)
        self._count = entry.device.wait_states


def _word(sig) -> int:
    v = sig.cur
    return v if isinstance(v, int) else v.val


class BusSlave:
    """Clocked address decoder and response state machine for one device.

    With ``cached=False`` the body re-reads ``opb_select`` for its deselect
    check instead of reusing the value it already sampled (two port reads per
    cycle instead of one).
    """

    def __init__(self, bus: Bus, entry: MapEntry, wid: int,
                 cached: bool = True):
        self.bus = bus
        self.entry = entry
        self.device = entry.device
        self.lo = entry.base
        self.hi = entry.base + entry.size
        self.wid = wid
        self.state = IDLE
        self.count = 0
        self.rdata = 0
        self.err = False
        self.pid: int | None = None
        self._sel = bus.select
        self._abus = bus.abus
        self.step = self.step_cached if cached else self.step_uncached
        entry.slave = self

    def register(self, kernel: Kernel, name: str) -> int:
        self.pid = kernel.register_process(ProcessKind.SINGLE_SHOT, CLOCK,
                                           self.step, name=name)
        return self.pid

    def _pickup(self, addr: int) -> None:
        b = self.bus
        rnw = b.rnw.read()
        wdata = 0 if rnw else b.dbus.read()
        self.rdata, self.err = self.device.access(
            addr - self.lo, bool(rnw), b.be.read(), wdata)
        self.count = self.device.wait_states
        self.state = ACCESS
        wid = self.wid
        b.rdbus.write(0, wid)
        b.xferack.write(0, wid)
        b.errack.write(0, wid)

    def _respond(self) -> None:
        b = self.bus
        if self.err:
            b.errack.write(1, self.wid)
        else:
            b.rdbus.write(self.rdata, self.wid)
            b.xferack.write(1, self.wid)
        self.state = ACK

    def _release(self) -> None:
        b = self.bus
        wid = self.wid
        b.rdbus.release(wid)
        b.xferack.release(wid)
        b.errack.release(wid)
        self.state = IDLE

    def step_cached(self) -> None:
        st = self.state
        if st == IDLE:
            if self._sel.read():
                a = self._abus.read()
                if self.lo <= a < self.hi:
                    self._pickup(a)
        elif st == ACCESS:
            if self.count:
                self.count -= 1
            else:
                self._respond()
        else:
            self._release()

    def step_uncached(self) -> None:
        st = self.state
        if st == IDLE:
            if self._sel.read():
                a = self._abus.read()
                if self.lo <= a < self.hi:
                    self._pickup(a)
        elif st == ACCESS:
            if self.count:
                self.count -= 1
            else:
                self._respond()
        else:
            self._release()
        # deselect guard, written HDL style against the port itself
        if not self._sel.read() and self.state == ACCESS:
            self._release()
