"""Bus-coupled MR32 instruction-set simulator.

The core is a sequential interpreter written as a generator so it can run as
one multicycle kernel process. Per instruction it

1. takes a pending interrupt if ``irq_out`` and ``msr.IE`` are both set,
2. hands the call to a native builtin if interception is on and ``pc`` is a
   registered entry point (zero simulated cycles),
3. fetches the word over the instruction-side master (``3 + wait`` cycles) or
   through the memory dispatcher (1 cycle),
4. executes (1 cycle),
5. for loads/stores, accesses memory over the data-side master or, for RAM
   with data dispatch on, directly (1 cycle).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from ..soc.bus import W_DATA_MASTER, W_INSTR_MASTER, Bus, BusError, Master
from .isa import (IRQ_VECTOR, LINK_IRQ, MNEMONICS, IllegalInstruction, decode,
                  sext16)

MASK = 0xFFFFFFFF


class CpuFault(Exception):
    """A fault that halts the core; ``cause`` holds the underlying error."""

    def __init__(self, cause: Exception, pc: int):
        self.cause = cause
        self.pc = pc
        super().__init__(f"cpu fault at pc={pc:#010x}: {cause}")


class UnalignedAccess(Exception):
    def __init__(self, addr: int, what: str = "access"):
        self.addr = addr
        super().__init__(f"unaligned {what} at {addr:#010x}")


@dataclass
class InstrStats:
    instructions_retired: int = 0
    cycles: int = 0
    per_opcode: Counter = field(default_factory=Counter)
    intercepted_calls: int = 0

    @property
    def cpi(self) -> float:
        if not self.instructions_retired:
            return 0.0
        return self.cycles / self.instructions_retired

    def snapshot(self) -> "InstrStats":
        return InstrStats(self.instructions_retired, self.cycles,
                          Counter(self.per_opcode), self.intercepted_calls)


class RuntimeModes:
    """The mutable knobs the core consults at every instruction boundary."""

    __slots__ = ("ifetch_dispatch", "data_dispatch", "interception")

    def __init__(self, ifetch_dispatch=False, data_dispatch=False,
                 interception=False):
        self.ifetch_dispatch = ifetch_dispatch
        self.data_dispatch = data_dispatch
        self.interception = interception


def _decode_fast(word: int, pc: int) -> tuple:
    ins = decode(word, pc)
    return (ins.opcode, ins.rd, ins.ra, ins.rb, sext16(ins.imm16), ins.imm16)


class Cpu:
    """MR32 core state plus its kernel process body (:meth:`process`).

    ``dispatcher`` must offer ``fetch(addr) -> word | None`` and
    ``data(addr, rnw, be, wdata) -> rdata | None`` (``None`` meaning "not
    mine, use the bus"). ``interceptor`` offers ``entries`` (a dict keyed by
    entry pc) and ``call(cpu, pc)``.
    """

    def __init__(self, bus: Bus | None = None, irq_out=None,
                 dispatcher=None, interceptor=None,
                 modes: RuntimeModes | None = None):
        self.bus = bus
        self.irq_out = irq_out
        self.dispatcher = dispatcher
        self.interceptor = interceptor
        self.modes = modes or RuntimeModes()
        self.r = [0] * 32
        self.pc = 0
        self.ie = 0
        self.halted = False
        self.fault: CpuFault | None = None
        self.stats = InstrStats()
        self._ops = [0] * 64
        self._dcache: dict[int, tuple] = {}
        # optional recorders
        self.log: list | None = None       # (pc, word, rd, value) per retire
        self.irq_log: list | None = None   # retire index at each interrupt
        self.mmio_log: list | None = None  # values of non-memory loads
        self.profile: Counter | None = None

    # -- state ------------------------------------------------------------

    def reset(self, pc: int = 0) -> None:
        self.r = [0] * 32
        self.pc = pc
        self.ie = 0
        self.halted = False
        self.fault = None

    @property
    def msr(self) -> int:
        return self.ie

    def enable_recording(self, profile: bool = False) -> None:
        self.log = []
        self.irq_log = []
        self.mmio_log = []
        if profile:
            self.profile = Counter()

    def sync_stats(self) -> InstrStats:
        """Fold the fast opcode counters into :attr:`stats` and return it."""
        pc = self.stats.per_opcode
        pc.clear()
        for op, n in enumerate(self._ops):
            if n:
                pc[MNEMONICS[op]] = n
        return self.stats

    # -- bus master -------------------------------------------------------

    def _bus(self, side: int, addr: int, rnw: int, be: int, wdata: int):
        """Sub-generator for one bus transaction; returns ``(rdata, cycles)``."""
        b = self.bus
        if side == 0:
            b.d_addr.write(addr, W_DATA_MASTER)
            b.d_rnw.write(rnw, W_DATA_MASTER)
            b.d_be.write(be, W_DATA_MASTER)
            b.d_wdata.write(wdata, W_DATA_MASTER)
            req = b.d_req
            wid = W_DATA_MASTER
        else:
            b.i_addr.write(addr, W_INSTR_MASTER)
            req = b.i_req
            wid = W_INSTR_MASTER
        req.write(1, wid)
        ack = b.xferack
        err = b.errack
        n = 0
        while True:
            yield
            n += 1
            if ack.read():
                data = b.rdbus.read() if rnw else 0
                req.write(0, wid)
                return data, n
            if err.read():
                req.write(0, wid)
                raise BusError(addr, Master(side))

    # -- main loop --------------------------------------------------------

    def process(self):
        """Kernel process body (generator)."""
        try:
            yield from self._run()
        except (BusError, IllegalInstruction, UnalignedAccess) as e:
            self.fault = CpuFault(e, self.pc)
            self.halted = True
        except Exception as e:
            if self.interceptor is not None and isinstance(
                    e, getattr(self.interceptor, "faults", ())):
                self.fault = CpuFault(e, self.pc)
                self.halted = True
            else:
                raise

    def _run(self):
        r = self.r
        stats = self.stats
        ops = self._ops
        modes = self.modes
        dcache = self._dcache
        irq_out = self.irq_out
        disp = self.dispatcher
        bus_op = self._bus
        skip_intercept = False
        while True:
            if self.ie and irq_out is not None and irq_out.read():
                r[LINK_IRQ] = self.pc
                self.ie = 0
                self.pc = IRQ_VECTOR
                if self.irq_log is not None:
                    self.irq_log.append(len(self.log))
            pc = self.pc
            if (modes.interception and not skip_intercept
                    and self.interceptor is not None
                    and pc in self.interceptor.entries):
                self.interceptor.call(self, pc)
                stats.intercepted_calls += 1
                # the routine returns straight to the caller; one call per
                # boundary so a pathological r15 cannot spin without time
                skip_intercept = True
                continue
            skip_intercept = False

            # fetch
            word = None
            if modes.ifetch_dispatch and disp is not None:
                word = disp.fetch(pc)
            if word is not None:
                yield
                cyc = 1
            else:
                word, cyc = yield from bus_op(1, pc, 1, 0xF, 0)
            d = dcache.get(word)
            if d is None:
                d = dcache[word] = _decode_fast(word, pc)
            op, rd, ra, rb, simm, uimm = d

            # execute
            npc = (pc + 4) & MASK
            wreg = -1
            val = 0
            if op < 0x09:
                a = r[ra]
                b = r[rb]
                if op == 0x00:
                    val = (a + b) & MASK
                elif op == 0x01:
                    val = (a - b) & MASK
                elif op == 0x02:
                    val = a & b
                elif op == 0x03:
                    val = a | b
                elif op == 0x04:
                    val = a ^ b
                elif op == 0x05:
                    val = (a << (b & 31)) & MASK
                elif op == 0x06:
                    val = a >> (b & 31)
                elif op == 0x07:
                    sa = a - 0x100000000 if a & 0x80000000 else a
                    val = (sa >> (b & 31)) & MASK
                else:
                    sa = a - 0x100000000 if a & 0x80000000 else a
                    sb = b - 0x100000000 if b & 0x80000000 else b
                    val = 1 if sa < sb else 0
                wreg = rd
                yield
                cyc += 1
            elif op < 0x18:
                if op == 0x10:
                    val = (r[ra] + simm) & MASK
                elif op == 0x12:
                    val = r[ra] & uimm
                elif op == 0x13:
                    val = r[ra] | uimm
                elif op == 0x14:
                    val = r[ra] ^ uimm
                elif op == 0x15:
                    val = uimm << 16
                else:
                    raise IllegalInstruction(word, pc)
                wreg = rd
                yield
                cyc += 1
            elif op < 0x20:
                addr = (r[ra] + simm) & MASK
                yield
                cyc += 1
                if op == 0x18 or op == 0x1A:
                    if addr & 3:
                        raise UnalignedAccess(addr, MNEMONICS[op])
                    be = 0xF
                    shift = 0
                else:
                    shift = 8 * (3 - (addr & 3))
                    be = 1 << (3 - (addr & 3))
                if op < 0x1A:
                    rdata = None
                    if modes.data_dispatch and disp is not None:
                        rdata = disp.data(addr, 1, be, 0)
                    if rdata is not None:
                        yield
                        cyc += 1
                    else:
                        rdata, n = yield from bus_op(0, addr, 1, be, 0)
                        cyc += n
                        if self.mmio_log is not None and not disp.is_memory(addr):
                            self.mmio_log.append(rdata)
                    val = rdata if op == 0x18 else (rdata >> shift) & 0xFF
                    wreg = rd
                else:
                    wdata = r[rd] if op == 0x1A else (r[rd] & 0xFF) << shift
                    done = None
                    if modes.data_dispatch and disp is not None:
                        done = disp.data(addr, 0, be, wdata)
                    if done is not None:
                        yield
                        cyc += 1
                    else:
                        _, n = yield from bus_op(0, addr, 0, be, wdata)
                        cyc += n
            elif op < 0x28:
                a = r[ra]
                b = r[rd]
                if op == 0x20:
                    taken = a == b
                elif op == 0x21:
                    taken = a != b
                else:
                    sa = a - 0x100000000 if a & 0x80000000 else a
                    sb = b - 0x100000000 if b & 0x80000000 else b
                    taken = sa < sb if op == 0x22 else sa >= sb
                if taken:
                    npc = (pc + (simm << 2)) & MASK
                yield
                cyc += 1
            elif op == 0x28:
                wreg = rd
                val = npc
                npc = (pc + (simm << 2)) & MASK
                yield
                cyc += 1
            elif op == 0x29:
                tgt = r[ra]
                if tgt & 3:
                    raise UnalignedAccess(tgt, "jump target")
                wreg = rd
                val = npc
                npc = tgt
                yield
                cyc += 1
            elif op == 0x2C:
                tgt = r[LINK_IRQ]
                if tgt & 3:
                    raise UnalignedAccess(tgt, "return address")
                npc = tgt
                self.ie = 1
                yield
                cyc += 1
            elif op == 0x2D:
                self.ie = r[ra] & 1
                yield
                cyc += 1
            elif op == 0x2E:
                wreg = rd
                val = self.ie
                yield
                cyc += 1
            elif op == 0x3F:
                # the execute cycle is the current one; the kernel stops
                # after it completes
                stats.cycles += cyc + 1
                stats.instructions_retired += 1
                ops[op] += 1
                if self.log is not None:
                    self.log.append((pc, word, -1, 0))
                if self.profile is not None:
                    self.profile[pc] += 1
                self.halted = True
                return
            else:
                raise IllegalInstruction(word, pc)

            # retire
            if wreg > 0:
                r[wreg] = val
            else:
                wreg = -1
            self.pc = npc
            stats.cycles += cyc
            stats.instructions_retired += 1
            ops[op] += 1
            if self.log is not None:
                self.log.append((pc, word, wreg, val if wreg > 0 else 0))
            if self.profile is not None:
                self.profile[pc] += 1
