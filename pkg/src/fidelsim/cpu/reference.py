"""Pure functional MR32 interpreter with no notion of time.

Serves as the oracle for the bus-coupled core. It keeps a flat byte-addressed
memory for RAM and FLASH; every other address is memory-mapped I/O whose load
values are replayed from a list (``mmio_inputs``) and whose stores are
appended to ``mmio_writes``. Interrupts are injected at given retire counts
(``irq_at``), which is how a recorded run of the real core is replayed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .isa import IRQ_VECTOR, LINK_IRQ, IllegalInstruction, decode

M32 = (1 << 32) - 1


class ReferenceFault(Exception):
    pass


def _s32(v: int) -> int:
    return v - (1 << 32) if v >> 31 else v


@dataclass
class RefState:
    r: list = field(default_factory=lambda: [0] * 32)
    pc: int = 0
    ie: int = 0
    halted: bool = False
    retired: int = 0


class ReferenceCpu:
    """``regions`` is a list of ``(base, bytearray, writable)``."""

    def __init__(self, regions, entry: int = 0, mmio_inputs=(),
                 irq_at=()):
        self.regions = [(b, m, w) for b, m, w in regions]
        self.s = RefState(pc=entry)
        self.mmio_inputs = list(mmio_inputs)
        self._mmio_pos = 0
        self.mmio_writes: list[tuple[int, int, int]] = []
        self.irq_at = sorted(irq_at)
        self._irq_pos = 0
        self.log: list[tuple[int, int, int, int]] = []

    @classmethod
    def from_image(cls, image, ram_size: int = 4 << 20,
                   flash_base: int = 0x2000_0000, flash_size: int = 1 << 20,
                   **kw) -> "ReferenceCpu":
        ram = bytearray(ram_size)
        flash = bytearray(flash_size)
        for base, data in image.segments:
            if base + len(data) <= ram_size:
                ram[base:base + len(data)] = data
            elif flash_base <= base and base + len(data) <= flash_base + flash_size:
                o = base - flash_base
                flash[o:o + len(data)] = data
            else:
                raise ReferenceFault(f"segment at {base:#x} outside memory")
        return cls([(0, ram, True), (flash_base, flash, False)],
                   image.entry, **kw)

    # -- memory -----------------------------------------------------------

    def _region(self, addr: int, n: int):
        for base, mem, wr in self.regions:
            if base <= addr and addr + n <= base + len(mem):
                return mem, addr - base, wr
        return None

    def load(self, addr: int, n: int) -> int:
        reg = self._region(addr, n)
        if reg is None:
            if self._mmio_pos >= len(self.mmio_inputs):
                raise ReferenceFault(f"no replay value for I/O load at {addr:#x}")
            v = self.mmio_inputs[self._mmio_pos]
            self._mmio_pos += 1
            if n == 1:
                v = (v >> (8 * (3 - (addr & 3)))) & 0xFF
            return v
        mem, o, _ = reg
        return int.from_bytes(mem[o:o + n], "big")

    def store(self, addr: int, n: int, value: int) -> None:
        reg = self._region(addr, n)
        if reg is None:
            self.mmio_writes.append((addr, n, value))
            return
        mem, o, wr = reg
        if not wr:
            raise ReferenceFault(f"store to read-only memory at {addr:#x}")
        mem[o:o + n] = value.to_bytes(n, "big")

    def read_bytes(self, addr: int, n: int) -> bytes:
        mem, o, _ = self._region(addr, n)
        return bytes(mem[o:o + n])

    # -- execution --------------------------------------------------------

    def step(self) -> None:
        s = self.s
        if s.halted:
            raise ReferenceFault("step after HALT")
        if self._irq_pos < len(self.irq_at) and self.irq_at[self._irq_pos] == s.retired:
            self._irq_pos += 1
            s.r[LINK_IRQ] = s.pc
            s.ie = 0
            s.pc = IRQ_VECTOR
        pc = s.pc
        if pc & 3:
            raise ReferenceFault(f"unaligned pc {pc:#x}")
        word = self.load(pc, 4) if self._region(pc, 4) else None
        if word is None:
            raise ReferenceFault(f"fetch outside memory at {pc:#x}")
        try:
            ins = decode(word)
        except IllegalInstruction as e:
            raise ReferenceFault(str(e)) from None
        r = s.r
        op, rd, ra, rb = ins.opcode, ins.rd, ins.ra, ins.rb
        imm = ins.imm16
        simm = imm - 0x10000 if imm & 0x8000 else imm
        nxt = (pc + 4) & M32
        dest, val = None, 0
        x, y = r[ra], r[rb]
        if op <= 0x08:
            dest = rd
            if op == 0x00:
                val = x + y
            elif op == 0x01:
                val = x - y
            elif op == 0x02:
                val = x & y
            elif op == 0x03:
                val = x | y
            elif op == 0x04:
                val = x ^ y
            elif op == 0x05:
                val = x << (y % 32)
            elif op == 0x06:
                val = x >> (y % 32)
            elif op == 0x07:
                val = _s32(x) >> (y % 32)
            else:
                val = int(_s32(x) < _s32(y))
        elif op == 0x10:
            dest, val = rd, x + simm
        elif op == 0x12:
            dest, val = rd, x & imm
        elif op == 0x13:
            dest, val = rd, x | imm
        elif op == 0x14:
            dest, val = rd, x ^ imm
        elif op == 0x15:
            dest, val = rd, imm * 65536
        elif op in (0x18, 0x19, 0x1A, 0x1B):
            ea = (x + simm) & M32
            size = 4 if op in (0x18, 0x1A) else 1
            if size == 4 and ea % 4:
                raise ReferenceFault(f"unaligned word access at {ea:#x}")
            if op in (0x18, 0x19):
                dest, val = rd, self.load(ea, size)
            else:
                self.store(ea, size, r[rd] & (M32 if size == 4 else 0xFF))
        elif op in (0x20, 0x21, 0x22, 0x23):
            a, b = r[ra], r[rd]
            cond = {0x20: a == b, 0x21: a != b,
                    0x22: _s32(a) < _s32(b), 0x23: _s32(a) >= _s32(b)}[op]
            if cond:
                nxt = (pc + simm * 4) & M32
        elif op == 0x28:
            dest, val = rd, nxt
            nxt = (pc + simm * 4) & M32
        elif op == 0x29:
            dest, val = rd, nxt
            nxt = r[ra]
            if nxt % 4:
                raise ReferenceFault(f"unaligned jump target {nxt:#x}")
        elif op == 0x2C:
            nxt = r[LINK_IRQ]
            if nxt % 4:
                raise ReferenceFault(f"unaligned return address {nxt:#x}")
            s.ie = 1
        elif op == 0x2D:
            s.ie = r[ra] & 1
        elif op == 0x2E:
            dest, val = rd, s.ie
        elif op == 0x3F:
            s.halted = True
            s.retired += 1
            self.log.append((pc, word, -1, 0))
            return
        else:
            raise ReferenceFault(f"unhandled opcode {op:#x}")
        if dest:
            r[dest] = val & M32
            self.log.append((pc, word, dest, r[dest]))
        else:
            self.log.append((pc, word, -1, 0))
        s.pc = nxt
        s.retired += 1

    def run(self, max_steps: int = 10_000_000) -> RefState:
        while not self.s.halted and self.s.retired < max_steps:
            self.step()
        return self.s
