"""Register-level models of the platform peripherals.

Every device exposes ``wait_states`` and ``access(offset, rnw, be, wdata)``,
which the bus slave (or, when gated, the arbiter) calls on the decode cycle of
a transaction. Words are big-endian: byte-enable bit ``i`` selects bits
``8i+7..8i`` of the bus word, which is byte ``3 - i`` of the addressed word.

Per-cycle behaviour (timer countdown, interrupt latching, GPIO sampling, UART
stream handling) lives in plain methods that the platform registers as
kernel processes.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import IntEnum, IntFlag

FIFO_DEPTH = 16


def lane_byte(be: int, wdata: int) -> int:
    """The byte carried on the lowest enabled lane."""
    for lane in range(4):
        if be >> lane & 1:
            return (wdata >> (8 * lane)) & 0xFF
    return wdata & 0xFF


class Ram:
    """Byte-addressable backing store; zero-initialised."""

    read_only = False

    def __init__(self, base: int = 0, size: int = 4 << 20,
                 wait_states: int = 0, name: str = "ram"):
        if not 0 <= wait_states <= 7:
            raise ValueError(f"wait_states must be 0..7, got {wait_states}")
        self.base = base
        self.size = size
        self.mem = bytearray(size)
        self.wait_states = wait_states
        self.name = name

    @property
    def extra_wait_states(self) -> int:
        return self.wait_states

    def __contains__(self, addr: int) -> bool:
        return self.base <= addr < self.base + self.size

    def access(self, offset: int, rnw: bool, be: int,
               wdata: int) -> tuple[int, bool]:
        w = offset & ~3
        mem = self.mem
        if rnw:
            return int.from_bytes(mem[w:w + 4], "big"), False
        if self.read_only:
            return 0, True
        if be == 0xF:
            mem[w:w + 4] = (wdata & 0xFFFFFFFF).to_bytes(4, "big")
        else:
            for lane in range(4):
                if be >> lane & 1:
                    mem[w + 3 - lane] = (wdata >> (8 * lane)) & 0xFF
        return 0, False

    # direct helpers used by the loader and the memory dispatcher
    def read_word(self, addr: int) -> int:
        o = addr - self.base
        return int.from_bytes(self.mem[o:o + 4], "big")

    def write_word(self, addr: int, value: int) -> None:
        o = addr - self.base
        self.mem[o:o + 4] = (value & 0xFFFFFFFF).to_bytes(4, "big")

    def read_byte(self, addr: int) -> int:
        return self.mem[addr - self.base]

    def write_byte(self, addr: int, value: int) -> None:
        self.mem[addr - self.base] = value & 0xFF

    def load(self, addr: int, data: bytes) -> None:
        o = addr - self.base
        if o < 0 or o + len(data) > self.size:
            raise ValueError(f"{self.name}: {len(data)} bytes at {addr:#x} "
                             "fall outside the store")
        self.mem[o:o + len(data)] = data


class Flash(Ram):
    """Read-only memory; bus writes answer with an error."""

    read_only = True

    def __init__(self, base: int = 0x2000_0000, size: int = 1 << 20,
                 wait_states: int = 0, name: str = "flash"):
        super().__init__(base, size, wait_states, name)


class UartStatus(IntFlag):
    RX_VALID = 1
    RX_FULL = 2
    TX_EMPTY = 4
    TX_FULL = 8
    IRQ_ENABLE = 16


class UartReg(IntEnum):
    RX_DATA = 0x0
    TX_DATA = 0x4
    STATUS = 0x8
    CONTROL = 0xC


class Uart:
    """UART with 16-deep RX/TX FIFOs and an external byte stream.

    The stream object needs ``poll(cycle) -> bytes`` for input and
    ``write(data: bytes)`` for output; ``None`` leaves the UART unconnected
    (output bytes are still collected in :attr:`output`).
    """

    wait_states = 0

    def __init__(self, stream=None):
        self.rx_fifo: deque[int] = deque()
        self.tx_fifo: deque[int] = deque()
        self.irq_enable = False
        self.tx_dropped = 0
        self.rx_dropped = 0
        self.stream = stream
        self.output = bytearray()
        self.accepted = bytearray()
        self.rx_line = None
        self.tx_line = None
        self._lines = (0, 0)
        self.wid = 0

    @property
    def status(self) -> UartStatus:
        s = UartStatus(0)
        n_rx = len(self.rx_fifo)
        n_tx = len(self.tx_fifo)
        if n_rx:
            s |= UartStatus.RX_VALID
        if n_rx >= FIFO_DEPTH:
            s |= UartStatus.RX_FULL
        if not n_tx:
            s |= UartStatus.TX_EMPTY
        if n_tx >= FIFO_DEPTH:
            s |= UartStatus.TX_FULL
        if self.irq_enable:
            s |= UartStatus.IRQ_ENABLE
        return s

    def access(self, offset: int, rnw: bool, be: int,
               wdata: int) -> tuple[int, bool]:
        reg = offset & 0xFFC
        if rnw:
            if reg == UartReg.RX_DATA:
                return (self.rx_fifo.popleft() if self.rx_fifo else 0), False
            if reg == UartReg.STATUS:
                return int(self.status), False
            if reg == UartReg.CONTROL:
                return 0x10 if self.irq_enable else 0, False
            return 0, False
        if reg == UartReg.TX_DATA:
            self.push_tx(lane_byte(be, wdata))
        elif reg == UartReg.CONTROL:
            if wdata & 1:
                self.tx_fifo.clear()
            if wdata & 2:
                self.rx_fifo.clear()
            self.irq_enable = bool(wdata & 0x10)
        return 0, False

    def push_tx(self, byte: int) -> bool:
        if len(self.tx_fifo) >= FIFO_DEPTH:
            self.tx_dropped += 1
            return False
        self.tx_fifo.append(byte & 0xFF)
        self.accepted.append(byte & 0xFF)
        return True

    def push_rx(self, byte: int) -> bool:
        if len(self.rx_fifo) >= FIFO_DEPTH:
            self.rx_dropped += 1
            return False
        self.rx_fifo.append(byte & 0xFF)
        return True

    # -- per-cycle behaviour ----------------------------------------------

    def rx_step(self, cycle: int) -> None:
        """Move bytes due at ``cycle`` from the external stream into RX."""
        if self.stream is not None:
            data = self.stream.poll(cycle)
            for b in data:
                self.push_rx(b)

    def tx_drain(self) -> None:
        """Forward one byte from TX to the external stream."""
        if self.tx_fifo:
            b = self.tx_fifo.popleft()
            self.output.append(b)
            if self.stream is not None:
                self.stream.write(bytes((b,)))

    def irq_step(self) -> None:
        en = self.irq_enable
        lines = (1 if en and self.rx_fifo else 0,
                 1 if en and not self.tx_fifo else 0)
        if lines != self._lines:
            self._lines = lines
            self.rx_line.write(lines[0], self.wid)
            self.tx_line.write(lines[1], self.wid)


class TimerReg(IntEnum):
    LOAD = 0x0
    COUNTER = 0x4
    CONTROL = 0x8
    STATUS = 0xC


class TimerCtl(IntFlag):
    ENABLE = 1
    AUTO_RELOAD = 2
    IRQ_ENABLE = 4


class Timer:
    """Down-counter raising interrupt line 0 when it reaches zero.

    Writing LOAD also sets the counter. A one-shot timer (no auto-reload)
    disables itself on expiry. STATUS bit 0 is the pending flag, cleared by
    writing 1.
    """

    wait_states = 0

    def __init__(self):
        self.load = 0
        self.counter = 0
        self.control = 0  # TimerCtl bits, kept as a plain int
        self.pending = False
        self.line_sig = None
        self.line = 0
        self.wid = 0

    def _update_line(self) -> None:
        v = 1 if self.pending and self.control & 4 else 0
        self.line = v
        self.line_sig.write(v, self.wid)

    def tick(self) -> None:
        if self.control & 1:
            self.counter = (self.counter - 1) & 0xFFFFFFFF
            if self.counter == 0:
                self.pending = True
                if self.control & 2:
                    self.counter = self.load
                else:
                    self.control &= ~1
                self._update_line()

    def access(self, offset: int, rnw: bool, be: int,
               wdata: int) -> tuple[int, bool]:
        reg = offset & 0xFFC
        if rnw:
            if reg == TimerReg.LOAD:
                return self.load, False
            if reg == TimerReg.COUNTER:
                return self.counter, False
            if reg == TimerReg.CONTROL:
                return self.control, False
            if reg == TimerReg.STATUS:
                return int(self.pending), False
            return 0, False
        if reg == TimerReg.LOAD:
            self.load = self.counter = wdata & 0xFFFFFFFF
        elif reg == TimerReg.CONTROL:
            self.control = wdata & 7
            self._update_line()
        elif reg == TimerReg.STATUS:
            if wdata & 1:
                self.pending = False
                self._update_line()
        return 0, False


class IntcReg(IntEnum):
    ISR = 0x0
    IPR = 0x4
    IER = 0x8
    IAR = 0xC


NUM_IRQ_LINES = 5
IRQ_TIMER, IRQ_UART_RX, IRQ_UART_TX, IRQ_GPIO, IRQ_EMAC = range(5)


@dataclass
class IntcState:
    isr: int
    ier: int
    irq_out: bool


class Intc:
    """Interrupt controller.

    ``isr`` latches the five level-sensitive input lines every cycle; writing
    1s to IAR clears latched bits (a line still asserted re-latches on the
    following cycle). ``irq_out`` is combinational: ``(isr & ier) != 0``.
    """

    wait_states = 0

    def __init__(self):
        self.isr_sig = None
        self.ier_sig = None
        self.irq_out = None
        self.lines = ()
        # fast path for process fusion: callables returning the line value
        # without a port read
        self.native_lines = None
        self.iar_pending = 0
        self.wid = 0
        self.seq_wid = 0

    def seq_step(self) -> None:
        lines = 0
        for i, s in enumerate(self.lines):
            if s.read():
                lines |= 1 << i
        self._latch(lines)

    def seq_step_native(self) -> None:
        lines = 0
        for i, f in enumerate(self.native_lines):
            if f():
                lines |= 1 << i
        self._latch(lines)

    def _latch(self, lines: int) -> None:
        isr = self.isr_sig.read()
        new = (isr & ~self.iar_pending) | lines
        if new != isr:
            self.isr_sig.write(new, self.seq_wid)
        self.iar_pending = 0

    def comb_step(self) -> None:
        self.irq_out.write(1 if self.isr_sig.read() & self.ier_sig.read()
                           else 0, self.wid)

    def access(self, offset: int, rnw: bool, be: int,
               wdata: int) -> tuple[int, bool]:
        reg = offset & 0xFFC
        if rnw:
            if reg == IntcReg.ISR:
                return self.isr_sig.read(), False
            if reg == IntcReg.IPR:
                return self.isr_sig.read() & self.ier_sig.read(), False
            if reg == IntcReg.IER:
                return self.ier_sig.read(), False
            return 0, False
        if reg == IntcReg.IER:
            self.ier_sig.write(wdata & 0xFFFFFFFF, self.wid)
        elif reg == IntcReg.IAR:
            self.iar_pending |= wdata & 0xFFFFFFFF
        return 0, False

    def state(self) -> IntcState:
        isr = self.isr_sig.peek()
        ier = self.ier_sig.peek()
        return IntcState(isr, ier, bool(self.irq_out.peek()))


class GpioReg(IntEnum):
    DATA_OUT = 0x0
    DATA_IN = 0x4
    IRQ_EN = 0x8
    IRQ_STATUS = 0xC


class Gpio:
    """32 inputs sampled every cycle and 32 outputs; any input change latches
    IRQ_STATUS, which raises line 3 while IRQ_EN is set."""

    wait_states = 0

    def __init__(self):
        self.data_out = 0
        self.data_in = 0
        self.irq_en = 0
        self.irq_status = 0
        self.in_sig = None
        self.out_sig = None
        self.line_sig = None
        self.line = 0
        self.wid = 0

    def _update_line(self) -> None:
        v = 1 if self.irq_en and self.irq_status else 0
        self.line = v
        self.line_sig.write(v, self.wid)

    def sample(self) -> None:
        v = self.in_sig.read()
        if v != self.data_in:
            self.data_in = v
            self.irq_status = 1
            self._update_line()

    def access(self, offset: int, rnw: bool, be: int,
               wdata: int) -> tuple[int, bool]:
        reg = offset & 0xFFC
        if rnw:
            if reg == GpioReg.DATA_OUT:
                return self.data_out, False
            if reg == GpioReg.DATA_IN:
                return self.data_in, False
            if reg == GpioReg.IRQ_EN:
                return self.irq_en, False
            if reg == GpioReg.IRQ_STATUS:
                return self.irq_status, False
            return 0, False
        if reg == GpioReg.DATA_OUT:
            self.data_out = wdata & 0xFFFFFFFF
            self.out_sig.write(self.data_out, self.wid)
        elif reg == GpioReg.IRQ_EN:
            self.irq_en = wdata & 1
            self._update_line()
        elif reg == GpioReg.IRQ_STATUS:
            if wdata & 1:
                self.irq_status = 0
                self._update_line()
        return 0, False


class EmacProxy:
    """Ethernet MAC stand-in: 32 plain read/write registers, nothing else."""

    wait_states = 0
    NUM_REGS = 32

    def __init__(self):
        self.regs = [0] * self.NUM_REGS

    def access(self, offset: int, rnw: bool, be: int,
               wdata: int) -> tuple[int, bool]:
        idx = (offset & 0xFFF) >> 2
        if idx >= self.NUM_REGS:
            return 0, False
        if rnw:
            return self.regs[idx], False
        old = self.regs[idx]
        mask = 0
        for lane in range(4):
            if be >> lane & 1:
                mask |= 0xFF << (8 * lane)
        self.regs[idx] = (old & ~mask) | (wdata & mask)
        return 0, False
