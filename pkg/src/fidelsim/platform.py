"""The complete simulated system: kernel, bus, peripherals and MR32 core.

Process registration order is fixed because dispatch order within a phase
follows process ids::

    cpu, arb_seq, timer_tick, intc_seq, gpio_sample, uart_rx, uart_tx,
    ram, flash, uart, timer, intc, gpio, emac (bus slaves),
    uart_irq, arb_comb, intc_comb

That is 17 processes. With process fusion, ``timer_tick``, ``intc_seq`` and
``gpio_sample`` become one thread (15 processes).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .cpu.iss import Cpu, RuntimeModes
from .fidelity import (RUNTIME_KEYS, FidelityConfig, InterceptRegistry,
                       MemoryDispatcher, ProcessStyle, check_runtime_delta)
from .kernel import CLOCK, Kernel, ProcessKind
from .soc.bus import W_DEVICE_BASE, Bus, BusSlave, PeripheralMap
from .soc.peripherals import EmacProxy, Flash, Gpio, Intc, Ram, Timer, Uart

RAM_BASE = 0x0000_0000
RAM_SIZE = 4 << 20
FLASH_BASE = 0x2000_0000
FLASH_SIZE = 1 << 20
UART_BASE = 0x8000_0000
TIMER_BASE = 0x8000_1000
INTC_BASE = 0x8000_2000
GPIO_BASE = 0x8000_3000
EMAC_BASE = 0x8000_4000
WINDOW = 0x1000

IRQ_LINE_NAMES = ("irq_timer", "irq_uart_rx", "irq_uart_tx", "irq_gpio",
                  "irq_emac")

# default pin set for traces and waveforms
TRACED_PINS = (
    "d_req", "d_addr", "d_rnw", "d_be", "d_wdata", "i_req", "i_addr",
    "d_gnt", "i_gnt", "opb_select", "opb_abus", "opb_rnw", "opb_be",
    "opb_dbus", "opb_rdbus", "opb_xferack", "opb_errack",
    "irq_out") + IRQ_LINE_NAMES


class LoadError(Exception):
    pass


def _thread(fn, sleep: int = 1):
    """Wrap a per-cycle body as a multicycle loop."""
    if sleep == 1:
        def body():
            while True:
                fn()
                yield
    else:
        def body():
            while True:
                fn()
                yield sleep
    body.__name__ = getattr(fn, "__name__", "thread")
    return body


@dataclass
class ArchState:
    """Architecturally visible end state of a run."""

    regs: tuple
    pc: int
    ie: int
    halted: bool
    fault: str | None
    ram_digest: str
    uart_out: bytes
    cycles: int = 0
    instructions: int = 0

    def same_architecture(self, other: "ArchState") -> bool:
        return (self.regs == other.regs and self.pc == other.pc
                and self.ie == other.ie and self.halted == other.halted
                and self.fault == other.fault
                and self.ram_digest == other.ram_digest
                and self.uart_out == other.uart_out)


@dataclass(order=True)
class _Toggle:
    cycle: int
    seq: int
    delta: dict = field(compare=False)


class Platform:
    def __init__(self, config: FidelityConfig | None = None, stream=None,
                 ram_wait_states: int = 0, ram_size: int = RAM_SIZE):
        config = config or FidelityConfig()
        self.construction = config
        self.config = config.replace(ifetch_dispatch=False, data_dispatch=False,
                                     peripheral_gating=False,
                                     interception=False)
        k = self.kernel = Kernel(config.signal_mode)

        self.ram = Ram(RAM_BASE, ram_size, ram_wait_states)
        self.flash = Flash(FLASH_BASE, FLASH_SIZE)
        self.uart = Uart(stream)
        self.timer = Timer()
        self.intc = Intc()
        self.gpio = Gpio()
        self.emac = EmacProxy()
        pmap = self.map = PeripheralMap()
        devices = (("ram", RAM_BASE, ram_size, self.ram),
                   ("flash", FLASH_BASE, FLASH_SIZE, self.flash),
                   ("uart", UART_BASE, WINDOW, self.uart),
                   ("timer", TIMER_BASE, WINDOW, self.timer),
                   ("intc", INTC_BASE, WINDOW, self.intc),
                   ("gpio", GPIO_BASE, WINDOW, self.gpio),
                   ("emac", EMAC_BASE, WINDOW, self.emac))
        for name, base, size, dev in devices:
            pmap.add(base, size, name, dev)

        bus = self.bus = Bus(k, pmap)
        s = k.signal
        lines = [s(n) for n in IRQ_LINE_NAMES]
        self.irq_lines = lines
        isr = s("intc_isr", 32)
        ier = s("intc_ier", 32)
        irq_out = s("irq_out")
        gpio_in = s("gpio_in", 32)
        gpio_out = s("gpio_out", 32)

        wid = {name: W_DEVICE_BASE + i for i, (name, *_ ) in enumerate(devices)}
        self.uart.rx_line, self.uart.tx_line = lines[1], lines[2]
        self.uart.wid = wid["uart"]
        self.timer.line_sig = lines[0]
        self.timer.wid = wid["timer"]
        self.gpio.line_sig = lines[3]
        self.gpio.in_sig = gpio_in
        self.gpio.out_sig = gpio_out
        self.gpio.wid = wid["gpio"]
        intc = self.intc
        intc.isr_sig, intc.ier_sig, intc.irq_out = isr, ier, irq_out
        intc.lines = tuple(lines)
        intc.wid = intc.seq_wid = wid["intc"]
        timer, gpio = self.timer, self.gpio
        intc.native_lines = (lambda: timer.line, lines[1].read,
                             lines[2].read, lambda: gpio.line, lines[4].read)

        self.memory = MemoryDispatcher(self.ram, self.flash)
        self.intercepts = InterceptRegistry(self.memory)
        self.modes = RuntimeModes()
        self.cpu = Cpu(bus, irq_out, self.memory, self.intercepts, self.modes)

        self.slaves = {name: BusSlave(bus, pmap[name], wid[name],
                                      cached=config.port_read_caching)
                       for name, *_ in devices}
        self.pids: dict[str, int] = {}
        self._register_processes(config)

        self._toggles: list[_Toggle] = []
        self._seq = 0
        self.applied: list[tuple[int, dict]] = []
        initial = {key: getattr(config, key) for key in RUNTIME_KEYS
                   if getattr(config, key)}
        if initial:
            self.set_fidelity(**initial)

    # -- construction -----------------------------------------------------

    def _register_processes(self, cfg: FidelityConfig) -> None:
        k = self.kernel
        threads = cfg.process_style is ProcessStyle.THREADS_ONLY
        pids = self.pids
        uart, timer, gpio, intc = self.uart, self.timer, self.gpio, self.intc

        def reg(name, fn, thread, sens=CLOCK):
            if thread:
                pids[name] = k.register_process(ProcessKind.MULTICYCLE, sens,
                                                _thread(fn), name=name)
            else:
                pids[name] = k.register_process(ProcessKind.SINGLE_SHOT, sens,
                                                fn, name=name)

        pids["cpu"] = k.register_process(ProcessKind.MULTICYCLE, CLOCK,
                                         self.cpu.process, name="cpu")
        pids["arb_seq"] = self.bus.register_seq()
        if cfg.process_fusion:
            # consumer first: the latch must see last cycle's line values
            def fused():
                intc.seq_step_native()
                timer.tick()
                gpio.sample()
            reg("timer_intc_gpio", fused, True)
            p = k.processes[pids["timer_intc_gpio"]]
            p.fused_children = [intc.seq_step_native, timer.tick, gpio.sample]
        else:
            reg("timer_tick", timer.tick, threads)
            reg("intc_seq", intc.seq_step, True)
            reg("gpio_sample", gpio.sample, threads)

        def uart_rx():
            uart.rx_step(k.cycle)
        reg("uart_rx", uart_rx, threads)
        pids["uart_tx"] = k.register_process(
            ProcessKind.MULTICYCLE, CLOCK,
            _thread(uart.tx_drain, cfg.uart_tx_sleep), name="uart_tx")
        for name, slave in self.slaves.items():
            pids[name] = slave.register(k, name)
        reg("uart_irq", uart.irq_step, False)
        pids["arb_comb"] = self.bus.register_comb()
        pids["intc_comb"] = k.register_process(
            ProcessKind.SINGLE_SHOT, (intc.isr_sig, intc.ier_sig),
            intc.comb_step, name="intc_comb")

    # -- images -----------------------------------------------------------

    def load(self, image) -> None:
        """Copy image segments into RAM/FLASH, set the entry pc and register
        exported memset/memcpy entry points for interception."""
        for base, data in image.segments:
            end = base + len(data)
            for store in (self.ram, self.flash):
                if store.base <= base and end <= store.base + store.size:
                    store.load(base, bytes(data))
                    break
            else:
                raise LoadError(f"segment {base:#x}..{end:#x} is outside "
                                "RAM and FLASH")
        self.cpu.reset(image.entry)
        self.intercepts.entries.clear()
        self.intercepts.add_symbols(image.symbols)

    # -- runtime fidelity -------------------------------------------------

    def set_fidelity(self, **delta) -> FidelityConfig:
        """Queue a change of runtime axes; it takes effect at the next cycle
        boundary with no bus transaction in flight. Returns the resulting
        configuration."""
        return self.schedule_toggle(self.kernel.cycle, **delta)

    def schedule_toggle(self, cycle: int, **delta) -> FidelityConfig:
        check_runtime_delta(delta)
        eff = self._effective_after_queue().replace(**delta)
        self._toggles.append(_Toggle(cycle, self._seq, dict(delta)))
        self._seq += 1
        self._toggles.sort()
        return eff

    def _effective_after_queue(self) -> FidelityConfig:
        cfg = self.config
        for t in self._toggles:
            cfg = cfg.replace(**t.delta)
        return cfg

    def _apply(self, delta: dict) -> None:
        old = self.config
        new = old.replace(**delta)
        k = self.kernel
        m = self.modes
        m.ifetch_dispatch = new.ifetch_dispatch
        m.data_dispatch = new.data_dispatch
        m.interception = new.interception
        direct = set()
        if new.data_dispatch:
            direct.add("ram")
        if new.peripheral_gating:
            direct |= set(new.gated_set)
        for name, slave in self.slaves.items():
            on = name in direct
            slave.entry.direct = on
            if on:
                k.suspend(slave.pid)
            else:
                k.resume(slave.pid)
        self.memory.attached = not new.data_dispatch
        self.config = new
        self.applied.append((k.cycle, dict(delta)))

    def _apply_due(self) -> bool:
        """Apply due toggles if the bus is idle; true if some stay blocked."""
        while self._toggles and self._toggles[0].cycle <= self.kernel.cycle:
            if not self.bus.idle:
                return True
            self._apply(self._toggles.pop(0).delta)
        return False

    # -- running ----------------------------------------------------------

    @property
    def halted(self) -> bool:
        return self.cpu.halted

    def advance(self, max_cycles: int | None = None) -> bool:
        """Simulate until HALT (or a fault) or until ``max_cycles`` total;
        returns whether the core has halted."""
        k = self.kernel
        cpu = self.cpu
        limit = max_cycles if max_cycles is not None else 1 << 62

        def halted():
            return cpu.halted

        while not cpu.halted and k.cycle < limit:
            blocked = self._apply_due()
            stop = limit
            if blocked:
                stop = min(stop, k.cycle + 1)
            elif self._toggles:
                stop = min(stop, max(self._toggles[0].cycle, k.cycle + 1))
            k.run(halt=halted, max_cycles=stop)
        return cpu.halted

    def run(self, max_cycles: int | None = None) -> ArchState:
        """Like :meth:`advance` but returns the end :class:`ArchState`."""
        self.advance(max_cycles)
        return self.state()

    def state(self) -> ArchState:
        cpu = self.cpu
        return ArchState(
            regs=tuple(cpu.r), pc=cpu.pc, ie=cpu.ie, halted=cpu.halted,
            fault=str(cpu.fault) if cpu.fault else None,
            ram_digest=hashlib.sha256(self.ram.mem).hexdigest(),
            uart_out=bytes(self.uart.accepted),
            cycles=self.kernel.cycle,
            instructions=cpu.stats.instructions_retired)

    def process_dispatches(self) -> dict[str, int]:
        return {p.name: p.dispatches for p in self.kernel.processes}

    def traced_signals(self, names=TRACED_PINS):
        return [self.kernel.find_signal(n) for n in names]


def build_platform(config: FidelityConfig | None = None, image=None,
                   **kw) -> Platform:
    p = Platform(config, **kw)
    if image is not None:
        p.load(image)
    return p
