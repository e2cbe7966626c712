import pytest
from hypothesis import given, settings, strategies as st

from fidelsim.fidelity import (Builtin, FidelityConfig, InterceptRegistry,
                               MemoryDispatcher, MemoryFault, ProcessStyle,
                               check_runtime_delta, parse_assignments)
from fidelsim.harness import workloads
from fidelsim.harness.asm import assemble
from fidelsim.kernel import ConfigurationError, SignalMode
from fidelsim.platform import Platform
from fidelsim.soc.peripherals import Flash, Ram

NATIVE = FidelityConfig(signal_mode="native")


def test_data_dispatch_implies_ifetch():
    c = FidelityConfig(data_dispatch=True)
    assert c.ifetch_dispatch and not c.cycle_accurate
    off = c.replace(ifetch_dispatch=False)
    assert not off.data_dispatch and off.cycle_accurate


def test_config_validation():
    with pytest.raises(ConfigurationError):
        FidelityConfig(uart_tx_sleep=0)
    with pytest.raises(ConfigurationError):
        NATIVE.replace(turbo=True)
    assert FidelityConfig("RESOLVED4").signal_mode is SignalMode.RESOLVED4
    c = FidelityConfig("native", "methods_where_possible", True, True,
                       data_dispatch=True, interception=True)
    assert c.label == "native+methods+cached+fused+data+interception"
    assert c.to_dict()["gated_set"] == ["emac", "flash", "gpio"]


def test_parse_assignments():
    d = parse_assignments(["signal_mode=resolved4", "ifetch_dispatch=on",
                           "uart_tx_sleep=0x40", "gated_set=gpio,emac",
                           "process_style=threads_only"])
    assert d == {"signal_mode": SignalMode.RESOLVED4, "ifetch_dispatch": True,
                 "uart_tx_sleep": 64, "gated_set": frozenset({"gpio", "emac"}),
                 "process_style": ProcessStyle.THREADS_ONLY}
    for bad in (["nope=1"], ["ifetch_dispatch=maybe"], ["ifetch_dispatch"]):
        with pytest.raises(ConfigurationError):
            parse_assignments(bad)


def test_construction_axes_rejected_at_runtime():
    with pytest.raises(ConfigurationError, match="construction"):
        check_runtime_delta({"signal_mode": SignalMode.NATIVE})
    p = Platform(NATIVE)
    with pytest.raises(ConfigurationError):
        p.set_fidelity(port_read_caching=True)
    with pytest.raises(ConfigurationError):
        p.schedule_toggle(10, uart_tx_sleep=4)
    assert p.set_fidelity(data_dispatch=True).ifetch_dispatch


def test_data_dispatch_detaches_ram_process():
    p = Platform(NATIVE.replace(data_dispatch=True))
    p.load(workloads.image("boot_lite"))
    s = p.run(max_cycles=200_000)
    assert s.halted and not s.fault
    assert p.process_dispatches()["ram"] == 0
    assert not p.memory.attached
    assert p.memory.data_accesses > 0


def test_gated_peripherals_never_dispatch():
    p = Platform(NATIVE.replace(peripheral_gating=True))
    p.load(workloads.image("boot_lite"))
    p.run(max_cycles=200_000)
    d = p.process_dispatches()
    assert d["flash"] == d["gpio"] == d["emac"] == 0
    assert d["uart"] > 0 and d["ram"] > 0


def test_ungating_resumes_the_slave():
    p = Platform(NATIVE.replace(peripheral_gating=True))
    p.load(workloads.image("aluloop"))
    p.schedule_toggle(1000, peripheral_gating=False)
    p.run(max_cycles=2000)
    assert p.process_dispatches()["emac"] > 0


def _call_program(body: str) -> str:
    return (body + "\n        HALT\n"
            + f"        .org {workloads.LIB_BASE:#x}\n"
            + workloads.library_source())


def _run_both(src, max_cycles=400_000):
    out = []
    for inter in (False, True):
        p = Platform(NATIVE.replace(ifetch_dispatch=True, interception=inter))
        p.load(assemble(src))
        out.append((p, p.run(max_cycles=max_cycles)))
    return out


def test_memset_intercept_example():
    src = _call_program("""
        LI   r5, 0x1001
        LI   r6, 0x1AB
        ADDI r7, r0, 11
        CALL memset
    """)
    (pa, a), (pn, n) = _run_both(src)
    assert a.halted and not a.fault
    assert pa.ram.mem[0x1000:0x100E] == bytes([0] + [0xAB] * 11 + [0, 0])
    assert a.same_architecture(n)
    assert n.regs[3] == 0x1001 and n.regs[5] == 0x100C and n.regs[6] == 0xAB
    assert pn.cpu.stats.intercepted_calls == 1
    assert pa.cpu.stats.intercepted_calls == 0
    assert n.cycles < a.cycles


def test_zero_length_call_still_intercepted():
    src = _call_program("""
        LI   r5, 0x2000
        LI   r6, 0x2100
        ADDI r7, r0, 0
        CALL memcpy
    """)
    (_, a), (pn, n) = _run_both(src)
    assert a.same_architecture(n)
    assert pn.cpu.stats.intercepted_calls == 1


def test_memcpy_overlap_faults():
    src = _call_program("""
        LI   r5, 0x2004
        LI   r6, 0x2000
        ADDI r7, r0, 16
        CALL memcpy
    """)
    p = Platform(NATIVE.replace(interception=True))
    p.load(assemble(src))
    s = p.run(max_cycles=10_000)
    assert s.halted and "overlap" in s.fault


def test_intercept_outside_ram_faults():
    src = _call_program("""
        LUI  r5, 0x7000
        ADDI r6, r0, 0
        ADDI r7, r0, 4
        CALL memset
    """)
    p = Platform(NATIVE.replace(interception=True))
    p.load(assemble(src))
    s = p.run(max_cycles=10_000)
    assert s.halted and "outside RAM" in s.fault


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(["memset", "memcpy"]), st.integers(0, 0x200),
       st.integers(0, 0x200), st.integers(0, 96), st.integers(0, 2**32 - 1))
def test_interception_matches_assembly(fn, dst_off, src_off, n, arg):
    dst = 0x10000 + dst_off
    src = 0x20000 + src_off
    words = "\n".join(f"        .word {(arg * (i + 7)) & 0xFFFFFFFF:#x}"
                      for i in range(200))
    setup = f"        .org 0x20000\n{words}\n"
    body = f"""
        LI   r5, {dst:#x}
        LI   r6, {src if fn == 'memcpy' else arg:#x}
        LI   r7, {n}
        CALL {fn}
        HALT
"""
    (_, a), (pn, b) = _run_both(body + setup + f"        .org {workloads.LIB_BASE:#x}\n"
                                + workloads.library_source())
    assert a.halted and not a.fault
    assert a.same_architecture(b)
    assert pn.cpu.stats.intercepted_calls == 1


def test_registry_validation():
    reg = InterceptRegistry()
    reg.add(0x100, "memset")
    with pytest.raises(ConfigurationError):
        reg.add(0x100, Builtin.MEMCPY)
    with pytest.raises(ConfigurationError):
        reg.add(0x102, Builtin.MEMCPY)
    assert reg.add_symbols({"memcpy": 0x200, "puts": 0x300}) == 1
    assert len(reg) == 2


def test_memory_dispatcher_bounds():
    m = MemoryDispatcher(Ram(0, 0x100), Flash(0x1000, 0x100))
    m.flash.load(0x1000, b"\x12\x34\x56\x78")
    assert m.fetch(0x1000) == 0x12345678
    assert m.fetch(0x2000) is None
    assert m.data(0x1000, 1, 0xF, 0) is None
    assert m.read_block(0x1000, 2) == b"\x12\x34"
    with pytest.raises(MemoryFault):
        m.write_block(0x1000, b"x")
    with pytest.raises(MemoryFault):
        m.fill(0xFE, 0, 4)
    with pytest.raises(MemoryFault):
        m.read_block(0xFC, 8)


def test_toggles_preserve_architecture():
    img = workloads.image("boot_lite")
    base = Platform(NATIVE)
    base.load(img)
    ref = base.run(max_cycles=1_000_000)
    p = Platform(NATIVE)
    p.load(img)
    p.schedule_toggle(10_000, data_dispatch=True, interception=True,
                      peripheral_gating=True)
    p.schedule_toggle(30_000, data_dispatch=False, ifetch_dispatch=False,
                      interception=False, peripheral_gating=False)
    s = p.run(max_cycles=1_000_000)
    assert s.same_architecture(ref)
    assert len(p.applied) == 2
    assert all(c >= want for (c, _), want in zip(p.applied, (10_000, 30_000)))
    assert p.config.cycle_accurate


def test_toggle_waits_for_idle_bus():
    p = Platform(NATIVE)
    p.load(workloads.image("aluloop"))
    for c in range(101, 140, 7):
        p.schedule_toggle(c, ifetch_dispatch=c % 2 == 1)
    seen = []
    p.kernel.on_cycle_end(lambda cyc: seen.append((cyc, p.bus.idle)))
    p.run(max_cycles=200)
    idle = dict(seen)
    for cyc, _ in p.applied:
        # applied at the start of ``cyc``: the previous cycle ended idle
        assert idle[cyc - 1]
