"""Acceptance criteria, one test each. The terminal summary prints a
PASS/FAIL line per criterion with the measured values."""

import itertools
import random
import subprocess
import sys
import time
from pathlib import Path

import pytest

from fidelsim.cli import main as cli
from fidelsim.cpu.reference import ReferenceCpu
from fidelsim.fidelity import (Builtin, FidelityConfig, MemoryDispatcher,
                               RUNTIME_KEYS, run_builtin)
from fidelsim.harness import workloads
from fidelsim.harness.accuracy import check_accuracy, construction_grid
from fidelsim.harness.asm import assemble
from fidelsim.harness.bench import ladder_table, speed_ladder
from fidelsim.harness.session import run_image
from fidelsim.harness.trace import PinTrace
from fidelsim.kernel import SignalMode
from fidelsim.logic import (L0, L1, X, Z, Logic4, resolve, vec_to_word,
                            word_to_vec)
from fidelsim.platform import Platform
from fidelsim.soc.peripherals import Flash, Ram

from support import BusFuzzBench, check_fuzz, parse_vcd, random_program

TESTS = Path(__file__).parent
DATA = TESTS / "data"
ACCURATE = FidelityConfig()                       # resolved4, no shortcuts
NATIVE = FidelityConfig(signal_mode="native")


def criterion(n, title):
    return pytest.mark.criterion(n, title)


# ---------------------------------------------------------------------------

@criterion(1, "kernel semantics suite < 10 s")
def test_c1_kernel_suite(acceptance_note):
    t0 = time.perf_counter()
    r = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p",
                        "no:cacheprovider", str(TESTS / "test_kernel.py")],
                       capture_output=True, text=True, cwd=TESTS.parent)
    wall = time.perf_counter() - t0
    tail = r.stdout.strip().splitlines()[-1] if r.stdout.strip() else r.stderr
    acceptance_note(f"{tail}; wall {wall:.2f} s (limit 10 s)")
    assert r.returncode == 0, r.stdout[-3000:]
    assert wall < 10.0


@criterion(2, "logic monoid axioms and 8-bit round trip < 1 s")
def test_c2_logic_monoid(acceptance_note):
    t0 = time.perf_counter()
    vals = tuple(Logic4)
    checked = 0
    for a in vals:
        assert resolve(Z, a) == a and resolve(a, Z) == a      # identity
        assert resolve(X, a) == X and resolve(a, X) == X      # absorbing
        assert resolve(a, a) == a                             # idempotent
        checked += 1
    for a, b in itertools.product(vals, vals):
        assert resolve(a, b) == resolve(b, a)                 # commutative
        checked += 1
    for a, b, c in itertools.product(vals, vals, vals):
        assert resolve(resolve(a, b), c) == resolve(a, resolve(b, c))
        checked += 1
    assert resolve(L0, L1) == X
    for w in range(256):
        v = word_to_vec(w, 8)
        assert vec_to_word(v) == w
        assert str(v) == format(w, "08b")
    wall = time.perf_counter() - t0
    acceptance_note(f"{checked} axiom cases (4+16+64) and 256 words in "
                    f"{wall * 1e3:.1f} ms (limit 1 s)")
    assert checked == 4 + 16 + 64
    assert wall < 1.0


@criterion(3, "16 construction configs give identical pin traces, >= 1e6 "
              "cycles, < 5 min")
def test_c3_cycle_accuracy(acceptance_note):
    grid = construction_grid()
    res = check_accuracy(grid)
    runs = [res.reference] + res.others
    acceptance_note(
        f"{len(runs)} configs, {res.min_cycles} cycles each "
        f"({', '.join(f'{r.name} {r.cycles}' for r in res.reference.runs)}); "
        f"mismatches {len(res.mismatches)}; wall {res.wall:.1f} s "
        "(limit 300 s)")
    for m in res.mismatches:
        acceptance_note(f"  {m.config.label} {m.workload}: {m.divergence or m.note}")
    assert len(runs) == 16
    assert res.equal
    assert res.min_cycles >= 1_000_000
    assert res.wall < 300.0


def _runtime_combos():
    out = []
    for i, d, g, x in itertools.product((False, True), repeat=4):
        if d and not i:
            continue
        out.append(dict(ifetch_dispatch=i, data_dispatch=d,
                        peripheral_gating=g, interception=x))
    return out


OFF = {k: False for k in RUNTIME_KEYS}


@criterion(4, "runtime modes and toggles leave RAM, registers and UART "
              "identical")
def test_c4_functional_equivalence(acceptance_note):
    combos = [c for c in _runtime_combos() if any(c.values())]
    assert len(combos) == 11
    runs = 0
    for name in workloads.INTERRUPT_FREE:
        img = workloads.image(name)
        ref_p = Platform(ACCURATE)
        ref_p.load(img)
        ref = ref_p.run(max_cycles=5_000_000)
        assert ref.halted and not ref.fault
        for combo in [OFF] + combos:
            schedules = [("static", NATIVE.replace(**combo), [])]
            if combo is not OFF:
                schedules += [
                    ("on@1e4,off@1e5", NATIVE,
                     [(10_000, combo), (100_000, OFF)]),
                    ("off@1e4,on@1e5", NATIVE.replace(**combo),
                     [(10_000, OFF), (100_000, combo)]),
                ]
            for label, cfg, toggles in schedules:
                p = Platform(cfg)
                p.load(img)
                for cyc, delta in toggles:
                    p.schedule_toggle(cyc, **delta)
                s = p.run(max_cycles=5_000_000)
                runs += 1
                where = f"{name} {label} {combo}"
                assert s.halted and not s.fault, where
                assert s.ram_digest == ref.ram_digest, where
                assert s.regs == ref.regs, where
                assert s.uart_out == ref.uart_out, where
                assert s.same_architecture(ref), where
    acceptance_note(f"{runs} runs over {len(workloads.INTERRUPT_FREE)} "
                    "workloads x 12 mode sets (static, on@1e4/off@1e5, "
                    "off@1e4/on@1e5): 0 differences")


def _cpi(name, cfg):
    p = Platform(cfg)
    p.load(workloads.image(name))
    s = p.run(max_cycles=5_000_000)
    assert s.halted and not s.fault
    return s.cycles / s.instructions


@criterion(5, "CPI 4.0 / 2.0 on aluloop; boot_lite ifetch gain >= 25%")
def test_c5_cpi(acceptance_note):
    ifetch = NATIVE.replace(ifetch_dispatch=True)
    alu_off, alu_on = _cpi("aluloop", NATIVE), _cpi("aluloop", ifetch)
    boot_off, boot_on = _cpi("boot_lite", NATIVE), _cpi("boot_lite", ifetch)
    gain = (boot_off - boot_on) / boot_off
    acceptance_note(f"aluloop CPI {alu_off} -> {alu_on}; boot_lite CPI "
                    f"{boot_off:.4f} -> {boot_on:.4f} ({gain:.1%} better; "
                    "published ~35%)")
    assert alu_off == 4.0 and alu_on == 2.0
    assert gain >= 0.25


def _routine_ranges(img):
    s = img.symbols
    return [(s["memset"], s["memset_end"]), (s["memcpy"], s["memcpy_end"])]


LIB = f"        .org {workloads.LIB_BASE:#x}\n" + workloads.library_source()
CASE_RAM = 0x30000
CASE_LO, CASE_HI = 0x10000, CASE_RAM     # above the library code


def _case(rnd):
    fn = rnd.choice((Builtin.MEMSET, Builtin.MEMCPY))
    r = rnd.random()
    if r < 0.25:
        n = rnd.randint(0, 16)
    elif r < 0.75:
        n = int(2 ** rnd.uniform(0, 12))
    else:
        n = rnd.randint(0, 4096)
    while True:
        dst = rnd.randrange(CASE_LO, CASE_HI - n + 1)
        src = rnd.randrange(CASE_LO, CASE_HI - n + 1)
        if fn is Builtin.MEMSET or dst + n <= src or src + n <= dst:
            break
    c = rnd.getrandbits(32)
    return fn, dst, src, c, n


class _Core:
    def __init__(self, r):
        self.r = list(r)
        self.pc = 0


def _differential_case(rnd, image_cache):
    fn, dst, src, c, n = _case(rnd)
    key = fn
    if key not in image_cache:
        image_cache[key] = assemble(f"CALL {fn.value}\nHALT\n" + LIB)
    img = image_cache[key]
    fill = rnd.randbytes(CASE_RAM - CASE_LO)
    regs = [0] + [rnd.getrandbits(32) for _ in range(31)]
    regs[5], regs[6], regs[7] = dst, (src if fn is Builtin.MEMCPY else c), n

    ref = ReferenceCpu.from_image(img, ram_size=CASE_RAM)
    ram = ref.regions[0][1]
    ram[CASE_LO:] = fill
    ref.s.r = list(regs)
    st = ref.run(200_000)
    assert st.halted

    native_ram = Ram(0, CASE_RAM)
    native_ram.load(0, bytes(ref.regions[0][1][:CASE_LO]))
    native_ram.mem[CASE_LO:] = fill
    core = _Core(regs)
    core.r[15] = 4                       # the CALL at address 0 links here
    run_builtin(fn, core, MemoryDispatcher(native_ram, Flash(0x2000_0000, 16)))
    assert core.pc == 4
    where = f"{fn.value} dst={dst:#x} src={src:#x} c={c:#x} n={n}"
    assert core.r == st.r, where
    assert bytes(native_ram.mem) == bytes(ram), where
    return n


@criterion(6, "boot_lite >= 50% in memset/memcpy; interception cuts "
              ">= 45% with identical memory/UART; 1000-case differential")
def test_c6_interception(acceptance_note):
    img = workloads.image("boot_lite")
    off = Platform(NATIVE)
    off.load(img)
    off.cpu.enable_recording(profile=True)
    a = off.run(max_cycles=2_000_000)
    inside = sum(cnt for pc, cnt in off.cpu.profile.items()
                 if any(lo <= pc < hi for lo, hi in _routine_ranges(img)))
    frac = inside / a.instructions

    on = Platform(NATIVE.replace(interception=True))
    on.load(img)
    b = on.run(max_cycles=2_000_000)
    cut = 1 - b.instructions / a.instructions

    rnd = random.Random(20260601)
    cache = {}
    sizes = [_differential_case(rnd, cache) for _ in range(1000)]

    acceptance_note(
        f"inside memset/memcpy {inside}/{a.instructions} = {frac:.1%} "
        f"(published 52%); intercepted calls {on.cpu.stats.intercepted_calls}; "
        f"retired {a.instructions} -> {b.instructions} ({cut:.1%} fewer); "
        f"differential 1000 cases, n max {max(sizes)}, "
        f"{sum(s > 1024 for s in sizes)} with n > 1024")
    assert a.halted and b.halted and not a.fault and not b.fault
    assert frac >= 0.50
    assert cut >= 0.45
    assert a.ram_digest == b.ram_digest and a.uart_out == b.uart_out
    assert a.same_architecture(b)


LADDER = ("resolved4", "native", "ifetch", "data_dispatch", "gating",
          "interception")


@criterion(7, "speed ladder on boot_lite (10 phases x 5 reps) increases; "
              "native >= 1.2 x resolved4")
def test_c7_speed_ladder(acceptance_note):
    reports = speed_ladder("boot_lite", phases=10, reps=5)
    by = {r.label: r for r in reports}
    acceptance_note(ladder_table(reports))
    eff = [by[n].effective_cps for n in LADDER]
    raw = [by[n].mean_cps for n in LADDER]
    ratio = by["native"].mean_cps / by["resolved4"].mean_cps
    acceptance_note(f"effective CPS chain: "
                    + " < ".join(f"{v:.0f}" for v in eff))
    acceptance_note(f"raw mean CPS chain: " + ", ".join(f"{v:.0f}" for v in raw)
                    + f"; native/resolved4 = {ratio:.2f} (published 2.32)")
    assert all(len(r.points) == 50 for r in reports)
    assert all(b > a for a, b in zip(eff, eff[1:])), eff
    assert ratio >= 1.2


@criterion(8, "bus fuzz, 1e5 transactions: 3+ws cycles, data priority, "
              "no X on shared lines")
def test_c8_bus_fuzz(acceptance_note):
    t0 = time.perf_counter()
    bench = BusFuzzBench(seed=8, mode=SignalMode.RESOLVED4)
    bench.run(100_000)
    wall = time.perf_counter() - t0
    errors = sum(t.error for t in bench.done)
    acceptance_note(f"{len(bench.done)} transactions in {bench.kernel.cycle} "
                    f"cycles ({wall:.1f} s); {bench.contended} contended "
                    f"grants; {errors} error acks; violations "
                    f"{len(bench.violations)}")
    assert len(bench.done) == 100_000
    assert bench.contended > 0 and errors > 0
    check_fuzz(bench)


ROTATION = (NATIVE, NATIVE.replace(ifetch_dispatch=True),
            NATIVE.replace(data_dispatch=True), ACCURATE)


@criterion(9, "ISS equals the reference interpreter on workloads and 1e5 "
              "random streams")
def test_c9_iss_differential(acceptance_note):
    for name in workloads.NAMES:
        stream = workloads.echo_stream() if name == "uart_echo" else None
        p = Platform(NATIVE, stream=stream)
        p.load(workloads.image(name))
        p.cpu.enable_recording()
        s = p.run(max_cycles=5_000_000)
        assert s.halted and not s.fault
        ref = ReferenceCpu.from_image(workloads.image(name),
                                      mmio_inputs=p.cpu.mmio_log,
                                      irq_at=p.cpu.irq_log)
        rs = ref.run(len(p.cpu.log))
        assert ref.log == p.cpu.log, name
        assert rs.halted and tuple(rs.r) == s.regs, name
        assert bytes(ref.regions[0][1]) == bytes(p.ram.mem), name
    streams = instructions = 0
    for seed in range(500):
        img = random_program(seed, streams=200)
        p = Platform(ROTATION[seed % len(ROTATION)])
        p.load(img)
        p.cpu.enable_recording()
        s = p.run(max_cycles=2_000_000)
        assert s.halted and not s.fault, seed
        ref = ReferenceCpu.from_image(img)
        rs = ref.run(len(p.cpu.log))
        assert rs.halted, seed
        assert ref.log == p.cpu.log, seed
        assert tuple(rs.r) == s.regs, seed
        assert bytes(ref.regions[0][1]) == bytes(p.ram.mem), seed
        streams += 200
        instructions += len(p.cpu.log)
    acceptance_note(f"{len(workloads.NAMES)} workloads and {streams} random "
                    f"streams ({instructions} retired instructions, 4 "
                    "configs in rotation): 0 mismatches")
    assert streams == 100_000


@criterion(10, "golden VCD, VCD grammar, fidelsim diff equal / first "
               "divergence")
def test_c10_vcd_and_diff(tmp_path, capsys, acceptance_note):
    # golden fixture, twice
    img = assemble((DATA / "uart_write.s").read_text())
    golden = (DATA / "uart_write.vcd").read_bytes()
    for i in range(2):
        out = tmp_path / f"g{i}.vcd"
        run_image(img, ACCURATE, max_cycles=100, vcd_path=out)
        assert out.read_bytes() == golden
    parse_vcd(golden.decode())

    # grammar on a full boot_lite waveform
    big = tmp_path / "boot.vcd"
    assert cli(["run", "workload:boot_lite", "--vcd", str(big)]) == 0
    v = parse_vcd(big.read_text())

    # construction-time pairs compare equal through the CLI
    pairs = [ACCURATE, NATIVE,
             NATIVE.replace(process_style="methods_where_possible",
                            port_read_caching=True, process_fusion=True),
             ACCURATE.replace(process_fusion=True, port_read_caching=True)]
    paths = []
    for i, cfg in enumerate(pairs):
        path = tmp_path / f"t{i}.trace"
        args = ["run", "workload:boot_lite", "--trace", str(path)]
        for k, val in cfg.to_dict().items():
            if k in ("signal_mode", "process_style", "port_read_caching",
                     "process_fusion"):
                args += ["--fidelity", f"{k}={val}"]
        assert cli(args) == 0
        paths.append(path)
    capsys.readouterr()
    for other in paths[1:]:
        assert cli(["diff", str(paths[0]), str(other)]) == 0
        assert capsys.readouterr().out.strip() == "equal"

    # seeded single-bit perturbations are reported where they were made
    base = PinTrace.load(paths[0])
    rnd = random.Random(10)
    for k in range(5):
        idx = rnd.randrange(len(base.records))
        while not isinstance(base.records[idx][3], int):
            idx = rnd.randrange(len(base.records))
        c, d, pin, val = base.records[idx]
        bit = rnd.randrange(base.widths[pin])
        recs = list(base.records)
        recs[idx] = (c, d, pin, val ^ (1 << bit))
        bad = tmp_path / f"bad{k}.trace"
        PinTrace(base.names, base.widths, base.initial, recs,
                 base.end_cycle).save(bad)
        assert cli(["diff", str(paths[0]), str(bad)]) == 1
        got = capsys.readouterr().out.strip()
        want = (f"diverge cycle={c} delta={d} signal={base.names[pin]} "
                f"a=h{val:x} b=h{val ^ (1 << bit):x}")
        assert got == want
    acceptance_note(f"golden VCD identical twice ({len(golden)} bytes); "
                    f"boot_lite VCD grammar ok ({len(v.times)} timestamps, "
                    f"{len(v.vars)} vars); {len(paths) - 1} config pairs "
                    "equal; 5 seeded bit flips located exactly")
