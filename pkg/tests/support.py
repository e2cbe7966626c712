"""Shared builders for the test suite: random netlists, a bus fuzz bench and
random MR32 programs and a VCD grammar checker."""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from functools import partial

from fidelsim.cpu.isa import OPCODES, WORD_HALT, Instruction, encode
from fidelsim.harness.image import Image
from fidelsim.kernel import CLOCK, Kernel, ProcessKind, SignalMode
from fidelsim.soc.bus import (W_DATA_MASTER, W_DEVICE_BASE, W_INSTR_MASTER,
                              Bus, BusSlave, Master, PeripheralMap)
from fidelsim.soc.peripherals import EmacProxy, Ram

# ---------------------------------------------------------------------------
# random acyclic netlists


@dataclass
class Netlist:
    kernel: Kernel
    inputs: list
    depth: int
    # read-visibility violations seen by the instrumented processes
    violations: list = field(default_factory=list)
    committed: dict = field(default_factory=dict)


def random_netlist(seed: int, n_inputs: int = 4, n_gates: int = 24,
                   mode: SignalMode = SignalMode.NATIVE,
                   style: ProcessKind = ProcessKind.SINGLE_SHOT) -> Netlist:
    """Primary inputs re-randomised by a clocked process each cycle, then
    ``n_gates`` combinational gates, each reading up to three earlier
    signals. Every read is checked against the last committed value."""
    rnd = random.Random(seed)
    k = Kernel(mode)
    net = Netlist(k, [], 0)
    level = {}
    sigs = []
    for i in range(n_inputs):
        s = k.signal(f"in{i}", 8)
        net.inputs.append(s)
        sigs.append(s)
        level[s.id] = 0

    def checked_read(s):
        v = s.read()
        if v != net.committed.get(s.id, 0):
            net.violations.append((k.cycle, k.delta, s.name))
        return v

    gen_rnd = random.Random(seed + 1)

    def drive():
        for s in net.inputs:
            s.write(gen_rnd.randrange(256))
            # a same-phase read must still see the committed value
            checked_read(s)

    k.register_process(ProcessKind.SINGLE_SHOT, CLOCK, drive, name="drive")
    for g in range(n_gates):
        ins = rnd.sample(sigs, k=min(len(sigs), rnd.randint(1, 3)))
        out = k.signal(f"g{g}", 8)
        level[out.id] = 1 + max(level[s.id] for s in ins)
        coef = [rnd.randrange(1, 256) for _ in ins]

        def fn(ins=ins, out=out, coef=coef):
            acc = 0
            for c, s in zip(coef, ins):
                acc = (acc * 31 + c * checked_read(s)) & 0xFF
            out.write(acc)
            checked_read(out)

        if style is ProcessKind.SINGLE_SHOT:
            k.register_process(ProcessKind.SINGLE_SHOT, ins, fn, name=f"g{g}")
        else:
            def body(fn=fn):
                while True:
                    fn()
                    yield
            k.register_process(ProcessKind.MULTICYCLE, ins, body, name=f"g{g}")
        sigs.append(out)
    net.depth = max(level.values())
    for s in sigs:
        s.traced = True
        net.committed[s.id] = s.read()

    def on_commit(s, cycle, delta):
        net.committed[s.id] = s.peek()
    k.on_update(on_commit)
    return net


# ---------------------------------------------------------------------------
# bus fuzz bench

FUZZ_DEVICES = (
    # name, base, size, wait states
    ("ram0", 0x0000_0000, 0x1000, 0),
    ("ram2", 0x1000_0000, 0x1000, 2),
    ("ram5", 0x2000_0000, 0x1000, 5),
    ("emac", 0x8000_4000, 0x1000, 0),
)
UNMAPPED = 0x7000_0000


@dataclass
class Txn:
    master: Master
    addr: int
    rnw: bool
    be: int
    wdata: int
    expected_cycles: int
    issued: int = -1
    granted: int = -1
    acked: int = -1
    error: bool = False
    rdata: int = 0


class BusFuzzBench:
    """Two random masters on a :class:`Bus` with RAMs of different wait
    states, an EMAC proxy and an unmapped hole; a cycle-end monitor checks
    protocol timing, arbitration priority and (in Resolved4 mode) the
    absence of X/Z on the shared lines."""

    SHARED = ("opb_select", "opb_abus", "opb_rnw", "opb_be", "opb_dbus",
              "opb_rdbus", "opb_xferack", "opb_errack", "d_gnt", "i_gnt")

    def __init__(self, seed: int, mode: SignalMode = SignalMode.RESOLVED4,
                 cached: bool = True, idle_max: int = 3):
        self.rnd = random.Random(seed)
        self.idle_max = idle_max
        k = self.kernel = Kernel(mode)
        pmap = PeripheralMap()
        self.devices = {}
        for name, base, size, ws in FUZZ_DEVICES:
            dev = EmacProxy() if name == "emac" else Ram(base, size, ws, name)
            self.devices[name] = dev
            pmap.add(base, size, name, dev)
        bus = self.bus = Bus(k, pmap)
        self.pmap = pmap
        self.done: list[Txn] = []
        self.violations: list[str] = []
        self.want = 0
        self._active: Txn | None = None
        self.contended = 0
        k.register_process(ProcessKind.MULTICYCLE, CLOCK,
                           partial(self._master, Master.DATA), name="m_data")
        k.register_process(ProcessKind.MULTICYCLE, CLOCK,
                           partial(self._master, Master.INSTR), name="m_instr")
        bus.register_seq()
        for i, (name, *_rest) in enumerate(FUZZ_DEVICES):
            BusSlave(bus, pmap[name], W_DEVICE_BASE + i,
                     cached=cached).register(k, name)
        bus.register_comb()
        self._shared = [k.find_signal(n) for n in self.SHARED]
        self._pending: dict[Master, Txn] = {}
        k.on_cycle_end(self._monitor)

    def _random_txn(self, master: Master) -> Txn:
        rnd = self.rnd
        if rnd.random() < 0.05:
            base, ws = UNMAPPED, 0
        else:
            _, base, _, ws = rnd.choice(FUZZ_DEVICES)
        addr = base + 4 * rnd.randrange(0x400)
        if master is Master.INSTR:
            return Txn(master, addr, True, 0xF, 0, 3 + ws)
        rnw = rnd.random() < 0.5
        be = 0xF if rnd.random() < 0.7 else 1 << rnd.randrange(4)
        if be != 0xF:
            addr |= 3 - (be.bit_length() - 1)
        return Txn(master, addr, rnw, be, rnd.getrandbits(32), 3 + ws)

    def _master(self, side: Master):
        b = self.bus
        k = self.kernel
        wid = W_DATA_MASTER if side is Master.DATA else W_INSTR_MASTER
        while True:
            for _ in range(self.rnd.randint(0, self.idle_max)):
                yield
            if len(self.done) + len(self._pending) >= self.want:
                yield
                continue
            t = self._random_txn(side)
            t.issued = k.cycle
            self._pending[side] = t
            if side is Master.DATA:
                b.d_addr.write(t.addr, wid)
                b.d_rnw.write(int(t.rnw), wid)
                b.d_be.write(t.be, wid)
                b.d_wdata.write(t.wdata, wid)
                req, gnt = b.d_req, b.d_gnt
            else:
                b.i_addr.write(t.addr, wid)
                req, gnt = b.i_req, b.i_gnt
            req.write(1, wid)
            while True:
                yield
                # the return lines are shared: an ack is ours only while
                # we hold the grant
                if not gnt.read():
                    continue
                if b.xferack.read():
                    t.rdata = b.rdbus.read() if t.rnw else 0
                    break
                if b.errack.read():
                    t.error = True
                    break
            req.write(0, wid)
            del self._pending[side]
            self.done.append(t)

    def _word(self, s):
        v = s.peek()
        return v if isinstance(v, int) else None

    def _monitor(self, cycle: int) -> None:
        for s in self._shared:
            if self._word(s) is None:
                self.violations.append(f"cycle {cycle}: {s.name}={s.peek()}")
        b = self.bus
        sel = self._word(b.select)
        dg, ig = self._word(b.d_gnt), self._word(b.i_gnt)
        if self._active is None and sel:
            owner = Master.DATA if dg else Master.INSTR
            if self._word(b.d_req) and self._word(b.i_req):
                self.contended += 1
            if owner is Master.INSTR and self._word(b.d_req):
                self.violations.append(
                    f"cycle {cycle}: instruction side granted over a data request")
            t = self._pending.get(owner)
            if t is None:
                self.violations.append(f"cycle {cycle}: grant without request")
                return
            t.granted = cycle
            self._active = t
        if self._active is not None and (self._word(b.xferack)
                                         or self._word(b.errack)):
            t = self._active
            t.acked = cycle
            self._active = None

    def run(self, transactions: int, max_cycles: int | None = None) -> None:
        self.want = transactions
        limit = max_cycles or transactions * 40
        k = self.kernel
        while len(self.done) < transactions and k.cycle < limit:
            k.advance_cycle()


def check_fuzz(bench) -> None:
    """Timing, error and data checks over a finished fuzz run; data is
    checked against a shadow model of the RAMs and the EMAC registers."""
    assert bench.violations == []
    shadow = {name: {} for name, *_ in FUZZ_DEVICES}
    for t in sorted(bench.done, key=lambda t: t.acked):
        assert t.granted >= t.issued
        assert t.acked - t.granted + 1 == t.expected_cycles
        name = bench.pmap.decode_address(t.addr)
        assert t.error == (name is None)
        if name is None:
            continue
        mem = shadow[name]
        word = t.addr & ~3 & 0xFFF
        if name == "emac" and word >= 32 * 4:
            if t.rnw:
                assert t.rdata == 0
            continue
        if t.rnw:
            assert t.rdata == mem.get(word, 0)
        else:
            old = mem.get(word, 0)
            mask = sum(0xFF << (8 * i) for i in range(4) if t.be >> i & 1)
            mem[word] = (old & ~mask) | (t.wdata & mask)



# ---------------------------------------------------------------------------
# random fault-free MR32 programs

SCRATCH = 0x0004_0000   # base of the data scratch area, held in r1
SCRATCH_WORDS = 256
ALU = ("ADD", "SUB", "AND", "OR", "XOR", "SLL", "SRL", "SRA", "SLT")
IMM = ("ADDI", "ANDI", "ORI", "XORI", "LUI")
BRANCH = ("BEQ", "BNE", "BLT", "BGE")


def _ins(m, rd=0, ra=0, rb=0, imm=0) -> int:
    return encode(Instruction(OPCODES[m], rd, ra, rb, imm & 0xFFFF))


def random_stream(rnd: random.Random, length: int) -> list[int]:
    """One short straight-line-or-forward-branching instruction stream.

    r1 is never written so loads and stores stay in the scratch area; branch
    and JAL targets stay inside the stream or land just past its end."""
    words = []
    dests = list(range(2, 14)) + [0]
    for i in range(length):
        left = length - i       # words from here to the end of the stream
        kind = rnd.random()
        rd = rnd.choice(dests)
        ra = rnd.randrange(0, 14)
        rb = rnd.randrange(0, 14)
        if kind < 0.35:
            words.append(_ins(rnd.choice(ALU), rd, ra, rb))
        elif kind < 0.6:
            m = rnd.choice(IMM)
            imm = rnd.randrange(-0x8000, 0x8000) if m == "ADDI" \
                else rnd.randrange(0x10000)
            words.append(_ins(m, rd, 0 if m == "LUI" else ra, imm=imm))
        elif kind < 0.8:
            m = rnd.choice(("LW", "LBU", "SW", "SB"))
            off = rnd.randrange(SCRATCH_WORDS) * 4
            if m in ("LBU", "SB"):
                off += rnd.randrange(4)
            reg = rd if m in ("LW", "LBU") else rnd.randrange(0, 14)
            words.append(_ins(m, reg, 1, imm=off))
        elif kind < 0.93:
            words.append(_ins(rnd.choice(BRANCH), rnd.randrange(0, 14), ra,
                              imm=rnd.randint(1, left)))
        elif kind < 0.97:
            words.append(_ins("JAL", rd, imm=rnd.randint(1, left)))
        else:
            words.append(_ins("MSRR", rd) if rnd.random() < 0.5
                         else _ins("MSRW", ra=0))
    return words


def random_program(seed: int, streams: int = 100, max_len: int = 10):
    """Image of ``streams`` random streams after a prologue that points r1 at
    the scratch area and seeds r2..r13, followed by HALT. The scratch area is
    pre-filled with random words."""
    rnd = random.Random(seed)
    words = [_ins("LUI", 1, imm=SCRATCH >> 16)]
    for r in range(2, 14):
        words.append(_ins("LUI", r, imm=rnd.randrange(0x10000)))
        words.append(_ins("ORI", r, r, imm=rnd.randrange(0x10000)))
    for _ in range(streams):
        words += random_stream(rnd, rnd.randint(1, max_len))
    words.append(WORD_HALT)
    code = b"".join(w.to_bytes(4, "big") for w in words)
    data = bytes(rnd.getrandbits(8) for _ in range(SCRATCH_WORDS * 4 + 4))
    return Image([(0, code), (SCRATCH, data)], 0, {})


# ---------------------------------------------------------------------------
# VCD grammar


@dataclass
class VcdFile:
    timescale: str
    vars: dict            # id -> (name, width)
    times: list           # timestamps in file order
    values: dict          # name -> list of (time, value string)


_VCD_HEADER = re.compile(
    r"\$version [^$]*\$end\n\$timescale (\d+[munpf]?s) \$end\n"
    r"\$scope module \w+ \$end\n((?:\$var wire \d+ \S+ \S+ \$end\n)+)"
    r"\$upscope \$end\n\$enddefinitions \$end\n")
_VCD_VAR = re.compile(r"\$var wire (\d+) (\S+) (\S+) \$end")
_VCD_SCALAR = re.compile(r"([01xz])([!-~]+)")
_VCD_VECTOR = re.compile(r"b([01xz]+) ([!-~]+)")


def parse_vcd(text: str) -> VcdFile:
    """Strict reader for the subset of IEEE 1364 VCD the simulator writes.

    Raises ``AssertionError`` with a line number on the first deviation:
    header layout, identifier chars, width of every vector change, values
    from ``01xz`` only, strictly increasing timestamps, one ``$dumpvars``
    block at ``#0`` initialising every variable.
    """
    m = _VCD_HEADER.match(text)
    assert m, "malformed VCD header"
    vars_ = {}
    for w, ident, name in _VCD_VAR.findall(m.group(2)):
        assert ident not in vars_, f"duplicate id {ident}"
        assert all(33 <= ord(c) <= 126 for c in ident)
        vars_[ident] = (name, int(w))
    body = text[m.end():].split("\n")
    assert body[-1] == "", "file must end with a newline"
    body = body[:-1]
    values = {name: [] for name, _ in vars_.values()}
    times = []
    now = None
    in_dump = False
    dumped = set()
    base = text[:m.end()].count("\n")
    for n, line in enumerate(body, base + 1):
        if line.startswith("#"):
            assert not in_dump, f"line {n}: timestamp inside $dumpvars"
            t = int(line[1:])
            assert now is None or t > now, f"line {n}: time not increasing"
            now = t
            times.append(t)
            continue
        assert now is not None, f"line {n}: value before first timestamp"
        if line == "$dumpvars":
            assert now == 0 and not dumped, f"line {n}: misplaced $dumpvars"
            in_dump = True
            continue
        if line == "$end":
            assert in_dump, f"line {n}: stray $end"
            in_dump = False
            assert len(dumped) == len(vars_), "$dumpvars misses variables"
            continue
        mv = _VCD_VECTOR.fullmatch(line)
        ms = _VCD_SCALAR.fullmatch(line)
        if mv:
            bits, ident = mv.groups()
            assert ident in vars_, f"line {n}: undeclared id {ident}"
            assert len(bits) == vars_[ident][1], f"line {n}: width mismatch"
        elif ms:
            bits, ident = ms.groups()
            assert ident in vars_, f"line {n}: undeclared id {ident}"
            assert vars_[ident][1] == 1, f"line {n}: scalar change of a vector"
        else:
            raise AssertionError(f"line {n}: cannot parse {line!r}")
        if in_dump:
            dumped.add(ident)
        values[vars_[ident][0]].append((now, bits))
    assert not in_dump, "unterminated $dumpvars"
    return VcdFile(m.group(1), vars_, times, values)


def vcd_value_at(vcd: VcdFile, name: str, t: int) -> str:
    v = None
    for when, bits in vcd.values[name]:
        if when > t:
            break
        v = bits
    return v
