"""Two-pass MR32 assembler.

Syntax, one statement per line, ``;`` starts a comment::

    label:  MNEMONIC operands
            .directive args

Operand forms::

    ADD  rd, ra, rb          form A (ADD SUB AND OR XOR SLL SRL SRA SLT)
    ADDI rd, ra, simm16      ANDI/ORI/XORI take a zero-extended imm16
    LUI  rd, imm16
    LW   rd, simm16(ra)      also LBU, SW, SB
    BEQ  ra, rd, target      also BNE, BLT, BGE; target is a label or address
    JAL  rd, target
    JALR rd, ra
    MSRW ra / MSRR rd / IRET / HALT

Pseudo-instructions: ``NOP``, ``MOV rd, ra``, ``LI rd, imm32``,
``LA rd, label``, ``J target``, ``CALL target`` (``JAL r15``) and ``RET``
(``JALR r0, r15``).

Directives: ``.org ADDR`` (word aligned), ``.word``, ``.byte``, ``.ascii``,
``.asciiz``, ``.align N`` (N-byte boundary, power of two), ``.space N``,
``.global name``, ``.equ name, value``.

Expressions are sums/differences of decimal or ``0x`` literals, character
literals (``'A'``), symbols, and ``hi(x)``/``lo(x)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..cpu.isa import (BRANCHES, FORM_A, MEMORY, OPCODES, ZERO_EXT,
                       Instruction, encode)
from .image import Image


class AsmError(Exception):
    def __init__(self, msg: str, line: int | None = None):
        self.line = line
        self.msg = msg
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


_REG = re.compile(r"^[rR]([0-9]|[12][0-9]|3[01])$")
_LABEL = re.compile(r"^([A-Za-z_.$][\w.$]*)\s*:")
_SYMBOL = re.compile(r"^[A-Za-z_.$][\w.$]*$")
_MEMOP = re.compile(r"^(.*)\(\s*([rR]\d+)\s*\)$")

PSEUDO = {"NOP", "MOV", "LI", "LA", "J", "CALL", "RET"}


def _strip_comment(line: str) -> str:
    quote = None
    for i, ch in enumerate(line):
        if quote:
            if ch == "\\":
                continue
            if ch == quote and line[i - 1] != "\\":
                quote = None
        elif ch in "\"'":
            quote = ch
        elif ch == ";":
            return line[:i]
    return line


def _split_operands(text: str) -> list[str]:
    out, cur, quote = [], [], None
    prev = ""
    for ch in text:
        if quote:
            cur.append(ch)
            if ch == quote and prev != "\\":
                quote = None
        elif ch in "\"'":
            quote = ch
            cur.append(ch)
        elif ch == ",":
            out.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
        prev = ch
    tail = "".join(cur).strip()
    if tail or out:
        out.append(tail)
    return out


_ESC = {"n": 10, "r": 13, "t": 9, "0": 0, "\\": 92, "\"": 34, "'": 39}


def _unescape(body: str, line: int) -> bytes:
    out = bytearray()
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\":
            i += 1
            if i >= len(body):
                raise AsmError("dangling backslash", line)
            e = body[i]
            if e == "x":
                hexd = body[i + 1:i + 3]
                try:
                    out.append(int(hexd, 16))
                except ValueError:
                    raise AsmError(f"bad \\x escape {hexd!r}", line) from None
                i += 3
                continue
            if e not in _ESC:
                raise AsmError(f"unknown escape \\{e}", line)
            out.append(_ESC[e])
        else:
            out += ch.encode()
        i += 1
    return bytes(out)


def _string(arg: str, line: int) -> bytes:
    arg = arg.strip()
    if len(arg) < 2 or arg[0] != '"' or arg[-1] != '"':
        raise AsmError(f"expected a quoted string, got {arg!r}", line)
    return _unescape(arg[1:-1], line)


class _Expr:
    """Tiny recursive-descent evaluator for operand expressions."""

    _TOK = re.compile(r"\s*(0[xX][0-9a-fA-F_]+|\d[\d_]*|'(?:\\.|[^'])'|"
                      r"[A-Za-z_.$][\w.$]*|[-+()])")

    def __init__(self, text: str, symbols: dict, line: int, strict: bool):
        self.toks = []
        pos = 0
        text = text.strip()
        while pos < len(text):
            m = self._TOK.match(text, pos)
            if not m:
                raise AsmError(f"bad expression {text!r}", line)
            self.toks.append(m.group(1))
            pos = m.end()
        if not self.toks:
            raise AsmError("missing operand", line)
        self.i = 0
        self.symbols = symbols
        self.line = line
        self.strict = strict
        self.unresolved = False

    def value(self) -> int:
        v = self._sum()
        if self.i != len(self.toks):
            raise AsmError(f"unexpected {self.toks[self.i]!r}", self.line)
        return v

    def _peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def _next(self):
        t = self._peek()
        if t is None:
            raise AsmError("truncated expression", self.line)
        self.i += 1
        return t

    def _sum(self) -> int:
        v = self._term()
        while self._peek() in ("+", "-"):
            op = self._next()
            rhs = self._term()
            v = v + rhs if op == "+" else v - rhs
        return v

    def _term(self) -> int:
        t = self._next()
        if t == "-":
            return -self._term()
        if t == "+":
            return self._term()
        if t == "(":
            v = self._sum()
            if self._next() != ")":
                raise AsmError("missing ')'", self.line)
            return v
        if t[0].isdigit():
            return int(t.replace("_", ""), 0)
        if t[0] == "'":
            b = _unescape(t[1:-1], self.line)
            if len(b) != 1:
                raise AsmError(f"bad character literal {t}", self.line)
            return b[0]
        low = t.lower()
        if low in ("hi", "lo") and self._peek() == "(":
            self._next()
            v = self._sum()
            if self._next() != ")":
                raise AsmError("missing ')'", self.line)
            v &= 0xFFFFFFFF
            return v >> 16 if low == "hi" else v & 0xFFFF
        if _REG.match(t):
            raise AsmError(f"register {t} where a value was expected", self.line)
        if t in self.symbols:
            return self.symbols[t]
        if self.strict:
            raise AsmError(f"undefined symbol {t!r}", self.line)
        self.unresolved = True
        return 0


def _is_literal(text: str) -> bool:
    try:
        int(text.strip().replace("_", ""), 0)
        return True
    except ValueError:
        t = text.strip()
        return t.startswith("-") and _is_literal(t[1:])


@dataclass
class _Stmt:
    line: int
    addr: int
    kind: str          # "ins" or "data"
    name: str
    args: list
    size: int


class Assembler:
    def __init__(self):
        self.symbols: dict[str, int] = {}
        self.globals: list[tuple[str, int]] = []

    # -- helpers ----------------------------------------------------------

    def _eval(self, text: str, line: int, strict: bool = True) -> int:
        return _Expr(text, self.symbols, line, strict).value()

    @staticmethod
    def _reg(text: str, line: int) -> int:
        m = _REG.match(text.strip())
        if not m:
            raise AsmError(f"expected a register, got {text!r}", line)
        return int(m.group(1))

    @staticmethod
    def _nargs(args, n, name, line):
        if len(args) != n:
            raise AsmError(f"{name} takes {n} operand(s), got {len(args)}",
                           line)

    def _li_size(self, args, line) -> int:
        if len(args) == 2 and _is_literal(args[1]):
            v = int(args[1].strip().replace("_", ""), 0)
            if -0x8000 <= v <= 0x7FFF:
                return 4
        return 8

    # -- pass 1 -----------------------------------------------------------

    def _pass1(self, source: str) -> list[_Stmt]:
        stmts: list[_Stmt] = []
        pc = 0
        for n, raw in enumerate(source.splitlines(), 1):
            text = _strip_comment(raw).strip()
            while True:
                m = _LABEL.match(text)
                if not m:
                    break
                name = m.group(1)
                if name in self.symbols:
                    raise AsmError(f"duplicate label {name!r}", n)
                self.symbols[name] = pc
                text = text[m.end():].strip()
            if not text:
                continue
            parts = text.split(None, 1)
            name = parts[0]
            args = _split_operands(parts[1]) if len(parts) > 1 else []
            if name.startswith("."):
                pc = self._directive1(name.lower(), args, n, pc, stmts)
                continue
            mn = name.upper()
            if mn not in OPCODES and mn not in PSEUDO:
                raise AsmError(f"unknown mnemonic {name!r}", n)
            if pc & 3:
                raise AsmError(f"instruction at misaligned address {pc:#x}", n)
            size = 4
            if mn in ("LI", "LA"):
                size = self._li_size(args, n) if mn == "LI" else 8
            stmts.append(_Stmt(n, pc, "ins", mn, args, size))
            pc += size
        return stmts

    def _directive1(self, d, args, n, pc, stmts) -> int:
        if d == ".org":
            self._nargs(args, 1, d, n)
            addr = self._eval(args[0], n)
            if addr & 3:
                raise AsmError(f".org {addr:#x} is not word aligned", n)
            if not 0 <= addr <= 0xFFFFFFFF:
                raise AsmError(f".org {addr:#x} out of range", n)
            return addr
        if d == ".global":
            for a in args:
                if not _SYMBOL.match(a):
                    raise AsmError(f"bad symbol name {a!r}", n)
                self.globals.append((a, n))
            return pc
        if d == ".equ":
            self._nargs(args, 2, d, n)
            if args[0] in self.symbols:
                raise AsmError(f"duplicate label {args[0]!r}", n)
            self.symbols[args[0]] = self._eval(args[1], n)
            return pc
        if d == ".align":
            self._nargs(args, 1, d, n)
            a = self._eval(args[0], n)
            if a <= 0 or a & (a - 1):
                raise AsmError(f".align {a} is not a power of two", n)
            pad = (-pc) % a
            if pad:
                stmts.append(_Stmt(n, pc, "data", ".space", [str(pad)], pad))
            return pc + pad
        if d == ".space":
            self._nargs(args, 1, d, n)
            size = self._eval(args[0], n)
            if size < 0:
                raise AsmError(".space size is negative", n)
            stmts.append(_Stmt(n, pc, "data", d, args, size))
            return pc + size
        if d == ".word":
            if pc & 3:
                raise AsmError(f".word at misaligned address {pc:#x}", n)
            size = 4 * len(args)
        elif d == ".byte":
            size = len(args)
        elif d in (".ascii", ".asciiz"):
            size = sum(len(_string(a, n)) for a in args)
            if d == ".asciiz":
                size += len(args)
        else:
            raise AsmError(f"unknown directive {d}", n)
        if not args:
            raise AsmError(f"{d} needs at least one operand", n)
        stmts.append(_Stmt(n, pc, "data", d, args, size))
        return pc + size

    # -- pass 2 -----------------------------------------------------------

    def _imm(self, text, line, lo, hi, what="immediate") -> int:
        v = self._eval(text, line)
        if not lo <= v <= hi:
            raise AsmError(f"{what} {v} out of range {lo}..{hi}", line)
        return v

    def _branch_off(self, text, pc, line) -> int:
        tgt = self._eval(text, line) & 0xFFFFFFFF
        delta = tgt - pc
        if delta & 3:
            raise AsmError(f"branch target {tgt:#x} not word aligned", line)
        off = delta >> 2
        if not -0x8000 <= off <= 0x7FFF:
            raise AsmError(f"branch target {tgt:#x} out of range", line)
        return off & 0xFFFF

    def _encode(self, st: _Stmt) -> list[int]:
        mn, a, n, pc = st.name, st.args, st.line, st.addr
        R = lambda i: self._reg(a[i], n)  # noqa: E731
        if mn == "NOP":
            self._nargs(a, 0, mn, n)
            return [encode(Instruction(OPCODES["ADD"]))]
        if mn == "MOV":
            self._nargs(a, 2, mn, n)
            return [encode(Instruction(OPCODES["ADDI"], R(0), R(1), 0, 0))]
        if mn in ("LI", "LA"):
            self._nargs(a, 2, mn, n)
            rd = R(0)
            v = self._eval(a[1], n)
            if not -0x80000000 <= v <= 0xFFFFFFFF:
                raise AsmError(f"{mn} value {v} does not fit 32 bits", n)
            v &= 0xFFFFFFFF
            if st.size == 4:
                return [encode(Instruction(OPCODES["ADDI"], rd, 0, 0, v & 0xFFFF))]
            return [encode(Instruction(OPCODES["LUI"], rd, 0, 0, v >> 16)),
                    encode(Instruction(OPCODES["ORI"], rd, rd, 0, v & 0xFFFF))]
        if mn == "J":
            self._nargs(a, 1, mn, n)
            return [encode(Instruction(OPCODES["JAL"], 0, 0, 0,
                                       self._branch_off(a[0], pc, n)))]
        if mn == "CALL":
            self._nargs(a, 1, mn, n)
            return [encode(Instruction(OPCODES["JAL"], 15, 0, 0,
                                       self._branch_off(a[0], pc, n)))]
        if mn == "RET":
            self._nargs(a, 0, mn, n)
            return [encode(Instruction(OPCODES["JALR"], 0, 15))]

        op = OPCODES[mn]
        if op in FORM_A:
            self._nargs(a, 3, mn, n)
            return [encode(Instruction(op, R(0), R(1), R(2)))]
        if op == 0x10:
            self._nargs(a, 3, mn, n)
            v = self._imm(a[2], n, -0x8000, 0x7FFF)
            return [encode(Instruction(op, R(0), R(1), 0, v & 0xFFFF))]
        if op in ZERO_EXT:
            self._nargs(a, 3, mn, n)
            v = self._imm(a[2], n, 0, 0xFFFF)
            return [encode(Instruction(op, R(0), R(1), 0, v))]
        if op == 0x15:
            self._nargs(a, 2, mn, n)
            v = self._imm(a[1], n, 0, 0xFFFF)
            return [encode(Instruction(op, R(0), 0, 0, v))]
        if op in MEMORY:
            self._nargs(a, 2, mn, n)
            m = _MEMOP.match(a[1].strip())
            if not m:
                raise AsmError(f"expected imm(ra), got {a[1]!r}", n)
            off = m.group(1).strip() or "0"
            v = self._imm(off, n, -0x8000, 0x7FFF, "offset")
            return [encode(Instruction(op, R(0), self._reg(m.group(2), n), 0,
                                       v & 0xFFFF))]
        if op in BRANCHES:
            self._nargs(a, 3, mn, n)
            return [encode(Instruction(op, R(1), R(0), 0,
                                       self._branch_off(a[2], pc, n)))]
        if op == 0x28:
            self._nargs(a, 2, mn, n)
            return [encode(Instruction(op, R(0), 0, 0,
                                       self._branch_off(a[1], pc, n)))]
        if op == 0x29:
            self._nargs(a, 2, mn, n)
            return [encode(Instruction(op, R(0), R(1)))]
        if op == 0x2D:
            self._nargs(a, 1, mn, n)
            return [encode(Instruction(op, 0, R(0)))]
        if op == 0x2E:
            self._nargs(a, 1, mn, n)
            return [encode(Instruction(op, R(0)))]
        self._nargs(a, 0, mn, n)
        return [encode(Instruction(op))]

    def _data(self, st: _Stmt) -> bytes:
        d, a, n = st.name, st.args, st.line
        if d == ".space":
            return bytes(st.size)
        if d == ".word":
            out = bytearray()
            for x in a:
                v = self._eval(x, n)
                if not -0x80000000 <= v <= 0xFFFFFFFF:
                    raise AsmError(f".word value {v} does not fit 32 bits", n)
                out += (v & 0xFFFFFFFF).to_bytes(4, "big")
            return bytes(out)
        if d == ".byte":
            out = bytearray()
            for x in a:
                v = self._eval(x, n)
                if not -0x80 <= v <= 0xFF:
                    raise AsmError(f".byte value {v} does not fit 8 bits", n)
                out.append(v & 0xFF)
            return bytes(out)
        out = bytearray()
        for x in a:
            out += _string(x, n)
            if d == ".asciiz":
                out.append(0)
        return bytes(out)

    def assemble(self, source: str) -> Image:
        stmts = self._pass1(source)
        chunks: list[tuple[int, bytes]] = []
        for st in stmts:
            if st.kind == "ins":
                data = b"".join(w.to_bytes(4, "big") for w in self._encode(st))
            else:
                data = self._data(st)
            chunks.append((st.addr, data))
        # merge contiguous chunks into segments
        chunks.sort(key=lambda c: c[0])
        segs: list[list] = []
        for addr, data in chunks:
            if not data:
                continue
            if segs and segs[-1][0] + len(segs[-1][1]) == addr:
                segs[-1][1] += data
            else:
                if segs and addr < segs[-1][0] + len(segs[-1][1]):
                    raise AsmError(f"code overlaps at {addr:#x}")
                segs.append([addr, bytearray(data)])
        exported = {}
        for name, line in self.globals:
            if name not in self.symbols:
                raise AsmError(f".global {name!r} is never defined", line)
            exported[name] = self.symbols[name]
        if "_start" in self.symbols:
            entry = self.symbols["_start"]
        else:
            entry = segs[0][0] if segs else 0
        return Image([(b, bytes(d)) for b, d in segs], entry, exported,
                     dict(self.symbols))


def assemble(source: str) -> Image:
    return Assembler().assemble(source)
