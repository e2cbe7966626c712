"""MR32 instruction encoding.

Every instruction is one big-endian 32-bit word::

    31    26 25  21 20  16 15  11 10         0
    [opcode][  rd  ][  ra  ][  rb  ][ unused  ]   form A (register)
    [opcode][  rd  ][  ra  ][     imm16      ]   form B (immediate)
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class IllegalInstruction(Exception):
    def __init__(self, word: int, pc: int | None = None):
        self.word = word
        self.pc = pc
        at = f" at pc={pc:#010x}" if pc is not None else ""
        super().__init__(f"illegal instruction {word:#010x}{at}")


class Form(Enum):
    A = "A"
    B = "B"


# mnemonic -> opcode
OPCODES = {
    "ADD": 0x00, "SUB": 0x01, "AND": 0x02, "OR": 0x03, "XOR": 0x04,
    "SLL": 0x05, "SRL": 0x06, "SRA": 0x07, "SLT": 0x08,
    "ADDI": 0x10, "ANDI": 0x12, "ORI": 0x13, "XORI": 0x14, "LUI": 0x15,
    "LW": 0x18, "LBU": 0x19, "SW": 0x1A, "SB": 0x1B,
    "BEQ": 0x20, "BNE": 0x21, "BLT": 0x22, "BGE": 0x23,
    "JAL": 0x28, "JALR": 0x29,
    "IRET": 0x2C, "MSRW": 0x2D, "MSRR": 0x2E,
    "HALT": 0x3F,
}
MNEMONICS = {v: k for k, v in OPCODES.items()}

FORM_A = frozenset(range(0x00, 0x09))
ZERO_EXT = frozenset({0x12, 0x13, 0x14})
LOADS = frozenset({0x18, 0x19})
STORES = frozenset({0x1A, 0x1B})
MEMORY = LOADS | STORES
BRANCHES = frozenset({0x20, 0x21, 0x22, 0x23})

OP_HALT = 0x3F
WORD_HALT = 0xFC000000

IRQ_VECTOR = 0x00000010
LINK_IRQ = 14
LINK_CALL = 15


@dataclass(frozen=True)
class Instruction:
    opcode: int
    rd: int = 0
    ra: int = 0
    rb: int = 0
    imm16: int = 0

    @property
    def form(self) -> Form:
        return Form.A if self.opcode in FORM_A else Form.B

    @property
    def mnemonic(self) -> str:
        return MNEMONICS[self.opcode]

    @property
    def simm(self) -> int:
        return sext16(self.imm16)


def sext16(v: int) -> int:
    v &= 0xFFFF
    return v - 0x10000 if v & 0x8000 else v


def to_signed(v: int) -> int:
    v &= 0xFFFFFFFF
    return v - 0x100000000 if v & 0x80000000 else v


def decode(word: int, pc: int | None = None) -> Instruction:
    word &= 0xFFFFFFFF
    op = word >> 26
    if op not in MNEMONICS:
        raise IllegalInstruction(word, pc)
    if op == OP_HALT and word != WORD_HALT:
        raise IllegalInstruction(word, pc)
    rd = (word >> 21) & 31
    ra = (word >> 16) & 31
    if op in FORM_A:
        return Instruction(op, rd, ra, (word >> 11) & 31, 0)
    return Instruction(op, rd, ra, 0, word & 0xFFFF)


def encode(ins: Instruction) -> int:
    if ins.opcode not in MNEMONICS:
        raise IllegalInstruction(ins.opcode << 26)
    for name in ("rd", "ra", "rb"):
        if not 0 <= getattr(ins, name) < 32:
            raise ValueError(f"{name} out of range in {ins}")
    word = (ins.opcode << 26) | (ins.rd << 21) | (ins.ra << 16)
    if ins.opcode in FORM_A:
        return word | (ins.rb << 11)
    return word | (ins.imm16 & 0xFFFF)


def disassemble(word: int, pc: int = 0) -> str:
    """Render ``word`` in assembler syntax; branch and JAL targets are printed
    as absolute addresses computed from ``pc`` so the text reassembles to the
    same word at the same address."""
    ins = decode(word)
    op, m = ins.opcode, ins.mnemonic
    if op in FORM_A:
        return f"{m} r{ins.rd}, r{ins.ra}, r{ins.rb}"
    if op in (0x10,):
        return f"{m} r{ins.rd}, r{ins.ra}, {ins.simm}"
    if op in ZERO_EXT:
        return f"{m} r{ins.rd}, r{ins.ra}, {ins.imm16:#x}"
    if op == 0x15:
        return f"{m} r{ins.rd}, {ins.imm16:#x}"
    if op in MEMORY:
        return f"{m} r{ins.rd}, {ins.simm}(r{ins.ra})"
    if op in BRANCHES:
        tgt = (pc + (ins.simm << 2)) & 0xFFFFFFFF
        return f"{m} r{ins.ra}, r{ins.rd}, {tgt:#x}"
    if op == 0x28:
        tgt = (pc + (ins.simm << 2)) & 0xFFFFFFFF
        return f"{m} r{ins.rd}, {tgt:#x}"
    if op == 0x29:
        return f"{m} r{ins.rd}, r{ins.ra}"
    if op == 0x2D:
        return f"{m} r{ins.ra}"
    if op == 0x2E:
        return f"{m} r{ins.rd}"
    return m
