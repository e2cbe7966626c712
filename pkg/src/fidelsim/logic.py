"""Four-valued logic with multi-driver resolution.

Scalars are :class:`Logic4` members. Vectors (:class:`LogicVec`) keep three
disjoint bit planes so that resolving two 32-bit drivers is a handful of
integer operations instead of a per-bit loop:

* ``val``  -- bits that are L1
* ``xm``   -- bits that are X
* ``zm``   -- bits that are Z

A bit set in neither ``xm`` nor ``zm`` is L0 or L1 according to ``val``.
"""

from __future__ import annotations

from enum import IntEnum
from functools import reduce
from typing import Iterable, Sequence


class UnknownValueError(Exception):
    """An X or Z bit reached a datapath that needs a machine word."""

    def __init__(self, vec: "LogicVec", signal: object = None):
        self.vec = vec
        self.signal = signal
        where = f" on signal {signal}" if signal is not None else ""
        super().__init__(f"unknown value crossed datapath{where}: {vec}")


class Logic4(IntEnum):
    L0 = 0
    L1 = 1
    X = 2
    Z = 3

    def __str__(self) -> str:
        return "01xz"[self]


L0, L1, X, Z = Logic4.L0, Logic4.L1, Logic4.X, Logic4.Z

# Row/column order follows the enum values: L0, L1, X, Z.
_RESOLVE = (
    (L0, X, X, L0),
    (X, L1, X, L1),
    (X, X, X, X),
    (L0, L1, X, Z),
)


def resolve(a: Logic4, b: Logic4) -> Logic4:
    """Resolve two drivers of one wire. Z is the identity, X absorbs."""
    return _RESOLVE[a][b]


def resolve_many(values: Iterable[Logic4]) -> Logic4:
    values = list(values)
    if not values:
        raise ValueError("resolve_many needs at least one driver value")
    return reduce(resolve, values)


class LogicVec:
    """Fixed-width vector of :class:`Logic4`; bit 0 is the LSB."""

    __slots__ = ("width", "val", "xm", "zm")

    def __init__(self, width: int, val: int = 0, xm: int = 0, zm: int = 0):
        if not 1 <= width <= 64:
            raise ValueError(f"LogicVec width must be 1..64, got {width}")
        mask = (1 << width) - 1
        xm &= mask
        zm &= mask & ~xm
        self.width = width
        self.xm = xm
        self.zm = zm
        self.val = val & mask & ~(xm | zm)

    @classmethod
    def from_word(cls, word: int, width: int) -> "LogicVec":
        return cls(width, word)

    @classmethod
    def from_bits(cls, bits: Sequence[Logic4]) -> "LogicVec":
        val = xm = zm = 0
        for i, b in enumerate(bits):
            if b == L1:
                val |= 1 << i
            elif b == X:
                xm |= 1 << i
            elif b == Z:
                zm |= 1 << i
        return cls(len(bits), val, xm, zm)

    @classmethod
    def from_str(cls, text: str) -> "LogicVec":
        """Parse MSB-first text such as ``'01xz'``."""
        lut = {"0": L0, "1": L1, "x": X, "X": X, "z": Z, "Z": Z}
        return cls.from_bits([lut[c] for c in reversed(text)])

    @classmethod
    def all_z(cls, width: int) -> "LogicVec":
        return cls(width, zm=(1 << width) - 1)

    @classmethod
    def all_x(cls, width: int) -> "LogicVec":
        return cls(width, xm=(1 << width) - 1)

    @property
    def bits(self) -> tuple[Logic4, ...]:
        out = []
        for i in range(self.width):
            m = 1 << i
            if self.xm & m:
                out.append(X)
            elif self.zm & m:
                out.append(Z)
            else:
                out.append(L1 if self.val & m else L0)
        return tuple(out)

    @property
    def is_known(self) -> bool:
        return not (self.xm | self.zm)

    def __getitem__(self, i: int) -> Logic4:
        return self.bits[i]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LogicVec):
            return NotImplemented
        return (self.width == other.width and self.val == other.val
                and self.xm == other.xm and self.zm == other.zm)

    def __ne__(self, other: object) -> bool:
        eq = self.__eq__(other)
        return eq if eq is NotImplemented else not eq

    def __hash__(self) -> int:
        return hash((self.width, self.val, self.xm, self.zm))

    def __str__(self) -> str:
        return "".join(str(b) for b in reversed(self.bits))

    def __repr__(self) -> str:
        return f"LogicVec({self.width}, '{self}')"


def resolve_vec(a: LogicVec, b: LogicVec) -> LogicVec:
    """Bitwise :func:`resolve` over two equal-width vectors."""
    if a.width != b.width:
        raise ValueError(f"width mismatch: {a.width} vs {b.width}")
    a_drv = ~a.zm
    b_drv = ~b.zm
    clash = a_drv & b_drv & (a.val ^ b.val)
    xm = a.xm | b.xm | clash
    zm = a.zm & b.zm
    val = (a.val | b.val) & ~xm
    return LogicVec(a.width, val, xm, zm)


def resolve_vecs(values: Iterable[LogicVec]) -> LogicVec:
    values = list(values)
    if not values:
        raise ValueError("resolve_vecs needs at least one driver value")
    return reduce(resolve_vec, values)


def vec_to_word(v: LogicVec, signal: object = None) -> int:
    if v.xm | v.zm:
        raise UnknownValueError(v, signal)
    return v.val


def word_to_vec(word: int, width: int) -> LogicVec:
    return LogicVec(width, word)
