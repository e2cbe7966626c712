"""MR32IMG1 binary image container and symbol files.

Layout (all integers big-endian)::

    "MR32IMG1"
    u32 segment_count
    segment_count x (u32 base, u32 length)
    raw segment bytes, in table order
    u32 entry
    u32 symbol_count
    symbol_count x (u16 name_length, name bytes (UTF-8), u32 address)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

MAGIC = b"MR32IMG1"


class ImageError(Exception):
    pass


@dataclass
class Image:
    segments: list[tuple[int, bytes]] = field(default_factory=list)
    entry: int = 0
    symbols: dict[str, int] = field(default_factory=dict)
    # every label, exported or not; not part of the file format
    labels: dict[str, int] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.segments = [(b, bytes(d)) for b, d in self.segments]
        self.validate()

    def validate(self) -> None:
        spans = sorted((b, b + len(d)) for b, d in self.segments)
        for (b0, e0), (b1, e1) in zip(spans, spans[1:]):
            if b1 < e0:
                raise ImageError(f"segments overlap at {b1:#x}")
        if self.segments and not any(b <= self.entry < b + len(d)
                                     for b, d in self.segments):
            raise ImageError(f"entry {self.entry:#x} is outside every segment")

    def read(self, addr: int, n: int = 4) -> bytes:
        for b, d in self.segments:
            if b <= addr and addr + n <= b + len(d):
                return d[addr - b:addr - b + n]
        raise ImageError(f"{addr:#x} not in image")

    def word(self, addr: int) -> int:
        return int.from_bytes(self.read(addr, 4), "big")

    def to_bytes(self) -> bytes:
        out = bytearray(MAGIC)
        out += struct.pack(">I", len(self.segments))
        for b, d in self.segments:
            out += struct.pack(">II", b, len(d))
        for _, d in self.segments:
            out += d
        out += struct.pack(">II", self.entry, len(self.symbols))
        for name, addr in sorted(self.symbols.items(), key=lambda kv: kv[1]):
            raw = name.encode()
            out += struct.pack(">H", len(raw)) + raw + struct.pack(">I", addr)
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Image":
        if data[:8] != MAGIC:
            raise ImageError("bad magic, not an MR32IMG1 image")
        try:
            pos = 8
            (count,) = struct.unpack_from(">I", data, pos)
            pos += 4
            table = []
            for _ in range(count):
                table.append(struct.unpack_from(">II", data, pos))
                pos += 8
            segs = []
            for base, length in table:
                if pos + length > len(data):
                    raise ImageError("truncated segment data")
                segs.append((base, data[pos:pos + length]))
                pos += length
            entry, nsyms = struct.unpack_from(">II", data, pos)
            pos += 8
            syms = {}
            for _ in range(nsyms):
                (n,) = struct.unpack_from(">H", data, pos)
                pos += 2
                name = data[pos:pos + n].decode()
                pos += n
                (addr,) = struct.unpack_from(">I", data, pos)
                pos += 4
                syms[name] = addr
        except struct.error as e:
            raise ImageError(f"truncated image: {e}") from None
        return cls(segs, entry, syms)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Image":
        return cls.from_bytes(Path(path).read_bytes())


def format_symbols(symbols: dict[str, int]) -> str:
    return "".join(f"{addr:08x} {name}\n"
                   for name, addr in sorted(symbols.items(),
                                            key=lambda kv: (kv[1], kv[0])))


def parse_symbols(text: str) -> dict[str, int]:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ImageError(f"symbol file line {n}: expected '<hex> <name>'")
        out[parts[1]] = int(parts[0], 16)
    return out
