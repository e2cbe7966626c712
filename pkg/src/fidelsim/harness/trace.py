"""Pin traces: recording, text format, digests and comparison.

A trace holds the initial value of every traced pin plus one record per
committed change, ``(cycle, delta, index, value)`` where ``index`` points into
the pin list. Values are ints; a 4-valued pin holding X or Z bits is stored
as its MSB-first string (``"xx01"``).

Text format (one item per line)::

    # fidelsim pin trace v1
    pin <name> <width>
    ...
    init <value> <value> ...
    <cycle> <delta> <name> <value>

with values written as ``h<hex>`` for known values and ``b<01xz...>`` otherwise.
"""

from __future__ import annotations

import hashlib
import io
import pickle
from dataclasses import dataclass, field
from pathlib import Path

HEADER = "# fidelsim pin trace v1"


class TraceError(Exception):
    pass


def format_value(v) -> str:
    return f"h{v:x}" if isinstance(v, int) else f"b{v}"


def parse_value(text: str):
    if text[:1] == "h":
        return int(text[1:], 16)
    if text[:1] == "b" and text[1:] and set(text[1:]) <= set("01xz"):
        return text[1:]
    raise TraceError(f"bad trace value {text!r}")


@dataclass
class PinTrace:
    names: tuple
    widths: tuple
    initial: tuple
    records: list = field(default_factory=list)
    end_cycle: int = 0

    def __post_init__(self):
        self.names = tuple(self.names)
        self.widths = tuple(self.widths)
        self.initial = tuple(self.initial)
        if not (len(self.names) == len(self.widths) == len(self.initial)):
            raise TraceError("pin list, widths and initial values differ in length")
        if len(set(self.names)) != len(self.names):
            raise TraceError("duplicate pin names")

    def validate(self) -> None:
        prev = (-1, -1)
        n = len(self.names)
        for rec in self.records:
            t = (rec[0], rec[1])
            if t < prev:
                raise TraceError(f"record {rec} out of (cycle, delta) order")
            if not 0 <= rec[2] < n:
                raise TraceError(f"record {rec} names an unknown pin")
            prev = t

    def __len__(self) -> int:
        return len(self.records)

    def value_at(self, name: str, cycle: int):
        """Settled value of ``name`` at the end of ``cycle``."""
        i = self.names.index(name)
        v = self.initial[i]
        for c, _, j, val in self.records:
            if c > cycle:
                break
            if j == i:
                v = val
        return v

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(pickle.dumps((self.names, self.widths, self.initial), 4))
        h.update(pickle.dumps(self.records, 4))
        return h.hexdigest()

    # -- text form --------------------------------------------------------

    def to_text(self) -> str:
        buf = io.StringIO()
        w = TraceWriter(buf)
        w.begin(self.names, self.widths, self.initial)
        w.records(self.records)
        w.end(self.end_cycle)
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "PinTrace":
        lines = text.splitlines()
        if not lines or lines[0].strip() != HEADER:
            raise TraceError("not a fidelsim pin trace")
        names, widths, initial, records = [], [], None, []
        end = 0
        index: dict[str, int] = {}
        for n, line in enumerate(lines[1:], 2):
            parts = line.split()
            if not parts:
                continue
            try:
                if parts[0] == "pin":
                    index[parts[1]] = len(names)
                    names.append(parts[1])
                    widths.append(int(parts[2]))
                elif parts[0] == "init":
                    initial = [parse_value(p) for p in parts[1:]]
                elif parts[0] == "end":
                    end = int(parts[1])
                else:
                    c, d, name, v = parts
                    records.append((int(c), int(d), index[name], parse_value(v)))
            except (ValueError, IndexError, KeyError, TraceError) as e:
                raise TraceError(f"trace line {n}: {e!r}") from None
        if initial is None:
            raise TraceError("trace has no init line")
        t = cls(names, widths, initial, records, end)
        t.validate()
        return t

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "PinTrace":
        return cls.from_text(Path(path).read_text())


class TraceWriter:
    """Streams the text form: :meth:`begin`, :meth:`records` (any number of
    times), :meth:`end`."""

    def __init__(self, out):
        self.out = out
        self._names: tuple = ()

    def begin(self, names, widths, initial) -> None:
        self._names = tuple(names)
        w = self.out.write
        w(HEADER + "\n")
        for n, width in zip(names, widths):
            w(f"pin {n} {width}\n")
        w("init " + " ".join(format_value(v) for v in initial) + "\n")

    def records(self, records) -> None:
        names = self._names
        self.out.write("".join(f"{c} {d} {names[i]} {format_value(v)}\n"
                               for c, d, i, v in records))

    def end(self, end_cycle: int) -> None:
        self.out.write(f"end {end_cycle}\n")


class TraceRecorder:
    """Collects committed changes of a fixed pin set from a kernel.

    ``flush()`` hands back (and forgets) the records gathered so far, so long
    runs can be streamed to a file or folded into chunk digests without
    holding every record in memory.
    """

    def __init__(self, kernel, signals):
        if kernel.trace_log is not None:
            raise TraceError("kernel already has a trace recorder")
        self.kernel = kernel
        self.signals = list(signals)
        self.names = tuple(s.name for s in self.signals)
        self.widths = tuple(s.width for s in self.signals)
        self._index = {s.id: i for i, s in enumerate(self.signals)}
        self.initial = tuple(s.peek() for s in self.signals)
        for s in self.signals:
            s.traced = True
        self._log = kernel.trace_log = []

    def flush(self) -> list:
        log = self._log
        if not log:
            return []
        idx = self._index
        out = [(c, d, idx[sid], v) for c, d, sid, v in log]
        log.clear()
        return out

    def take_raw(self) -> list:
        """Records gathered so far in kernel form (signal ids instead of pin
        indices), without conversion. Cheaper than :meth:`flush`; only
        comparable between platforms that create their signals in the same
        order."""
        log = self._log
        self._log = self.kernel.trace_log = []
        return log

    def detach(self) -> None:
        for s in self.signals:
            s.traced = False
        self.kernel.trace_log = None

    def trace(self) -> PinTrace:
        """The whole recording as a :class:`PinTrace` (flushes)."""
        return PinTrace(self.names, self.widths, self.initial, self.flush(),
                        self.kernel.cycle)


class ChunkDigest:
    """Running per-chunk digests of a recording, for cheap comparison of long
    runs. Feed it the output of :meth:`TraceRecorder.flush` once per chunk."""

    def __init__(self, names, widths, initial):
        self.header = hashlib.sha256(
            pickle.dumps((tuple(names), tuple(widths), tuple(initial)), 4)
        ).hexdigest()
        self.chunks: list[tuple[int, str, int]] = []

    def add(self, end_cycle: int, records: list) -> None:
        h = hashlib.sha256(pickle.dumps(records, 4)).hexdigest()
        self.chunks.append((end_cycle, h, len(records)))

    @property
    def records(self) -> int:
        return sum(n for *_, n in self.chunks)

    def first_mismatch(self, other: "ChunkDigest") -> int | None:
        """Index of the first differing chunk (-1 for the header), or None."""
        if self.header != other.header:
            return -1
        for i, (a, b) in enumerate(zip(self.chunks, other.chunks)):
            if a != b:
                return i
        if len(self.chunks) != len(other.chunks):
            return min(len(self.chunks), len(other.chunks))
        return None


@dataclass(frozen=True)
class Divergence:
    cycle: int
    delta: int
    signal: str
    a: object
    b: object

    def __str__(self) -> str:
        return (f"diverge cycle={self.cycle} delta={self.delta} "
                f"signal={self.signal} a={format_value(self.a)} "
                f"b={format_value(self.b)}")


def _groups(records):
    """Yield ((cycle, delta), {index: value}) per time step."""
    cur = None
    changes: dict = {}
    for c, d, i, v in records:
        t = (c, d)
        if t != cur:
            if cur is not None:
                yield cur, changes
            cur, changes = t, {}
        changes[i] = v
    if cur is not None:
        yield cur, changes


def trace_compare(a: PinTrace, b: PinTrace) -> Divergence | None:
    """Earliest (cycle, delta, pin) at which the two traces disagree, or
    ``None`` when they are equal."""
    if a.names != b.names or a.widths != b.widths:
        raise TraceError("traces cover different pin sets")
    va, vb = list(a.initial), list(b.initial)
    for i, (x, y) in enumerate(zip(va, vb)):
        if x != y:
            return Divergence(0, 0, a.names[i], x, y)
    ga, gb = _groups(a.records), _groups(b.records)
    na, nb = next(ga, None), next(gb, None)
    while na is not None or nb is not None:
        ta = na[0] if na is not None else None
        tb = nb[0] if nb is not None else None
        if tb is None or (ta is not None and ta <= tb):
            t = ta
        else:
            t = tb
        touched = set()
        if ta == t:
            for i, v in na[1].items():
                va[i] = v
            touched |= na[1].keys()
            na = next(ga, None)
        if tb == t:
            for i, v in nb[1].items():
                vb[i] = v
            touched |= nb[1].keys()
            nb = next(gb, None)
        for i in sorted(touched):
            if va[i] != vb[i]:
                return Divergence(t[0], t[1], a.names[i], va[i], vb[i])
    return None
