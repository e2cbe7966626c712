"""Value Change Dump output for pin traces.

One clock cycle is 10 ns. Changes committed while simulating cycle ``c`` are
stamped ``#(c+1)*10``, the end of that cycle, so ``#0`` holds only the
initial values. Delta steps inside a cycle collapse to the settled value; a
pin whose settled value did not change is not written.
"""

from __future__ import annotations

from io import StringIO

PERIOD_NS = 10


class VcdError(Exception):
    pass


def vcd_id(n: int) -> str:
    """Short identifier from the printable range ``!`` .. ``~``."""
    out = []
    n += 1
    while n:
        n -= 1
        out.append(chr(33 + n % 94))
        n //= 94
    return "".join(out)


def _bits(v, width: int) -> str:
    if isinstance(v, int):
        return format(v, f"0{width}b")
    return v


def format_change(v, width: int, ident: str) -> str:
    bits = _bits(v, width)
    if width == 1:
        return f"{bits}{ident}"
    return f"b{bits} {ident}"


class VcdWriter:
    """Streaming writer: :meth:`begin`, any number of :meth:`changes`, then
    :meth:`end`."""

    def __init__(self, out, scope: str = "soc", version: str = "fidelsim"):
        self.out = out
        self.scope = scope
        self.version = version
        self._ids: tuple = ()
        self._widths: tuple = ()
        self._last: list = []
        self._time = 0
        self._pending: dict[int, object] = {}
        self._pending_cycle: int | None = None

    def begin(self, names, widths, initial) -> None:
        names, widths, initial = tuple(names), tuple(widths), tuple(initial)
        if not (len(names) == len(widths) == len(initial)):
            raise VcdError("names, widths and initial values differ in length")
        self._ids = tuple(vcd_id(i) for i in range(len(names)))
        self._widths = widths
        self._last = list(initial)
        w = self.out.write
        w(f"$version {self.version} $end\n")
        w("$timescale 1ns $end\n")
        w(f"$scope module {self.scope} $end\n")
        for name, width, ident in zip(names, widths, self._ids):
            w(f"$var wire {width} {ident} {name} $end\n")
        w("$upscope $end\n")
        w("$enddefinitions $end\n")
        w("#0\n$dumpvars\n")
        for v, width, ident in zip(initial, widths, self._ids):
            w(format_change(v, width, ident) + "\n")
        w("$end\n")

    def _emit(self) -> None:
        if self._pending_cycle is None:
            return
        lines = []
        for i in sorted(self._pending):
            v = self._pending[i]
            if v != self._last[i]:
                self._last[i] = v
                lines.append(format_change(v, self._widths[i], self._ids[i]))
        if lines:
            t = (self._pending_cycle + 1) * PERIOD_NS
            self.out.write(f"#{t}\n" + "\n".join(lines) + "\n")
            self._time = t
        self._pending = {}
        self._pending_cycle = None

    def changes(self, records) -> None:
        """Feed ``(cycle, delta, index, value)`` records in time order."""
        n = len(self._ids)
        for c, _, i, v in records:
            if not 0 <= i < n:
                raise VcdError(f"record for undeclared pin index {i}")
            if c != self._pending_cycle:
                if self._pending_cycle is not None and c < self._pending_cycle:
                    raise VcdError("records out of time order")
                self._emit()
                self._pending_cycle = c
            self._pending[i] = v

    def end(self, end_cycle: int | None = None) -> None:
        self._emit()
        if end_cycle is not None and end_cycle * PERIOD_NS > self._time:
            self.out.write(f"#{end_cycle * PERIOD_NS}\n")


def write_vcd(trace, out=None) -> str | None:
    """Write a :class:`~fidelsim.harness.trace.PinTrace` as VCD.

    With ``out`` a text stream the file is written there; without it the text
    is returned.
    """
    buf = out if out is not None else StringIO()
    w = VcdWriter(buf)
    w.begin(trace.names, trace.widths, trace.initial)
    w.changes(trace.records)
    w.end(trace.end_cycle or None)
    if out is None:
        return buf.getvalue()
    return None
