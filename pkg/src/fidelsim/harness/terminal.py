"""Byte-stream endpoints for the UART.

Every endpoint offers ``poll(cycle) -> bytes`` (input due at or before that
cycle) and ``write(data)`` (UART output). ``output`` collects everything
written so tests can inspect it.

Script files have one ``<cycle> <text>`` entry per line. The text accepts
Python-style escapes (``\\n``, ``\\x04``, ``\\\\``); blank lines and lines
starting with ``#`` are ignored.
"""

from __future__ import annotations

import codecs
import queue
import socket
import sys
import threading
from pathlib import Path


class TerminalError(Exception):
    pass


class NullStream:
    def __init__(self):
        self.output = bytearray()

    def poll(self, cycle: int) -> bytes:
        return b""

    def write(self, data: bytes) -> None:
        self.output += data

    def close(self) -> None:
        pass


class ScriptedStream(NullStream):
    """Deterministic input: bytes injected at fixed cycles."""

    def __init__(self, events=()):
        super().__init__()
        self.events = sorted(((int(c), bytes(d)) for c, d in events),
                             key=lambda e: e[0])
        self._next = 0
        self._due = self.events[0][0] if self.events else None

    def poll(self, cycle: int) -> bytes:
        due = self._due
        if due is None or cycle < due:
            return b""
        out = bytearray()
        ev = self.events
        i = self._next
        while i < len(ev) and ev[i][0] <= cycle:
            out += ev[i][1]
            i += 1
        self._next = i
        self._due = ev[i][0] if i < len(ev) else None
        return bytes(out)

    @property
    def exhausted(self) -> bool:
        return self._due is None

    @classmethod
    def parse(cls, text: str) -> "ScriptedStream":
        events = []
        for n, line in enumerate(text.splitlines(), 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            cyc, _, rest = line.partition(" ")
            try:
                c = int(cyc, 0)
            except ValueError:
                raise TerminalError(f"script line {n}: bad cycle {cyc!r}") from None
            if c < 0:
                raise TerminalError(f"script line {n}: negative cycle")
            try:
                data = codecs.escape_decode(rest.encode())[0]
            except ValueError as e:
                raise TerminalError(f"script line {n}: {e}") from None
            events.append((c, data))
        return cls(events)

    @classmethod
    def from_file(cls, path) -> "ScriptedStream":
        try:
            return cls.parse(Path(path).read_text())
        except OSError as e:
            raise TerminalError(f"cannot read script {path}: {e}") from None


def format_script(events) -> str:
    """Inverse of :meth:`ScriptedStream.parse`."""
    lines = []
    for c, data in events:
        text = codecs.escape_encode(bytes(data))[0].decode("ascii")
        lines.append(f"{c} {text}")
    return "\n".join(lines) + ("\n" if lines else "")


class _QueuedStream(NullStream):
    """Input fed by an auxiliary reader thread through a queue."""

    def __init__(self):
        super().__init__()
        self.rx: queue.Queue[bytes] = queue.Queue()

    def poll(self, cycle: int) -> bytes:
        if self.rx.empty():
            return b""
        out = bytearray()
        while True:
            try:
                out += self.rx.get_nowait()
            except queue.Empty:
                return bytes(out)


class StdioStream(_QueuedStream):
    """TX to standard output; standard input feeds RX."""

    def __init__(self, stdin=None, stdout=None, read_input: bool = True):
        super().__init__()
        self._out = stdout if stdout is not None else sys.stdout.buffer
        if read_input:
            src = stdin if stdin is not None else sys.stdin.buffer
            t = threading.Thread(target=self._reader, args=(src,), daemon=True)
            t.start()

    def _reader(self, src) -> None:
        read = getattr(src, "read1", src.read)
        while True:
            try:
                data = read(256)
            except (OSError, ValueError):
                return
            if not data:
                return
            self.rx.put(bytes(data))

    def write(self, data: bytes) -> None:
        super().write(data)
        self._out.write(data)
        self._out.flush()


class TcpStream(_QueuedStream):
    """Listens on ``host:port`` and serves one client at a time.

    Without a client, output is only collected locally; a disconnect pauses
    RX until the next client connects.
    """

    def __init__(self, port: int, host: str = "127.0.0.1"):
        super().__init__()
        try:
            self._srv = socket.create_server((host, port))
        except OSError as e:
            raise TerminalError(f"cannot listen on {host}:{port}: {e}") from None
        self.port = self._srv.getsockname()[1]
        self._client: socket.socket | None = None
        self._lock = threading.Lock()
        self._closed = False
        threading.Thread(target=self._serve, daemon=True).start()

    def _serve(self) -> None:
        while not self._closed:
            try:
                conn, _ = self._srv.accept()
            except OSError:
                return
            with self._lock:
                self._client = conn
            while True:
                try:
                    data = conn.recv(256)
                except OSError:
                    data = b""
                if not data:
                    break
                self.rx.put(data)
            with self._lock:
                self._client = None
            conn.close()

    @property
    def connected(self) -> bool:
        return self._client is not None

    def write(self, data: bytes) -> None:
        super().write(data)
        with self._lock:
            c = self._client
            if c is not None:
                try:
                    c.sendall(data)
                except OSError:
                    self._client = None

    def close(self) -> None:
        self._closed = True
        self._srv.close()
        with self._lock:
            if self._client is not None:
                self._client.close()
                self._client = None


def open_endpoint(spec: str | None):
    """``stdio``, ``tcp:PORT`` or ``script:FILE`` (``None`` → unconnected)."""
    if spec is None or spec == "none":
        return NullStream()
    if spec == "stdio":
        return StdioStream()
    kind, _, arg = spec.partition(":")
    if kind == "tcp":
        try:
            port = int(arg)
        except ValueError:
            raise TerminalError(f"bad tcp port {arg!r}") from None
        return TcpStream(port)
    if kind == "script":
        return ScriptedStream.from_file(arg)
    raise TerminalError(f"unknown terminal endpoint {spec!r}")
