"""Bundled MR32 assembly workloads.

Each workload is a standalone source file; the shared runtime library
(``lib.s``: memset, memcpy, puts, puthex, wait_tx_empty) is placed after it at
:data:`LIB_BASE`.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

NAMES = ("aluloop", "memtest", "uart_echo", "boot_lite")
INTERRUPT_FREE = ("aluloop", "memtest", "boot_lite")
LIB_BASE = 0x8000

# default scripted terminal input for uart_echo: (cycle, bytes); the EOT byte
# (0x04) makes the workload halt shortly after it arrives
ECHO_SCRIPT = (
    (1_000, b"AB"),
    (60_000, b"hello, echo\n"),
    (250_000, b"0123456789abcdef"),
    (600_000, b"fidelity\r\n"),
    (900_000, b"\x04"),
)


def _read(name: str) -> str:
    return resources.files(__name__).joinpath(name).read_text()


def library_source() -> str:
    return _read("lib.s")


def source(name: str) -> str:
    if name not in NAMES:
        raise KeyError(f"unknown workload {name!r}; choose from {NAMES}")
    return (_read(f"{name}.s") + f"\n        .org {LIB_BASE:#x}\n"
            + library_source())


def echo_stream(events=ECHO_SCRIPT):
    from ..terminal import ScriptedStream
    return ScriptedStream(events)


@lru_cache(maxsize=None)
def image(name: str):
    from ..asm import assemble
    return assemble(source(name))
