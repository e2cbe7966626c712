"""Switchable-fidelity cycle-accurate SoC simulator."""

from __future__ import annotations

import warnings
from pathlib import Path

__version__ = "0.1.0"

# modules that setup.py may compile; a compiled copy shadows the source file
HOT_MODULES = ("kernel", "soc/bus", "soc/peripherals", "cpu/iss", "platform")


def compiled_modules() -> dict[str, bool]:
    """Which hot-path modules have a compiled extension next to them."""
    root = Path(__file__).parent
    out = {}
    for m in HOT_MODULES:
        src = root / f"{m}.py"
        out[m.replace("/", ".")] = any(src.parent.glob(f"{src.stem}.*.so")) \
            or any(src.parent.glob(f"{src.stem}.*.pyd"))
    return out


def _check_stale() -> None:
    root = Path(__file__).parent
    for m in HOT_MODULES:
        src = root / f"{m}.py"
        for ext in list(src.parent.glob(f"{src.stem}.*.so")) + \
                list(src.parent.glob(f"{src.stem}.*.pyd")):
            if src.exists() and ext.stat().st_mtime < src.stat().st_mtime:
                warnings.warn(f"compiled {ext.name} is older than {src.name}; "
                              "rebuild with 'pip install -e .'", stacklevel=2)


_check_stale()
