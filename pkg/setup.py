"""Optional native build of the simulation hot path.

The listed modules are plain Python; when Cython is available they are also
compiled to extension modules, which roughly halves simulation wall time.
Set FIDELSIM_PURE=1 (or build without Cython) to install pure Python only.
"""

import os

from setuptools import setup

HOT_MODULES = [
    "src/fidelsim/kernel.py",
    "src/fidelsim/soc/bus.py",
    "src/fidelsim/soc/peripherals.py",
    "src/fidelsim/cpu/iss.py",
    "src/fidelsim/platform.py",
]


def _extensions():
    if os.environ.get("FIDELSIM_PURE"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    exts = cythonize(HOT_MODULES, quiet=True,
                     compiler_directives={"language_level": 3,
                                          "binding": True})
    for e in exts:
        # a failed compile falls back to the pure Python module
        e.optional = True
    return exts


setup(ext_modules=_extensions())
